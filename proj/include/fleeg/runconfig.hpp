#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fleeg/data.hpp"

namespace fleeg {

// One client block: a name, training hyperparameters, exactly one data source
// (synthetic spec, trial file, or a bare format for shape-only work), and
// optional preprocessing.
struct ClientBlock {
    std::string name;
    double eta = 0.01;
    int batch = 32;
    std::optional<SynthSpec> synth;
    std::optional<std::string> trials_path;
    std::optional<DatasetFormat> format_only;
    std::optional<std::pair<double, double>> bandpass_hz;
    int decimate_factor = 1;
};

struct RunConfig {
    std::uint64_t seed = 1;
    int rounds = 1;
    int local_epochs = 1;
    std::string out;
    std::string mode = "in-process";  // in-process | server | client
    std::string address = "127.0.0.1";
    int port = 7461;
    int round_timeout_ms = 60000;  // FLEEG_ROUND_TIMEOUT_MS overrides
    std::vector<ClientBlock> clients;

    std::uint64_t config_hash = 0;  // FNV-1a of the config file bytes
    std::string origin;

    // round timeout after the environment override
    int effective_timeout_ms() const;
};

RunConfig parse_run_config(const std::string& json_text, const std::string& origin);
RunConfig load_run_config(const std::string& path);

// Materializes one client's trials: generate or load, then the block's
// band-pass and decimation. Deterministic.
TrialStore load_client_store(const ClientBlock& block);

}  // namespace fleeg
