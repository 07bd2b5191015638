#include "fleeg/runconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fleeg {

namespace {

using nlohmann::json;

DatasetFormat parse_format(const json& j, const std::string& name) {
    DatasetFormat f;
    f.name = name;
    f.channels = j.at("channels").get<int>();
    f.sample_rate = j.at("sample_rate").get<double>();
    f.trial_samples = j.at("trial_samples").get<int>();
    f.subjects = j.value("subjects", 1);
    f.trials_per_subject = j.value("trials_per_subject", 1);
    if (f.channels < 1 || f.trial_samples < 1 || f.sample_rate <= 0 || f.subjects < 1 ||
        f.trials_per_subject < 1)
        throw ConfigError("client '" + name + "': format counts must be >= 1");
    return f;
}

ClientBlock parse_client(const json& j) {
    ClientBlock c;
    c.name = j.at("name").get<std::string>();
    if (c.name.empty()) throw ConfigError("client with empty name");
    c.eta = j.at("eta").get<double>();
    c.batch = j.at("batch").get<int>();
    if (c.eta <= 0.0) throw ConfigError("client '" + c.name + "': eta must be > 0");
    if (c.batch < 1) throw ConfigError("client '" + c.name + "': batch must be >= 1");

    int sources = 0;
    if (j.contains("synth")) {
        ++sources;
        const json& s = j.at("synth");
        SynthSpec spec;
        spec.format = parse_format(s, c.name);
        spec.class0_channels = s.at("class0_channels").get<std::vector<int>>();
        spec.class1_channels = s.at("class1_channels").get<std::vector<int>>();
        spec.rhythm_hz = s.value("rhythm_hz", 10.0);
        spec.erd_depth = s.value("erd_depth", 0.8);
        spec.noise = s.value("noise", 1.0);
        spec.subject_jitter = s.value("subject_jitter", 0.2);
        spec.seed = s.value("seed", std::uint64_t{0});
        for (const auto* set : {&spec.class0_channels, &spec.class1_channels})
            for (int ch : *set)
                if (ch < 0 || ch >= spec.format.channels)
                    throw ConfigError("client '" + c.name + "': informative channel " +
                                      std::to_string(ch) + " outside the format");
        c.synth = std::move(spec);
    }
    if (j.contains("trials")) {
        ++sources;
        c.trials_path = j.at("trials").get<std::string>();
    }
    if (j.contains("format")) {
        ++sources;
        c.format_only = parse_format(j.at("format"), c.name);
    }
    if (sources != 1)
        throw ConfigError("client '" + c.name +
                          "': exactly one of synth/trials/format is required");

    if (j.contains("bandpass")) {
        const auto band = j.at("bandpass").get<std::vector<double>>();
        if (band.size() != 2 || !(band[0] > 0.0 && band[0] < band[1]))
            throw ConfigError("client '" + c.name + "': bandpass must be [low, high] Hz");
        c.bandpass_hz = {band[0], band[1]};
    }
    c.decimate_factor = j.value("decimate", 1);
    if (c.decimate_factor < 1)
        throw ConfigError("client '" + c.name + "': decimate must be >= 1");
    return c;
}

}  // namespace

int RunConfig::effective_timeout_ms() const {
    if (const char* env = std::getenv("FLEEG_ROUND_TIMEOUT_MS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<int>(v);
    }
    return round_timeout_ms;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    try {
        RunConfig cfg;
        cfg.origin = origin;
        cfg.config_hash = fnv1a64(text.data(), text.size());
        cfg.seed = j.value("seed", std::uint64_t{1});
        cfg.rounds = j.value("rounds", 1);
        cfg.local_epochs = j.value("local_epochs", 1);
        cfg.out = j.value("out", std::string{});
        cfg.mode = j.value("mode", std::string{"in-process"});
        cfg.address = j.value("address", std::string{"127.0.0.1"});
        cfg.port = j.value("port", 7461);
        cfg.round_timeout_ms = j.value("round_timeout_ms", 60000);
        if (cfg.rounds < 1 || cfg.local_epochs < 1)
            throw ConfigError(origin + ": rounds and local_epochs must be >= 1");
        if (cfg.mode != "in-process" && cfg.mode != "server" && cfg.mode != "client")
            throw ConfigError(origin + ": mode must be in-process, server, or client");

        if (!j.contains("clients") || !j.at("clients").is_array() || j.at("clients").empty())
            throw ConfigError(origin + ": at least one client block is required");
        std::set<std::string> names;
        for (const json& cj : j.at("clients")) {
            ClientBlock c = parse_client(cj);
            if (!names.insert(c.name).second)
                throw ConfigError(origin + ": duplicate client name '" + c.name + "'");
            cfg.clients.push_back(std::move(c));
        }
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig cfg = parse_run_config(ss.str(), path);
    // referenced trial files must exist at load time
    for (const ClientBlock& c : cfg.clients)
        if (c.trials_path) {
            std::ifstream probe(*c.trials_path, std::ios::binary);
            if (!probe)
                throw ConfigError("client '" + c.name + "': trial file " + *c.trials_path +
                                  " does not exist");
        }
    return cfg;
}

TrialStore load_client_store(const ClientBlock& block) {
    TrialStore store;
    if (block.synth) {
        store = generate(*block.synth);
        store.format.name = block.name;
    } else if (block.trials_path) {
        store = load_trials(*block.trials_path);
        store.format.name = block.name;
    } else {
        throw ConfigError("client '" + block.name + "' has no trial data (format-only block)");
    }
    if (block.bandpass_hz)
        store = bandpass(store, block.bandpass_hz->first, block.bandpass_hz->second);
    if (block.decimate_factor > 1) store = decimate(store, block.decimate_factor);
    return store;
}

}  // namespace fleeg
