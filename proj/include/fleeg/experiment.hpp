#pragma once

#include <string>
#include <vector>

#include "fleeg/eval.hpp"
#include "fleeg/runconfig.hpp"

namespace fleeg {

enum class RunMode { kFederated, kBaseline };

const char* run_mode_name(RunMode m);

struct ExperimentOutcome {
    std::vector<FoldClientResult> folds;
};

// Local-architecture choice for a client: the shipped table row when the name
// and shape match one exactly, otherwise the bounded search.
LocalArch arch_for(const DatasetFormat& format);

// Full simultaneous-LOSO run over every fold: trains, evaluates each held-out
// subject with the best-validation snapshot, and writes the run outputs
// (manifest, round log, fold table, best weights; subjects.csv once both
// modes exist in the same directory).
ExperimentOutcome run_experiment(const RunConfig& cfg, RunMode mode, const std::string& out_dir);

// Server side of the distributed run: identical outputs to
// run_experiment(kFederated) with the same config and seed.
ExperimentOutcome serve_experiment(const RunConfig& cfg, const std::string& out_dir);

// Client side: connects once per fold, trains on request, reports the fold
// outcome with the final round's update.
void run_remote_client(const RunConfig& cfg, const std::string& client_name);

// Materializes every synthetic client into an "FTR1" file under out_dir.
void generate_trials(const RunConfig& cfg, const std::string& out_dir, bool force);

// One saliency CSV per (client, held-out subject) from a trained run.
void saliency_export(const RunConfig& cfg, RunMode mode, const std::string& out_dir);

}  // namespace fleeg
