#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fleeg/data.hpp"
#include "fleeg/model.hpp"

namespace fleeg {

struct ClientTrainConfig {
    double eta = 0.01;
    int batch = 32;
};

struct TrainConfig {
    int rounds = 1;
    int local_epochs = 1;
    std::uint64_t seed = 0;
    int fold = 0;
    int threads = 0;  // 0: hardware concurrency; results do not depend on it

    void validate() const {
        if (rounds < 1 || local_epochs < 1)
            throw ContractError("TrainConfig: rounds and local_epochs must be >= 1");
    }
};

// One client's view of the current fold: its model, partitions and schedule.
struct ClientState {
    int id = 0;
    std::string name;
    PersonalizedModel model;
    const TrialStore* store = nullptr;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> val_idx;
    ClientTrainConfig cfg;

    // snapshot of (local, global) taken right after the local epochs of the
    // round with the smallest validation loss (earliest round wins ties)
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_round = -1;
    WeightSet best_weights;

    std::int64_t n_train() const { return static_cast<std::int64_t>(train_idx.size()); }
};

struct ClientRoundStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct RoundReport {
    int round = 0;
    std::vector<ClientRoundStats> clients;  // ascending client id
    double overall_loss = 0.0;              // sum_k N_k/N * train_loss_k
};

struct ServerState {
    WeightSet theta_global;
    std::vector<std::int64_t> n_train;  // by registration order (= client id)
    std::int64_t n_total = 0;
    int round = 0;
};

struct ClientUpdate {
    WeightSet theta_global_k;
    ClientRoundStats stats;
};

// Installs theta_global, runs E epochs of mini-batch SGD on both modules with
// a per-epoch seeded batch permutation (short final batch kept), evaluates the
// validation split, and tracks the best snapshot. Pure function of
// (state, theta_global, round, config); thread count never changes results.
ClientUpdate client_update(ClientState& client, const WeightSet& theta_global, int round,
                           const TrainConfig& tc);

// Entrywise sum of N_k/N * theta_k in ascending client-id order.
WeightSet aggregate(ServerState& server, const std::vector<std::pair<int, WeightSet>>& updates);

struct FederationResult {
    std::vector<RoundReport> rounds;
    struct Best {
        WeightSet weights;
        double val_loss = 0.0;
        int round = -1;
    };
    std::vector<Best> best;  // per client, ascending id
};

FederationResult run_federation(std::vector<ClientState>& clients, const TrainConfig& tc);

// Same loop with aggregation skipped; identical seeding so comparisons pair.
FederationResult run_baseline(ClientState& client, const TrainConfig& tc);

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

// Mean cross-entropy and argmax accuracy (ties predict class 0) over the
// given trials, processed in fixed chunk order.
EvalResult evaluate_model(const PersonalizedModel& model, const TrialStore& store,
                          std::span<const std::size_t> indices);

}  // namespace fleeg
