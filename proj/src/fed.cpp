#include "fleeg/fed.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <thread>

#include "fleeg/kernels.hpp"

namespace fleeg {

namespace {

// Batches run as fixed-size chunks of 8 trials whose gradients fold in chunk
// order; the chunk grid is part of the deterministic semantics, the number of
// worker threads is not.
constexpr std::size_t kChunk = 8;

int worker_count(const TrainConfig& tc) {
    if (tc.threads > 0) return tc.threads;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

void add_into(ConvGrads& acc, const ConvGrads& g) {
    const auto& k = kernels::active();
    k.acc_scaled(acc.kernels.data(), g.kernels.data(), 1.0,
                 static_cast<std::size_t>(acc.kernels.size()));
    k.acc_scaled(acc.bias.data(), g.bias.data(), 1.0, acc.bias.size());
}

void add_into(ModelGrads& acc, const ModelGrads& g) {
    add_into(acc.temporal, g.temporal);
    add_into(acc.spatial, g.spatial);
    add_into(acc.block3, g.block3);
    add_into(acc.block4, g.block4);
    add_into(acc.features, g.features);
    add_into(acc.head, g.head);
}

struct ChunkOut {
    ModelGrads grads;
    double loss = 0.0;  // already scaled by 1/batch_size
};

ChunkOut chunk_pass(const PersonalizedModel& model, const TrialStore& store,
                    std::span<const std::size_t> idx, std::int64_t denom) {
    ChunkOut out;
    const Tensor4 batch = store.gather_batch(idx);
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = store.label[idx[i]];
    ModelTape tape;
    const Tensor4 logits = forward(model, batch, &tape);
    const SoftmaxResult sm = softmax_cross_entropy(logits, labels, denom);
    out.grads = backward(model, tape, sm.grad_logits);
    out.loss = sm.loss;
    return out;
}

// One mini-batch: chunk gradients computed in parallel waves, folded in chunk
// order. Returns the mean per-sample loss of the batch.
double batch_step(ClientState& client, std::span<const std::size_t> batch_idx,
                  const TrainConfig& tc) {
    const std::int64_t denom = static_cast<std::int64_t>(batch_idx.size());
    const std::size_t n_chunks = (batch_idx.size() + kChunk - 1) / kChunk;
    const std::size_t wave = static_cast<std::size_t>(worker_count(tc));

    ModelGrads total;
    double loss = 0.0;
    bool first = true;
    std::vector<std::future<ChunkOut>> futs;
    for (std::size_t c0 = 0; c0 < n_chunks; c0 += wave) {
        const std::size_t cend = std::min(n_chunks, c0 + wave);
        futs.clear();
        for (std::size_t c = c0; c < cend; ++c) {
            const std::size_t lo = c * kChunk;
            const std::size_t hi = std::min(batch_idx.size(), lo + kChunk);
            futs.push_back(std::async(std::launch::async, [&, lo, hi] {
                return chunk_pass(client.model, *client.store,
                                  batch_idx.subspan(lo, hi - lo), denom);
            }));
        }
        for (auto& f : futs) {
            ChunkOut c = f.get();
            loss += c.loss;
            if (first) {
                total = std::move(c.grads);
                first = false;
            } else {
                add_into(total, c.grads);
            }
        }
    }
    sgd_apply(client.model, total, client.cfg.eta);
    return loss;
}

}  // namespace

EvalResult evaluate_model(const PersonalizedModel& model, const TrialStore& store,
                          std::span<const std::size_t> indices) {
    if (indices.empty()) throw ContractError("evaluate_model: empty trial set");
    EvalResult r;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < indices.size(); lo += kChunk) {
        const std::size_t hi = std::min(indices.size(), lo + kChunk);
        const auto idx = indices.subspan(lo, hi - lo);
        const Tensor4 batch = store.gather_batch(idx);
        std::vector<int> labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = store.label[idx[i]];
        const Tensor4 logits = forward(model, batch);
        const SoftmaxResult sm =
            softmax_cross_entropy(logits, labels, static_cast<std::int64_t>(indices.size()));
        r.loss += sm.loss;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const int pred = sm.probs.at(static_cast<int>(i), 1, 0, 0) >
                                     sm.probs.at(static_cast<int>(i), 0, 0, 0)
                                 ? 1
                                 : 0;
            if (pred == labels[i]) ++correct;
        }
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
    return r;
}

ClientUpdate client_update(ClientState& client, const WeightSet& theta_global, int round,
                           const TrainConfig& tc) {
    tc.validate();
    if (client.train_idx.empty())
        throw ContractError("client_update(" + client.name + "): empty training partition");
    try {
        set_global_weights(client.model, theta_global);
    } catch (const CompatError& e) {
        throw CompatError("client_update(" + client.name + "): " + e.what());
    }

    const std::size_t batch_size = static_cast<std::size_t>(client.cfg.batch);
    double loss_sum = 0.0;
    for (int epoch = 0; epoch < tc.local_epochs; ++epoch) {
        std::vector<std::size_t> perm = client.train_idx;
        Rng rng(mix_key(tc.seed, {0x62617463u, std::uint64_t(tc.fold),
                                  std::uint64_t(client.id), std::uint64_t(round),
                                  std::uint64_t(epoch)}));
        for (std::size_t i = perm.size(); i > 1; --i)
            std::swap(perm[i - 1], perm[rng.bounded(i)]);

        int batch_no = 0;
        for (std::size_t lo = 0; lo < perm.size(); lo += batch_size, ++batch_no) {
            const std::size_t hi = std::min(perm.size(), lo + batch_size);
            const double batch_loss =
                batch_step(client, std::span<const std::size_t>(perm).subspan(lo, hi - lo), tc);
            if (!std::isfinite(batch_loss))
                throw DivergenceError("client " + client.name + " diverged at round " +
                                      std::to_string(round) + " batch " +
                                      std::to_string(batch_no) + " (epoch " +
                                      std::to_string(epoch) + ")");
            loss_sum += batch_loss * static_cast<double>(hi - lo);
        }
    }

    ClientUpdate out;
    out.stats.train_loss =
        loss_sum / (static_cast<double>(tc.local_epochs) * static_cast<double>(client.n_train()));
    const EvalResult val = evaluate_model(client.model, *client.store, client.val_idx);
    out.stats.val_loss = val.loss;
    out.stats.val_acc = val.accuracy;

    if (val.loss < client.best_val_loss) {
        client.best_val_loss = val.loss;
        client.best_round = round;
        client.best_weights = all_weights(client.model);
    }
    out.theta_global_k = global_weights(client.model);
    return out;
}

WeightSet aggregate(ServerState& server, const std::vector<std::pair<int, WeightSet>>& updates) {
    if (updates.size() != server.n_train.size())
        throw Error("aggregate: incomplete round, got " + std::to_string(updates.size()) +
                    " updates for " + std::to_string(server.n_train.size()) + " clients");
    std::vector<const WeightSet*> by_id(server.n_train.size(), nullptr);
    for (const auto& [id, ws] : updates) {
        if (id < 0 || static_cast<std::size_t>(id) >= by_id.size() || by_id[id])
            throw Error("aggregate: unexpected or duplicate client id " + std::to_string(id));
        server.theta_global.require_compatible(ws, "aggregate");
        by_id[id] = &ws;
    }

    const double n_total = static_cast<double>(server.n_total);
    WeightSet out = server.theta_global;  // shape template
    const auto& k = kernels::active();
    for (std::size_t e = 0; e < out.entries.size(); ++e) {
        auto& dst = out.entries[e].values;
        const double w0 = static_cast<double>(server.n_train[0]) / n_total;
        const auto& src0 = by_id[0]->entries[e].values;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = w0 * src0[i];
        for (std::size_t c = 1; c < by_id.size(); ++c) {
            const double w = static_cast<double>(server.n_train[c]) / n_total;
            k.acc_scaled(dst.data(), by_id[c]->entries[e].values.data(), w, dst.size());
        }
    }
    server.theta_global = out;
    ++server.round;
    return out;
}

FederationResult run_federation(std::vector<ClientState>& clients, const TrainConfig& tc) {
    tc.validate();
    if (clients.empty()) throw ContractError("run_federation: no clients");
    for (std::size_t k = 0; k < clients.size(); ++k)
        if (clients[k].id != static_cast<int>(k))
            throw ContractError("run_federation: client ids must be 0..K-1 in order");

    ServerState server;
    server.theta_global = global_weights(clients[0].model);
    for (const ClientState& c : clients) {
        if (!server.theta_global.bit_equal(global_weights(c.model)))
            throw CompatError("run_federation: client " + c.name +
                              " starts from a different global module");
        server.n_train.push_back(c.n_train());
        server.n_total += c.n_train();
    }

    FederationResult result;
    for (int round = 1; round <= tc.rounds; ++round) {
        // clients are independent within a round; run them concurrently and
        // fold the updates back in id order
        std::vector<std::future<ClientUpdate>> futs;
        for (ClientState& client : clients)
            futs.push_back(std::async(std::launch::async, [&client, &server, round, &tc] {
                return client_update(client, server.theta_global, round, tc);
            }));
        std::vector<std::pair<int, WeightSet>> updates;
        RoundReport report;
        report.round = round;
        for (std::size_t k = 0; k < clients.size(); ++k) {
            try {
                ClientUpdate u = futs[k].get();
                report.clients.push_back(u.stats);
                updates.emplace_back(clients[k].id, std::move(u.theta_global_k));
            } catch (const DivergenceError&) {
                throw;
            } catch (const Error& e) {
                throw Error("round " + std::to_string(round) + " aborted by client " +
                            clients[k].name + ": " + e.what());
            }
        }
        aggregate(server, updates);
        for (ClientState& client : clients)
            set_global_weights(client.model, server.theta_global);

        report.overall_loss = 0.0;
        for (std::size_t k = 0; k < clients.size(); ++k)
            report.overall_loss += static_cast<double>(server.n_train[k]) /
                                   static_cast<double>(server.n_total) *
                                   report.clients[k].train_loss;
        result.rounds.push_back(std::move(report));
    }
    for (const ClientState& c : clients)
        result.best.push_back({c.best_weights, c.best_val_loss, c.best_round});
    return result;
}

FederationResult run_baseline(ClientState& client, const TrainConfig& tc) {
    tc.validate();
    FederationResult result;
    for (int round = 1; round <= tc.rounds; ++round) {
        ClientUpdate u = client_update(client, global_weights(client.model), round, tc);
        RoundReport report;
        report.round = round;
        report.clients.push_back(u.stats);
        report.overall_loss = u.stats.train_loss;
        result.rounds.push_back(std::move(report));
    }
    result.best.push_back({client.best_weights, client.best_val_loss, client.best_round});
    return result;
}

}  // namespace fleeg
