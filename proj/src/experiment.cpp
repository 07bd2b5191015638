#include "fleeg/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "fleeg/kernels.hpp"
#include "fleeg/transport.hpp"

namespace fleeg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr std::uint32_t kProtocolVersion = 1;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int env_threads() {
    if (const char* env = std::getenv("FLEEG_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<int>(v);
    }
    return 0;
}

TrainConfig train_config(const RunConfig& cfg, int fold) {
    TrainConfig tc;
    tc.rounds = cfg.rounds;
    tc.local_epochs = cfg.local_epochs;
    tc.seed = cfg.seed;
    tc.fold = fold;
    tc.threads = env_threads();
    return tc;
}

std::vector<std::size_t> held_out_indices(const TrialStore& store, int subject) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < store.n_trials(); ++i)
        if (store.subject[i] == subject) idx.push_back(i);
    return idx;
}

// Evaluates the best-validation snapshot on the held-out subject.
FoldClientResult fold_outcome(const ClientState& client, const TrialStore& store, int fold,
                              int held_out) {
    PersonalizedModel best = client.model;
    set_all_weights(best, client.best_weights);
    FoldClientResult r;
    r.fold = fold;
    r.client = client.name;
    r.held_out_subject = held_out;
    const auto idx = held_out_indices(store, held_out);
    r.test_acc = accuracy(best, store, idx);
    r.best_round = client.best_round;
    r.best_val_loss = client.best_val_loss;
    return r;
}

std::vector<FoldClientResult> read_folds_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path);
    std::vector<FoldClientResult> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        FoldClientResult r;
        std::string field;
        std::getline(ss, field, ',');
        r.fold = std::stoi(field);
        std::getline(ss, r.client, ',');
        std::getline(ss, field, ',');
        r.held_out_subject = std::stoi(field);
        std::getline(ss, field, ',');
        r.test_acc = std::stod(field);
        std::getline(ss, field, ',');
        r.best_round = std::stoi(field);
        std::getline(ss, field, ',');
        r.best_val_loss = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

// All run outputs flow through here so the in-process and distributed paths
// write byte-identical files.
class OutputWriter {
public:
    OutputWriter(const RunConfig& cfg, RunMode mode, const std::string& out_dir)
        : cfg_(cfg), mode_(mode), dir_(out_dir) {
        fs::create_directories(dir_);
        fs::create_directories(weights_dir());
        rounds_.open(dir_ + "/rounds_" + run_mode_name(mode) + ".jsonl",
                     std::ios::binary | std::ios::trunc);
        if (!rounds_) throw Error("cannot write round log in " + dir_);
        write_manifest();
    }

    std::string weights_dir() const {
        return dir_ + "/weights_" + run_mode_name(mode_);
    }

    void round_record(int fold, int round, const std::string& client,
                      const ClientRoundStats& s) {
        rounds_ << "{\"fold\":" << fold << ",\"round\":" << round << ",\"client\":\"" << client
                << "\",\"train_loss\":" << fmt(s.train_loss)
                << ",\"val_loss\":" << fmt(s.val_loss) << ",\"val_acc\":" << fmt(s.val_acc)
                << "}\n";
        rounds_.flush();
    }

    void overall_record(int fold, int round, double overall) {
        rounds_ << "{\"fold\":" << fold << ",\"round\":" << round
                << ",\"overall_loss\":" << fmt(overall) << "}\n";
        rounds_.flush();
    }

    void fold_result(const FoldClientResult& r, const WeightSet& best_weights) {
        results_.push_back(r);
        const std::string path =
            weights_dir() + "/best_" + r.client + "_fold" + std::to_string(r.fold) + ".fwt";
        const auto bytes = encode_weights(best_weights);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }

    void finalize() {
        const std::string folds_path =
            dir_ + "/folds_" + std::string(run_mode_name(mode_)) + ".csv";
        std::ofstream out(folds_path, std::ios::binary | std::ios::trunc);
        out << "fold,client,held_out_subject,test_acc,best_round,best_val_loss\n";
        for (const auto& r : results_)
            out << r.fold << ',' << r.client << ',' << r.held_out_subject << ','
                << fmt(r.test_acc) << ',' << r.best_round << ',' << fmt(r.best_val_loss)
                << '\n';
        out.close();

        const RunMode other =
            mode_ == RunMode::kFederated ? RunMode::kBaseline : RunMode::kFederated;
        const std::string sibling =
            dir_ + "/folds_" + std::string(run_mode_name(other)) + ".csv";
        if (fs::exists(sibling)) {
            const auto other_rows = read_folds_csv(sibling);
            const auto& fed = mode_ == RunMode::kFederated ? results_ : other_rows;
            const auto& base = mode_ == RunMode::kFederated ? other_rows : results_;
            write_subjects_csv(summarize(fed, base), dir_ + "/subjects.csv");
        }
    }

    const std::vector<FoldClientResult>& results() const { return results_; }

private:
    void write_manifest() {
        std::ofstream out(dir_ + "/manifest_" + run_mode_name(mode_) + ".json",
                          std::ios::binary | std::ios::trunc);
        out << "{\"config_hash\":\"" << to_hex(cfg_.config_hash) << "\",\"seed\":" << cfg_.seed
            << ",\"rounds\":" << cfg_.rounds << ",\"version\":\"" << kVersion
            << "\",\"kernels\":\"" << kernels::active().name << "\"}\n";
    }

    const RunConfig& cfg_;
    RunMode mode_;
    std::string dir_;
    std::ofstream rounds_;
    std::vector<FoldClientResult> results_;
};

struct LoadedClients {
    std::vector<TrialStore> stores;
    std::vector<FoldPlan> plans;
};

LoadedClients load_all(const RunConfig& cfg) {
    LoadedClients lc;
    for (const ClientBlock& block : cfg.clients) lc.stores.push_back(load_client_store(block));
    lc.plans = plan_folds(lc.stores, cfg.seed);
    return lc;
}

ClientState make_state(const RunConfig& cfg, const LoadedClients& lc, int fold, int id) {
    const TrialStore& store = lc.stores[id];
    ClientState state;
    state.id = id;
    state.name = cfg.clients[id].name;
    state.model = build_model(store.format, arch_for(store.format), cfg.seed,
                              static_cast<std::uint32_t>(fold), static_cast<std::uint32_t>(id));
    state.store = &store;
    state.train_idx = lc.plans[fold].clients[id].train_idx;
    state.val_idx = lc.plans[fold].clients[id].val_idx;
    state.cfg = {cfg.clients[id].eta, cfg.clients[id].batch};
    return state;
}

}  // namespace

const char* run_mode_name(RunMode m) {
    return m == RunMode::kFederated ? "federated" : "baseline";
}

LocalArch arch_for(const DatasetFormat& format) {
    for (const std::string& name : table_names()) {
        const DatasetFormat t = table_format(name);
        if (format.name == name && format.channels == t.channels &&
            format.trial_samples == t.trial_samples)
            return build_from_table(name).first;
    }
    return derive_arch(format);
}

ExperimentOutcome run_experiment(const RunConfig& cfg, RunMode mode,
                                 const std::string& out_dir) {
    LoadedClients lc = load_all(cfg);
    OutputWriter writer(cfg, mode, out_dir);

    for (const FoldPlan& plan : lc.plans) {
        std::vector<ClientState> states;
        for (std::size_t k = 0; k < cfg.clients.size(); ++k)
            states.push_back(make_state(cfg, lc, plan.fold, static_cast<int>(k)));
        const TrainConfig tc = train_config(cfg, plan.fold);

        if (mode == RunMode::kFederated) {
            FederationResult result = run_federation(states, tc);
            for (const RoundReport& r : result.rounds) {
                for (std::size_t k = 0; k < states.size(); ++k)
                    writer.round_record(plan.fold, r.round, states[k].name, r.clients[k]);
                writer.overall_record(plan.fold, r.round, r.overall_loss);
            }
        } else {
            std::vector<std::future<FederationResult>> futs;
            for (ClientState& s : states)
                futs.push_back(
                    std::async(std::launch::async, [&s, &tc] { return run_baseline(s, tc); }));
            std::vector<FederationResult> results;
            std::int64_t n_total = 0;
            for (std::size_t k = 0; k < states.size(); ++k) {
                results.push_back(futs[k].get());
                n_total += states[k].n_train();
            }
            for (int round = 1; round <= tc.rounds; ++round) {
                double overall = 0.0;
                for (std::size_t k = 0; k < states.size(); ++k) {
                    const ClientRoundStats& s = results[k].rounds[round - 1].clients[0];
                    writer.round_record(plan.fold, round, states[k].name, s);
                    overall += double(states[k].n_train()) / double(n_total) * s.train_loss;
                }
                writer.overall_record(plan.fold, round, overall);
            }
        }
        for (std::size_t k = 0; k < states.size(); ++k) {
            FoldClientResult r = fold_outcome(states[k], lc.stores[k], plan.fold,
                                              plan.clients[k].held_out_subject);
            writer.fold_result(r, states[k].best_weights);
        }
    }
    writer.finalize();
    return {writer.results()};
}

ExperimentOutcome serve_experiment(const RunConfig& cfg, const std::string& out_dir) {
    const int K = static_cast<int>(cfg.clients.size());
    const int timeout = cfg.effective_timeout_ms();
    OutputWriter writer(cfg, RunMode::kFederated, out_dir);
    Listener listener(cfg.address, cfg.port);

    int fold = 0;
    int fold_count = 0;
    do {
        // one session per fold: handshake, R rounds, shutdown
        std::vector<Socket> socks(K);
        std::vector<RegisterPayload> regs(K);
        std::vector<bool> seen(K, false);
        for (int i = 0; i < K; ++i) {
            Socket s = listener.accept_client(timeout);
            const HelloPayload hello = parse_hello(s.recv_message(timeout));
            if (hello.version != kProtocolVersion)
                throw ProtocolError("client speaks protocol version " +
                                    std::to_string(hello.version));
            const RegisterPayload reg = parse_register(s.recv_message(timeout));
            if (reg.client_id >= static_cast<std::uint32_t>(K) || seen[reg.client_id]) {
                s.send_message(make_error("duplicate or unknown client id"));
                throw ProtocolError("duplicate or unknown client id " +
                                    std::to_string(reg.client_id));
            }
            if (reg.fold != static_cast<std::uint32_t>(fold))
                throw ProtocolError("client registered for fold " + std::to_string(reg.fold) +
                                    " during fold " + std::to_string(fold));
            seen[reg.client_id] = true;
            regs[reg.client_id] = reg;
            socks[reg.client_id] = std::move(s);
        }
        if (fold == 0) {
            for (const auto& r : regs)
                fold_count = std::max(fold_count, r.format.subjects);
            if (fold_count < 2) throw ProtocolError("registered formats allow no hold-out");
        }
        for (int k = 0; k < K; ++k)
            socks[k].send_message(make_round_ack(
                {static_cast<std::uint32_t>(fold), static_cast<std::uint32_t>(fold_count)}));

        ServerState server;
        server.theta_global = make_global_weightset(cfg.seed, static_cast<std::uint32_t>(fold));
        for (int k = 0; k < K; ++k) {
            server.n_train.push_back(regs[k].n_train);
            server.n_total += regs[k].n_train;
        }

        std::vector<FoldOutcome> outcomes(K);
        for (int round = 1; round <= cfg.rounds; ++round) {
            for (int k = 0; k < K; ++k)
                socks[k].send_message(make_global_weights(
                    {static_cast<std::uint32_t>(round), server.theta_global}));

            std::vector<std::pair<int, WeightSet>> updates;
            std::vector<ClientRoundStats> stats(K);
            for (int k = 0; k < K; ++k) {
                ClientUpdatePayload upd;
                try {
                    upd = parse_client_update(socks[k].recv_message(timeout));
                } catch (const ProtocolError& e) {
                    const WireMessage err =
                        make_error("round " + std::to_string(round) + " aborted: " + e.what());
                    for (int j = 0; j < K; ++j)
                        if (j != k && socks[j].valid()) try {
                                socks[j].send_message(err);
                            } catch (const ProtocolError&) {
                            }
                    throw ProtocolError("client " + cfg.clients[k].name + ": " + e.what());
                }
                if (upd.round != static_cast<std::uint32_t>(round) ||
                    upd.client_id != static_cast<std::uint32_t>(k))
                    throw ProtocolError("out-of-order update from " + cfg.clients[k].name);
                stats[k] = {upd.train_loss, upd.val_loss, upd.val_acc};
                if (round == cfg.rounds) {
                    if (!upd.fold_outcome)
                        throw ProtocolError("final update from " + cfg.clients[k].name +
                                            " carries no fold outcome");
                    outcomes[k] = std::move(*upd.fold_outcome);
                }
                updates.emplace_back(k, std::move(upd.theta_global_k));
            }
            aggregate(server, updates);

            double overall = 0.0;
            for (int k = 0; k < K; ++k) {
                writer.round_record(fold, round, cfg.clients[k].name, stats[k]);
                overall += double(server.n_train[k]) / double(server.n_total) *
                           stats[k].train_loss;
            }
            writer.overall_record(fold, round, overall);
        }
        for (int k = 0; k < K; ++k) {
            FoldClientResult r;
            r.fold = fold;
            r.client = cfg.clients[k].name;
            r.held_out_subject = fold % regs[k].format.subjects;
            r.test_acc = outcomes[k].test_acc;
            r.best_round = static_cast<int>(outcomes[k].best_round);
            r.best_val_loss = outcomes[k].best_val_loss;
            writer.fold_result(r, outcomes[k].best_weights);
        }
        for (int k = 0; k < K; ++k) socks[k].send_message(make_shutdown());
        ++fold;
    } while (fold < fold_count);

    writer.finalize();
    return {writer.results()};
}

void run_remote_client(const RunConfig& cfg, const std::string& client_name) {
    int id = -1;
    for (std::size_t k = 0; k < cfg.clients.size(); ++k)
        if (cfg.clients[k].name == client_name) id = static_cast<int>(k);
    if (id < 0) throw ConfigError("no client named '" + client_name + "' in the config");

    const int timeout = cfg.effective_timeout_ms();
    const TrialStore store = load_client_store(cfg.clients[id]);

    int fold = 0;
    int fold_count = -1;
    while (fold_count < 0 || fold < fold_count) {
        Socket sock = connect_to(cfg.address, cfg.port, timeout);
        sock.send_message(make_hello({kProtocolVersion}));

        const FoldAssignment plan =
            plan_fold_for(store, cfg.seed, fold, static_cast<std::size_t>(id));
        sock.send_message(make_register({static_cast<std::uint32_t>(id),
                                         static_cast<std::uint32_t>(fold), store.format,
                                         static_cast<std::uint32_t>(plan.train_idx.size())}));
        const RoundAckPayload ack = parse_round_ack(sock.recv_message(timeout));
        if (ack.fold != static_cast<std::uint32_t>(fold))
            throw ProtocolError("server acknowledged fold " + std::to_string(ack.fold) +
                                " instead of " + std::to_string(fold));
        fold_count = static_cast<int>(ack.fold_count);

        ClientState state;
        state.id = id;
        state.name = client_name;
        state.model = build_model(store.format, arch_for(store.format), cfg.seed,
                                  static_cast<std::uint32_t>(fold),
                                  static_cast<std::uint32_t>(id));
        state.store = &store;
        state.train_idx = plan.train_idx;
        state.val_idx = plan.val_idx;
        state.cfg = {cfg.clients[id].eta, cfg.clients[id].batch};
        const TrainConfig tc = train_config(cfg, fold);

        for (int round = 1; round <= cfg.rounds; ++round) {
            WireMessage msg = sock.recv_message(timeout);
            if (msg.type == MsgType::kError)
                throw ProtocolError("server error: " + parse_error_text(msg));
            const GlobalWeightsPayload gw = parse_global_weights(msg);
            if (gw.round != static_cast<std::uint32_t>(round))
                throw ProtocolError("unexpected round " + std::to_string(gw.round));

            ClientUpdate u = client_update(state, gw.weights, round, tc);
            ClientUpdatePayload payload;
            payload.round = static_cast<std::uint32_t>(round);
            payload.client_id = static_cast<std::uint32_t>(id);
            payload.train_loss = u.stats.train_loss;
            payload.val_loss = u.stats.val_loss;
            payload.val_acc = u.stats.val_acc;
            payload.theta_global_k = std::move(u.theta_global_k);
            if (round == cfg.rounds) {
                const FoldClientResult r =
                    fold_outcome(state, store, fold, plan.held_out_subject);
                FoldOutcome o;
                o.test_acc = r.test_acc;
                o.best_round = static_cast<std::uint32_t>(r.best_round);
                o.best_val_loss = r.best_val_loss;
                o.best_weights = state.best_weights;
                payload.fold_outcome = std::move(o);
            }
            sock.send_message(make_client_update(payload));
        }
        const WireMessage bye = sock.recv_message(timeout);
        if (bye.type == MsgType::kError)
            throw ProtocolError("server error: " + parse_error_text(bye));
        if (bye.type != MsgType::kShutdown)
            throw ProtocolError(std::string("expected SHUTDOWN, got ") +
                                msg_type_name(bye.type));
        ++fold;
    }
}

void generate_trials(const RunConfig& cfg, const std::string& out_dir, bool force) {
    fs::create_directories(out_dir);
    for (const ClientBlock& block : cfg.clients) {
        if (!block.synth) continue;
        const std::string path = out_dir + "/" + block.name + ".ftr";
        if (!force && fs::exists(path))
            throw ConfigError(path + " exists; pass --force to overwrite");
        const TrialStore store = generate(*block.synth);
        save_trials(store, path);
        std::printf("%s: %zu trials (%d subjects x %d), %d ch @ %g Hz -> %s\n",
                    block.name.c_str(), store.n_trials(), store.format.subjects,
                    store.format.trials_per_subject, store.format.channels,
                    store.format.sample_rate, path.c_str());
    }
}

void saliency_export(const RunConfig& cfg, RunMode mode, const std::string& out_dir) {
    LoadedClients lc = load_all(cfg);
    const std::string weights_dir = out_dir + "/weights_" + run_mode_name(mode);
    for (std::size_t k = 0; k < cfg.clients.size(); ++k) {
        const TrialStore& store = lc.stores[k];
        PersonalizedModel model =
            build_model(store.format, arch_for(store.format), cfg.seed, 0,
                        static_cast<std::uint32_t>(k));
        for (int subject = 0; subject < store.format.subjects; ++subject) {
            std::vector<double> scores(store.format.channels, 0.0);
            int n_maps = 0;
            for (const FoldPlan& plan : lc.plans) {
                if (plan.clients[k].held_out_subject != subject) continue;
                const std::string path = weights_dir + "/best_" + cfg.clients[k].name +
                                         "_fold" + std::to_string(plan.fold) + ".fwt";
                std::ifstream in(path, std::ios::binary);
                if (!in) throw ConfigError("missing trained weights " + path);
                std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                                std::istreambuf_iterator<char>());
                try {
                    set_all_weights(model, decode_weights(bytes));
                } catch (const CompatError& e) {
                    throw CompatError("weights " + path +
                                      " do not match the configured format: " + e.what());
                }
                for (const std::size_t t : held_out_indices(store, subject)) {
                    const std::vector<double> s =
                        saliency(model, store.trial_tensor(t), store.label[t]);
                    for (int c = 0; c < store.format.channels; ++c) scores[c] += s[c];
                    ++n_maps;
                }
            }
            if (n_maps == 0)
                throw Error("subject " + std::to_string(subject) + " of " +
                            cfg.clients[k].name + " is never held out");
            for (double& s : scores) s /= double(n_maps);
            write_saliency_csv(scores, out_dir + "/saliency_" + cfg.clients[k].name + "_" +
                                           std::to_string(subject) + ".csv");
        }
    }
}

}  // namespace fleeg
