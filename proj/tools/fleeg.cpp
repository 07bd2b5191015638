#include <malloc.h>

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "fleeg/experiment.hpp"
#include "fleeg/kernels.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitProtocol = 3;
constexpr int kExitDivergence = 4;

std::string resolve_out(const fleeg::RunConfig& cfg, const std::string& flag) {
    if (!flag.empty()) return flag;
    if (!cfg.out.empty()) return cfg.out;
    throw fleeg::ConfigError("no output directory: set --out or the config's \"out\" field");
}

}  // namespace

int main(int argc, char** argv) {
    // training reuses large buffers every chunk; keep them off the mmap path
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, -1);

    CLI::App app{"fleeg: hierarchical personalized federated learning for EEG decoding"};
    app.require_subcommand(1);

    std::string config_path, out_flag, client_name;
    std::uint64_t seed_flag = 0;
    bool seed_set = false, force = false, federated = false, baseline = false;

    const auto add_common = [&](CLI::App* sub, bool needs_out) {
        sub->add_option("--config", config_path, "run configuration file")->required();
        if (needs_out) sub->add_option("--out", out_flag, "output directory");
        sub->add_option("--seed", seed_flag, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("gen", "materialize synthetic clients as trial files");
    add_common(gen, true);
    gen->add_flag("--force", force, "overwrite existing trial files");

    CLI::App* train = app.add_subcommand("train", "run every fold, in process");
    add_common(train, true);
    train->add_flag("--federated", federated, "server-coordinated training");
    train->add_flag("--baseline", baseline, "independent per-client training");

    CLI::App* sal = app.add_subcommand("saliency", "export per-channel saliency maps");
    add_common(sal, true);
    sal->add_flag("--federated", federated, "use the federated run's weights (default)");
    sal->add_flag("--baseline", baseline, "use the baseline run's weights");

    CLI::App* serve = app.add_subcommand("serve", "coordinate remote clients over TCP");
    add_common(serve, true);

    CLI::App* client = app.add_subcommand("client", "join a served federation");
    client->add_option("name", client_name, "which configured client this process is")
        ->required();
    add_common(client, false);

    try {
        app.parse(argc, argv);

        fleeg::RunConfig cfg = fleeg::load_run_config(config_path);
        if (seed_set) cfg.seed = seed_flag;

        if (gen->parsed()) {
            fleeg::generate_trials(cfg, resolve_out(cfg, out_flag), force);
        } else if (train->parsed()) {
            if (federated == baseline)
                throw fleeg::ConfigError("train: pass exactly one of --federated/--baseline");
            const auto mode =
                federated ? fleeg::RunMode::kFederated : fleeg::RunMode::kBaseline;
            const auto outcome = fleeg::run_experiment(cfg, mode, resolve_out(cfg, out_flag));
            std::printf("%s run: %zu fold results written\n", fleeg::run_mode_name(mode),
                        outcome.folds.size());
        } else if (sal->parsed()) {
            const auto mode = baseline ? fleeg::RunMode::kBaseline : fleeg::RunMode::kFederated;
            fleeg::saliency_export(cfg, mode, resolve_out(cfg, out_flag));
        } else if (serve->parsed()) {
            const auto outcome = fleeg::serve_experiment(cfg, resolve_out(cfg, out_flag));
            std::printf("served federation: %zu fold results written\n", outcome.folds.size());
        } else if (client->parsed()) {
            fleeg::run_remote_client(cfg, client_name);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const fleeg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fleeg::ProtocolError& e) {
        std::fprintf(stderr, "protocol error: %s\n", e.what());
        return kExitProtocol;
    } catch (const fleeg::DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
