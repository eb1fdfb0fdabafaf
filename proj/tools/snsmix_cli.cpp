// Command-line front end: one subcommand per experiment kind, plus `validate`.
// Exit codes: 0 success, 2 numerical fault, 3 config fault.

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "snsmix/ensemble.hpp"

using namespace snsmix;

int main(int argc, char** argv) {
    CLI::App app{"snsmix: stochastic 2D Navier-Stokes mixing lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false, out_set = false, resume = false;
    int trajectories = 0, threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--out", out_dir, "output directory override")
            ->each([&](const std::string&) { out_set = true; });
        sub->add_flag("--resume", resume, "resume from checkpoints");
        sub->add_option("--trajectories", trajectories, "ensemble size override");
        sub->add_option("--threads", threads, "worker threads");
    };

    const std::vector<std::string> kinds = {"simulate", "lyapunov",  "mixing",  "batchelor",
                                            "drift",    "malliavin", "control", "diagnostics"};
    for (const auto& k : kinds) add_common(app.add_subcommand(k, k + " experiment"));
    auto* validate = app.add_subcommand("validate", "validate a config file and exit");
    validate->add_option("--config", config_path, "JSON config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        ExperimentConfig cfg =
            config_path.empty() ? ExperimentConfig{} : validate_config(config_path);
        if (app.got_subcommand("validate")) {
            std::printf("config ok (hash %llu)\n",
                        static_cast<unsigned long long>(config_hash(cfg)));
            return 0;
        }
        for (const auto& k : kinds)
            if (app.got_subcommand(k)) cfg.kind = kind_from_name(k);
        if (seed_set) cfg.master_seed = seed;
        if (out_set) cfg.out_dir = out_dir;
        if (resume) cfg.resume = true;
        if (trajectories > 0) cfg.ensemble = trajectories;
        if (threads > 0) cfg.threads = threads;
        cfg.solver.validate();

        const RunManifest manifest = run_experiment(cfg);
        std::printf("done: %zu outputs in %s (%.1f s, config hash %llu)\n",
                    manifest.outputs.size(), cfg.out_dir.c_str(), manifest.wall_time_s,
                    static_cast<unsigned long long>(manifest.config_hash));
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config fault: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical fault: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
