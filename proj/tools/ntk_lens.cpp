// ntk-lens: experiment driver for the NTK diagnostics library.
//
//   ntk-lens diagnose|bandit|continual|figure1 --config <file> [--out <dir>] [--seeds a,b,c]
//
// Exit codes: 0 full success, 2 partial failure (some cells failed and were
// recorded in the manifest), 1 configuration/usage error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ntklens/errors.hpp"
#include "ntklens/harness.hpp"

namespace {

struct SubArgs {
    std::string config;
    std::string out;
    std::string seeds;
};

void add_experiment(CLI::App& app, const std::string& name, const std::string& desc,
                    SubArgs& args, ntklens::ExperimentKind& kind, bool& chosen) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", args.config, "key-value experiment config file")->required();
    sub->add_option("--out", args.out, "output directory (overrides the config)");
    sub->add_option("--seeds", args.seeds, "comma-separated seed list (overrides the config)");
    sub->callback([&, name] {
        kind = ntklens::ExperimentConfig::parse_kind(name);
        chosen = true;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NTK laboratory: stability diagnostics, neural bandits, continual learning"};
    app.require_subcommand(1);

    SubArgs args;
    ntklens::ExperimentKind kind = ntklens::ExperimentKind::Diagnose;
    bool chosen = false;
    add_experiment(app, "diagnose", "NGD stability width sweep", args, kind, chosen);
    add_experiment(app, "bandit", "contextual bandit regret comparison", args, kind, chosen);
    add_experiment(app, "continual", "rotation-task forgetting sweep", args, kind, chosen);
    add_experiment(app, "figure1", "infinite- vs finite-width regression comparison", args,
                   kind, chosen);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems are configuration errors
    }
    if (!chosen) return 1;

    try {
        const auto config = ntklens::ExperimentConfig::load(kind, args.config, args.out,
                                                            args.seeds);
        const ntklens::RunOutcome outcome = ntklens::run_experiment(config);
        for (const auto& incident : outcome.manifest.incidents)
            std::cerr << "incident: " << incident << "\n";
        std::cout << "wrote " << outcome.manifest.files.size() << " file(s) to "
                  << config.out_dir << "\n";
        return outcome.partial_failure ? 2 : 0;
    } catch (const ntklens::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const ntklens::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
