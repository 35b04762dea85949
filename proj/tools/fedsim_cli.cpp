#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/harness.hpp"

namespace {

struct CliArgs {
    std::string spec_path;
    std::string out_dir = "out";
    std::size_t seeds = 0;  // 0 = keep spec value
    std::size_t threads = 1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--spec", args.spec_path, "experiment spec file")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seeds", args.seeds, "override replicate count");
    cmd->add_option("--threads", args.threads,
                    "worker threads (never affects outputs)");
    cmd->add_flag("--quiet", args.quiet, "suppress progress lines");
}

int execute(const CliArgs& args, fedsim::ExperimentMode mode) {
    fedsim::ExperimentSpec spec = fedsim::load_spec(args.spec_path);
    spec.mode = mode;
    if (args.seeds > 0) spec.seeds = args.seeds;
    spec.validate();

    fedsim::HarnessOptions opts;
    opts.out_dir = args.out_dir;
    opts.threads = args.threads;
    opts.quiet = args.quiet;

    fedsim::ResultManifest manifest = fedsim::run_experiment(spec, opts);
    return manifest.passed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated SGD simulator with stale-gradient reuse"};
    app.require_subcommand(1);

    CliArgs args;
    struct Sub {
        const char* name;
        const char* help;
        fedsim::ExperimentMode mode;
    };
    const Sub subs[] = {
        {"train", "run federated SGD and record the trajectory",
         fedsim::ExperimentMode::train},
        {"staleness-check", "compare emergent staleness to the geometric law",
         fedsim::ExperimentMode::staleness},
        {"verify-lemma1", "test the implicit-momentum update identity",
         fedsim::ExperimentMode::lemma1},
        {"check-theorem", "evaluate the convergence bound over a grid",
         fedsim::ExperimentMode::theorem},
        {"sweep", "cartesian sweep over the spec's grid axes",
         fedsim::ExperimentMode::sweep},
    };
    for (const Sub& s : subs) add_common(app.add_subcommand(s.name, s.help), args);

    CLI11_PARSE(app, argc, argv);

    try {
        for (const Sub& s : subs) {
            if (app.get_subcommand(s.name)->parsed()) return execute(args, s.mode);
        }
        return 3;
    } catch (const fedsim::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fedsim::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const fedsim::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const fedsim::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
