// Command-line front end for the regularized Kohn-Sham iteration harness.
//
//   myksoda run           one iteration run, writes trace.txt
//   myksoda sweep         cartesian (p, eps, U) sweep, writes sweep.csv
//   myksoda lemma-check   empirical checks of the convex-analysis lemmas
//   myksoda baseline-prox proximal-point reference minimization
//
// Exit codes: 0 success, 1 ran but goal not met (non-convergence or a failed
// check, artifacts still written), 2 unusable invocation.

#include <CLI11.hpp>

#include "myksoda/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"regularized Kohn-Sham iteration on finite lattices"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir = "myksoda-out";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "config file (key = value lines)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("-o,--output", output_dir, "output directory (created if missing)");
    };

    CLI::App* run = app.add_subcommand("run", "run the KS iteration once");
    CLI::App* sweep = app.add_subcommand("sweep", "run a (p, eps, interaction) sweep");
    CLI::App* lemma = app.add_subcommand("lemma-check", "verify the convex-analysis lemmas");
    CLI::App* baseline =
        app.add_subcommand("baseline-prox", "proximal-point baseline minimization");
    for (CLI::App* sub : {run, sweep, lemma, baseline}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (run->parsed())
        return myksoda::cli_run(config_path, output_dir, std::cout, std::cerr);
    if (sweep->parsed())
        return myksoda::cli_sweep(config_path, output_dir, std::cout, std::cerr);
    if (lemma->parsed())
        return myksoda::cli_lemma_check(config_path, output_dir, std::cout, std::cerr);
    if (baseline->parsed())
        return myksoda::cli_baseline_prox(config_path, output_dir, std::cout, std::cerr);
    return 2;
}
