// Command-line front end: one subcommand per pipeline stage.
#include <iostream>

#include "CLI11.hpp"

#include "eucgo/runner.hpp"

int main(int argc, char** argv) {
    using namespace eucgo;
    CLI::App app{"Euclidean-slab CGO reconstruction from DN data"};
    app.require_subcommand(1);
    std::string scenario_path;
    CommandOptions opt;
    std::uint64_t seed = 0;
    app.add_option("--scenario", scenario_path, "scenario file (JSON)")->required();
    app.add_option("--out", opt.out, "output directory (overrides the scenario)");
    app.add_option("--workers", opt.workers, "worker count")->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", seed, "random seed");
    for (const std::string& name : command_names()) app.add_subcommand(name);
    app.fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    opt.has_seed = seed_opt->count() > 0;
    opt.seed = seed;

    try {
        RunReport rep = run_command(command, load_scenario(scenario_path), opt);
        for (const Certificate& c : rep.certificates)
            std::cout << (c.pass ? "ok   " : "FAIL ") << c.name << "  value=" << c.value << "  bound=" << c.bound
                      << '\n';
        std::cout << command << ": " << (rep.ok() ? "pass" : "fail") << '\n';
        return rep.ok() ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << "error [" << e.code() << "] " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error " << e.what() << '\n';
        return 3;
    }
}
