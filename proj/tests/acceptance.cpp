// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "eucgo/acceptance.hpp"
#include "eucgo/grid.hpp"

int main(int argc, char** argv) {
    using namespace eucgo;
    CLI::App app{"acceptance criteria"};
    AcceptanceOptions opt;
    std::string scratch = opt.scratch.string();
    std::vector<int> only;
    app.add_option("--scratch", scratch, "directory for per-criterion runs");
    app.add_option("--seed", opt.seed, "random seed");
    app.add_option("--only", only, "run these criteria only");
    CLI11_PARSE(app, argc, argv);
    opt.scratch = scratch;
    if (only.empty())
        for (int i = 1; i <= 10; ++i) only.push_back(i);

    bool all = true;
    for (int id : only) {
        CriterionResult c;
        try {
            c = run_criterion(id, opt);
        } catch (const std::exception& e) {
            c.id = id;
            c.detail = e.what();
        }
        all = all && c.pass;
        std::printf("criterion %2d %s  %s (%.1f s)\n", c.id, c.pass ? "PASS" : "FAIL", c.name.c_str(), c.seconds);
        for (const auto& [k, v] : c.values) std::printf("    %-26s %.6g\n", k.c_str(), v);
        std::printf("    %s\n", c.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
