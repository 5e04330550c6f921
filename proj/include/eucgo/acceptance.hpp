#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace eucgo {

struct AcceptanceOptions {
    std::uint64_t seed = 1;
    int workers = 1;
    std::filesystem::path scratch = "acceptance_runs"; // per-criterion output directories
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    // Measured quantities and their bounds; deterministic for a fixed seed.
    std::vector<std::pair<std::string, double>> values;
    std::string detail;
    double seconds = 0; // wall clock, kept out of manifests
};

// Criteria 1 to 10; 10 runs `selftest` twice and compares the manifests.
CriterionResult run_criterion(int id, const AcceptanceOptions& opt);

// Built-in scenarios used by the criteria, also shipped under scenarios/.
// Names: default32, gaussian24, blind24, degenerate16, quick16.
const std::string& builtin_scenario(const std::string& name);

} // namespace eucgo
