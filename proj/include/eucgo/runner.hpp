#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "eucgo/scenario.hpp"

namespace eucgo {

struct CommandOptions {
    std::string out;       // overrides scenario.out when set
    int workers = 0;       // overrides when > 0
    bool has_seed = false; // overrides scenario.seed
    std::uint64_t seed = 0;
};

// A certificate is a named pass/fail with the measured value and its bound.
struct Certificate {
    std::string name;
    double value = 0, bound = 0;
    bool pass = false;
};

struct RunReport {
    nlohmann::ordered_json manifest; // deterministic: no wall-clock values
    std::vector<Certificate> certificates;
    bool ok() const;
};

const std::vector<std::string>& command_names();

// Runs one command; writes CSV dumps and `manifest.json` into the output
// directory. Module errors propagate as Error.
RunReport run_command(const std::string& command, Scenario scenario, const CommandOptions& opt);

// Static wiring of the blind path: reconstruction from the two DN matrices,
// q*, the metric and the weights alone.
ReconstructionResult reconstruct_blind(const PipelineContext& ctx, const DNMatrix& dn1, const DNMatrix& dn2,
                                       const ReconstructionConfig& cfg, std::vector<TauDiagnostics>* diag);

// Smallest tau of the ladder whose CGO series contracts and whose blind trace
// equation meets its certificate; -1 when none does.
struct OperatingTau {
    double tau = -1;
    std::vector<double> contraction, trace_residual;
};
OperatingTau operating_tau(const PipelineContext& ctx, const DNMatrix& dn1, const DNMatrix& dn2,
                           const std::vector<double>& taus, double eps_beta, double trace_bound);

} // namespace eucgo
