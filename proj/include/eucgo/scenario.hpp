#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "eucgo/moments.hpp"
#include "eucgo/pipeline.hpp"
#include "eucgo/weights.hpp"

namespace eucgo {

enum class Mode { Simulation, Blind };

// One potential selector: q* + amplitude * bump, or a constant, or a field file.
struct PotentialSpec {
    std::string type = "background"; // background | constant | gaussian | file
    double value = 0;                // constant
    double amplitude = 0;            // gaussian
    Vec3 center = Vec3::Zero();
    Vec3 widths = Vec3::Constant(0.3); // exp(-sum (x - c)_a^2 / w_a^2)
    bool cutoff = true;                // taper to zero on the faces of V
    std::string path;                  // file
};

struct Scenario {
    GridConfig grid;
    std::string metric = "identity"; // identity | diag_x3sq | cap
    std::vector<double> metric_params;
    double q_star = 0.5;
    PotentialSpec q1, q2;
    WeightSpec weight;
    bool lambda_auto = true;
    bool allow_band_truncation = false;
    Mode mode = Mode::Simulation;

    // CGO and reconstruction
    double beta = 0.5;
    int M = 6, J = 4, K = 4;
    bool use_k = true;
    std::vector<double> tau_grid;
    std::vector<double> t_ladder{1.0, 1.5};
    std::vector<double> eta{0.05, 0.1};
    double chi_a = 0.4;
    int center_margin = 2; // planes beyond the faces of V, in nodes
    double level_tolerance = 0.25;
    double mu = 1e-8;
    std::string profile = "deconvolution";

    // cgo-check
    std::vector<double> eps_ladder{0.2, 0.1, 0.05};
    // solve-cgo / trace-recon
    double profile_center = 0, profile_t = 1.0;
    double solve_tau = -1; // resolved to the largest ladder tau when unset
    int h_degree = 0;

    ContinuationConfig continuation;
    TraceSolveOptions trace;
    CGOSolveOptions cgo;

    std::vector<int> selftest; // criteria run by `selftest`
    std::string out = "out";
    int workers = 1;
    std::uint64_t seed = 1;

    nlohmann::ordered_json resolved; // every field above, as used
};

// Parse errors carry the line and column of the offending character; unknown
// keys and bad selectors name the key path.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);
nlohmann::ordered_json resolve(const Scenario& s);

// Built geometry and potentials. q1/q2 are private to the simulation side: the
// blind pipeline reads only dn1, dn2 and the context.
struct World {
    Grid grid;
    MetricField metric;
    WeightField phi, psi;
    RVec q_star, q1, q2;
    DNMatrix dn1, dn2;
    LambdaSearch lambda_search;
};

Grid build_scenario_grid(const Scenario& s);
MetricField build_scenario_metric(const Scenario& s, const Grid& g);
RVec build_potential(const PotentialSpec& p, const Grid& g, double q_star);
// Weights with lambda chosen by bisection when lambda_auto is set.
void build_weights(const Scenario& s, World& w);
// Grid, metric, potentials and weights; the DN matrices only when with_dn.
World build_world(const Scenario& s, bool with_dn);

PipelineContext make_context(const Scenario& s, const World& w);
ExtractionConfig make_extraction(const Scenario& s, const Grid& g);
std::vector<double> tau_ladder(const Scenario& s);

} // namespace eucgo
