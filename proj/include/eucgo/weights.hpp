#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "eucgo/calculus.hpp"

namespace eucgo {

struct WeightSpec {
    double t1 = 0.45, t2 = 0.45; // slab -t1 <= x3 <= t2
    double d1 = 0.5, d2 = 0.5;   // transition widths
    int k = 2;
    double lambda = 2.0;
    int sign = 1; // +1: phi, -1: psi
};

struct Jet {
    double v = 0, d1 = 0, d2 = 0; // value and first two derivatives
};

double eval_chi0(double x3, const WeightSpec& s);
Jet chi0_jet(double x3, const WeightSpec& s);
// Throws carleman_weights.range when lambda u^2 would exceed 700.
double eval_F_lambda(double x, const WeightSpec& s);
Jet F_lambda_jet(double x, const WeightSpec& s);

enum class Region : std::uint8_t { A1 = 1, A2 = 2, A3 = 3 };
Region region_of(double w, const WeightSpec& s);

struct OmegaFields {
    RVec omega, omega_tilde;
};
OmegaFields build_omega(const Grid& grid);

struct WeightField {
    WeightSpec spec;
    RVec phi;
    RVec omega, omega_tilde;
    std::vector<Vec3> df;  // partials of phi (all nodes)
    std::vector<Vec3> grad; // g^{-1} dphi
    std::vector<Mat3> hess; // covariant Hessian; zero on lattice-boundary nodes
    std::vector<std::uint8_t> has_hess;
    std::vector<Region> region;
};

// Checks the spec against the grid (slab plus bands inside U1's x3 extent)
// unless allow_band_truncation is set.
void validate_weight_spec(const Grid& grid, const WeightSpec& s, bool allow_band_truncation);

WeightField build_weight(const Grid& grid, const MetricField& metric, const WeightSpec& spec,
                         const OmegaFields& om);

// Closed-form minimum of D2phi(X,X) + D2phi(grad,grad) over |X| = |grad|, X _|_ grad.
double hormander_min_at(const MetricField& metric, int node, const Vec3& df, const Mat3& hess);
// Oracle: 360 sampled directions followed by golden-section refinement.
double hormander_min_sampled(const MetricField& metric, int node, const Vec3& df, const Mat3& hess,
                             int directions = 360);

struct HormanderReport {
    double min_value = 0;
    int argmin = -1;
    std::array<double, 3> region_min{}; // A1, A2, A3 (+inf when no sample)
    std::array<int, 3> region_count{};
    int samples = 0;
};

HormanderReport check_hormander(const Grid& grid, const MetricField& metric, const WeightField& w,
                                const std::vector<int>& sample_nodes);

struct LambdaSearch {
    double lambda = 0;
    int evaluations = 0;
    HormanderReport phi_report, psi_report;
};

// Smallest lambda (to relative tol) for which both signs pass with margin.
LambdaSearch choose_lambda(const Grid& grid, const MetricField& metric, WeightSpec spec,
                           const std::vector<int>& nodes, double margin = -1e-8,
                           double rel_tol = 1e-3);

struct SeamResidual {
    double seam = 0;
    int order = 0;
    double mismatch = 0; // scaled one-sided derivative mismatch
};
std::vector<SeamResidual> seam_residuals(const WeightSpec& s, double x1 = 1.0);

struct CarlemanRow {
    double h = 0;
    double ratio = 0;      // min over trials
    double mean_ratio = 0;
    bool resolution_warning = false;
};

std::vector<CarlemanRow> estimate_carleman_constant(const Grid& grid, const MetricField& metric,
                                                    const WeightField& w, const RVec& q_star,
                                                    const std::vector<double>& h_values, int trials,
                                                    std::uint64_t seed);

// Single-trial evaluation used by the estimator (exposed for tests).
double carleman_ratio(const Grid& grid, const MetricField& metric, const WeightField& w,
                      const RVec& q_star, const RVec& u, double h);

} // namespace eucgo
