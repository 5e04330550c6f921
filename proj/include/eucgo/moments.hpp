#pragma once

#include <functional>
#include <string>
#include <vector>

#include "eucgo/ansatz.hpp"
#include "eucgo/forward.hpp"

namespace eucgo {

// Nodes of the grid plane x3 = c restricted to an (x1, x2) window.
struct PlaneSpec {
    int k_index = 0;
    double c = 0;
    std::vector<int> nodes;
    std::vector<cplx> z;
    RVec weights; // h1 h2 per node, matching the interior volume weights
};

PlaneSpec make_plane(const Grid& grid, int k_index, const Box& window);

// sum_plane w f zbar^k z^j
cplx plane_moment(const PlaneSpec& plane, const RVec& f, int k, int j);

enum class Provenance { DirectOracle, DnExtracted };

struct MomentTable {
    int K = 0, J = 0;
    Provenance provenance = Provenance::DirectOracle;
    std::vector<double> c;                 // plane positions
    std::vector<Eigen::MatrixXcd> m;       // per plane, (K+1) x (J+1)
    std::vector<Eigen::MatrixXd> residual; // per plane, same shape
    std::vector<Eigen::MatrixXi> known;    // 1 where m is determined
};

MomentTable direct_moments(const std::vector<PlaneSpec>& planes, const RVec& f, int K, int J);

void write_moments_csv(const std::string& path, const MomentTable& t);

// Largest |m_kj - conj(m_jk)| / max|m| over all planes and known pairs.
double conjugation_defect(const MomentTable& t);

struct EpsFit {
    std::vector<cplx> c; // c_0 .. c_{floor(M/2)}
    cplx inverse_tau = 0;
    bool inverse_tau_merged = false; // 1/tau coincides with a power of eps
    double condition = 0;
    double residual = 0; // relative least-squares residual
};

// Fits S(tau) = sum_k c_k eps^k + d / tau with eps = tau^-beta.
EpsFit extract_eps_polynomial(const std::vector<cplx>& S, const std::vector<double>& tau, double beta,
                              int M);

// Pairings <u1[h1], (Lambda_2 - Lambda_1) u2[h2]> for h1, h2 in {z^0 .. z^J},
// at one tau and one profile; rows index h1.
using PairingProvider =
    std::function<Eigen::MatrixXcd(double tau, double eps, const ProfileChi& chi)>;

// All pairings at one tau, one matrix per profile in the order given.
using PairingBatchProvider = std::function<std::vector<Eigen::MatrixXcd>(
    double tau, double eps, const std::vector<ProfileChi>& chis)>;

struct ExtractionConfig {
    int K = 4, J = 4, M = 6;
    double beta = 0.5;
    std::vector<double> tau_grid;
    std::vector<double> t_ladder = {1.0, 1.5}; // concentration parameters, at least two
    double chi_a = 0.4;           // chi0 half-support
    std::vector<double> eta = {0.05, 0.1};
    std::vector<int> center_planes; // grid k indices where profiles are centred
    double level_tolerance = 0.25;  // relative induction residual allowed
    // How the smoothed level data become plane moments: a least-squares solve
    // of the discrete plane convolution over all centres and t values, or
    // k-fold trapezoid integration followed by order-2 Richardson in t.
    enum class Profile { Deconvolution, Richardson } profile = Profile::Deconvolution;
};

struct LevelDiagnostics {
    int k = 0;
    double fit_residual = 0;        // worst eps-fit residual at this level
    double richardson_change = 0;   // |M_t2 - M_t1| / max|M|, worst over l
    double subtraction_share = 0;   // |R| / |c_k|, worst over l
    double closure = 0;             // deconvolution residual, or top-of-profile mismatch
    double condition = 0;           // deconvolution system condition
};

struct ExtractionResult {
    MomentTable table;
    std::vector<LevelDiagnostics> levels;
    double max_fit_condition = 0;
    std::string report;
};

// Level-by-level induction: the eps^k coefficient of the h = 1 + eta z^l
// pairing, minus lower-level contributions, leaves (-i/2)^k / k! times the
// (chi^2)^{(k)}-smoothed moment of zbar^k z^l, which is unsmoothed across the
// plane ladder (see ExtractionConfig::profile).
ExtractionResult extract_plane_moments(const PairingProvider& provider, const Grid& grid,
                                       const ExtractionConfig& cfg);
// Same, asking for every profile of one tau at once (tau is the outer loop).
ExtractionResult extract_plane_moments_batch(const PairingBatchProvider& provider, const Grid& grid,
                                             const ExtractionConfig& cfg);

// Fills rows k > floor(M/2) from m_kj = conj(m_jk) where the mirror is known.
void fill_by_conjugation(MomentTable& t);

struct PlaneFit {
    RVec values; // on plane.nodes
    Eigen::MatrixXcd coef; // (a, b): coefficient of zeta^a conj(zeta)^b, zeta = z / R
    double residual = 0;
    double condition = 0;
};

PlaneFit invert_moments(const MomentTable& t, int plane_index, const PlaneSpec& plane,
                        const Box& window, double mu_scale = 1e-8);

// Every grid level inside u_box takes the values of the nearest plane; nodes
// off u_box keep q_star. Consecutive planes may skip at most one level.
RVec stack_planes(const Grid& grid, const std::vector<PlaneSpec>& planes,
                  const std::vector<RVec>& fields, const RVec& q_star, const Box& u_box);

} // namespace eucgo
