#pragma once

#include <memory>
#include <string>
#include <vector>

#include "eucgo/moments.hpp"
#include "eucgo/trace_recon.hpp"
#include "eucgo/weights.hpp"

namespace eucgo {

// Geometry shared by every pipeline stage. Holds no potential other than q*.
struct PipelineContext {
    const Grid* grid = nullptr;
    const MetricField* metric = nullptr;
    const WeightField* phi = nullptr; // sign +1
    const WeightField* psi = nullptr; // sign -1
    RVec q_star;
    int J = 4, M = 6;
    bool use_k = true; // K_tau as the CGO kernel; otherwise H_tau / L_tau
    GammaConfig gamma;
    TraceSolveOptions trace;
};

// Conjugated operators for one tau. The phi kernel is K(P_phi, P_psi), the psi
// kernel K(P_psi, P_phi), so two factorizations serve both families.
struct TauKernels {
    double tau = 0;
    std::unique_ptr<ConjugatedOperator> p_phi, p_psi;
    std::unique_ptr<KOperator> k_phi, k_psi;
    Kernel kern_phi, kern_psi;
    TauKernels(const PipelineContext& ctx, double tau);
};

// Amplitudes h = z^0 .. z^J for every profile, columns ordered profile-major.
CMat sample_amplitudes(const PipelineContext& ctx, const std::vector<ProfileChi>& chis, double eps);

// Boundary traces of one CGO family, each column scaled by exp(-log_scale).
struct TraceBatch {
    CMat traces;
    double log_scale = 0;
};

// <u1_a, (Lambda_2 - Lambda_1) u2_b> for every profile: rows a, columns b.
std::vector<Eigen::MatrixXcd> pair_traces(const DNMatrix& dn1, const DNMatrix& dn2, const TraceBatch& t1,
                                          const TraceBatch& t2, int profiles, int J);

struct TauDiagnostics {
    double tau = 0, eps = 0;
    int cgo_terms_1 = 0, cgo_terms_2 = 0;      // worst over columns
    double remainder_1 = 0, remainder_2 = 0;   // worst |r| / |v|
    double contraction_1 = 0, contraction_2 = 0;
    double cgo_residual = 0;
    int trace_terms = 0;         // blind mode: worst Neumann terms
    double trace_residual = 0;   // blind mode: worst equation residual
    double spectral_radius = 0;  // blind mode: worst series ratio
    bool dense = false;
    double seconds = 0;
};

// Simulation mode: CGOs solved with the true potentials.
PairingBatchProvider make_simulation_provider(const PipelineContext& ctx, const RVec& q1, const RVec& q2,
                                              const DNMatrix& dn1, const DNMatrix& dn2,
                                              std::vector<TauDiagnostics>* diag = nullptr);

// Blind mode: only the two DN matrices, q*, the metric and the weights reach
// this point; the traces come from the boundary trace equation.
PairingBatchProvider make_blind_provider(const PipelineContext& ctx, const DNMatrix& dn1, const DNMatrix& dn2,
                                         std::vector<TauDiagnostics>* diag = nullptr);

// Blind traces of one family at one tau: the q* CGO traces fed through the
// trace equation for Lambda.
std::vector<TraceSolution> blind_traces(const PipelineContext& ctx, const Kernel& kern, const DNMatrix& dn,
                                        const CMat& u0);

struct ReconstructionConfig {
    ExtractionConfig extraction;
    Box window;      // in-plane (x1, x2) window of the planes
    double mu = 1e-8;
};

struct ReconstructionResult {
    ExtractionResult extraction;
    std::vector<PlaneSpec> planes;
    std::vector<PlaneFit> fits;
    RVec q;          // q2 - q1 estimate on the lattice, zero off V
};

ReconstructionResult reconstruct_difference(const PairingBatchProvider& provider, const Grid& grid,
                                            const ReconstructionConfig& cfg);

} // namespace eucgo
