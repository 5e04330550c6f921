#pragma once

#include <functional>
#include <memory>

#include "eucgo/conjugated.hpp"
#include "eucgo/forward.hpp"

namespace eucgo {

// The two pieces of Omega cut by the plane x3 = c, or Omega itself.
enum class Component { Upper, Lower, Whole };

struct ContinuationConfig {
    double plane_c = 0;
    double certificate = 1e-6;  // largest relative data-consistency residual accepted
    double discrepancy = 2.0;   // target residual in units of the consistency residual
    double residual_floor = 1e-12;
    int ladder = 10;            // alpha values, one decade apart
};

struct ContinuationResult {
    Component component = Component::Whole;
    CVec u;                   // lattice field, valid where known != 0
    std::vector<char> known;  // Omega nodes of the component outside the interior of V
    int level = 0;            // index into the alpha ladder
    double alpha = 0;
    double residual = 0;      // relative residual at the chosen alpha
    double consistency = 0;   // relative residual at the smallest alpha
    // Faces of V inside the component: values and outward normal derivative
    // (one-sided, second order, along the first face axis of the node).
    std::vector<int> face_nodes;
    CVec face_values, face_normal;
};

// Regularized least-squares continuation of Cauchy data (f, Lambda f) on dOmega
// into the component minus the interior of V, for (Delta_g - q*) u = 0. Rows are
// the weak-form rows of the q* energy matrix whose stencil avoids the interior of
// V and the other component; q = q* is assumed on the faces of V. The factorizations
// depend only on the geometry, so one object serves every data vector.
class ExteriorContinuation {
public:
    ExteriorContinuation(const Grid& grid, const MetricField& metric, const RVec& q_star,
                         Component comp, const ContinuationConfig& cfg = {});
    ~ExteriorContinuation();
    ExteriorContinuation(const ExteriorContinuation&) = delete;
    ExteriorContinuation& operator=(const ExteriorContinuation&) = delete;

    // f on boundary_nodes; neumann = Lambda_q f in the DN matrix convention.
    // level < 0 picks alpha by the discrepancy principle, otherwise that ladder
    // entry is used (the certificate is still checked).
    ContinuationResult solve(const CVec& f, const CVec& neumann, int level = -1) const;

    Component component() const { return comp_; }
    int unknowns() const { return static_cast<int>(cols_.size()); }
    int equations() const { return static_cast<int>(row_nodes_.size()); }

private:
    struct Ladder;
    const Grid& grid_;
    Component comp_;
    ContinuationConfig cfg_;
    std::vector<int> cols_, col_of_, row_nodes_;
    SpMat M_, B_;    // scaled rows on unknowns / on boundary data
    RVec row_scale_; // 1 / max |row|
    RVec bweights_;
    std::vector<char> row_is_boundary_;
    std::vector<int> row_bpos_;
    std::unique_ptr<Ladder> ladder_;
};

// V as a box of nodes: the interior (all six neighbours in V) and the two node
// layers straddling its faces.
struct VLayers {
    std::vector<char> theta;     // 1 on V nodes
    std::vector<char> interior;  // 1 on V nodes whose six neighbours are in V
    std::vector<int> inner, outer;
};
VLayers v_layers(const Grid& grid);

// G_tau(x; y) = e^{tau phi(x)} k_tau(x; y) e^{-tau phi(y)} with k_tau the kernel of K.
// It is never assembled; rows and boundary actions go through K.
class GreenKernel {
public:
    explicit GreenKernel(const Kernel& kern) : kern_(kern) {}
    double tau() const { return kern_.op().tau(); }
    const RVec& weight() const { return kern_.op().weight(); }
    const Kernel& kernel() const { return kern_; }

    // Row x as a field in y: G(x; y) = exp(offset) * values[y].
    struct Row {
        double offset = 0;
        RVec values;
    };
    Row row(int x) const;

    // sum_y G(b; y) F(y) dmu_y at the boundary nodes b of Omega.
    CVec apply_boundary(const CVec& F) const;
    CMat apply_boundary_batch(const CMat& F) const; // column-wise

private:
    const Kernel& kern_;
};

// Relative size of (Delta_g - q*)_y G(x; y) over the V nodes y, against
// |L| |G(x; .)| on V. Small for x away from V.
double green_adjoint_defect(const GreenKernel& G, const MetricField& metric, const RVec& q_star, int x);

struct GammaConfig {
    ContinuationConfig continuation;
    bool split = false; // upper and lower components; otherwise all of Omega at once
};

// Gamma_tau from Lambda_q, q*, g and the kernel: the continuation supplies u on the
// layers around dV and the discrete Green identity turns the V integral into the
// commutator [theta, Delta_g] u, with theta the indicator of V.
class BlindGamma {
public:
    BlindGamma(const Grid& grid, const MetricField& metric, const RVec& q_star, const GreenKernel& G,
               const DNMatrix& dn, const GammaConfig& cfg = {});
    CVec apply(const CVec& f) const;
    CMat apply_batch(const CMat& f) const; // column-wise
    // Keep the alpha chosen by the last apply (the least regularized over its
    // columns) for every later one, which makes Gamma linear. unfreeze()
    // returns to per-call selection.
    void freeze_alpha();
    void unfreeze() { levels_.clear(); }
    bool frozen() const { return !levels_.empty(); }
    // Continuations of the last column of the last apply, one per component.
    const std::vector<ContinuationResult>& last_continuations() const { return last_; }
    // u on the V layers from the last apply (lattice field).
    const CVec& last_layer_field() const { return layer_u_; }

private:
    const Grid& grid_;
    const GreenKernel& G_;
    const DNMatrix& dn_;
    std::vector<std::unique_ptr<ExteriorContinuation>> parts_;
    VLayers layers_;
    Eigen::SparseMatrix<double, Eigen::RowMajor> L_;
    std::vector<int> levels_;
    mutable std::vector<int> batch_levels_;
    mutable std::vector<ContinuationResult> last_;
    mutable CVec layer_u_;
};

// Gamma_tau f = Tr e^{tau phi} K[(q - q*) e^{-tau phi} R_q f], with R_q from a
// Dirichlet solve. Needs q, so it is the simulation-mode oracle.
CVec apply_gamma_direct(const GreenKernel& G, const ForwardSolver& fwd_q, const RVec& q,
                        const RVec& q_star, const CVec& f);
CMat apply_gamma_direct_batch(const GreenKernel& G, const ForwardSolver& fwd_q, const RVec& q,
                        const RVec& q_star, const CMat& f);

using BoundaryMap = std::function<CVec(const CVec&)>;
using BoundaryBatchMap = std::function<CMat(const CMat&)>; // column-wise

struct TraceSolveOptions {
    double increment_tol = 1e-11;
    int max_terms = 100;
    double ratio_fail = 0.95;
    bool dense_fallback = true;
    double singular_rcond = 1e-12;
};

struct TraceSolution {
    CVec trace;
    int terms = 0;
    std::vector<double> increments;
    double spectral_radius = 0; // from the increment ratios, or the dense spectrum
    bool dense = false;
    double residual = 0; // ||(I - Gamma) f - u0|| / ||u0||
};

// (I - Gamma) f = u0 by Neumann series, or a dense solve when the series does
// not contract. The equation residual is reported, not enforced.
TraceSolution solve_trace_equation(const BoundaryMap& gamma, const CVec& u0,
                                   const TraceSolveOptions& opt = {});
// One equation per column of u0; gamma is applied to the unconverged columns
// together.
std::vector<TraceSolution> solve_trace_equations(const BoundaryBatchMap& gamma, const CMat& u0,
                                                 const TraceSolveOptions& opt = {});

} // namespace eucgo
