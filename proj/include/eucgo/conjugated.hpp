#pragma once

#include <cstdint>
#include <memory>

#include "eucgo/calculus.hpp"

namespace eucgo {

// Which conjugation the operator realizes:
//   Forward  e^{-tau w} (Delta_g - q*) e^{tau w}   (w = phi)
//   Reverse  same with tau -> -tau
//   Mirror   Forward with the mirror weight (w = psi)
enum class Direction { Forward, Reverse, Mirror };

// Vectors are lattice-sized throughout. "Row" fields are those supported on the
// lattice interior; the operator rows live there, columns span every node.
class ConjugatedOperator {
public:
    ConjugatedOperator(const Grid& grid, const MetricField& metric, const RVec& weight, double tau,
                       const RVec& q_star, Direction dir, bool factor = true);
    ~ConjugatedOperator();
    ConjugatedOperator(const ConjugatedOperator&) = delete;
    ConjugatedOperator& operator=(const ConjugatedOperator&) = delete;

    double tau() const { return tau_; }
    Direction direction() const { return dir_; }
    const Grid& grid() const { return grid_; }
    const RVec& weight() const { return w_; }
    const RVec& node_weights() const { return mass_; } // h^3 sqrt g
    const std::vector<int>& rows() const { return rows_; }
    const SpMat& matrix() const { return P_; } // rows() x all nodes

    RVec apply(const RVec& v) const;
    CVec apply(const CVec& v) const;
    // Reference path: exponentiate, apply Delta_g - q*, divide. Only usable
    // while tau*|w| stays in range.
    RVec apply_direct(const RVec& v) const;

    // Minimal-norm right inverse W^-1 P^T (P W^-1 P^T)^-1 f. This is H_tau for
    // the forward operator and L_tau for the mirror one.
    RVec right_inverse(const RVec& f) const;
    CVec right_inverse(const CVec& f) const;
    // Adjoint of the right inverse in the weighted inner product: returns a row field.
    RVec right_inverse_adjoint(const RVec& g) const;
    CVec right_inverse_adjoint(const CVec& g) const;
    // Orthogonal projector onto ker P.
    RVec project_kernel(const RVec& x) const;
    CVec project_kernel(const CVec& x) const;
    // Column-wise versions (columns are lattice fields); one factor sweep serves
    // all columns.
    RMat right_inverse_batch(const RMat& F) const;
    RMat right_inverse_adjoint_batch(const RMat& G) const;
    RMat project_kernel_batch(const RMat& X) const;
    RMat restrict_rows_batch(const RMat& X) const;

    // Relative residual of P (right_inverse f) - f, measured on the last solve.
    double last_residual() const { return last_residual_; }

    double norm(const RVec& x) const; // weighted L2
    double norm(const CVec& x) const;
    RVec restrict_rows(const RVec& x) const; // zero the lattice boundary
    CVec restrict_rows(const CVec& x) const;

private:
    struct Factor;
    const Grid& grid_;
    double tau_;
    Direction dir_;
    RVec w_, mass_;
    std::vector<int> rows_, row_of_;
    SpMat P_;
    std::unique_ptr<Factor> factor_;
    const MetricField& metric_;
    RVec q_star_;
    mutable double last_residual_ = 0;

    RVec solve_normal(const RVec& rhs_rows) const;
    RMat solve_normal_batch(const RMat& rhs_rows) const;
    RVec gather(const RVec& x) const;  // lattice -> rows
    RVec scatter(const RVec& y) const; // rows -> lattice
};

// tau_min = 5 / diam(Omega_1)
double tau_minimum(const Grid& grid);

// K_tau = H_tau + pi_tau L_tau^*, with H, pi from `primary` and L from `mirror`.
class KOperator {
public:
    KOperator(const ConjugatedOperator& primary, const ConjugatedOperator& mirror);
    RVec apply(const RVec& f) const;
    CVec apply(const CVec& f) const;
    RMat apply_batch(const RMat& F) const;
    CMat apply_batch(const CMat& F) const;
    RVec apply_adjoint(const RVec& g) const;
    // Idempotence defect of the projector on a random vector, relative.
    double projector_defect(std::uint64_t seed) const;
    const ConjugatedOperator& primary() const { return p_; }

private:
    const ConjugatedOperator& p_;
    const ConjugatedOperator& m_;
};

// Either kernel behind one interface so the CGO solve is agnostic.
struct Kernel {
    const ConjugatedOperator* right = nullptr; // H (or L)
    const KOperator* k = nullptr;              // K, when set it wins
    CVec apply(const CVec& f) const;
    RVec apply(const RVec& f) const;
    CMat apply_batch(const CMat& F) const;
    RVec apply_adjoint(const RVec& g) const;
    const ConjugatedOperator& op() const { return k ? k->primary() : *right; }
};

struct NormEstimate {
    double norm = 0;
    int iterations = 0;
    double last_change = 0;
};
// Power iteration on Kern^* Kern in the weighted inner product.
NormEstimate estimate_norm(const Kernel& kern, int max_iter, std::uint64_t seed, double tol = 1e-4);

struct CGOSolveOptions {
    double increment_tol = 1e-12;
    int max_terms = 200;
    double ratio_fail = 0.95;
    // Supply a known kernel norm to skip power iteration (negative: estimate).
    double kernel_norm = -1;
    std::uint64_t seed = 1;
};

struct CGOSolution {
    double tau = 0, eps = 0;
    int kind = 0; // PhaseKind as int
    // u = e^{tau w} y with w the kernel weight; y stays O(1) where e^{tau w} would not.
    CVec y;
    // Trace on boundary_nodes: u|_dOmega = exp(trace_log_scale) * trace.
    double trace_log_scale = 0;
    CVec trace;
    CVec remainder; // r in u = e^{tau Phi}(v + r)
    double remainder_norm = 0;
    double residual = 0; // scaled interior residual of (-Delta_g + q) u
    int terms = 0;
    std::vector<double> increments;
    double contraction = 0; // ||q - q*||_inf ||Kern||
    double kernel_norm = 0;
};

// Builds u = e^{tau Phi} v + e^{tau w} Kern[sum_j (D Kern)^j F], D = q - q*,
// F = -e^{-tau w}(Delta_g - q)(e^{tau Phi} v), where w = Re Phi is the
// kernel's weight.
CGOSolution solve_cgo(const Kernel& kern, const MetricField& metric, const RVec& q,
                      const RVec& q_star, const CVec& phase, const CVec& amplitude, double eps,
                      int kind, const CGOSolveOptions& opt = {});

// One solve per amplitude column, sharing every kernel application. Columns
// stop contributing once their own series has converged.
std::vector<CGOSolution> solve_cgo_batch(const Kernel& kern, const MetricField& metric, const RVec& q,
                                         const RVec& q_star, const CVec& phase, const CMat& amplitudes,
                                         double eps, int kind, const CGOSolveOptions& opt = {});

// Scaled residual of (-Delta_g + q)(e^{tau Phi} y) on lattice-interior nodes,
// for y given relative to the kernel weight: the field is e^{tau w} y.
double cgo_interior_residual(const Grid& grid, const MetricField& metric, const RVec& q,
                             const RVec& weight, double tau, const CVec& y);

// Kendall tau-b of a sequence against its index.
double kendall_tau_b(const std::vector<double>& x);

} // namespace eucgo
