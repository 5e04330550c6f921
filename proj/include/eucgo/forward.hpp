#pragma once

#include <memory>

#include <Eigen/SparseLU>

#include "eucgo/calculus.hpp"

namespace eucgo {

struct DNMatrix {
    Eigen::MatrixXd matrix;  // Lambda = W^{-1} S, acts on boundary data
    RVec quadrature_weights; // W, surface trapezoid weights per boundary node
    Eigen::MatrixXd schur;   // S, the weak-form boundary matrix (W Lambda)
    std::array<int, 3> dims{};
    int pad = 0;

    // <f, Lambda h>_W, bilinear
    cplx pair(const CVec& f, const CVec& h) const;
    double symmetry_defect() const;
};

// Lattice-indexed matrix of the energy form below (rows and columns outside
// closed Omega are empty). node_weights, when given, receives h^3 sqrt(g) with
// the trapezoid face factors.
SpMat energy_matrix(const Grid& grid, const MetricField& metric, const RVec& q,
                    RVec* node_weights = nullptr);

// Energy form on closed Omega with trapezoid node/edge weights:
//   a(u,v) = sum_edges w_e c_aa (du)(dv)/h_a^2 + sum_nodes w_n sqrt(g) q u v.
// Interior rows equal h^3 sqrt(g) (-Delta_g + q), matching laplace_beltrami_matrix.
class ForwardSolver {
public:
    ForwardSolver(const Grid& grid, const MetricField& metric, const RVec& q, int workers = 1);

    // f on boundary_nodes; returns a lattice field (zero outside closed Omega).
    CVec solve_dirichlet(const CVec& f) const;
    RVec solve_dirichlet(const RVec& f) const;
    DNMatrix assemble_dn() const;

    // Weighted interior residual |(-Delta+q)u| / scale, for diagnostics.
    double interior_residual(const CVec& u) const;
    double smallest_eigen_estimate() const { return mu_min_; }
    const RVec& node_weights() const { return node_w_; } // lattice-sized, zero off Omega

private:
    const Grid& grid_;
    int workers_;
    std::vector<int> interior_, boundary_; // lattice indices
    std::vector<int> local_;               // lattice -> interior position or -1
    SpMat A_ii_, A_ib_, A_bb_;
    RVec node_w_;
    Eigen::SparseLU<SpMat> lu_;
    double mu_min_ = 0;
    double a_norm_ = 0;

    RVec solve_interior(const RVec& rhs) const;
};

// <f1, (Lambda_2 - Lambda_1) f2>_W
cplx green_pairing(const DNMatrix& l1, const DNMatrix& l2, const CVec& f1, const CVec& f2);

RVec boundary_weights(const Grid& grid);

} // namespace eucgo
