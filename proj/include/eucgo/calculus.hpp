#pragma once

#include <array>
#include <vector>

#include <Eigen/Sparse>

#include "eucgo/metric.hpp"

namespace eucgo {

using SpMat = Eigen::SparseMatrix<double>;

// Divergence-form stencil (1/sqrt g) d_i(sqrt g g^ij d_j u) on every lattice
// node; rows of lattice-boundary nodes are empty.
SpMat laplace_beltrami_matrix(const Grid& grid, const MetricField& metric);

RVec laplace_beltrami(const Grid& grid, const MetricField& metric, const RVec& u);
CVec laplace_beltrami(const Grid& grid, const MetricField& metric, const CVec& u);

struct NodeDerivatives {
    Vec3 df;   // partials d_j f
    Vec3 grad; // g^{jk} d_k f
    Mat3 hess; // d_j d_k f - Gamma^l_jk d_l f
};

// Christoffel symbols Gamma^l_jk at a node; gamma[l](j,k).
std::array<Mat3, 3> christoffel(const Grid& grid, const MetricField& metric, int node);

// Central differences on f plus the Christoffel correction. Throws
// domain_grid.margin if a node lies on the lattice boundary.
std::vector<NodeDerivatives> gradient_and_hessian(const Grid& grid, const MetricField& metric,
                                                  const RVec& f, const std::vector<int>& nodes);

// Same, but with the partial derivatives supplied (for analytically known fields).
NodeDerivatives covariant_from_partials(const Grid& grid, const MetricField& metric, int node,
                                        const Vec3& df, const Mat3& ddf);

std::vector<int> lattice_interior_nodes(const Grid& grid);

// Node quadrature sum_n sqrt g h^3 a_n b_n (bilinear, no conjugation).
double weighted_dot(const Grid& grid, const MetricField& metric, const RVec& a, const RVec& b);

} // namespace eucgo
