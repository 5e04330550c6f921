#include "eucgo/forward.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <thread>

namespace eucgo {

namespace {

bool on_face(const Grid& g, const std::array<int, 3>& c, int a) {
    return c[a] == g.omega_lo(a) || c[a] == g.omega_hi(a);
}

} // namespace

RVec boundary_weights(const Grid& grid) {
    RVec w = RVec::Zero(grid.boundary_nodes.size());
    const Vec3& h = grid.spacing;
    for (size_t i = 0; i < grid.boundary_nodes.size(); ++i) {
        auto c = grid.ijk(grid.boundary_nodes[i]);
        for (int a = 0; a < 3; ++a) {
            if (!on_face(grid, c, a)) continue;
            double area = 1;
            for (int b = 0; b < 3; ++b) {
                if (b == a) continue;
                area *= on_face(grid, c, b) ? 0.5 * h[b] : h[b];
            }
            w[i] += area;
        }
    }
    return w;
}

SpMat energy_matrix(const Grid& grid, const MetricField& metric, const RVec& q, RVec* node_weights) {
    if (!metric.diagonal_on(grid.in_omega))
        throw Error("schrodinger_forward.metric",
                    "the weak-form assembly needs a diagonal metric on closed Omega");
    const int N = grid.size();
    const Vec3& h = grid.spacing;
    const double vol = grid.cell_volume();
    RVec nw = RVec::Zero(N);
    using T = Eigen::Triplet<double>;
    std::vector<T> trip;
    for (int n = 0; n < N; ++n) {
        if (!grid.in_omega[n]) continue;
        auto c = grid.ijk(n);
        double wn = vol;
        for (int a = 0; a < 3; ++a)
            if (on_face(grid, c, a)) wn *= 0.5;
        nw[n] = wn * metric.sqrt_det[n];
        trip.emplace_back(n, n, nw[n] * q[n]);
        for (int a = 0; a < 3; ++a) {
            if (c[a] == grid.omega_hi(a)) continue;
            auto d = c;
            d[a]++;
            int m = grid.index(d[0], d[1], d[2]);
            double we = vol / (h[a] * h[a]);
            for (int b = 0; b < 3; ++b)
                if (b != a && on_face(grid, c, b)) we *= 0.5;
            double cmid = 0.5 * (metric.sqrt_det[n] * metric.g_inv[n](a, a) +
                                 metric.sqrt_det[m] * metric.g_inv[m](a, a));
            double k = we * cmid;
            trip.emplace_back(n, n, k);
            trip.emplace_back(m, m, k);
            trip.emplace_back(n, m, -k);
            trip.emplace_back(m, n, -k);
        }
    }
    SpMat A(N, N);
    A.setFromTriplets(trip.begin(), trip.end());
    if (node_weights) *node_weights = nw;
    return A;
}

ForwardSolver::ForwardSolver(const Grid& grid, const MetricField& metric, const RVec& q,
                             int workers)
    : grid_(grid), workers_(std::max(1, workers)) {
    const int N = grid.size();
    local_.assign(N, -1);
    std::vector<int> bpos(N, -1);
    for (int n = 0; n < N; ++n) {
        if (grid.in_omega_int[n]) {
            local_[n] = static_cast<int>(interior_.size());
            interior_.push_back(n);
        }
    }
    boundary_ = grid.boundary_nodes;
    for (size_t i = 0; i < boundary_.size(); ++i) bpos[boundary_[i]] = static_cast<int>(i);

    SpMat A = energy_matrix(grid, metric, q, &node_w_);
    using T = Eigen::Triplet<double>;
    std::vector<T> tii, tib, tbb;
    for (int col = 0; col < A.outerSize(); ++col)
        for (SpMat::InnerIterator it(A, col); it; ++it) {
            int r = static_cast<int>(it.row()), c = col;
            if (local_[r] >= 0) {
                if (local_[c] >= 0) tii.emplace_back(local_[r], local_[c], it.value());
                else tib.emplace_back(local_[r], bpos[c], it.value());
            } else if (local_[c] < 0) {
                tbb.emplace_back(bpos[r], bpos[c], it.value());
            }
        }
    const int ni = static_cast<int>(interior_.size());
    const int nb = static_cast<int>(boundary_.size());
    A_ii_.resize(ni, ni);
    A_ib_.resize(ni, nb);
    A_bb_.resize(nb, nb);
    A_ii_.setFromTriplets(tii.begin(), tii.end());
    A_ib_.setFromTriplets(tib.begin(), tib.end());
    A_bb_.setFromTriplets(tbb.begin(), tbb.end());
    A_ii_.makeCompressed();

    lu_.analyzePattern(A_ii_);
    lu_.factorize(A_ii_);
    if (lu_.info() != Eigen::Success)
        throw Error("schrodinger_forward.eigenvalue",
                    "Dirichlet operator is singular; perturb q so that 0 is not a Dirichlet "
                    "eigenvalue");

    // Row-sum norm and an inverse-iteration estimate of the smallest |eigenvalue|.
    for (int r = 0; r < ni; ++r) a_norm_ = std::max(a_norm_, A_ii_.row(r).cwiseAbs().sum());
    RVec x(ni);
    for (int i = 0; i < ni; ++i) x[i] = 1.0 + 0.25 * std::sin(1.7 * i);
    x.normalize();
    double growth = 0;
    for (int it = 0; it < 12; ++it) {
        RVec y = lu_.solve(x);
        growth = y.norm();
        if (!std::isfinite(growth)) break;
        x = y / growth;
    }
    mu_min_ = std::isfinite(growth) && growth > 0 ? 1.0 / growth : 0.0;
    if (mu_min_ < 1e-10 * a_norm_) {
        std::ostringstream os;
        os << "Dirichlet operator is numerically singular (smallest |eigenvalue| ~ " << mu_min_
           << ", scale " << a_norm_ << "); perturb q so that 0 is not a Dirichlet eigenvalue";
        throw Error("schrodinger_forward.eigenvalue", os.str());
    }
}

RVec ForwardSolver::solve_interior(const RVec& rhs) const {
    RVec x = lu_.solve(rhs);
    const double scale = std::max(rhs.norm(), 1e-300);
    for (int it = 0; it < 3; ++it) {
        RVec r = rhs - A_ii_ * x;
        if (r.norm() <= 1e-13 * scale) break;
        x += lu_.solve(r);
    }
    return x;
}

RVec ForwardSolver::solve_dirichlet(const RVec& f) const {
    if (f.size() != static_cast<Eigen::Index>(boundary_.size()))
        throw Error("schrodinger_forward.dimension", "boundary data size mismatch");
    RVec ui = solve_interior(-(A_ib_ * f));
    RVec u = RVec::Zero(grid_.size());
    for (size_t i = 0; i < interior_.size(); ++i) u[interior_[i]] = ui[i];
    for (size_t i = 0; i < boundary_.size(); ++i) u[boundary_[i]] = f[i];
    return u;
}

CVec ForwardSolver::solve_dirichlet(const CVec& f) const {
    RVec re = solve_dirichlet(RVec(f.real()));
    RVec im = solve_dirichlet(RVec(f.imag()));
    CVec u(re.size());
    u.real() = re;
    u.imag() = im;
    return u;
}

double ForwardSolver::interior_residual(const CVec& u) const {
    CVec ui(interior_.size()), ub(boundary_.size());
    for (size_t i = 0; i < interior_.size(); ++i) ui[i] = u[interior_[i]];
    for (size_t i = 0; i < boundary_.size(); ++i) ub[i] = u[boundary_[i]];
    CVec r = A_ii_.cast<cplx>() * ui + A_ib_.cast<cplx>() * ub;
    double scale = a_norm_ * std::max(ub.norm(), 1e-300);
    return r.norm() / scale;
}

DNMatrix ForwardSolver::assemble_dn() const {
    const int nb = static_cast<int>(boundary_.size());
    DNMatrix dn;
    dn.dims = grid_.dims;
    dn.pad = grid_.omega_pad;
    dn.quadrature_weights = boundary_weights(grid_);
    Eigen::MatrixXd AIB = Eigen::MatrixXd(A_ib_);
    Eigen::MatrixXd S = Eigen::MatrixXd(A_bb_);
    // Column blocks are independent solves against one shared factorization.
    const int block = 64;
    const int nblocks = (nb + block - 1) / block;
    std::vector<Eigen::MatrixXd> parts(nblocks);
    auto work = [&](int w) {
        for (int b = w; b < nblocks; b += workers_) {
            int c0 = b * block, nc = std::min(block, nb - c0);
            Eigen::MatrixXd X(AIB.rows(), nc);
            for (int j = 0; j < nc; ++j) X.col(j) = solve_interior(AIB.col(c0 + j));
            parts[b] = AIB.transpose() * X;
        }
    };
    if (workers_ == 1) {
        work(0);
    } else {
        std::vector<std::thread> th;
        for (int w = 0; w < workers_; ++w) th.emplace_back(work, w);
        for (auto& t : th) t.join();
    }
    for (int b = 0; b < nblocks; ++b) {
        int c0 = b * block;
        S.middleCols(c0, parts[b].cols()) -= parts[b];
    }
    dn.schur = S;
    dn.matrix = dn.quadrature_weights.cwiseInverse().asDiagonal() * S;
    return dn;
}

cplx DNMatrix::pair(const CVec& f, const CVec& h) const {
    return f.transpose() * (schur.cast<cplx>() * h);
}

double DNMatrix::symmetry_defect() const {
    Eigen::MatrixXd wl = quadrature_weights.asDiagonal() * matrix;
    return (wl - wl.transpose()).norm() / std::max(wl.norm(), 1e-300);
}

cplx green_pairing(const DNMatrix& l1, const DNMatrix& l2, const CVec& f1, const CVec& f2) {
    if (l1.dims != l2.dims || l1.pad != l2.pad || l1.schur.rows() != l2.schur.rows())
        throw Error("schrodinger_forward.dimension", "DN matrices live on different grids");
    if (f1.size() != l1.schur.rows() || f2.size() != l1.schur.rows())
        throw Error("schrodinger_forward.dimension", "boundary data size mismatch");
    Eigen::MatrixXd d = l2.schur - l1.schur;
    return f1.transpose() * (d.cast<cplx>() * f2);
}

} // namespace eucgo
