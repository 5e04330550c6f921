#include "eucgo/conjugated.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/CholmodSupport>

namespace eucgo {

struct ConjugatedOperator::Factor {
    SpMat A; // P W^-1 P^T over rows
    // Simplicial: the supernodal path reports false indefiniteness with the
    // system BLAS in this build environment.
    Eigen::CholmodSimplicialLLT<SpMat> llt;
};

ConjugatedOperator::ConjugatedOperator(const Grid& grid, const MetricField& metric,
                                       const RVec& weight, double tau, const RVec& q_star,
                                       Direction dir, bool factor)
    : grid_(grid), tau_(tau), dir_(dir), w_(weight), metric_(metric), q_star_(q_star) {
    const int N = grid.size();
    if (weight.size() != N || q_star.size() != N)
        throw Error("conjugated_solver.dimension", "weight and q* must be lattice-sized");
    if (!(tau > 0)) throw Error("conjugated_solver.config", "tau must be positive");
    mass_ = metric.sqrt_det * grid.cell_volume();
    row_of_.assign(N, -1);
    for (int n = 0; n < N; ++n)
        if (grid.lattice_interior(n)) {
            row_of_[n] = static_cast<int>(rows_.size());
            rows_.push_back(n);
        }

    const double s = dir == Direction::Reverse ? -tau : tau;
    Eigen::SparseMatrix<double, Eigen::RowMajor> L = laplace_beltrami_matrix(grid, metric);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(rows_.size() * 19);
    for (size_t r = 0; r < rows_.size(); ++r) {
        const int i = rows_[r];
        bool diag = false;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(L, i); it; ++it) {
            const int j = static_cast<int>(it.col());
            double v = it.value();
            if (j == i) {
                v -= q_star[i];
                diag = true;
            }
            const double ex = s * (w_[j] - w_[i]);
            if (std::abs(ex) > 300) {
                std::ostringstream os;
                os << "tau |w_j - w_i| = " << std::abs(ex) << " between neighbours " << i << ", " << j
                   << " exceeds 300; lower tau or refine the grid";
                throw Error("conjugated_solver.range", os.str());
            }
            trip.emplace_back(static_cast<int>(r), j, v * std::exp(ex));
        }
        if (!diag) trip.emplace_back(static_cast<int>(r), i, -q_star[i]);
    }
    P_.resize(static_cast<int>(rows_.size()), N);
    P_.setFromTriplets(trip.begin(), trip.end());
    P_.makeCompressed();

    if (!factor) return;
    factor_ = std::make_unique<Factor>();
    SpMat PW = P_ * mass_.cwiseInverse().asDiagonal();
    factor_->A = PW * SpMat(P_.transpose());
    factor_->llt.compute(factor_->A);
    if (factor_->llt.info() != Eigen::Success)
        throw Error("conjugated_solver.eigenvalue",
                    "P P* is not positive definite at tau = " + std::to_string(tau) +
                        "; choose q* so that zero is not an eigenvalue");
}

ConjugatedOperator::~ConjugatedOperator() = default;

RVec ConjugatedOperator::gather(const RVec& x) const {
    RVec y(rows_.size());
    for (size_t r = 0; r < rows_.size(); ++r) y[r] = x[rows_[r]];
    return y;
}

RVec ConjugatedOperator::scatter(const RVec& y) const {
    RVec x = RVec::Zero(grid_.size());
    for (size_t r = 0; r < rows_.size(); ++r) x[rows_[r]] = y[r];
    return x;
}

RVec ConjugatedOperator::restrict_rows(const RVec& x) const { return scatter(gather(x)); }

CVec ConjugatedOperator::restrict_rows(const CVec& x) const {
    CVec y = CVec::Zero(grid_.size());
    for (int n : rows_) y[n] = x[n];
    return y;
}

double ConjugatedOperator::norm(const RVec& x) const {
    return std::sqrt((mass_.array() * x.array().square()).sum());
}

double ConjugatedOperator::norm(const CVec& x) const {
    return std::sqrt((mass_.array() * x.array().abs2()).sum());
}

RVec ConjugatedOperator::apply(const RVec& v) const { return scatter(P_ * v); }

CVec ConjugatedOperator::apply(const CVec& v) const {
    RVec re = apply(RVec(v.real())), im = apply(RVec(v.imag()));
    return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
}

RVec ConjugatedOperator::apply_direct(const RVec& v) const {
    const double s = dir_ == Direction::Reverse ? -tau_ : tau_;
    RVec e = (s * w_).array().exp();
    RVec ev = e.cwiseProduct(v);
    RVec y = laplace_beltrami(grid_, metric_, ev) - q_star_.cwiseProduct(ev);
    RVec out = RVec::Zero(grid_.size());
    for (int n : rows_) out[n] = y[n] / e[n];
    return out;
}

RVec ConjugatedOperator::solve_normal(const RVec& rhs) const {
    if (!factor_) throw Error("conjugated_solver.config", "operator was built without a factorization");
    RVec x = factor_->llt.solve(rhs);
    RVec res = rhs - factor_->A * x;
    x += factor_->llt.solve(res);
    return x;
}

RVec ConjugatedOperator::right_inverse(const RVec& f) const {
    RVec fr = gather(f);
    RVec s = solve_normal(fr);
    RVec r = mass_.cwiseInverse().cwiseProduct(RVec(P_.transpose() * s));
    const double fn = fr.norm();
    last_residual_ = fn > 0 ? (P_ * r - fr).norm() / fn : 0.0;
    if (last_residual_ > 1e-8) {
        std::ostringstream os;
        os << "P r = f holds only to " << last_residual_ << " at tau = " << tau_
           << "; the fourth-order system is numerically singular";
        throw Error("conjugated_solver.eigenvalue", os.str());
    }
    return r;
}

CVec ConjugatedOperator::right_inverse(const CVec& f) const {
    RVec re = right_inverse(RVec(f.real()));
    double rr = last_residual_;
    RVec im = right_inverse(RVec(f.imag()));
    last_residual_ = std::max(rr, last_residual_);
    return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
}

RVec ConjugatedOperator::right_inverse_adjoint(const RVec& g) const {
    RVec s = solve_normal(RVec(P_ * g));
    for (size_t r = 0; r < rows_.size(); ++r) s[r] /= mass_[rows_[r]];
    return scatter(s);
}

CVec ConjugatedOperator::right_inverse_adjoint(const CVec& g) const {
    RVec re = right_inverse_adjoint(RVec(g.real())), im = right_inverse_adjoint(RVec(g.imag()));
    return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
}

RVec ConjugatedOperator::project_kernel(const RVec& x) const {
    RVec s = solve_normal(RVec(P_ * x));
    return x - mass_.cwiseInverse().cwiseProduct(RVec(P_.transpose() * s));
}

CVec ConjugatedOperator::project_kernel(const CVec& x) const {
    RVec re = project_kernel(RVec(x.real())), im = project_kernel(RVec(x.imag()));
    return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
}

RMat ConjugatedOperator::solve_normal_batch(const RMat& rhs) const {
    if (!factor_) throw Error("conjugated_solver.config", "operator was built without a factorization");
    RMat x = factor_->llt.solve(rhs);
    RMat res = rhs - factor_->A * x;
    x += factor_->llt.solve(res);
    return x;
}

RMat ConjugatedOperator::restrict_rows_batch(const RMat& X) const {
    RMat Y = RMat::Zero(X.rows(), X.cols());
    for (int n : rows_) Y.row(n) = X.row(n);
    return Y;
}

RMat ConjugatedOperator::right_inverse_batch(const RMat& F) const {
    RMat Fr(rows_.size(), F.cols());
    for (size_t r = 0; r < rows_.size(); ++r) Fr.row(r) = F.row(rows_[r]);
    RMat S = solve_normal_batch(Fr);
    RMat R = mass_.cwiseInverse().asDiagonal() * RMat(P_.transpose() * S);
    RMat E = P_ * R - Fr;
    last_residual_ = 0;
    for (int c = 0; c < F.cols(); ++c) {
        double fn = Fr.col(c).norm();
        if (fn > 0) last_residual_ = std::max(last_residual_, E.col(c).norm() / fn);
    }
    if (last_residual_ > 1e-8) {
        std::ostringstream os;
        os << "P r = f holds only to " << last_residual_ << " at tau = " << tau_
           << "; the fourth-order system is numerically singular";
        throw Error("conjugated_solver.eigenvalue", os.str());
    }
    return R;
}

RMat ConjugatedOperator::right_inverse_adjoint_batch(const RMat& G) const {
    RMat S = solve_normal_batch(RMat(P_ * G));
    RMat X = RMat::Zero(grid_.size(), G.cols());
    for (size_t r = 0; r < rows_.size(); ++r) X.row(rows_[r]) = S.row(r) / mass_[rows_[r]];
    return X;
}

RMat ConjugatedOperator::project_kernel_batch(const RMat& X) const {
    RMat S = solve_normal_batch(RMat(P_ * X));
    return X - mass_.cwiseInverse().asDiagonal() * RMat(P_.transpose() * S);
}

double tau_minimum(const Grid& grid) {
    Box b = grid.lattice_box();
    return 5.0 / (b.hi - b.lo).norm();
}

KOperator::KOperator(const ConjugatedOperator& primary, const ConjugatedOperator& mirror)
    : p_(primary), m_(mirror) {
    if (&primary.grid() != &mirror.grid() || primary.tau() != mirror.tau())
        throw Error("conjugated_solver.config", "K needs H and L on the same grid and tau");
}

RVec KOperator::apply(const RVec& f) const {
    RVec fr = p_.restrict_rows(f);
    return p_.right_inverse(fr) + p_.project_kernel(m_.right_inverse_adjoint(fr));
}

CVec KOperator::apply(const CVec& f) const {
    RVec re = apply(RVec(f.real())), im = apply(RVec(f.imag()));
    return re.cast<cplx>() + cplx(0, 1) * im.cast<cplx>();
}

RMat KOperator::apply_batch(const RMat& F) const {
    RMat Fr = p_.restrict_rows_batch(F);
    return p_.right_inverse_batch(Fr) + p_.project_kernel_batch(m_.right_inverse_adjoint_batch(Fr));
}

// Real and imaginary parts go through as separate columns of one real batch.
CMat KOperator::apply_batch(const CMat& F) const {
    const int c = static_cast<int>(F.cols());
    RMat X(F.rows(), 2 * c);
    X.leftCols(c) = F.real();
    X.rightCols(c) = F.imag();
    RMat Y = apply_batch(X);
    return Y.leftCols(c).cast<cplx>() + cplx(0, 1) * Y.rightCols(c).cast<cplx>();
}

RVec KOperator::apply_adjoint(const RVec& g) const {
    RVec pg = p_.restrict_rows(p_.project_kernel(g));
    return p_.right_inverse_adjoint(g) + p_.restrict_rows(m_.right_inverse(pg));
}

double KOperator::projector_defect(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    RVec x(p_.grid().size());
    for (int n = 0; n < x.size(); ++n) x[n] = nd(rng);
    RVec p = p_.project_kernel(x);
    return p_.norm(RVec(p_.project_kernel(p) - p)) / p_.norm(p);
}

CVec Kernel::apply(const CVec& f) const { return k ? k->apply(f) : right->right_inverse(f); }
RVec Kernel::apply(const RVec& f) const { return k ? k->apply(f) : right->right_inverse(f); }
CMat Kernel::apply_batch(const CMat& F) const {
    if (k) return k->apply_batch(F);
    const int c = static_cast<int>(F.cols());
    RMat X(F.rows(), 2 * c);
    X.leftCols(c) = F.real();
    X.rightCols(c) = F.imag();
    RMat Y = right->right_inverse_batch(X);
    return Y.leftCols(c).cast<cplx>() + cplx(0, 1) * Y.rightCols(c).cast<cplx>();
}
RVec Kernel::apply_adjoint(const RVec& g) const {
    return k ? k->apply_adjoint(g) : right->right_inverse_adjoint(g);
}

NormEstimate estimate_norm(const Kernel& kern, int max_iter, std::uint64_t seed, double tol) {
    const ConjugatedOperator& op = kern.op();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    RVec x(op.grid().size());
    for (int n = 0; n < x.size(); ++n) x[n] = nd(rng);
    x = op.restrict_rows(x);
    x /= op.norm(x);
    NormEstimate est;
    double prev = 0;
    for (int it = 0; it < max_iter; ++it) {
        RVec z = kern.apply_adjoint(kern.apply(x));
        double sigma2 = (op.node_weights().array() * x.array() * z.array()).sum();
        double s = std::sqrt(std::max(sigma2, 0.0));
        est.iterations = it + 1;
        est.last_change = prev > 0 ? std::abs(s - prev) / s : 1.0;
        est.norm = s;
        double zn = op.norm(z);
        if (zn == 0) break;
        x = z / zn;
        if (est.last_change < tol) break;
        prev = s;
    }
    return est;
}

namespace {

// |P| |y| on rows, the natural scale for a conjugated residual.
double scaled_row_residual(const ConjugatedOperator& op, const CVec& y) {
    const SpMat& P = op.matrix();
    CVec res = P.cast<cplx>() * y;
    RVec scale = P.cwiseAbs() * y.cwiseAbs();
    double num = 0, den = 0;
    for (size_t r = 0; r < op.rows().size(); ++r) {
        double m = op.node_weights()[op.rows()[r]];
        num += m * std::norm(res[r]);
        den += m * scale[r] * scale[r];
    }
    return den > 0 ? std::sqrt(num / den) : 0.0;
}

} // namespace

double cgo_interior_residual(const Grid& grid, const MetricField& metric, const RVec& q,
                             const RVec& weight, double tau, const CVec& y) {
    ConjugatedOperator op(grid, metric, weight, tau, q, Direction::Forward, false);
    return scaled_row_residual(op, y);
}

std::vector<CGOSolution> solve_cgo_batch(const Kernel& kern, const MetricField& metric, const RVec& q,
                                         const RVec& q_star, const CVec& phase, const CMat& amplitudes,
                                         double eps, int kind, const CGOSolveOptions& opt) {
    const ConjugatedOperator& op = kern.op();
    const Grid& grid = op.grid();
    const int N = grid.size();
    const int nc = static_cast<int>(amplitudes.cols());
    const double tau = op.tau();
    const RVec& w = op.weight();
    if (phase.size() != N || amplitudes.rows() != N || q.size() != N)
        throw Error("conjugated_solver.dimension", "phase, amplitude and q must be lattice-sized");
    double mismatch = (phase.real() - w).cwiseAbs().maxCoeff();
    if (mismatch > 1e-9 * (1 + w.cwiseAbs().maxCoeff()))
        throw Error("conjugated_solver.config", "Re of the phase differs from the kernel weight");

    std::vector<CGOSolution> out(nc);
    RVec D = op.restrict_rows(RVec(q - q_star));
    const double dmax = D.cwiseAbs().maxCoeff();
    double knorm = 0, contraction = 0;
    if (dmax > 0) {
        knorm = opt.kernel_norm >= 0 ? opt.kernel_norm : estimate_norm(kern, 60, opt.seed).norm;
        contraction = dmax * knorm;
        if (contraction >= 1) {
            std::ostringstream os;
            os << "||q - q*|| ||kernel|| = " << contraction << " >= 1 at tau = " << tau << "; raise tau";
            throw Error("conjugated_solver.tau_too_small", os.str());
        }
    }

    // In units of e^{tau w}: the ansatz part is e^{i tau Im Phi} v.
    CVec rot(N);
    for (int n = 0; n < N; ++n) rot[n] = std::exp(cplx(0, tau * phase[n].imag()));
    const CVec Dc = D.cast<cplx>();
    CMat E = rot.asDiagonal() * amplitudes;
    CMat sum(N, nc);
    for (int c = 0; c < nc; ++c) {
        CVec e = E.col(c);
        sum.col(c) = -(op.apply(e) - Dc.cwiseProduct(op.restrict_rows(e)));
    }
    std::vector<double> f0(nc), prev(nc);
    std::vector<int> active;
    for (int c = 0; c < nc; ++c) {
        CGOSolution& sol = out[c];
        sol.tau = tau;
        sol.eps = eps;
        sol.kind = kind;
        sol.terms = 1;
        sol.kernel_norm = knorm;
        sol.contraction = contraction;
        f0[c] = prev[c] = op.norm(CVec(sum.col(c)));
        if (dmax > 0 && f0[c] > 0) active.push_back(c);
    }
    CMat term = sum;
    for (int j = 1; !active.empty(); ++j) {
        if (j >= opt.max_terms)
            throw Error("conjugated_solver.divergence", "Neumann series did not reach the increment tolerance in " +
                                                            std::to_string(opt.max_terms) + " terms");
        CMat block(N, active.size());
        for (size_t a = 0; a < active.size(); ++a) block.col(a) = term.col(active[a]);
        block = Dc.asDiagonal() * kern.apply_batch(block);
        std::vector<int> still;
        for (size_t a = 0; a < active.size(); ++a) {
            const int c = active[a];
            CGOSolution& sol = out[c];
            term.col(c) = block.col(a);
            sum.col(c) += block.col(a);
            ++sol.terms;
            double inc = op.norm(CVec(block.col(a)));
            sol.increments.push_back(inc / f0[c]);
            double ratio = prev[c] > 0 ? inc / prev[c] : 0;
            if (j >= 2 && inc / f0[c] > 1e-14 && ratio >= opt.ratio_fail) {
                std::ostringstream os;
                os << "Neumann series ratio " << ratio << " >= " << opt.ratio_fail;
                throw Error("conjugated_solver.divergence", os.str());
            }
            prev[c] = inc;
            if (!(inc < opt.increment_tol * op.norm(CVec(sum.col(c))))) still.push_back(c);
        }
        active.swap(still);
    }
    CMat Rw = kern.apply_batch(sum);

    ConjugatedOperator resid_op(grid, metric, w, tau, q, Direction::Forward, false);
    double wmax = -1e300;
    for (int n : grid.boundary_nodes) wmax = std::max(wmax, w[n]);
    for (int c = 0; c < nc; ++c) {
        CGOSolution& sol = out[c];
        CVec y = E.col(c) + Rw.col(c);
        sol.remainder = Rw.col(c).cwiseProduct(rot.conjugate());
        sol.remainder_norm = op.norm(sol.remainder);
        sol.residual = scaled_row_residual(resid_op, y);
        sol.trace_log_scale = tau * wmax;
        sol.trace.resize(grid.boundary_nodes.size());
        for (size_t b = 0; b < grid.boundary_nodes.size(); ++b) {
            int n = grid.boundary_nodes[b];
            sol.trace[b] = std::exp(tau * w[n] - sol.trace_log_scale) * y[n];
        }
        sol.y = std::move(y);
    }
    return out;
}

CGOSolution solve_cgo(const Kernel& kern, const MetricField& metric, const RVec& q,
                      const RVec& q_star, const CVec& phase, const CVec& amplitude, double eps,
                      int kind, const CGOSolveOptions& opt) {
    if (amplitude.size() != kern.op().grid().size())
        throw Error("conjugated_solver.dimension", "phase, amplitude and q must be lattice-sized");
    CMat a = amplitude;
    return std::move(solve_cgo_batch(kern, metric, q, q_star, phase, a, eps, kind, opt).front());
}

double kendall_tau_b(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    long conc = 0, disc = 0, ties = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double d = x[j] - x[i];
            if (d > 0) ++conc;
            else if (d < 0) ++disc;
            else ++ties;
        }
    const double n0 = n * (n - 1) / 2.0;
    const double den = std::sqrt(n0 * (n0 - ties));
    return den > 0 ? (conc - disc) / den : 0.0;
}

} // namespace eucgo
