#include "eucgo/trace_recon.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/CholmodSupport>

namespace eucgo {

namespace {

using RowMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

bool in_component(const Grid& g, int n, Component c, double plane) {
    double x3 = g.coord(n)[2];
    switch (c) {
    case Component::Upper: return x3 >= plane - 1e-12;
    case Component::Lower: return x3 <= plane + 1e-12;
    default: return true;
    }
}

// exp(s) * z without forming exp(s) when it would overflow on its own.
cplx scaled(double s, cplx z) {
    double a = std::abs(z);
    if (a == 0) return 0;
    return std::exp(s + std::log(a)) * (z / a);
}

} // namespace

VLayers v_layers(const Grid& g) {
    VLayers l;
    const int N = g.size();
    l.theta.assign(N, 0);
    l.interior.assign(N, 0);
    for (int n = 0; n < N; ++n) l.theta[n] = g.in_v[n];
    std::vector<char> outer(N, 0);
    for (int n = 0; n < N; ++n) {
        auto c = g.ijk(n);
        bool all = true;
        for (int a = 0; a < 3; ++a)
            for (int s : {-1, 1}) {
                auto d = c;
                d[a] += s;
                if (d[a] < 0 || d[a] >= g.dims[a]) {
                    all = false;
                    continue;
                }
                int m = g.index(d[0], d[1], d[2]);
                if (!g.in_v[m]) all = false;
                if (g.in_v[n] && !g.in_v[m]) outer[m] = 1;
            }
        if (g.in_v[n] && all) l.interior[n] = 1;
        if (g.in_v[n] && !all) l.inner.push_back(n);
    }
    for (int n = 0; n < N; ++n)
        if (outer[n]) l.outer.push_back(n);
    return l;
}

struct ExteriorContinuation::Ladder {
    std::vector<double> alpha;
    std::vector<std::unique_ptr<Eigen::CholmodSimplicialLLT<SpMat>>> llt;
};

ExteriorContinuation::~ExteriorContinuation() = default;

ExteriorContinuation::ExteriorContinuation(const Grid& grid, const MetricField& metric, const RVec& q_star,
                                           Component comp, const ContinuationConfig& cfg)
    : grid_(grid), comp_(comp), cfg_(cfg), ladder_(std::make_unique<Ladder>()) {
    const int N = grid.size();
    VLayers lay = v_layers(grid);
    col_of_.assign(N, -1);
    for (int n = 0; n < N; ++n)
        if (grid.in_omega_int[n] && !lay.interior[n] && in_component(grid, n, comp, cfg.plane_c)) {
            col_of_[n] = static_cast<int>(cols_.size());
            cols_.push_back(n);
        }
    if (cols_.empty()) throw Error("boundary_trace_recon.config", "continuation region has no unknowns");
    bweights_ = boundary_weights(grid);

    RowMat A = energy_matrix(grid, metric, q_star);
    using T = Eigen::Triplet<double>;
    std::vector<T> tm, tb;
    for (int r = 0; r < N; ++r) {
        if (!grid.in_omega[r] || !in_component(grid, r, comp, cfg.plane_c)) continue;
        bool ok = true, touches = false;
        double big = 0;
        for (RowMat::InnerIterator it(A, r); it; ++it) {
            int c = static_cast<int>(it.col());
            if (grid.boundary_pos[c] < 0 && col_of_[c] < 0) ok = false;
            if (col_of_[c] >= 0) touches = true;
            big = std::max(big, std::abs(it.value()));
        }
        if (!ok || !touches || big == 0) continue;
        const int row = static_cast<int>(row_nodes_.size());
        row_nodes_.push_back(r);
        row_is_boundary_.push_back(grid.boundary_pos[r] >= 0);
        row_bpos_.push_back(grid.boundary_pos[r]);
        for (RowMat::InnerIterator it(A, r); it; ++it) {
            int c = static_cast<int>(it.col());
            if (col_of_[c] >= 0) tm.emplace_back(row, col_of_[c], it.value() / big);
            else tb.emplace_back(row, grid.boundary_pos[c], it.value() / big);
        }
        row_scale_.conservativeResize(row + 1);
        row_scale_[row] = 1.0 / big;
    }
    const int nr = static_cast<int>(row_nodes_.size());
    M_.resize(nr, static_cast<int>(cols_.size()));
    M_.setFromTriplets(tm.begin(), tm.end());
    B_.resize(nr, static_cast<int>(grid.boundary_nodes.size()));
    B_.setFromTriplets(tb.begin(), tb.end());

    SpMat N0 = SpMat(M_.transpose()) * M_;
    const double amax = std::sqrt(N0.diagonal().maxCoeff());
    SpMat I(N0.rows(), N0.cols());
    I.setIdentity();
    for (int k = 0; k < cfg.ladder; ++k) {
        double alpha = amax * std::pow(10.0, -k - 1.0);
        auto llt = std::make_unique<Eigen::CholmodSimplicialLLT<SpMat>>();
        llt->cholmod().print = 0; // a failed factorization just ends the ladder
        SpMat Nk = N0 + alpha * alpha * I;
        llt->compute(Nk);
        if (llt->info() != Eigen::Success) break;
        ladder_->alpha.push_back(alpha);
        ladder_->llt.push_back(std::move(llt));
    }
    if (ladder_->alpha.empty())
        throw Error("boundary_trace_recon.continuation", "regularized normal equations could not be factorized");
}

ContinuationResult ExteriorContinuation::solve(const CVec& f, const CVec& neumann, int level) const {
    const int nb = static_cast<int>(grid_.boundary_nodes.size());
    if (f.size() != nb || neumann.size() != nb)
        throw Error("boundary_trace_recon.dimension", "Cauchy data must live on the boundary nodes");
    ContinuationResult res;
    res.component = comp_;
    res.u = CVec::Zero(grid_.size());
    res.known.assign(grid_.size(), 0);
    for (int c : cols_) res.known[c] = 1;
    for (int i = 0; i < nb; ++i) {
        int n = grid_.boundary_nodes[i];
        if (in_component(grid_, n, comp_, cfg_.plane_c)) {
            res.known[n] = 1;
            res.u[n] = f[i];
        }
    }

    // rhs: W Lambda f on boundary rows, minus the Dirichlet columns.
    const int nr = equations();
    CVec b = -(B_.cast<cplx>() * f);
    for (int r = 0; r < nr; ++r)
        if (row_is_boundary_[r]) b[r] += row_scale_[r] * bweights_[row_bpos_[r]] * neumann[row_bpos_[r]];
    const double bn = b.norm();
    const Ladder& L = *ladder_;
    const int nl = static_cast<int>(L.alpha.size());
    std::vector<CVec> x(nl);
    std::vector<double> rel(nl, 0.0);
    const SpMat Mt = M_.transpose();
    for (int k = 0; k < nl; ++k) {
        const double a2 = L.alpha[k] * L.alpha[k];
        // Seminormal equations with refinement against the true residual.
        auto tikhonov = [&](const RVec& rhs) {
            RVec br = Mt * rhs;
            RVec y = L.llt[k]->solve(br);
            for (int it = 0; it < 2; ++it) y += L.llt[k]->solve(RVec(br - Mt * (M_ * y) - a2 * y));
            return y;
        };
        x[k] = tikhonov(b.real()).cast<cplx>() + cplx(0, 1) * tikhonov(b.imag()).cast<cplx>();
        rel[k] = bn > 0 ? (M_.cast<cplx>() * x[k] - b).norm() / bn : 0.0;
    }
    res.consistency = rel[nl - 1];
    if (!(res.consistency <= cfg_.certificate)) {
        std::ostringstream os;
        os << "Cauchy data are inconsistent: relative residual " << res.consistency << " exceeds the certificate "
           << cfg_.certificate << " (data not from a solution, or the grid is too coarse for the continuation)";
        throw Error("boundary_trace_recon.continuation", os.str());
    }
    // Discrepancy principle: the largest alpha whose residual stays near the
    // consistency level.
    const double target = std::max(cfg_.discrepancy * res.consistency, cfg_.residual_floor);
    int pick = nl - 1;
    if (level >= 0) {
        pick = std::min(level, nl - 1);
    } else {
        for (int k = 0; k < nl; ++k)
            if (rel[k] <= target) {
                pick = k;
                break;
            }
    }
    res.level = pick;
    res.alpha = L.alpha[pick];
    res.residual = rel[pick];
    for (size_t c = 0; c < cols_.size(); ++c) res.u[cols_[c]] = x[pick][c];

    // Face traces of V in this component.
    VLayers lay = v_layers(grid_);
    for (int n : lay.inner) {
        if (!res.known[n]) continue;
        auto c = grid_.ijk(n);
        int axis = -1, side = 0;
        for (int a = 0; a < 3 && axis < 0; ++a)
            for (int s : {-1, 1}) {
                auto d = c;
                d[a] += s;
                if (!grid_.in_v[grid_.index(d[0], d[1], d[2])]) {
                    axis = a;
                    side = s;
                    break;
                }
            }
        auto at = [&](int step) {
            auto d = c;
            d[axis] += step * side;
            return grid_.index(d[0], d[1], d[2]);
        };
        res.face_nodes.push_back(n);
        int n1 = at(1), n2 = at(2);
        cplx dn = std::numeric_limits<double>::quiet_NaN();
        if (res.known[n1] && res.known[n2])
            dn = (-3.0 * res.u[n] + 4.0 * res.u[n1] - res.u[n2]) / (2.0 * grid_.spacing[axis]);
        res.face_values.conservativeResize(res.face_nodes.size());
        res.face_normal.conservativeResize(res.face_nodes.size());
        res.face_values[res.face_nodes.size() - 1] = res.u[n];
        res.face_normal[res.face_nodes.size() - 1] = dn;
    }
    return res;
}

GreenKernel::Row GreenKernel::row(int x) const {
    const ConjugatedOperator& op = kern_.op();
    RVec delta = RVec::Zero(op.grid().size());
    delta[x] = 1.0 / op.node_weights()[x];
    RVec k = kern_.apply_adjoint(delta); // k(x, .)
    Row r;
    r.offset = tau() * weight()[x];
    r.values.resize(k.size());
    for (int y = 0; y < k.size(); ++y) r.values[y] = scaled(-tau() * weight()[y], k[y]).real();
    return r;
}

CMat GreenKernel::apply_boundary_batch(const CMat& F) const {
    const Grid& g = kern_.op().grid();
    const double t = tau();
    const RVec& w = weight();
    CMat src(F.rows(), F.cols());
    for (int c = 0; c < F.cols(); ++c)
        for (int n = 0; n < F.rows(); ++n) src(n, c) = scaled(-t * w[n], F(n, c));
    CMat z = kern_.apply_batch(CMat(kern_.op().restrict_rows_batch(RMat(src.real())).cast<cplx>() +
                                    cplx(0, 1) * kern_.op().restrict_rows_batch(RMat(src.imag())).cast<cplx>()));
    CMat out(g.boundary_nodes.size(), F.cols());
    for (int c = 0; c < F.cols(); ++c)
        for (size_t i = 0; i < g.boundary_nodes.size(); ++i) {
            int n = g.boundary_nodes[i];
            out(i, c) = scaled(t * w[n], z(n, c));
            if (!std::isfinite(out(i, c).real()) || !std::isfinite(out(i, c).imag()))
                throw Error("boundary_trace_recon.range", "e^{tau phi} overflows on the boundary; lower tau");
        }
    return out;
}

CVec GreenKernel::apply_boundary(const CVec& F) const {
    CMat m = F;
    return apply_boundary_batch(m).col(0);
}

double green_adjoint_defect(const GreenKernel& G, const MetricField& metric, const RVec& q_star, int x) {
    const Grid& g = G.kernel().op().grid();
    GreenKernel::Row r = G.row(x);
    SpMat L = laplace_beltrami_matrix(g, metric);
    RVec Lg = L * r.values - RVec(q_star.array() * r.values.array());
    double num = 0, den = 0, lnorm = 0;
    for (int k = 0; k < L.outerSize(); ++k)
        for (SpMat::InnerIterator it(L, k); it; ++it) lnorm = std::max(lnorm, std::abs(it.value()));
    for (int y = 0; y < g.size(); ++y) {
        if (!g.in_v[y] || y == x) continue;
        num = std::max(num, std::abs(Lg[y]));
        den = std::max(den, std::abs(r.values[y]));
    }
    return den > 0 ? num / (lnorm * den) : 0.0;
}

BlindGamma::BlindGamma(const Grid& grid, const MetricField& metric, const RVec& q_star, const GreenKernel& G,
                       const DNMatrix& dn, const GammaConfig& cfg)
    : grid_(grid), G_(G), dn_(dn), layers_(v_layers(grid)), L_(laplace_beltrami_matrix(grid, metric)) {
    if (dn.dims != grid.dims || dn.pad != grid.omega_pad)
        throw Error("boundary_trace_recon.dimension", "DN matrix belongs to another grid");
    if (cfg.split) {
        parts_.push_back(std::make_unique<ExteriorContinuation>(grid, metric, q_star, Component::Upper, cfg.continuation));
        parts_.push_back(std::make_unique<ExteriorContinuation>(grid, metric, q_star, Component::Lower, cfg.continuation));
    } else {
        parts_.push_back(std::make_unique<ExteriorContinuation>(grid, metric, q_star, Component::Whole, cfg.continuation));
    }
}

void BlindGamma::freeze_alpha() {
    if (last_.size() != parts_.size())
        throw Error("boundary_trace_recon.config", "freeze_alpha needs a previous apply");
    levels_ = batch_levels_;
}

CMat BlindGamma::apply_batch(const CMat& f) const {
    const int N = grid_.size();
    const int nc = static_cast<int>(f.cols());
    CMat neumann = dn_.matrix.cast<cplx>() * f;
    CMat F = CMat::Zero(N, nc);
    for (int c = 0; c < nc; ++c) {
        last_.clear();
        CVec sum = CVec::Zero(N);
        RVec count = RVec::Zero(N);
        for (size_t i = 0; i < parts_.size(); ++i) {
            last_.push_back(parts_[i]->solve(f.col(c), neumann.col(c), levels_.empty() ? -1 : levels_[i]));
            const ContinuationResult& r = last_.back();
            for (int n = 0; n < N; ++n)
                if (r.known[n]) {
                    sum[n] += r.u[n];
                    count[n] += 1;
                }
            if (c == 0) batch_levels_.assign(parts_.size(), 0);
            batch_levels_[i] = std::max(batch_levels_[i], r.level);
        }
        layer_u_ = CVec::Zero(N);
        auto need = [&](int n) {
            if (count[n] == 0)
                throw Error("boundary_trace_recon.continuation", "continuation does not reach a node next to dV");
            layer_u_[n] = sum[n] / count[n];
        };
        for (int n : layers_.inner) need(n);
        for (int n : layers_.outer) need(n);
        // [theta, L] u on both layers; only u across the faces of V enters.
        auto commutator = [&](int y) {
            cplx s = 0;
            for (RowMat::InnerIterator it(L_, y); it; ++it) {
                int m = static_cast<int>(it.col());
                int d = layers_.theta[y] - layers_.theta[m];
                if (d != 0) s += it.value() * static_cast<double>(d) * layer_u_[m];
            }
            F(y, c) = s;
        };
        for (int n : layers_.inner) commutator(n);
        for (int n : layers_.outer) commutator(n);
    }
    return G_.apply_boundary_batch(F);
}

CVec BlindGamma::apply(const CVec& f) const {
    CMat m = f;
    return apply_batch(m).col(0);
}

CMat apply_gamma_direct_batch(const GreenKernel& G, const ForwardSolver& fwd_q, const RVec& q, const RVec& q_star,
                        const CMat& f) {
    const int N = static_cast<int>(q.size());
    CMat F = CMat::Zero(N, f.cols());
    for (int c = 0; c < f.cols(); ++c) {
        CVec u = fwd_q.solve_dirichlet(CVec(f.col(c)));
        for (int n = 0; n < N; ++n)
            if (q[n] != q_star[n]) F(n, c) = (q[n] - q_star[n]) * u[n];
    }
    return G.apply_boundary_batch(F);
}

CVec apply_gamma_direct(const GreenKernel& G, const ForwardSolver& fwd_q, const RVec& q, const RVec& q_star,
                        const CVec& f) {
    CMat m = f;
    return apply_gamma_direct_batch(G, fwd_q, q, q_star, m).col(0);
}

std::vector<TraceSolution> solve_trace_equations(const BoundaryBatchMap& gamma, const CMat& u0,
                                                 const TraceSolveOptions& opt) {
    const int nb = static_cast<int>(u0.rows());
    const int nc = static_cast<int>(u0.cols());
    std::vector<TraceSolution> sols(nc);
    std::vector<double> n0(nc), prev(nc);
    std::vector<char> diverged(nc, 0);
    std::vector<int> active, done;
    CMat term = u0;
    for (int c = 0; c < nc; ++c) {
        sols[c].trace = u0.col(c);
        n0[c] = prev[c] = u0.col(c).norm();
        if (n0[c] > 0) active.push_back(c);
    }
    auto gather = [](const CMat& X, const std::vector<int>& cols) {
        CMat Y(X.rows(), cols.size());
        for (size_t a = 0; a < cols.size(); ++a) Y.col(a) = X.col(cols[a]);
        return Y;
    };
    for (int k = 1; k <= opt.max_terms && !active.empty(); ++k) {
        CMat next = gamma(gather(term, active));
        std::vector<int> still;
        for (size_t a = 0; a < active.size(); ++a) {
            const int c = active[a];
            TraceSolution& sol = sols[c];
            term.col(c) = next.col(a);
            double inc = next.col(a).norm();
            sol.trace += next.col(a);
            sol.terms = k;
            sol.increments.push_back(inc);
            double ratio = inc / prev[c];
            prev[c] = inc;
            if (k >= 2) sol.spectral_radius = ratio;
            if (inc <= opt.increment_tol * sol.trace.norm()) {
                done.push_back(c);
            } else if ((k >= 3 && ratio > opt.ratio_fail) || !std::isfinite(inc) || k == opt.max_terms) {
                diverged[c] = 1;
            } else {
                still.push_back(c);
            }
        }
        active.swap(still);
    }
    // Reported, not enforced: a blind Gamma carries a noise floor that grows with tau.
    if (!done.empty()) {
        CMat T(nb, done.size());
        for (size_t a = 0; a < done.size(); ++a) T.col(a) = sols[done[a]].trace;
        CMat G = gamma(T);
        for (size_t a = 0; a < done.size(); ++a) {
            const int c = done[a];
            sols[c].residual = (T.col(a) - G.col(a) - u0.col(c)).norm() / n0[c];
        }
    }
    std::vector<int> bad;
    for (int c = 0; c < nc; ++c)
        if (diverged[c]) bad.push_back(c);
    if (bad.empty()) return sols;
    if (!opt.dense_fallback) {
        std::ostringstream os;
        os << "Neumann series for the trace equation does not contract (ratio " << sols[bad[0]].spectral_radius
           << "); increase tau";
        throw Error("boundary_trace_recon.tau_too_small", os.str());
    }
    // Dense fallback: assemble Gamma in column blocks.
    Eigen::MatrixXcd Gm(nb, nb);
    const int block = 64;
    for (int j0 = 0; j0 < nb; j0 += block) {
        int w = std::min(block, nb - j0);
        CMat E = CMat::Zero(nb, w);
        for (int j = 0; j < w; ++j) E(j0 + j, j) = 1;
        Gm.middleCols(j0, w) = gamma(E);
    }
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Identity(nb, nb) - Gm;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
    if (!(lu.rcond() >= opt.singular_rcond)) {
        std::ostringstream os;
        os << "I - Gamma is numerically singular (rcond " << lu.rcond() << "); increase tau";
        throw Error("boundary_trace_recon.tau_too_small", os.str());
    }
    const double rho = Gm.eigenvalues().cwiseAbs().maxCoeff();
    for (int c : bad) {
        TraceSolution& sol = sols[c];
        sol.trace = lu.solve(CVec(u0.col(c)));
        sol.dense = true;
        sol.spectral_radius = rho;
        sol.residual = (A * sol.trace - u0.col(c)).norm() / n0[c];
    }
    return sols;
}

TraceSolution solve_trace_equation(const BoundaryMap& gamma, const CVec& u0, const TraceSolveOptions& opt) {
    BoundaryBatchMap batch = [&](const CMat& X) {
        CMat Y(X.rows(), X.cols());
        for (int c = 0; c < X.cols(); ++c) Y.col(c) = gamma(CVec(X.col(c)));
        return Y;
    };
    CMat m = u0;
    return std::move(solve_trace_equations(batch, m, opt).front());
}

} // namespace eucgo
