#include "eucgo/moments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

#include <Eigen/SVD>

namespace eucgo {

PlaneSpec make_plane(const Grid& grid, int k_index, const Box& window) {
    if (k_index < 0 || k_index >= grid.dims[2])
        throw Error("moment_reconstruction.plane", "plane index outside the lattice");
    PlaneSpec p;
    p.k_index = k_index;
    p.c = grid.origin[2] + k_index * grid.spacing[2];
    std::vector<double> w;
    for (int i = 0; i < grid.dims[0]; ++i)
        for (int j = 0; j < grid.dims[1]; ++j) {
            int n = grid.index(i, j, k_index);
            Vec3 x = grid.coord(n);
            if (x[0] < window.lo[0] - 1e-12 || x[0] > window.hi[0] + 1e-12) continue;
            if (x[1] < window.lo[1] - 1e-12 || x[1] > window.hi[1] + 1e-12) continue;
            if (!grid.in_u1[n]) throw Error("moment_reconstruction.plane", "plane window leaves U1");
            p.nodes.push_back(n);
            p.z.emplace_back(x[0], x[1]);
            w.push_back(grid.spacing[0] * grid.spacing[1]);
        }
    p.weights = Eigen::Map<RVec>(w.data(), static_cast<int>(w.size()));
    return p;
}

cplx plane_moment(const PlaneSpec& plane, const RVec& f, int k, int j) {
    cplx s = 0;
    for (size_t a = 0; a < plane.nodes.size(); ++a) {
        const cplx z = plane.z[a];
        s += plane.weights[a] * f[plane.nodes[a]] * std::pow(std::conj(z), k) * std::pow(z, j);
    }
    return s;
}

MomentTable direct_moments(const std::vector<PlaneSpec>& planes, const RVec& f, int K, int J) {
    MomentTable t;
    t.K = K;
    t.J = J;
    t.provenance = Provenance::DirectOracle;
    for (const PlaneSpec& p : planes) {
        t.c.push_back(p.c);
        Eigen::MatrixXcd m(K + 1, J + 1);
        for (int k = 0; k <= K; ++k)
            for (int j = 0; j <= J; ++j) m(k, j) = plane_moment(p, f, k, j);
        t.m.push_back(m);
        t.residual.push_back(Eigen::MatrixXd::Zero(K + 1, J + 1));
        t.known.push_back(Eigen::MatrixXi::Ones(K + 1, J + 1));
    }
    return t;
}

void write_moments_csv(const std::string& path, const MomentTable& t) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw Error("io.open", "cannot write " + path);
    std::fprintf(f, "plane_c,k,j,re,im,provenance,residual\n");
    const char* prov = t.provenance == Provenance::DirectOracle ? "direct-oracle" : "dn-extracted";
    for (size_t p = 0; p < t.c.size(); ++p)
        for (int k = 0; k <= t.K; ++k)
            for (int j = 0; j <= t.J; ++j) {
                if (!t.known[p](k, j)) continue;
                std::fprintf(f, "%.17g,%d,%d,%.17g,%.17g,%s,%.6g\n", t.c[p], k, j, t.m[p](k, j).real(),
                             t.m[p](k, j).imag(), prov, t.residual[p](k, j));
            }
    std::fclose(f);
}

double conjugation_defect(const MomentTable& t) {
    double worst = 0, scale = 0;
    for (size_t p = 0; p < t.c.size(); ++p) scale = std::max(scale, t.m[p].cwiseAbs().maxCoeff());
    if (scale == 0) return 0;
    const int D = std::min(t.K, t.J);
    for (size_t p = 0; p < t.c.size(); ++p)
        for (int k = 0; k <= D; ++k)
            for (int j = 0; j <= D; ++j)
                if (t.known[p](k, j) && t.known[p](j, k))
                    worst = std::max(worst, std::abs(t.m[p](k, j) - std::conj(t.m[p](j, k))));
    return worst / scale;
}

void fill_by_conjugation(MomentTable& t) {
    for (size_t p = 0; p < t.c.size(); ++p)
        for (int k = 0; k <= t.K; ++k)
            for (int j = 0; j <= t.J; ++j) {
                if (t.known[p](k, j)) continue;
                if (j <= t.K && k <= t.J && t.known[p](j, k)) {
                    t.m[p](k, j) = std::conj(t.m[p](j, k));
                    t.residual[p](k, j) = t.residual[p](j, k);
                    t.known[p](k, j) = 1;
                }
            }
}

EpsFit extract_eps_polynomial(const std::vector<cplx>& S, const std::vector<double>& tau,
                              double beta, int M) {
    const int n = static_cast<int>(tau.size());
    const int P = M / 2 + 1;
    if (static_cast<int>(S.size()) != n)
        throw Error("moment_reconstruction.dependency", "pairing values missing for part of the tau grid");
    if (n < 2 * P)
        throw Error("moment_reconstruction.config",
                    "tau grid needs at least " + std::to_string(2 * P) + " points");
    Eigen::MatrixXd A(n, P + 1);
    for (int r = 0; r < n; ++r) {
        double e = std::pow(tau[r], -beta);
        for (int k = 0; k < P; ++k) A(r, k) = std::pow(e, k);
        A(r, P) = 1 / tau[r];
    }
    EpsFit fit;
    // 1/tau = eps^{1/beta}; drop the auxiliary column when that is one of the powers.
    RVec aux = A.col(P).normalized();
    for (int k = 0; k < P; ++k)
        if ((A.col(k).normalized() - aux).norm() < 1e-10) fit.inverse_tau_merged = true;
    const int cols = fit.inverse_tau_merged ? P : P + 1;
    Eigen::MatrixXd D = A.leftCols(cols);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    fit.condition = sv[0] / sv[cols - 1];
    if (!(fit.condition <= 1e12)) {
        std::ostringstream os;
        os << "eps Vandermonde condition " << fit.condition << " > 1e12; widen the tau range";
        throw Error("moment_reconstruction.ill_conditioned", os.str());
    }
    CVec b(n);
    for (int r = 0; r < n; ++r) b[r] = S[r];
    CVec x(cols);
    {
        RVec xr = svd.solve(RVec(b.real())), xi = svd.solve(RVec(b.imag()));
        x = xr.cast<cplx>() + cplx(0, 1) * xi.cast<cplx>();
    }
    for (int k = 0; k < P; ++k) fit.c.push_back(x[k]);
    if (!fit.inverse_tau_merged) fit.inverse_tau = x[P];
    double bn = b.norm();
    fit.residual = bn > 0 ? (D.cast<cplx>() * x - b).norm() / bn : 0.0;
    return fit;
}

namespace {

double factorial(int k) {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

double falling(int l, int i) {
    double f = 1;
    for (int r = 0; r < i; ++r) f *= (l - r);
    return f;
}

// Cumulative trapezoid from the first sample (the profile vanishes below it).
std::vector<cplx> cumulative(const std::vector<cplx>& g, double h) {
    std::vector<cplx> F(g.size());
    F[0] = 0;
    for (size_t i = 1; i < g.size(); ++i) F[i] = F[i - 1] + 0.5 * h * (g[i - 1] + g[i]);
    return F;
}

double max_abs(const std::vector<cplx>& v) {
    double m = 0;
    for (cplx x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

ExtractionResult extract_plane_moments(const PairingProvider& provider, const Grid& grid,
                                       const ExtractionConfig& cfg) {
    PairingBatchProvider batch = [&](double tau, double eps, const std::vector<ProfileChi>& chis) {
        std::vector<Eigen::MatrixXcd> out;
        for (const ProfileChi& chi : chis) out.push_back(provider(tau, eps, chi));
        return out;
    };
    return extract_plane_moments_batch(batch, grid, cfg);
}

ExtractionResult extract_plane_moments_batch(const PairingBatchProvider& provider, const Grid& grid,
                                             const ExtractionConfig& cfg) {
    const int kmax = std::min(cfg.K, cfg.M / 2);
    const int J = cfg.J;
    const int nc = static_cast<int>(cfg.center_planes.size());
    const int nt = static_cast<int>(cfg.t_ladder.size());
    if (nc < 3) throw Error("moment_reconstruction.config", "need at least three centre planes");
    if (nt < 2) throw Error("moment_reconstruction.config", "t ladder needs at least two values");
    if (cfg.eta.size() != 2 || cfg.eta[0] == cfg.eta[1])
        throw Error("moment_reconstruction.config", "two distinct eta values are required");
    for (int i = 1; i < nc; ++i)
        if (cfg.center_planes[i] != cfg.center_planes[i - 1] + 1)
            throw Error("moment_reconstruction.config", "centre planes must be consecutive grid levels");
    const double h3 = grid.spacing[2];
    auto zc = [&](int i) { return grid.origin[2] + cfg.center_planes[i] * h3; };
    if (zc(0) > grid.v_box.lo[2] - h3 + 1e-12 || zc(nc - 1) < grid.v_box.hi[2] + h3 - 1e-12)
        throw Error("moment_reconstruction.coverage",
                    "centre planes must extend at least one spacing beyond V in x3");

    // Level coefficients of the amplitude recursion are universal.
    const Amplitude proto = amplitude_build(HolomorphicDatum::monomial(J), ProfileChi::fixed(0, 1), cfg.M);
    auto a_coef = [&](int s, int i) { return proto.coefficient(s, i).value(); };

    ExtractionResult res;
    // eps-coefficients: coef[i][t][l][k]
    std::vector<std::vector<std::vector<std::vector<cplx>>>> coef(
        nc, std::vector<std::vector<std::vector<cplx>>>(nt, std::vector<std::vector<cplx>>(J + 1)));
    std::vector<double> fit_res(kmax + 1, 0.0);
    const double e1 = cfg.eta[0], e2 = cfg.eta[1];
    std::vector<ProfileChi> chis;
    for (int i = 0; i < nc; ++i)
        for (int ti = 0; ti < nt; ++ti)
            chis.push_back(ProfileChi::concentration(zc(i), cfg.chi_a, cfg.t_ladder[ti]));
    // pairings[tau][profile]
    std::vector<std::vector<Eigen::MatrixXcd>> pairings;
    for (double tau : cfg.tau_grid) {
        pairings.push_back(provider(tau, std::pow(tau, -cfg.beta), chis));
        if (pairings.back().size() != chis.size())
            throw Error("moment_reconstruction.dependency", "pairing provider returned a wrong count");
    }
    for (int i = 0; i < nc; ++i)
        for (int ti = 0; ti < nt; ++ti) {
            std::vector<std::vector<cplx>> A(J + 1);
            for (size_t it = 0; it < cfg.tau_grid.size(); ++it) {
                const Eigen::MatrixXcd& S = pairings[it][i * nt + ti];
                if (S.rows() != J + 1 || S.cols() != J + 1)
                    throw Error("moment_reconstruction.dependency", "pairing provider returned a wrong shape");
                A[0].push_back(S(0, 0));
                for (int l = 1; l <= J; ++l) {
                    // h = 1 + eta z^l in both solutions, at two eta values.
                    auto run = [&](double eta) {
                        return S(0, 0) + eta * (S(0, l) + S(l, 0)) + eta * eta * S(l, l);
                    };
                    cplx X1 = (run(e1) - S(0, 0)) / e1, X2 = (run(e2) - S(0, 0)) / e2;
                    A[l].push_back((e2 * X1 - e1 * X2) / (2 * (e2 - e1)));
                }
            }
            for (int l = 0; l <= J; ++l) {
                EpsFit f = extract_eps_polynomial(A[l], cfg.tau_grid, cfg.beta, cfg.M);
                res.max_fit_condition = std::max(res.max_fit_condition, f.condition);
                coef[i][ti][l] = f.c;
                for (int k = 0; k <= kmax; ++k) fit_res[k] = std::max(fit_res[k], f.residual);
            }
        }

    MomentTable& tb = res.table;
    tb.K = cfg.K;
    tb.J = J;
    tb.provenance = Provenance::DnExtracted;
    for (int i = 0; i < nc; ++i) {
        tb.c.push_back(zc(i));
        tb.m.push_back(Eigen::MatrixXcd::Zero(cfg.K + 1, J + 1));
        tb.residual.push_back(Eigen::MatrixXd::Zero(cfg.K + 1, J + 1));
        tb.known.push_back(Eigen::MatrixXi::Zero(cfg.K + 1, J + 1));
    }

    // Planes that meet V carry unknowns; the rest of the ladder sees only the tails.
    std::vector<int> support;
    for (int i = 0; i < nc; ++i)
        if (zc(i) >= grid.v_box.lo[2] - 1e-12 && zc(i) <= grid.v_box.hi[2] + 1e-12) support.push_back(i);

    std::ostringstream rep;
    for (int k = 0; k <= kmax; ++k) {
        LevelDiagnostics d;
        d.k = k;
        d.fit_residual = fit_res[k];
        const cplx lead = std::pow(cplx(0, -0.5), k) / factorial(k);
        // Deconvolution system: rows (t, centre), columns planes meeting V.
        Eigen::MatrixXd T;
        std::unique_ptr<Eigen::JacobiSVD<Eigen::MatrixXd>> svd;
        if (cfg.profile == ExtractionConfig::Profile::Deconvolution) {
            T.resize(nt * nc, static_cast<int>(support.size()));
            for (int ti = 0; ti < nt; ++ti)
                for (int i = 0; i < nc; ++i) {
                    ProfileChi chi = ProfileChi::concentration(zc(i), cfg.chi_a, cfg.t_ladder[ti]);
                    for (size_t q = 0; q < support.size(); ++q) {
                        double x3 = zc(support[q]), g2 = 0, b = 1;
                        for (int j2 = 0; j2 <= k; ++j2) {
                            g2 += b * chi.eval(x3, j2) * chi.eval(x3, k - j2);
                            b = b * (k - j2) / (j2 + 1);
                        }
                        T(ti * nc + i, static_cast<int>(q)) = h3 * g2;
                    }
                }
            svd = std::make_unique<Eigen::JacobiSVD<Eigen::MatrixXd>>(T, Eigen::ComputeThinU | Eigen::ComputeThinV);
            const auto& sv = svd->singularValues();
            d.condition = sv[0] / sv[sv.size() - 1];
            svd->setThreshold(1e-12);
        }
        for (int l = 0; l <= J; ++l) {
            std::vector<std::vector<cplx>> Dk(nt, std::vector<cplx>(nc));
            for (int ti = 0; ti < nt; ++ti)
                for (int i = 0; i < nc; ++i) {
                    ProfileChi chi = ProfileChi::concentration(zc(i), cfg.chi_a, cfg.t_ladder[ti]);
                    // Lower-level terms: a_{k-s,0} a_{s,ii} (l)_ii zbar^{k-ii} z^{l-ii} chi^{(k-s)} chi^{(s-2ii)}.
                    cplx R = 0;
                    for (int ii = 1; ii <= std::min(l, k / 2); ++ii)
                        for (int s = 2 * ii; s <= k; ++s) {
                            cplx pre = a_coef(k - s, 0) * a_coef(s, ii) * falling(l, ii);
                            cplx acc = 0;
                            for (int p = 0; p < nc; ++p) {
                                double x3 = zc(p);
                                acc += h3 * tb.m[p](k - ii, l - ii) * chi.eval(x3, k - s) * chi.eval(x3, s - 2 * ii);
                            }
                            R += pre * acc;
                        }
                    cplx ck = coef[i][ti][l][k];
                    if (std::abs(ck) > 0) d.subtraction_share = std::max(d.subtraction_share, std::abs(R) / std::abs(ck));
                    Dk[ti][i] = (ck - R) / lead;
                }

            if (cfg.profile == ExtractionConfig::Profile::Deconvolution) {
                CVec rhs(nt * nc);
                for (int ti = 0; ti < nt; ++ti)
                    for (int i = 0; i < nc; ++i) rhs[ti * nc + i] = Dk[ti][i];
                RVec xr = svd->solve(RVec(rhs.real())), xi = svd->solve(RVec(rhs.imag()));
                CVec x = xr.cast<cplx>() + cplx(0, 1) * xi.cast<cplx>();
                double rn = rhs.norm();
                double rel = rn > 0 ? (T.cast<cplx>() * x - rhs).norm() / rn : 0.0;
                d.closure = std::max(d.closure, rel);
                for (int i = 0; i < nc; ++i) {
                    tb.m[i](k, l) = 0;
                    tb.residual[i](k, l) = rel;
                    tb.known[i](k, l) = 1;
                }
                for (size_t q = 0; q < support.size(); ++q) tb.m[support[q]](k, l) = x[q];
                continue;
            }

            std::vector<std::vector<cplx>> Mt(nt);
            for (int ti = 0; ti < nt; ++ti) {
                std::vector<cplx> g(nc);
                for (int i = 0; i < nc; ++i) g[i] = (k % 2 ? -1.0 : 1.0) * Dk[ti][i];
                // (-1)^k D = d^k/dc^k of the chi^2-smoothed moment profile.
                for (int r = 0; r < k; ++r) {
                    std::vector<cplx> F = cumulative(g, h3);
                    double top = max_abs(F);
                    if (top > 0) d.closure = std::max(d.closure, std::abs(F.back()) / top);
                    g = std::move(F);
                }
                Mt[ti] = g;
            }
            const double t1 = cfg.t_ladder[nt - 2], t2 = cfg.t_ladder[nt - 1];
            double scale = std::max(max_abs(Mt[nt - 1]), 1e-300);
            for (int i = 0; i < nc; ++i) {
                cplx m = (t2 * t2 * Mt[nt - 1][i] - t1 * t1 * Mt[nt - 2][i]) / (t2 * t2 - t1 * t1);
                double change = std::abs(Mt[nt - 1][i] - Mt[nt - 2][i]) / scale;
                d.richardson_change = std::max(d.richardson_change, change);
                tb.m[i](k, l) = m;
                tb.residual[i](k, l) = change;
                tb.known[i](k, l) = 1;
            }
        }
        rep << "level " << k << ": fit residual " << d.fit_residual << ", richardson change "
            << d.richardson_change << ", lower-level share " << d.subtraction_share << ", closure "
            << d.closure << ", condition " << d.condition << "\n";
        res.levels.push_back(d);
        if (!std::isfinite(d.closure) || d.closure > cfg.level_tolerance) {
            std::ostringstream os;
            os << "level " << k << " extraction failed: induction residual (" << d.closure
               << " > " << cfg.level_tolerance << ")";
            throw Error("moment_reconstruction.level", os.str());
        }
    }
    fill_by_conjugation(tb);
    res.report = rep.str();
    return res;
}

PlaneFit invert_moments(const MomentTable& t, int pi, const PlaneSpec& plane, const Box& window,
                        double mu_scale) {
    const int K = t.K, J = t.J;
    const double R = 0.5 * std::max(window.hi[0] - window.lo[0], window.hi[1] - window.lo[1]);
    const cplx z0(0.5 * (window.lo[0] + window.hi[0]), 0.5 * (window.lo[1] + window.hi[1]));
    if (std::abs(z0) > 1e-12)
        throw Error("moment_reconstruction.plane", "moment window must be centred at x1 = x2 = 0");
    // Minimum-norm fit: q is expanded in the representers zeta^k zbar(zeta)^j of
    // the known moments, so the system is their Gram matrix (square, Hermitian).
    std::vector<std::pair<int, int>> rows;
    for (int k = 0; k <= K; ++k)
        for (int j = 0; j <= J; ++j)
            if (t.known[pi](k, j)) rows.emplace_back(k, j);
    const int nr = static_cast<int>(rows.size());
    std::vector<cplx> ze(plane.z.size());
    for (size_t a = 0; a < plane.z.size(); ++a) ze[a] = plane.z[a] / R;
    Eigen::MatrixXcd B(ze.size(), nr); // representer values
    for (size_t a = 0; a < ze.size(); ++a)
        for (int r = 0; r < nr; ++r)
            B(a, r) = std::pow(ze[a], rows[r].first) * std::pow(std::conj(ze[a]), rows[r].second);
    CVec b(nr);
    for (int r = 0; r < nr; ++r) b[r] = t.m[pi](rows[r].first, rows[r].second) / std::pow(R, rows[r].first + rows[r].second);
    Eigen::MatrixXcd G = B.adjoint() * plane.weights.asDiagonal() * B;
    G = G.transpose().eval(); // G(r, s) = sum w phi_s conj(phi_r)
    const double mu = nr > 0 ? mu_scale * G.trace().real() / nr : 0.0;
    G += mu * Eigen::MatrixXcd::Identity(nr, nr);
    PlaneFit fit;
    fit.coef = Eigen::MatrixXcd::Zero(std::max(J, K) + 1, std::max(J, K) + 1);
    fit.values = RVec::Zero(plane.nodes.size());
    if (nr == 0) return fit;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
    fit.condition = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    if (!(fit.condition > 0 && fit.condition <= 1e14)) {
        std::ostringstream os;
        os << "moment Gram condition " << fit.condition << " > 1e14; lower K, J";
        throw Error("moment_reconstruction.basis", os.str());
    }
    CVec d = G.ldlt().solve(b);
    const double bn = b.norm();
    fit.residual = bn > 0 ? ((G - mu * Eigen::MatrixXcd::Identity(nr, nr)) * d - b).norm() / bn : 0.0;
    for (int r = 0; r < nr; ++r) fit.coef(rows[r].first, rows[r].second) += d[r];
    fit.values = (B * d).real();
    return fit;
}

RVec stack_planes(const Grid& grid, const std::vector<PlaneSpec>& planes, const std::vector<RVec>& fields,
                  const RVec& q_star, const Box& u_box) {
    if (planes.size() != fields.size() || planes.empty())
        throw Error("moment_reconstruction.dimension", "one field per plane is required");
    std::vector<int> order(planes.size());
    for (size_t p = 0; p < planes.size(); ++p) order[p] = static_cast<int>(p);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return planes[a].k_index < planes[b].k_index; });
    for (size_t r = 1; r < order.size(); ++r)
        if (planes[order[r]].k_index - planes[order[r - 1]].k_index > 2)
            throw Error("moment_reconstruction.coverage",
                        "gap of more than one spacing between planes at x3 = " +
                            std::to_string(planes[order[r - 1]].c));
    RVec out = q_star;
    for (int k = 0; k < grid.dims[2]; ++k) {
        double x3 = grid.origin[2] + k * grid.spacing[2];
        if (x3 < u_box.lo[2] - 1e-12 || x3 > u_box.hi[2] + 1e-12) continue;
        int best = order[0];
        for (int p : order)
            if (std::abs(planes[p].k_index - k) < std::abs(planes[best].k_index - k)) best = p;
        for (size_t a = 0; a < planes[best].nodes.size(); ++a) {
            auto c = grid.ijk(planes[best].nodes[a]);
            int n = grid.index(c[0], c[1], k);
            if (u_box.contains(grid.coord(n))) out[n] = fields[best][a];
        }
    }
    return out;
}

} // namespace eucgo
