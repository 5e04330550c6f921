#include "eucgo/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace eucgo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// chi = (1 - u^{8k})^k on u in [0,1], derivatives with respect to u.
Jet band_jet(double u, int k) {
    const int m = 8 * k;
    double um = std::pow(u, m);
    double b = 1 - um;
    Jet j;
    j.v = std::pow(b, k);
    double dum = m * std::pow(u, m - 1);
    double ddum = m * (m - 1) * std::pow(u, m - 2);
    j.d1 = -k * std::pow(b, k - 1) * dum;
    j.d2 = -k * std::pow(b, k - 1) * ddum;
    if (k >= 2) j.d2 += k * (k - 1) * std::pow(b, k - 2) * dum * dum;
    return j;
}

// e^{lam u^2} u^{2k}, derivatives with respect to u.
Jet growth_jet(double u, int k, double lam) {
    if (lam * u * u > 700) {
        std::ostringstream os;
        os << "F_lambda exponent lambda*u^2 = " << lam * u * u << " exceeds 700 (lambda = " << lam
           << ")";
        throw Error("carleman_weights.range", os.str());
    }
    double e = std::exp(lam * u * u);
    double a = 2 * lam * u * u + 2 * k;
    Jet j;
    j.v = e * std::pow(u, 2 * k);
    j.d1 = e * std::pow(u, 2 * k - 1) * a;
    j.d2 = e * std::pow(u, 2 * k - 2) * (a * (a - 1) + 4 * lam * u * u);
    return j;
}

} // namespace

Jet chi0_jet(double x, const WeightSpec& s) {
    if (x > -s.t1 && x < s.t2) return {1, 0, 0};
    if (x >= s.t2) {
        if (x >= s.t2 + s.d2) return {0, 0, 0};
        Jet b = band_jet((x - s.t2) / s.d2, s.k);
        return {b.v, b.d1 / s.d2, b.d2 / (s.d2 * s.d2)};
    }
    if (x <= -s.t1 - s.d1) return {0, 0, 0};
    Jet b = band_jet((-s.t1 - x) / s.d1, s.k);
    return {b.v, -b.d1 / s.d1, b.d2 / (s.d1 * s.d1)};
}

double eval_chi0(double x3, const WeightSpec& s) { return chi0_jet(x3, s).v; }

Jet F_lambda_jet(double x, const WeightSpec& s) {
    if (x > -s.t1 && x < s.t2) return {0, 0, 0};
    if (x >= s.t2) {
        Jet g = growth_jet((x - s.t2) / s.d2, s.k, s.lambda);
        return {g.v, g.d1 / s.d2, g.d2 / (s.d2 * s.d2)};
    }
    Jet g = growth_jet((-s.t1 - x) / s.d1, s.k, s.lambda);
    return {g.v, -g.d1 / s.d1, g.d2 / (s.d1 * s.d1)};
}

double eval_F_lambda(double x, const WeightSpec& s) { return F_lambda_jet(x, s).v; }

Region region_of(double w, const WeightSpec& s) {
    if (w >= -s.t1 && w <= s.t2) return Region::A1;
    if (w > s.t2 + s.d2 || w < -s.t1 - s.d1) return Region::A3;
    return Region::A2;
}

OmegaFields build_omega(const Grid& grid) {
    OmegaFields o;
    o.omega = sample(grid, [](const Vec3& x) { return x[2]; });
    o.omega_tilde = sample(grid, [](const Vec3& x) { return x[1]; });
    return o;
}

void validate_weight_spec(const Grid& grid, const WeightSpec& s, bool allow_band_truncation) {
    if (s.k < 1) throw Error("carleman_weights.spec", "k must be >= 1");
    if (!(s.lambda > 0)) throw Error("carleman_weights.spec", "lambda must be positive");
    if (!(s.t1 > 0 && s.t2 > 0 && s.d1 > 0 && s.d2 > 0))
        throw Error("carleman_weights.spec", "t1, t2, d1, d2 must be positive");
    if (s.sign != 1 && s.sign != -1) throw Error("carleman_weights.spec", "sign must be +1 or -1");
    if (allow_band_truncation) return;
    if (-s.t1 - s.d1 < grid.u1_box.lo[2] - 1e-12 || s.t2 + s.d2 > grid.u1_box.hi[2] + 1e-12)
        throw Error("carleman_weights.spec",
                    "slab plus transition bands must lie inside the x3 extent of U1");
}

namespace {

// Partials of a field: central differences, second-order one-sided at lattice faces.
Vec3 partials(const Grid& grid, const RVec& f, int n) {
    auto c = grid.ijk(n);
    Vec3 d;
    for (int a = 0; a < 3; ++a) {
        auto at = [&](int off) {
            auto e = c;
            e[a] += off;
            return f[grid.index(e[0], e[1], e[2])];
        };
        double h = grid.spacing[a];
        if (c[a] == 0) d[a] = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
        else if (c[a] == grid.dims[a] - 1) d[a] = (3 * at(0) - 4 * at(-1) + at(-2)) / (2 * h);
        else d[a] = (at(1) - at(-1)) / (2 * h);
    }
    return d;
}

Mat3 second_partials(const Grid& grid, const RVec& f, int n) {
    auto c = grid.ijk(n);
    auto at = [&](int a, int sa, int b, int sb) {
        auto e = c;
        e[a] += sa;
        e[b] += sb;
        return f[grid.index(e[0], e[1], e[2])];
    };
    Mat3 d;
    const Vec3& h = grid.spacing;
    for (int a = 0; a < 3; ++a) {
        d(a, a) = (at(a, 1, a, 0) - 2 * f[n] + at(a, -1, a, 0)) / (h[a] * h[a]);
        for (int b = a + 1; b < 3; ++b)
            d(a, b) = d(b, a) =
                (at(a, 1, b, 1) - at(a, 1, b, -1) - at(a, -1, b, 1) + at(a, -1, b, -1)) /
                (4 * h[a] * h[b]);
    }
    return d;
}

} // namespace

WeightField build_weight(const Grid& grid, const MetricField& metric, const WeightSpec& spec,
                         const OmegaFields& om) {
    WeightField w;
    w.spec = spec;
    w.omega = om.omega;
    w.omega_tilde = om.omega_tilde;
    const int N = grid.size();
    w.phi.resize(N);
    w.df.resize(N);
    w.grad.resize(N);
    w.hess.assign(N, Mat3::Zero());
    w.has_hess.assign(N, 0);
    w.region.resize(N);
    const double s = spec.sign;
    for (int n = 0; n < N; ++n) {
        const double x1 = grid.coord(n)[0];
        const double wv = om.omega[n];
        Jet c = chi0_jet(wv, spec), F = F_lambda_jet(wv, spec);
        w.region[n] = region_of(wv, spec);
        // On the slab, the same branch gives phi = sign * x1 bit-exactly.
        w.phi[n] = (c.v == 1.0 && F.v == 0.0) ? s * x1 : s * x1 * c.v + F.v;
        Vec3 dw = partials(grid, om.omega, n);
        Vec3 df = (s * x1 * c.d1 + F.d1) * dw;
        df[0] += s * c.v;
        w.df[n] = df;
        w.grad[n] = metric.g_inv[n] * df;
        if (w.grad[n].dot(df) <= 0) {
            std::ostringstream os;
            os << "grad phi vanishes at node " << n << " (x = " << grid.coord(n).transpose()
               << "); lambda too small or geometry outside scope";
            throw Error("carleman_weights.degenerate", os.str());
        }
        if (!grid.lattice_interior(n)) continue;
        Mat3 ddw = second_partials(grid, om.omega, n);
        Mat3 dd = (s * x1 * c.d2 + F.d2) * dw * dw.transpose() + (s * x1 * c.d1 + F.d1) * ddw;
        for (int a = 0; a < 3; ++a) {
            dd(0, a) += s * c.d1 * dw[a];
            dd(a, 0) += s * c.d1 * dw[a];
        }
        w.hess[n] = covariant_from_partials(grid, metric, n, df, dd).hess;
        w.has_hess[n] = 1;
    }
    return w;
}

namespace {

struct Frame {
    Vec3 p;      // L^{-1} dphi, the gradient in an orthonormal frame
    Mat3 H;      // L^{-1} hess L^{-T}
    Vec3 e1, e2; // orthonormal basis of p-perp
};

Frame frame_at(const MetricField& metric, int node, const Vec3& df, const Mat3& hess) {
    Frame f;
    const Mat3& g = metric.g[node];
    Mat3 L;
    if (g == Mat3::Identity()) {
        L = Mat3::Identity();
        f.p = df;
        f.H = hess;
    } else {
        Eigen::LLT<Mat3> llt(g);
        L = llt.matrixL();
        Mat3 Li = L.inverse();
        f.p = Li * df;
        f.H = Li * hess * Li.transpose();
    }
    Vec3 ph = f.p.normalized();
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(ph[a]) < std::abs(ph[axis])) axis = a;
    f.e1 = ph.cross(Vec3::Unit(axis)).normalized();
    f.e2 = ph.cross(f.e1);
    return f;
}

} // namespace

double hormander_min_at(const MetricField& metric, int node, const Vec3& df, const Mat3& hess) {
    Frame f = frame_at(metric, node, df, hess);
    double a = f.e1.dot(f.H * f.e1), b = f.e1.dot(f.H * f.e2), c = f.e2.dot(f.H * f.e2);
    double lmin = 0.5 * (a + c) - std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    double p2 = f.p.squaredNorm();
    return p2 * lmin + f.p.dot(f.H * f.p);
}

double hormander_min_sampled(const MetricField& metric, int node, const Vec3& df, const Mat3& hess,
                             int directions) {
    Frame f = frame_at(metric, node, df, hess);
    const double r = f.p.norm();
    const double base = f.p.dot(f.H * f.p);
    auto val = [&](double th) {
        Vec3 X = r * (std::cos(th) * f.e1 + std::sin(th) * f.e2);
        return X.dot(f.H * X) + base;
    };
    const double step = 2 * M_PI / directions;
    int best = 0;
    double bv = val(0);
    for (int i = 1; i < directions; ++i) {
        double v = val(i * step);
        if (v < bv) {
            bv = v;
            best = i;
        }
    }
    // Golden-section refinement inside the bracketing samples.
    double lo = (best - 1) * step, hi = (best + 1) * step;
    const double gr = 0.5 * (std::sqrt(5.0) - 1);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = val(x1), f2 = val(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = val(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = val(x2);
        }
    }
    return std::min({bv, f1, f2});
}

HormanderReport check_hormander(const Grid& grid, const MetricField& metric, const WeightField& w,
                                const std::vector<int>& sample_nodes) {
    (void)grid;
    HormanderReport rep;
    rep.min_value = kInf;
    rep.region_min = {kInf, kInf, kInf};
    rep.region_count = {0, 0, 0};
    for (int n : sample_nodes) {
        if (!w.has_hess[n]) continue;
        if (w.grad[n].dot(w.df[n]) <= 0) {
            std::ostringstream os;
            os << "grad phi vanishes at node " << n;
            throw Error("carleman_weights.degenerate", os.str());
        }
        double v = hormander_min_at(metric, n, w.df[n], w.hess[n]);
        int r = static_cast<int>(w.region[n]) - 1;
        rep.region_min[r] = std::min(rep.region_min[r], v);
        rep.region_count[r]++;
        rep.samples++;
        if (v < rep.min_value) {
            rep.min_value = v;
            rep.argmin = n;
        }
    }
    return rep;
}

LambdaSearch choose_lambda(const Grid& grid, const MetricField& metric, WeightSpec spec,
                           const std::vector<int>& nodes, double margin, double rel_tol) {
    OmegaFields om = build_omega(grid);
    LambdaSearch out;
    auto passes = [&](double lam, HormanderReport* rp, HormanderReport* rm) {
        WeightSpec a = spec, b = spec;
        a.lambda = b.lambda = lam;
        a.sign = 1;
        b.sign = -1;
        out.evaluations++;
        HormanderReport p = check_hormander(grid, metric, build_weight(grid, metric, a, om), nodes);
        HormanderReport m = check_hormander(grid, metric, build_weight(grid, metric, b, om), nodes);
        if (rp) *rp = p;
        if (rm) *rm = m;
        return p.min_value >= margin && m.min_value >= margin;
    };
    double lo = 0, hi = 0.25;
    while (!passes(hi, nullptr, nullptr)) {
        lo = hi;
        hi *= 2;
        if (hi > 256)
            throw Error("carleman_weights.lambda",
                        "no lambda up to 256 satisfies the Hormander condition");
    }
    while (hi - lo > rel_tol * hi) {
        double mid = 0.5 * (lo + hi);
        if (passes(mid, nullptr, nullptr)) hi = mid;
        else lo = mid;
    }
    passes(hi, &out.phi_report, &out.psi_report);
    out.lambda = hi;
    return out;
}

namespace {

// Extended-precision branch formulas, used only by the seam check where
// one-sided differences at tiny steps would otherwise drown in rounding.
using LD = long double;

LD chi0_ld(LD x, const WeightSpec& s) {
    if (x > -s.t1 && x < s.t2) return 1;
    LD u;
    if (x >= s.t2) {
        if (x >= s.t2 + s.d2) return 0;
        u = (x - s.t2) / s.d2;
    } else {
        if (x <= -s.t1 - s.d1) return 0;
        u = (-s.t1 - x) / s.d1;
    }
    return std::pow(1 - std::pow(u, 8 * s.k), s.k);
}

LD F_ld(LD x, const WeightSpec& s) {
    if (x > -s.t1 && x < s.t2) return 0;
    LD u = x >= s.t2 ? (x - s.t2) / s.d2 : (-s.t1 - x) / s.d1;
    return std::exp(s.lambda * u * u) * std::pow(u, 2 * s.k);
}

} // namespace

std::vector<SeamResidual> seam_residuals(const WeightSpec& s, double x1) {
    auto phi = [&](LD x) { return s.sign * x1 * chi0_ld(x, s) + F_ld(x, s); };
    // One-sided limits of the j-th derivative from a quartic through five points
    // strictly on one side of the seam.
    const int P = 5;
    Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic> V(P, P);
    for (int i = 0; i < P; ++i)
        for (int c = 0; c < P; ++c) V(i, c) = std::pow(LD(i + 1), c);
    Eigen::PartialPivLU<Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic>> lu(V);
    std::vector<SeamResidual> out;
    const double seams[4] = {s.t2, s.t2 + s.d2, -s.t1, -s.t1 - s.d1};
    const LD width = std::min(s.d1, s.d2);
    const LD eta = 7e-6L * width;
    for (double z : seams) {
        Eigen::Matrix<LD, Eigen::Dynamic, 1> fl(P), fr(P);
        for (int i = 0; i < P; ++i) {
            fl[i] = phi(z - (i + 1) * eta);
            fr[i] = phi(z + (i + 1) * eta);
        }
        Eigen::Matrix<LD, Eigen::Dynamic, 1> cl = lu.solve(fl), cr = lu.solve(fr);
        LD scale = std::max({LD(1), fl.cwiseAbs().maxCoeff(), fr.cwiseAbs().maxCoeff()});
        LD fact = 1;
        for (int order = 0; order < s.k; ++order) {
            if (order > 0) fact *= order;
            // Left samples run in -x, hence the sign.
            LD left = fact * cl[order] * std::pow(-1 / eta, order);
            LD right = fact * cr[order] * std::pow(1 / eta, order);
            LD sc = scale / std::pow(width, order);
            out.push_back({z, order, static_cast<double>(std::abs(left - right) / sc)});
        }
    }
    return out;
}

double carleman_ratio(const Grid& grid, const MetricField& metric, const WeightField& w,
                      const RVec& q_star, const RVec& u, double h) {
    // e^{phi/h} (Delta_g - q*) e^{-phi/h} u expanded, so no exponential is formed:
    //   Delta u - (2/h) <dphi, du>_g + (|dphi|^2/h^2 - Delta phi / h - q*) u
    RVec lap = laplace_beltrami(grid, metric, u);
    const Vec3& sp = grid.spacing;
    double lhs = 0, un = 0, dun = 0;
    for (int n = 0; n < grid.size(); ++n) {
        if (!grid.lattice_interior(n) || !w.has_hess[n]) continue;
        auto c = grid.ijk(n);
        Vec3 du;
        for (int a = 0; a < 3; ++a) {
            auto up = c, dn = c;
            up[a]++;
            dn[a]--;
            du[a] = (u[grid.index(up[0], up[1], up[2])] - u[grid.index(dn[0], dn[1], dn[2])]) /
                    (2 * sp[a]);
        }
        const Mat3& gi = metric.g_inv[n];
        double grad2 = w.df[n].dot(gi * w.df[n]);
        double lap_phi = (gi * w.hess[n]).trace();
        double v = lap[n] - (2 / h) * w.df[n].dot(gi * du) +
                   (grad2 / (h * h) - lap_phi / h - q_star[n]) * u[n];
        double wq = metric.sqrt_det[n];
        lhs += wq * v * v;
        un += wq * u[n] * u[n];
        dun += wq * du.dot(gi * du);
    }
    const double vol = grid.cell_volume();
    lhs = std::sqrt(lhs * vol);
    un = std::sqrt(un * vol);
    dun = std::sqrt(dun * vol);
    return lhs / (un / h + dun);
}

std::vector<CarlemanRow> estimate_carleman_constant(const Grid& grid, const MetricField& metric,
                                                    const WeightField& w, const RVec& q_star,
                                                    const std::vector<double>& h_values, int trials,
                                                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0, 1);
    const double hmax = grid.spacing.maxCoeff();
    Box lat = grid.lattice_box();
    std::vector<RVec> bumps;
    while (static_cast<int>(bumps.size()) < trials) {
        double rho = (3 + 5 * U(rng)) * hmax;
        Vec3 c;
        for (int a = 0; a < 3; ++a) {
            double lo = lat.lo[a] + rho + 2 * grid.spacing[a];
            double hi = lat.hi[a] - rho - 2 * grid.spacing[a];
            c[a] = lo + (hi - lo) * U(rng);
        }
        RVec u = sample(grid, [&](const Vec3& x) {
            double s = (x - c).squaredNorm() / (rho * rho);
            return s < 1 ? std::pow(1 - s, 4) : 0.0;
        });
        double nrm = std::sqrt(weighted_dot(grid, metric, u, u));
        if (!(nrm > 0)) continue; // degenerate trial rejected
        bumps.push_back(u / nrm);
    }
    std::vector<CarlemanRow> rows;
    for (double h : h_values) {
        CarlemanRow r;
        r.h = h;
        r.resolution_warning = h < 2 * hmax;
        r.ratio = kInf;
        for (const RVec& u : bumps) {
            double v = carleman_ratio(grid, metric, w, q_star, u, h);
            r.ratio = std::min(r.ratio, v);
            r.mean_ratio += v / trials;
        }
        rows.push_back(r);
    }
    return rows;
}

} // namespace eucgo
