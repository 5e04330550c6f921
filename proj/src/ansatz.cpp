#include "eucgo/ansatz.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

namespace eucgo {

HolomorphicDatum HolomorphicDatum::monomial(int j, cplx coef) {
    HolomorphicDatum h;
    h.c.assign(j + 1, 0.0);
    h.c[j] = coef;
    return h;
}

cplx HolomorphicDatum::eval(cplx z, int der) const {
    // Horner on the derivative's coefficients.
    cplx acc = 0;
    for (int j = degree(); j >= der; --j) {
        double f = 1;
        for (int m = 0; m < der; ++m) f *= (j - m);
        acc = acc * z + f * c[j];
    }
    return acc;
}

namespace {

// int_{-1}^{1} (1 - s^2)^8 ds = 2^17 (8!)^2 / 17!
double bump_square_integral() {
    long double f8 = 40320.0L, f17 = 1;
    for (int i = 2; i <= 17; ++i) f17 *= i;
    return static_cast<double>(131072.0L * f8 * f8 / f17);
}

} // namespace

ProfileChi ProfileChi::fixed(double center, double half_width) {
    ProfileChi p;
    p.family = Family::FixedBump;
    p.center = center;
    p.half_width = half_width;
    p.amplitude = 1;
    return p;
}

ProfileChi ProfileChi::concentration(double center, double a, double t) {
    ProfileChi p;
    p.family = Family::Concentration;
    p.center = center;
    p.half_width = a / t;
    p.amplitude = std::sqrt(t / (a * bump_square_integral()));
    return p;
}

double ProfileChi::eval(double x3, int d) const {
    double s = (x3 - center) / half_width;
    if (std::abs(s) >= 1) return 0;
    static const double binom4[5] = {1, -4, 6, -4, 1};
    double acc = 0;
    for (int m = 0; m <= 4; ++m) {
        int p = 2 * m;
        if (p < d) continue;
        double f = 1;
        for (int r = 0; r < d; ++r) f *= (p - r);
        acc += binom4[m] * f * std::pow(s, p - d);
    }
    return amplitude * acc / std::pow(half_width, d);
}

void Expr::normalise() {
    std::map<std::tuple<int, int, int>, GaussRational> acc;
    for (const Term& t : terms) {
        auto key = std::make_tuple(t.zbar, t.hder, t.chider);
        auto it = acc.find(key);
        if (it == acc.end()) acc.emplace(key, t.coef);
        else it->second = it->second + t.coef;
    }
    terms.clear();
    for (auto& [key, c] : acc) {
        if (c.is_zero()) continue;
        terms.push_back({c, std::get<0>(key), std::get<1>(key), std::get<2>(key)});
    }
}

Expr Expr::dbar() const {
    Expr e;
    for (const Term& t : terms)
        if (t.zbar > 0) e.terms.push_back({t.coef * Rational(t.zbar), t.zbar - 1, t.hder, t.chider});
    e.normalise();
    return e;
}

Expr Expr::del() const {
    Expr e;
    for (const Term& t : terms) e.terms.push_back({t.coef, t.zbar, t.hder + 1, t.chider});
    e.normalise();
    return e;
}

Expr Expr::d3() const {
    Expr e;
    for (const Term& t : terms) e.terms.push_back({t.coef, t.zbar, t.hder, t.chider + 1});
    e.normalise();
    return e;
}

Expr Expr::dbar_inverse() const {
    Expr e;
    for (const Term& t : terms)
        e.terms.push_back({t.coef / Rational(t.zbar + 1), t.zbar + 1, t.hder, t.chider});
    e.normalise();
    return e;
}

Expr Expr::scaled(const GaussRational& s) const {
    Expr e;
    for (const Term& t : terms) e.terms.push_back({t.coef * s, t.zbar, t.hder, t.chider});
    e.normalise();
    return e;
}

Expr Expr::operator+(const Expr& o) const {
    Expr e;
    e.terms = terms;
    e.terms.insert(e.terms.end(), o.terms.begin(), o.terms.end());
    e.normalise();
    return e;
}

Amplitude amplitude_build(const HolomorphicDatum& h, const ProfileChi& chi, int M) {
    if (M < 1) throw Error("cgo_ansatz.order", "M must be >= 1");
    Amplitude a;
    a.M = M;
    a.h = h;
    a.chi = chi;
    Expr v0;
    v0.terms.push_back({GaussRational(Rational(1)), 0, 0, 0});
    a.v.push_back(v0);
    const GaussRational minus_half_i(Rational(0), Rational(-1, 2));
    const GaussRational minus_quarter(Rational(-1, 4));
    for (int k = 1; k <= M; ++k) {
        // 2 dbar v_k = -i d3 v_{k-1} - (1/2) del v_{k-2}
        Expr rhs = a.v[k - 1].d3().scaled(minus_half_i);
        if (k >= 2) rhs = rhs + a.v[k - 2].del().scaled(minus_quarter);
        a.v.push_back(rhs.dbar_inverse());
    }
    return a;
}

GaussRational Amplitude::coefficient(int k, int j) const {
    for (const Term& t : v.at(k).terms)
        if (t.zbar == k - j && t.hder == j && t.chider == k - 2 * j) return t.coef;
    return GaussRational();
}

Expr Amplitude::recursion_residual(int k) const {
    Expr r = v.at(k).dbar().scaled(GaussRational(Rational(2)));
    if (k >= 1) r = r + v[k - 1].d3().scaled(GaussRational::i());
    if (k >= 2) r = r + v[k - 2].del().scaled(GaussRational(Rational(1, 2)));
    return r;
}

namespace {

struct Eval {
    const Amplitude& a;
    cplx z, zb;
    double x3;
    std::vector<cplx> hd;
    std::vector<double> cd;
    Eval(const Amplitude& amp, const Vec3& x, int max_der)
        : a(amp), z(x[0], x[1]), zb(x[0], -x[1]), x3(x[2]) {
        hd.resize(max_der + 2);
        cd.resize(max_der + 2);
        for (int d = 0; d < max_der + 2; ++d) {
            hd[d] = a.h.eval(z, d);
            cd[d] = a.chi.eval(x3, d);
        }
    }
    cplx zbp(int p) const { return p == 0 ? cplx(1) : std::pow(zb, p); }
};

} // namespace

cplx Amplitude::eval_term(int k, const Vec3& x) const {
    Eval e(*this, x, M + 1);
    cplx s = 0;
    for (const Term& t : v.at(k).terms) s += t.coef.value() * e.zbp(t.zbar) * e.hd[t.hder] * e.cd[t.chider];
    return s;
}

Amplitude::Jet Amplitude::jet(double eps, const Vec3& x, int order) const {
    if (order < 0) order = M;
    Jet j{0, 0, 0, 0};
    if (std::abs(x[2] - chi.center) >= chi.half_width) return j;
    Eval e(*this, x, M + 1);
    double ek = 1;
    for (int k = 0; k <= order; ++k, ek *= eps) {
        for (const Term& t : v[k].terms) {
            cplx c = ek * t.coef.value();
            cplx zp = e.zbp(t.zbar);
            j.v += c * zp * e.hd[t.hder] * e.cd[t.chider];
            j.d += c * zp * e.hd[t.hder + 1] * e.cd[t.chider];
            j.d3 += c * zp * e.hd[t.hder] * e.cd[t.chider + 1];
            if (t.zbar > 0)
                j.dbar += c * double(t.zbar) * e.zbp(t.zbar - 1) * e.hd[t.hder] * e.cd[t.chider];
        }
    }
    return j;
}

cplx Amplitude::eval(double eps, const Vec3& x, int order) const {
    if (order < 0) order = M;
    if (std::abs(x[2] - chi.center) >= chi.half_width) return 0;
    Eval e(*this, x, M + 1);
    cplx s = 0;
    double ek = 1;
    for (int k = 0; k <= order; ++k, ek *= eps)
        for (const Term& t : v[k].terms)
            s += ek * t.coef.value() * e.zbp(t.zbar) * e.hd[t.hder] * e.cd[t.chider];
    return s;
}

CVec Amplitude::sample(const Grid& grid, double eps, int order) const {
    CVec out(grid.size());
    for (int n = 0; n < grid.size(); ++n) out[n] = eval(eps, grid.coord(n), order);
    return out;
}

std::string Amplitude::dump() const {
    std::ostringstream os;
    os << "# k j re im   (v_k term a_{k,j} zbar^{k-j} h^{(j)} chi^{(k-2j)})\n";
    for (int k = 0; k <= M; ++k)
        for (const Term& t : v[k].terms)
            os << k << " " << t.hder << " " << t.coef.re().str() << " " << t.coef.im().str() << "\n";
    return os.str();
}

std::vector<GaussRational> flat_eikonal_polynomial() {
    // Gradient components as polynomials in eps:
    //   d1 = 1 + eps^2/4, d2 = i - i eps^2/4, d3 = i eps.
    using P = std::vector<GaussRational>;
    const Rational q(1, 4);
    P g1 = {GaussRational(Rational(1)), GaussRational(), GaussRational(q)};
    P g2 = {GaussRational(Rational(0), Rational(1)), GaussRational(), GaussRational(Rational(0), -q)};
    P g3 = {GaussRational(), GaussRational(Rational(0), Rational(1)), GaussRational()};
    P out(5);
    for (const P* g : {&g1, &g2, &g3})
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) out[a + b] = out[a + b] + (*g)[a] * (*g)[b];
    return out;
}

CGOPhase phase_flat(const Grid& grid, double eps) {
    CGOPhase p;
    p.eps = eps;
    p.kappa = 1 / (1 + eps * eps / 4);
    p.kind = PhaseKind::Flat;
    p.values.resize(grid.size());
    p.real_weight.resize(grid.size());
    for (int n = 0; n < grid.size(); ++n) {
        Vec3 x = grid.coord(n);
        cplx z(x[0], x[1]);
        p.values[n] = z + cplx(0, eps * x[2]) + eps * eps * std::conj(z) / 4.0;
        p.real_weight[n] = (1 + eps * eps / 4) * x[0];
    }
    return p;
}

std::pair<CGOPhase, CGOPhase> phase_global(const WeightField& wp, const WeightField& wm,
                                           double eps) {
    const WeightSpec &a = wp.spec, &b = wm.spec;
    if (a.t1 != b.t1 || a.t2 != b.t2 || a.d1 != b.d1 || a.d2 != b.d2 || a.k != b.k ||
        a.lambda != b.lambda || a.sign != 1 || b.sign != -1)
        throw Error("cgo_ansatz.config", "phi/psi weights built from mismatched specs");
    CGOPhase P, Q;
    P.eps = Q.eps = eps;
    P.kappa = Q.kappa = 1 / (1 + eps * eps / 4);
    P.kind = PhaseKind::GlobalPhi;
    Q.kind = PhaseKind::GlobalPsi;
    const int N = static_cast<int>(wp.phi.size());
    P.values.resize(N);
    Q.values.resize(N);
    // kappa (phi + eps^2 phi/4) = phi exactly, so the real parts are the weights.
    for (int n = 0; n < N; ++n) {
        double im = P.kappa * (wp.omega_tilde[n] + eps * wp.omega[n] - eps * eps * wp.omega_tilde[n] / 4);
        P.values[n] = cplx(wp.phi[n], im);
        Q.values[n] = cplx(wm.phi[n], -im);
    }
    P.real_weight = wp.phi;
    Q.real_weight = wm.phi;
    return {P, Q};
}

TransportResidual transport_residual(const Grid& grid, const CGOPhase& phase, const Amplitude& amp,
                                     const MetricField& metric, double slab_lo, double slab_hi,
                                     int order) {
    if (amp.chi.support_lo() < slab_lo - 1e-12 || amp.chi.support_hi() > slab_hi + 1e-12)
        throw Error("cgo_ansatz.support", "amplitude support leaks outside the slab");
    const double e = phase.eps;
    // On the slab every phase kind is a multiple of the flat phase.
    double scale = phase.kind == PhaseKind::Flat ? 1.0 : phase.kappa;
    if (phase.kind == PhaseKind::GlobalPsi) scale = -scale;
    const cplx g1 = scale * (1 + e * e / 4), g2 = scale * cplx(0, 1 - e * e / 4),
               g3 = scale * cplx(0, e);
    cplx eik = 0;
    {
        auto poly = flat_eikonal_polynomial();
        double ek = 1;
        for (auto& c : poly) {
            eik += scale * scale * ek * c.value();
            ek *= e;
        }
    }
    TransportResidual r;
    double acc = 0, eacc = 0;
    for (int n = 0; n < grid.size(); ++n) {
        Vec3 x = grid.coord(n);
        if (x[2] < slab_lo || x[2] > slab_hi || !grid.in_u1[n]) continue;
        if (metric.g[n] != Mat3::Identity())
            throw Error("cgo_ansatz.metric", "slab node with non-Euclidean metric");
        r.nodes++;
        eacc += std::norm(eik);
        Amplitude::Jet j = amp.jet(e, x, order);
        cplx d1 = j.d + j.dbar, d2 = cplx(0, 1) * (j.d - j.dbar);
        // Laplacian of the (linear) phase vanishes on the slab.
        cplx t = 2.0 * (g1 * d1 + g2 * d2 + g3 * j.d3);
        acc += std::norm(t);
    }
    r.eikonal_norm = std::sqrt(eacc * grid.cell_volume());
    r.transport_norm = std::sqrt(acc * grid.cell_volume());
    return r;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace eucgo
