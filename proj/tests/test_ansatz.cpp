#include "doctest.h"

#include <cmath>

#include "eucgo/ansatz.hpp"

using namespace eucgo;

namespace {

HolomorphicDatum quartic() {
    HolomorphicDatum h;
    h.c = {cplx(1, 0.5), cplx(0.3, 0), cplx(0, -0.2), cplx(0.1, 0.1), cplx(0.05, 0)};
    return h;
}

Grid flat_grid(int n, double h) {
    GridConfig c;
    c.dims = {n, n, n};
    c.spacing = Vec3::Constant(h);
    c.omega_pad = 3;
    return build_grid(c);
}

// (-i/2)^k / k!, built independently of the recursion.
cplx leading(int k) {
    cplx a = 1;
    for (int j = 1; j <= k; ++j) a *= cplx(0, -0.5) / double(j);
    return a;
}

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    double hs = (b - a) / n, s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * f(a + i * hs);
    return s * hs / 3;
}

} // namespace

TEST_CASE("amplitude coefficients from the recursion") {
    Amplitude a = amplitude_build(quartic(), ProfileChi::fixed(0, 0.4), 6);
    CHECK(a.v[1].terms.size() == 1);
    CHECK(a.coefficient(1, 0) == GaussRational(Rational(0), Rational(-1, 2)));
    CHECK(a.coefficient(2, 0) == GaussRational(Rational(-1, 8)));
    CHECK(a.coefficient(2, 1) == GaussRational(Rational(-1, 4)));
    for (int k = 0; k <= 6; ++k) {
        CHECK(a.v[k].terms.size() == size_t(k / 2 + 1));
        CHECK(std::abs(a.coefficient(k, 0).value() - leading(k)) < 1e-15);
        for (const Term& t : a.v[k].terms) {
            CHECK(t.zbar == k - t.hder);
            CHECK(t.chider == k - 2 * t.hder);
        }
        if (k >= 1) CHECK(a.recursion_residual(k).is_zero());
    }
}

TEST_CASE("recursion holds numerically at sample points") {
    Amplitude a = amplitude_build(quartic(), ProfileChi::fixed(0.05, 0.5), 5);
    const double e = 1e-3;
    std::vector<Vec3> pts;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j)
            for (int l = 0; l < 5; ++l) pts.push_back(Vec3(-0.3 + 0.15 * i, -0.3 + 0.15 * j, -0.3 + 0.15 * l));
    for (const Vec3& x : pts) {
        for (int k = 1; k <= 5; ++k) {
            auto fd = [&](int kk, int axis) {
                auto at = [&](double d) {
                    Vec3 y = x;
                    y[axis] += d;
                    return a.eval_term(kk, y);
                };
                return (8.0 * (at(e) - at(-e)) - (at(2 * e) - at(-2 * e))) / (12 * e);
            };
            cplx dbar = 0.5 * (fd(k, 0) + cplx(0, 1) * fd(k, 1));
            cplx r = 2.0 * dbar + cplx(0, 1) * fd(k - 1, 2);
            if (k >= 2) r += 0.5 * 0.5 * (fd(k - 2, 0) - cplx(0, 1) * fd(k - 2, 1));
            double scale = std::max(1.0, std::abs(2.0 * dbar) + std::abs(fd(k - 1, 2)));
            CHECK(std::abs(r) <= 1e-6 * scale);
        }
    }
}

TEST_CASE("flat eikonal is exact and the real part is linear") {
    for (const GaussRational& c : flat_eikonal_polynomial()) CHECK(c.is_zero());
    Grid g = flat_grid(10, 0.1);
    for (double eps : {0.0, 0.1, 0.37}) {
        CGOPhase p = phase_flat(g, eps);
        CHECK(std::abs(p.kappa * (1 + eps * eps / 4) - 1) < 1e-15);
        for (int n = 0; n < g.size(); ++n) {
            double x1 = g.coord(n)[0];
            CHECK(p.real_weight[n] == doctest::Approx((1 + eps * eps / 4) * x1).epsilon(1e-15));
            CHECK(std::abs(p.values[n].real() - p.real_weight[n]) < 1e-15);
        }
    }
}

TEST_CASE("global phase is a multiple of the flat one on the slab") {
    Grid g = flat_grid(16, 0.1);
    MetricField m = MetricField::identity(g);
    OmegaFields om = build_omega(g);
    WeightSpec s;
    s.t1 = s.t2 = 0.3;
    s.d1 = s.d2 = 0.4;
    WeightField wp = build_weight(g, m, s, om);
    s.sign = -1;
    WeightField wm = build_weight(g, m, s, om);
    const double eps = 0.2;
    auto [P, Q] = phase_global(wp, wm, eps);
    CGOPhase F = phase_flat(g, eps);
    int slab = 0;
    for (int n = 0; n < g.size(); ++n) {
        if (wp.region[n] != Region::A1 || !g.in_u1[n]) continue;
        ++slab;
        CHECK(std::abs(P.values[n] - P.kappa * F.values[n]) < 1e-12);
        CHECK(std::abs(Q.values[n] + P.kappa * F.values[n]) < 1e-12);
    }
    CHECK(slab > 0);
    wm.spec.lambda = 3;
    CHECK_THROWS_AS(phase_global(wp, wm, eps), Error);
}

TEST_CASE("concentration profile normalisation and limit") {
    const double a = 0.5, c = 0.1;
    auto err = [&](double t) {
        ProfileChi p = ProfileChi::concentration(c, a, t);
        double norm = simpson([&](double x) { return std::pow(p.eval(x), 2); }, p.support_lo(),
                              p.support_hi(), 4000);
        CHECK(std::abs(norm - 1) < 1e-10);
        double m = simpson([&](double x) { return std::pow(p.eval(x), 2) * std::cos(x - c); },
                           p.support_lo(), p.support_hi(), 4000);
        return 1 - m;
    };
    double e1 = err(4), e2 = err(8), e3 = err(16);
    CHECK(e1 > 0);
    CHECK(e1 / e2 == doctest::Approx(4).epsilon(0.02));
    CHECK(e2 / e3 == doctest::Approx(4).epsilon(0.02));
}

TEST_CASE("profile derivatives satisfy the Leibniz identity for chi^2") {
    ProfileChi p = ProfileChi::fixed(0.1, 0.35);
    // (chi^2)^{(k)} from the expansion of (1 - s^2)^8.
    auto direct = [&](double x, int k) {
        double s = (x - p.center) / p.half_width, acc = 0, b = 1;
        for (int m = 0; m <= 8; ++m) {
            int q = 2 * m;
            if (q >= k) {
                double f = 1;
                for (int r = 0; r < k; ++r) f *= (q - r);
                acc += (m % 2 ? -b : b) * f * std::pow(s, q - k);
            }
            b = b * (8 - m) / (m + 1);
        }
        return acc / std::pow(p.half_width, k);
    };
    for (double x : {-0.2, 0.0, 0.13, 0.3}) {
        for (int k = 0; k <= 8; ++k) {
            double lb = 0, b = 1;
            for (int j = 0; j <= k; ++j) {
                lb += b * p.eval(x, j) * p.eval(x, k - j);
                b = b * (k - j) / (j + 1);
            }
            double d = direct(x, k);
            CHECK(std::abs(lb - d) <= 1e-9 * std::max(1.0, std::abs(d)));
        }
    }
    CHECK(p.eval(0.1 + 0.35, 0) == 0.0);
    CHECK(p.eval(0.1, 9) == 0.0);
}

TEST_CASE("transport residual decays like eps^(M+1)") {
    Grid g = flat_grid(22, 0.05);
    MetricField m = MetricField::identity(g);
    ProfileChi chi = ProfileChi::fixed(0, 0.3);
    std::vector<double> eps = {0.05, 0.1, 0.2, 0.4};
    auto slope = [&](int M, int order) {
        Amplitude a = amplitude_build(quartic(), chi, M);
        std::vector<double> r;
        for (double e : eps) {
            TransportResidual t = transport_residual(g, phase_flat(g, e), a, m, -0.35, 0.35, order);
            CHECK(t.eikonal_norm == 0.0);
            CHECK(t.nodes > 0);
            r.push_back(t.transport_norm);
        }
        return log_log_slope(eps, r);
    };
    CHECK(slope(4, 4) >= 3.5);
    CHECK(slope(6, 6) >= 5.5);
    CHECK(slope(4, 0) >= 0.5);
    Amplitude a = amplitude_build(quartic(), chi, 2);
    try {
        transport_residual(g, phase_flat(g, 0.1), a, m, -0.2, 0.2);
        FAIL("expected a support error");
    } catch (const Error& e) {
        CHECK(e.code() == "cgo_ansatz.support");
    }
}
