#include "doctest.h"

#include <cmath>
#include <memory>
#include <random>

#include "eucgo/ansatz.hpp"
#include "eucgo/trace_recon.hpp"
#include "eucgo/weights.hpp"

using namespace eucgo;

namespace {

// 24^3 box on [-1, 1], V = [-0.4, 0.4]^3 inside a slab of half-width 0.5.
// Everything expensive is built once and shared by the cases below.
struct Fixture {
    Grid grid;
    MetricField metric;
    WeightField phi, psi;
    RVec q_star, q;
    std::unique_ptr<ForwardSolver> fwd_q, fwd_star;
    DNMatrix dn, dn_star;
    CVec f;

    Fixture() {
        GridConfig c;
        c.dims = {24, 24, 24};
        c.spacing = Vec3::Constant(2.0 / 23);
        c.omega_pad = 4;
        c.v.lo = Vec3::Constant(-0.4);
        c.v.hi = Vec3::Constant(0.4);
        grid = build_grid(c);
        metric = MetricField::identity(grid);
        WeightSpec w;
        w.t1 = w.t2 = 0.5;
        w.d1 = w.d2 = 0.85;
        w.lambda = 2.0;
        OmegaFields om = build_omega(grid);
        phi = build_weight(grid, metric, w, om);
        w.sign = -1;
        psi = build_weight(grid, metric, w, om);
        q_star = RVec::Constant(grid.size(), 0.5);
        q = q_star + sample(grid, [](const Vec3& x) {
                Vec3 y = x - Vec3(0.08, -0.05, 0.03);
                double r2 = y[0] * y[0] / 0.09 + y[1] * y[1] / 0.05 + y[2] * y[2] / 0.07;
                double s = x.cwiseAbs().maxCoeff() / 0.4;
                return s < 1 ? 2 * std::exp(-r2) * std::pow(1 - s * s * s * s, 3) : 0.0;
            });
        fwd_q = std::make_unique<ForwardSolver>(grid, metric, q);
        fwd_star = std::make_unique<ForwardSolver>(grid, metric, q_star);
        dn = fwd_q->assemble_dn();
        dn_star = fwd_star->assemble_dn();
        f.resize(grid.boundary_nodes.size());
        for (int i = 0; i < f.size(); ++i) {
            Vec3 x = grid.coord(grid.boundary_nodes[i]);
            f[i] = cplx(std::cos(2 * x[0] + x[1]) + x[2], std::sin(3 * x[1] - x[2]));
        }
    }
};

Fixture& fixture() {
    static Fixture fx;
    return fx;
}

// Conjugated operators and their kernel at one tau.
struct TauOps {
    ConjugatedOperator P, Q;
    KOperator K;
    Kernel kern;
    GreenKernel G;
    TauOps(const Fixture& fx, double tau)
        : P(fx.grid, fx.metric, fx.phi.phi, tau, fx.q_star, Direction::Forward),
          Q(fx.grid, fx.metric, fx.psi.phi, tau, fx.q_star, Direction::Mirror), K(P, Q),
          kern{nullptr, &K}, G(kern) {}
};

TauOps& ops16() {
    static TauOps t(fixture(), 16.0);
    return t;
}

TauOps& ops8() {
    static TauOps t(fixture(), 8.0);
    return t;
}

double rel(const CVec& a, const CVec& b) { return (a - b).norm() / b.norm(); }

double layer_error(const Fixture& fx, const ContinuationResult& r, const CVec& u) {
    VLayers lay = v_layers(fx.grid);
    double num = 0, den = 0;
    for (const auto* l : {&lay.inner, &lay.outer})
        for (int n : *l)
            if (r.known[n]) {
                num += std::norm(r.u[n] - u[n]);
                den += std::norm(u[n]);
            }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("V layers straddle the faces of V") {
    Fixture& fx = fixture();
    VLayers lay = v_layers(fx.grid);
    REQUIRE(!lay.inner.empty());
    REQUIRE(!lay.outer.empty());
    for (int n : lay.inner) {
        CHECK(lay.theta[n]);
        CHECK(!lay.interior[n]);
    }
    for (int n : lay.outer) CHECK(!lay.theta[n]);
}

TEST_CASE("exterior continuation recovers the solution around V") {
    Fixture& fx = fixture();
    ExteriorContinuation ec(fx.grid, fx.metric, fx.q_star, Component::Whole);
    CHECK(ec.equations() > ec.unknowns());

    // q = q* outside V, so the q-solution solves the q* equation there.
    CVec u = fx.fwd_q->solve_dirichlet(fx.f);
    CVec neumann = fx.dn.matrix.cast<cplx>() * fx.f;
    ContinuationResult r = ec.solve(fx.f, neumann);
    CHECK(r.consistency <= 1e-6);
    CHECK(r.residual <= 2 * r.consistency + 1e-12);
    CHECK(layer_error(fx, r, u) <= 1e-5);

    ContinuationResult z = ec.solve(CVec::Zero(fx.f.size()), CVec::Zero(fx.f.size()));
    CHECK(z.u.cwiseAbs().maxCoeff() == 0.0);

    // Neumann data that belong to no solution trip the certificate.
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    CVec junk(fx.f.size());
    for (int i = 0; i < junk.size(); ++i) junk[i] = cplx(nd(rng), nd(rng));
    try {
        ec.solve(fx.f, junk);
        FAIL("expected a continuation certificate failure");
    } catch (const Error& e) {
        CHECK(e.code() == "boundary_trace_recon.continuation");
    }
}

TEST_CASE("the Green kernel solves the adjoint equation on V") {
    Fixture& fx = fixture();
    TauOps& t = ops16();
    for (int i : {0, 101, 517}) {
        int x = fx.grid.boundary_nodes[i];
        CHECK(green_adjoint_defect(t.G, fx.metric, fx.q_star, x) <= 1e-6);
    }
}

TEST_CASE("blind Gamma matches the direct formula and is linear") {
    Fixture& fx = fixture();
    TauOps& t = ops16();
    BlindGamma bg(fx.grid, fx.metric, fx.q_star, t.G, fx.dn);
    CVec gd = apply_gamma_direct(t.G, *fx.fwd_q, fx.q, fx.q_star, fx.f);
    CVec gb = bg.apply(fx.f);
    CHECK(gd.norm() > 0);
    CHECK(rel(gb, gd) <= 0.1);

    const cplx a(0.3, -1.7);
    CHECK(rel(apply_gamma_direct(t.G, *fx.fwd_q, fx.q, fx.q_star, a * fx.f), a * gd) <= 1e-10);

    // The blind map amplifies continuation rounding by roughly e^{tau dphi} / h^2,
    // so exact linearity is checked where that factor is modest.
    TauOps& t8 = ops8();
    BlindGamma b8(fx.grid, fx.metric, fx.q_star, t8.G, fx.dn);
    CVec g8 = b8.apply(fx.f);
    CHECK(rel(b8.apply(a * fx.f), a * g8) <= 1e-10);
    CHECK(rel(bg.apply(a * fx.f), a * gb) <= 1e-8);

    // With alpha frozen the blind map is additive as well.
    b8.apply(fx.f);
    b8.freeze_alpha();
    CVec g2 = CVec::Constant(fx.f.size(), cplx(0.5, 0.25));
    CVec sum = b8.apply(fx.f) + b8.apply(g2);
    CHECK(rel(b8.apply(fx.f + g2), sum) <= 1e-10);
}

TEST_CASE("Gamma vanishes when q = q*") {
    Fixture& fx = fixture();
    TauOps& t = ops16();
    CVec gd = apply_gamma_direct(t.G, *fx.fwd_star, fx.q_star, fx.q_star, fx.f);
    CHECK(gd.cwiseAbs().maxCoeff() == 0.0);
    // The blind map only sees Lambda_{q*}; its output is continuation noise.
    BlindGamma bg(fx.grid, fx.metric, fx.q_star, t.G, fx.dn_star);
    CVec gq = apply_gamma_direct(t.G, *fx.fwd_q, fx.q, fx.q_star, fx.f);
    CHECK(bg.apply(fx.f).norm() <= 1e-4 * gq.norm());

    CVec u0 = fx.f;
    TraceSolution s = solve_trace_equation([&](const CVec& x) { return apply_gamma_direct(t.G, *fx.fwd_star, fx.q_star, fx.q_star, x); }, u0);
    CHECK(s.trace == u0);
    CHECK(s.residual == 0.0);
}

TEST_CASE("trace equation reproduces the CGO trace") {
    Fixture& fx = fixture();
    TauOps& t = ops16();
    const double tau = 16, eps = 1 / std::sqrt(tau);
    ProfileChi chi = ProfileChi::concentration(0.0, 0.4, 1.0);
    Amplitude amp = amplitude_build(HolomorphicDatum::monomial(1), chi, 6);
    auto [Phi, Psi] = phase_global(fx.phi, fx.psi, eps);
    CVec v = amp.sample(fx.grid, eps);
    CGOSolution c0 = solve_cgo(t.kern, fx.metric, fx.q_star, fx.q_star, Phi.values, v, eps, 1);
    CGOSolution c1 = solve_cgo(t.kern, fx.metric, fx.q, fx.q_star, Phi.values, v, eps, 1);
    REQUIRE(c0.trace_log_scale == doctest::Approx(c1.trace_log_scale));

    TraceSolveOptions opt;
    opt.dense_fallback = false;
    TraceSolution sd = solve_trace_equation(
        [&](const CVec& x) { return apply_gamma_direct(t.G, *fx.fwd_q, fx.q, fx.q_star, x); }, c0.trace, opt);
    CHECK(!sd.dense);
    CHECK(sd.spectral_radius < 0.5);
    CHECK(sd.residual <= 1e-8);
    CHECK(rel(sd.trace, c1.trace) <= 1e-8);

    BlindGamma bg(fx.grid, fx.metric, fx.q_star, t.G, fx.dn);
    bg.apply(c0.trace);
    bg.freeze_alpha();
    TraceSolution sb = solve_trace_equation([&](const CVec& x) { return bg.apply(x); }, c0.trace, opt);
    CHECK(sb.residual <= 1e-8);
    CHECK(rel(sb.trace, c1.trace) <= 0.1);
}

TEST_CASE("batched Gamma and trace solves agree with single ones") {
    Fixture& fx = fixture();
    TauOps& t = ops8();
    CMat F(fx.f.size(), 3);
    F.col(0) = fx.f;
    F.col(1) = fx.f.cwiseAbs2().cast<cplx>();
    F.col(2) = CVec::Constant(fx.f.size(), cplx(1, -1));
    CMat gd = apply_gamma_direct_batch(t.G, *fx.fwd_q, fx.q, fx.q_star, F);
    BlindGamma bg(fx.grid, fx.metric, fx.q_star, t.G, fx.dn);
    CMat gb = bg.apply_batch(F);
    for (int c = 0; c < 3; ++c) {
        CHECK(rel(gd.col(c), apply_gamma_direct(t.G, *fx.fwd_q, fx.q, fx.q_star, CVec(F.col(c)))) <= 1e-12);
        CHECK(rel(gb.col(c), bg.apply(CVec(F.col(c)))) <= 1e-10); // blind rounding floor
    }
    std::vector<TraceSolution> sb = solve_trace_equations(
        [&](const CMat& X) { return apply_gamma_direct_batch(t.G, *fx.fwd_q, fx.q, fx.q_star, X); }, F);
    for (int c = 0; c < 3; ++c) {
        TraceSolution s1 = solve_trace_equation(
            [&](const CVec& x) { return apply_gamma_direct(t.G, *fx.fwd_q, fx.q, fx.q_star, x); }, F.col(c));
        CHECK(sb[c].terms == s1.terms);
        CHECK(rel(sb[c].trace, s1.trace) <= 1e-12);
        CHECK(sb[c].residual <= 1e-8);
    }
}

TEST_CASE("trace equation: divergence and singular systems") {
    CVec u0 = CVec::LinSpaced(6, 1.0, 2.0);
    BoundaryMap twice = [](const CVec& x) { CVec y = 2.0 * x; return y; };
    TraceSolveOptions opt;
    opt.dense_fallback = false;
    try {
        solve_trace_equation(twice, u0, opt);
        FAIL("expected tau_too_small");
    } catch (const Error& e) {
        CHECK(e.code() == "boundary_trace_recon.tau_too_small");
    }
    // (I - 2I) f = u0 has the solution -u0; the dense path finds it.
    TraceSolution s = solve_trace_equation(twice, u0);
    CHECK(s.dense);
    CHECK(rel(s.trace, -u0) <= 1e-14);
    CHECK(s.spectral_radius == doctest::Approx(2.0));

    BoundaryMap ident = [](const CVec& x) { return x; };
    try {
        solve_trace_equation(ident, u0);
        FAIL("expected tau_too_small");
    } catch (const Error& e) {
        CHECK(e.code() == "boundary_trace_recon.tau_too_small");
    }
}
