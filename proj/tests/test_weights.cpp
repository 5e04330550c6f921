#include "doctest.h"

#include <cmath>
#include <random>

#include "eucgo/weights.hpp"

using namespace eucgo;

namespace {

WeightSpec spec_default() {
    WeightSpec s;
    s.t1 = s.t2 = 0.3;
    s.d1 = s.d2 = 0.4;
    s.k = 2;
    s.lambda = 2.0;
    return s;
}

Grid slab_grid(int n, double h) {
    GridConfig c;
    c.dims = {n, n, n};
    c.spacing = Vec3::Constant(h);
    c.omega_pad = 3;
    return build_grid(c);
}

} // namespace

TEST_CASE("chi0 values and seam behaviour") {
    WeightSpec s = spec_default();
    CHECK(eval_chi0(0.0, s) == 1.0);
    CHECK(eval_chi0(s.t2 + s.d2, s) == 0.0);
    CHECK(eval_chi0(-s.t1 - s.d1 - 0.01, s) == 0.0);
    for (double x = -1; x <= 1; x += 0.01) {
        double v = eval_chi0(x, s);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // k = 2 at the outer seam: first derivative continuous, second derivative
    // jumps by k(k-1)(8k)^2 / d^2 (from differentiating (1-u^{8k})^k at u = 1).
    double z = s.t2 + s.d2, e = 1e-13;
    Jet in = chi0_jet(z - e, s), out = chi0_jet(z + e, s);
    CHECK(std::abs(in.d1 - out.d1) <= 1e-8);
    double jump = 2.0 * 1 * 256 / (s.d2 * s.d2);
    CHECK(in.d2 - out.d2 == doctest::Approx(jump).epsilon(1e-6));
    // Inner seam is flat to high order.
    Jet a = chi0_jet(s.t2 - e, s), b = chi0_jet(s.t2 + e, s);
    CHECK(std::abs(a.d1 - b.d1) <= 1e-12);
    CHECK(std::abs(a.d2 - b.d2) <= 1e-12);
}

TEST_CASE("F_lambda values, tangency and range guard") {
    WeightSpec s = spec_default();
    CHECK(eval_F_lambda(0.1, s) == 0.0);
    CHECK(eval_F_lambda(s.t2 + s.d2, s) == doctest::Approx(std::exp(s.lambda)).epsilon(1e-14));
    CHECK(eval_F_lambda(-s.t1 - s.d1, s) == doctest::Approx(std::exp(s.lambda)).epsilon(1e-14));
    // Derivatives through order 2k-1 = 3 vanish at t2: F(t2+eta) = O(eta^4).
    Jet j = F_lambda_jet(s.t2, s);
    CHECK(j.v == 0.0);
    CHECK(j.d1 == 0.0);
    CHECK(j.d2 == 0.0);
    double eta = 1e-3;
    double f = eval_F_lambda(s.t2 + eta, s);
    CHECK(f / std::pow(eta / s.d2, 4) == doctest::Approx(1.0).epsilon(1e-5));
    WeightSpec big = s;
    big.lambda = 50;
    try {
        eval_F_lambda(s.t2 + 5 * s.d2, big);
        FAIL("expected range error");
    } catch (const Error& e) {
        CHECK(e.code() == "carleman_weights.range");
        CHECK(std::string(e.what()).find("lambda") != std::string::npos);
    }
}

TEST_CASE("omega fields are the coordinate charts") {
    Grid g = slab_grid(12, 0.1);
    OmegaFields om = build_omega(g);
    MetricField m = MetricField::identity(g);
    WeightField w = build_weight(g, m, spec_default(), om);
    (void)w;
    for (int n = 0; n < g.size(); ++n) {
        CHECK(om.omega[n] == g.coord(n)[2]);
        CHECK(om.omega_tilde[n] == g.coord(n)[1]);
    }
    auto d = gradient_and_hessian(g, m, om.omega, lattice_interior_nodes(g));
    double mn = 1e9;
    for (auto& x : d) mn = std::min(mn, x.grad.norm());
    CHECK(mn == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("glued weight: slab, far field and mirror") {
    Grid g = slab_grid(16, 0.1);
    MetricField m = MetricField::identity(g);
    OmegaFields om = build_omega(g);
    WeightSpec s = spec_default();
    WeightField w = build_weight(g, m, s, om);
    s.sign = -1;
    WeightField v = build_weight(g, m, s, om);
    int slab = 0, far = 0;
    for (int n = 0; n < g.size(); ++n) {
        Vec3 x = g.coord(n);
        if (w.region[n] == Region::A1) {
            CHECK(w.phi[n] == x[0]);
            CHECK(v.phi[n] == -x[0]);
            ++slab;
        }
        if (w.region[n] == Region::A3) {
            CHECK(w.phi[n] == eval_F_lambda(x[2], s));
            ++far;
        }
    }
    CHECK(slab > 0);
    CHECK(far > 0);
}

TEST_CASE("Hormander minimum: flat region, lambda threshold and mirror weight") {
    Grid g = slab_grid(16, 0.1);
    MetricField m = MetricField::identity(g);
    OmegaFields om = build_omega(g);
    auto nodes = lattice_interior_nodes(g);
    WeightSpec s = spec_default();
    s.lambda = 0.05;
    HormanderReport low = check_hormander(g, m, build_weight(g, m, s, om), nodes);
    CHECK(low.region_min[0] == 0.0);
    CHECK(low.min_value < -1e-8);
    LambdaSearch ls = choose_lambda(g, m, s, nodes);
    CHECK(ls.phi_report.min_value >= -1e-8);
    CHECK(ls.psi_report.min_value >= -1e-8);
    CHECK(ls.phi_report.region_min[0] == 0.0);
    // Just below the bisection result the condition fails again.
    WeightSpec below = s;
    below.lambda = ls.lambda * 0.98;
    HormanderReport fb = check_hormander(g, m, build_weight(g, m, below, om), nodes);
    CHECK(fb.min_value < -1e-8);
}

TEST_CASE("Hormander minimum is nondecreasing in lambda on the transition bands") {
    Grid g = slab_grid(14, 0.1);
    MetricField m = MetricField::identity(g);
    OmegaFields om = build_omega(g);
    WeightSpec s = spec_default();
    std::vector<double> prev;
    for (double lam : {0.5, 1.0, 2.0, 4.0}) {
        s.lambda = lam;
        WeightField w = build_weight(g, m, s, om);
        std::vector<double> cur;
        for (int n = 0; n < g.size(); ++n)
            if (w.has_hess[n] && w.region[n] == Region::A2)
                cur.push_back(hormander_min_at(m, n, w.df[n], w.hess[n]));
        if (!prev.empty())
            for (size_t i = 0; i < cur.size(); ++i) CHECK(cur[i] >= prev[i] - 1e-9 * std::abs(prev[i]));
        prev = cur;
    }
}

TEST_CASE("closed-form circle minimum agrees with sampled directions") {
    Grid g = slab_grid(16, 0.1);
    MetricField m = MetricField::from_function(g, metric_cap(-0.3, 0.55, 0.2));
    OmegaFields om = build_omega(g);
    WeightField w = build_weight(g, m, spec_default(), om);
    auto nodes = lattice_interior_nodes(g);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 300; ++t) {
        int n = nodes[rng() % nodes.size()];
        double a = hormander_min_at(m, n, w.df[n], w.hess[n]);
        double b = hormander_min_sampled(m, n, w.df[n], w.hess[n]);
        double scale = std::max(1.0, w.df[n].squaredNorm() * w.hess[n].norm());
        CHECK(std::abs(a - b) <= 1e-9 * scale);
    }
}

TEST_CASE("seam smoothness through order k-1") {
    for (int k : {1, 2, 3}) {
        WeightSpec s = spec_default();
        s.k = k;
        for (const SeamResidual& r : seam_residuals(s)) CHECK(r.mismatch <= 1e-6);
    }
}

TEST_CASE("empirical Carleman ratio with phi = x1 does not collapse") {
    GridConfig c;
    c.dims = {20, 20, 20};
    c.spacing = Vec3::Constant(0.1);
    c.omega_pad = 3;
    Grid g = build_grid(c);
    MetricField m = MetricField::identity(g);
    WeightSpec s = spec_default();
    s.t1 = s.t2 = 2.0; // slab covers the lattice: phi = x1 everywhere
    WeightField w = build_weight(g, m, s, build_omega(g));
    auto rows = estimate_carleman_constant(g, m, w, RVec::Zero(g.size()), {0.2, 0.1, 0.05}, 20, 3);
    REQUIRE(rows.size() == 3);
    for (auto& r : rows) CHECK(r.ratio > 0);
    CHECK(rows[1].ratio >= 0.5 * rows[0].ratio);
    CHECK(rows[2].ratio >= 0.5 * rows[1].ratio);
    CHECK(rows[2].resolution_warning);
    CHECK(!rows[0].resolution_warning);
}
