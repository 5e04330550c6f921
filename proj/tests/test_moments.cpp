#include "doctest.h"

#include <cmath>
#include <random>

#include "eucgo/moments.hpp"

using namespace eucgo;

namespace {

Grid box_grid(int n) {
    GridConfig c;
    c.dims = {n, n, n};
    c.spacing = Vec3::Constant(2.0 / (n - 1));
    c.omega_pad = 4;
    c.v.lo = Vec3::Constant(-0.4);
    c.v.hi = Vec3::Constant(0.4);
    return build_grid(c);
}

Box v_window() {
    Box b;
    b.lo = Vec3::Constant(-0.4);
    b.hi = Vec3::Constant(0.4);
    return b;
}

// Off-centre anisotropic Gaussian, cut off smoothly at the edge of V.
double offset_bump(const Vec3& x) {
    Vec3 y = x - Vec3(0.08, -0.05, 0.03);
    double r2 = y[0] * y[0] / 0.09 + y[1] * y[1] / 0.05 + y[2] * y[2] / 0.07;
    double s = x.cwiseAbs().maxCoeff() / 0.4;
    return s < 1 ? std::exp(-r2) * std::pow(1 - std::pow(s, 4), 3) : 0.0;
}

// Pairings sum_V h^3 q v_eps[z^a] v_eps[z^b], with v_eps truncated at order M.
// With exact = true only eps powers up to M/2 are kept, which are the ones
// the induction reads; otherwise the full product series is summed.
PairingProvider oracle(const Grid& g, const RVec& q, int J, int M, bool exact) {
    std::vector<int> nodes;
    for (int n = 0; n < g.size(); ++n)
        if (q[n] != 0) nodes.push_back(n);
    return [&g, q, nodes, J, M, exact](double, double eps, const ProfileChi& chi) {
        std::vector<Amplitude> am;
        for (int l = 0; l <= J; ++l) am.push_back(amplitude_build(HolomorphicDatum::monomial(l), chi, M));
        const int kmax = exact ? M / 2 : 2 * M;
        Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(J + 1, J + 1);
        for (int n : nodes) {
            Vec3 x = g.coord(n);
            Eigen::MatrixXcd vt(J + 1, M + 1);
            for (int l = 0; l <= J; ++l)
                for (int k = 0; k <= M; ++k) vt(l, k) = am[l].eval_term(k, x);
            for (int a = 0; a <= J; ++a)
                for (int b = 0; b <= J; ++b) {
                    cplx s = 0, e = 1;
                    for (int k = 0; k <= kmax; ++k, e *= eps) {
                        cplx ck = 0;
                        for (int r = std::max(0, k - M); r <= std::min(k, M); ++r) ck += vt(a, k - r) * vt(b, r);
                        s += e * ck;
                    }
                    S(a, b) += g.cell_volume() * q[n] * s;
                }
        }
        return S;
    };
}

ExtractionConfig base_config(const Grid& g, int K, int J) {
    ExtractionConfig cfg;
    cfg.K = K;
    cfg.J = J;
    for (int i = 0; i < 12; ++i) cfg.tau_grid.push_back(4 * std::pow(16.0, i / 11.0));
    double m = 2 * g.spacing[2] + 1e-9;
    cfg.center_planes = g.planes_in(-0.4 - m, 0.4 + m);
    return cfg;
}

std::vector<PlaneSpec> planes_for(const Grid& g, const std::vector<int>& ks) {
    std::vector<PlaneSpec> out;
    for (int k : ks) out.push_back(make_plane(g, k, v_window()));
    return out;
}

double table_error(const MomentTable& a, const MomentTable& b, int k, int j) {
    double num = 0, den = 0;
    for (size_t p = 0; p < a.m.size(); ++p) {
        num += std::norm(a.m[p](k, j) - b.m[p](k, j));
        den += std::norm(b.m[p](k, j));
    }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("eps fit: exact polynomial, 1/tau nuisance and conditioning") {
    std::vector<double> tau;
    for (int i = 0; i < 12; ++i) tau.push_back(4 * std::pow(16.0, i / 11.0));
    std::vector<cplx> S;
    for (double t : tau) S.push_back(3.0 + 2.0 / t); // 3 + 2 eps^2 at beta = 1/2
    EpsFit f = extract_eps_polynomial(S, tau, 0.5, 6);
    REQUIRE(f.c.size() == 4);
    CHECK(f.inverse_tau_merged);
    CHECK(std::abs(f.c[0] - 3.0) <= 1e-10);
    CHECK(std::abs(f.c[2] - 2.0) <= 1e-10);
    CHECK(std::abs(f.c[1]) <= 1e-10);
    CHECK(std::abs(f.c[3]) <= 1e-10);

    // beta = 0.4 keeps 1/tau apart from the eps powers.
    S.clear();
    for (double t : tau) {
        double e = std::pow(t, -0.4);
        S.push_back(3.0 + 2.0 * e * e + 0.1 / t);
    }
    f = extract_eps_polynomial(S, tau, 0.4, 6);
    CHECK(!f.inverse_tau_merged);
    CHECK(std::abs(f.c[0] - 3.0) <= 1e-6);
    CHECK(std::abs(f.c[1]) <= 1e-6);
    CHECK(std::abs(f.c[2] - 2.0) <= 1e-6);
    CHECK(std::abs(f.c[3]) <= 1e-6);
    CHECK(std::abs(f.inverse_tau - 0.1) <= 1e-6);

    std::vector<double> close;
    for (int i = 0; i < 12; ++i) close.push_back(100 + 1e-6 * i);
    std::vector<cplx> flat(12, 1.0);
    try {
        extract_eps_polynomial(flat, close, 0.4, 6);
        FAIL("expected ill-conditioned fit");
    } catch (const Error& e) {
        CHECK(e.code() == "moment_reconstruction.ill_conditioned");
    }
    std::vector<double> few(tau.begin(), tau.begin() + 5);
    CHECK_THROWS_AS(extract_eps_polynomial(std::vector<cplx>(5, 1.0), few, 0.5, 6), Error);
}

TEST_CASE("zero difference gives zero moments") {
    Grid g = box_grid(16);
    ExtractionConfig cfg = base_config(g, 2, 2);
    PairingProvider zero = [](double, double, const ProfileChi&) { return Eigen::MatrixXcd::Zero(3, 3).eval(); };
    ExtractionResult r = extract_plane_moments(zero, g, cfg);
    for (auto& m : r.table.m) CHECK(m.norm() == 0.0);
}

TEST_CASE("separable difference: extracted moments factor as a(x3) times plane moments of b") {
    Grid g = box_grid(20);
    auto a = [](double x3) { double s = x3 / 0.4; return std::abs(s) < 1 ? std::pow(1 - s * s, 3) * (1 + x3) : 0.0; };
    auto b = [](double x1, double x2) {
        double r2 = ((x1 - 0.05) * (x1 - 0.05) + 0.6 * (x2 + 0.03) * (x2 + 0.03)) / 0.05;
        double s = std::max(std::abs(x1), std::abs(x2)) / 0.4;
        return s < 1 ? std::exp(-r2) * std::pow(1 - s * s, 2) : 0.0;
    };
    RVec q = sample(g, [&](const Vec3& x) { return a(x[2]) * b(x[0], x[1]); });
    ExtractionConfig cfg = base_config(g, 4, 4);
    ExtractionResult r = extract_plane_moments(oracle(g, q, cfg.J, cfg.M, true), g, cfg);
    auto planes = planes_for(g, cfg.center_planes);
    RVec bq = sample(g, [&](const Vec3& x) { return b(x[0], x[1]); });
    for (size_t p = 0; p < planes.size(); ++p)
        for (int k = 0; k <= 3; ++k)
            for (int j = 0; j <= 3; ++j) {
                cplx want = a(planes[p].c) * plane_moment(planes[p], bq, k, j);
                CHECK(std::abs(r.table.m[p](k, j) - want) <= 1e-8);
            }
    // Row K = 4 lies above M/2 and is completed from the mirror entries.
    CHECK(r.table.known[0](4, 2) == 1);
    CHECK(r.table.known[0](4, 4) == 0);
    CHECK(conjugation_defect(r.table) <= 1e-7);
}

TEST_CASE("level-0 moments of an offset bump within 5% from the full eps series") {
    Grid g = box_grid(24);
    RVec q = sample(g, offset_bump);
    ExtractionConfig cfg = base_config(g, 0, 4);
    ExtractionResult r = extract_plane_moments(oracle(g, q, cfg.J, cfg.M, false), g, cfg);
    MomentTable d = direct_moments(planes_for(g, cfg.center_planes), q, 0, 4);
    for (int j = 0; j <= 4; ++j) CHECK(table_error(r.table, d, 0, j) <= 0.05);
    CHECK(r.levels.size() == 1);
    CHECK(r.levels[0].closure <= cfg.level_tolerance);
}

TEST_CASE("Richardson profile route recovers level-0 moments") {
    Grid g = box_grid(24);
    RVec q = sample(g, offset_bump);
    ExtractionConfig cfg = base_config(g, 0, 2);
    cfg.profile = ExtractionConfig::Profile::Richardson;
    ExtractionResult r = extract_plane_moments(oracle(g, q, cfg.J, cfg.M, true), g, cfg);
    MomentTable d = direct_moments(planes_for(g, cfg.center_planes), q, 0, 2);
    for (int j = 0; j <= 2; ++j) CHECK(table_error(r.table, d, 0, j) <= 0.05);
    CHECK(r.levels[0].richardson_change > 0);
}

TEST_CASE("extraction errors: inconsistent level data and plane coverage") {
    Grid g = box_grid(16);
    ExtractionConfig cfg = base_config(g, 1, 1);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    PairingProvider noise = [&](double, double, const ProfileChi&) {
        Eigen::MatrixXcd S(2, 2);
        for (int i = 0; i < 4; ++i) S(i / 2, i % 2) = cplx(nd(rng), nd(rng));
        return S;
    };
    cfg.level_tolerance = 1e-3;
    try {
        extract_plane_moments(noise, g, cfg);
        FAIL("expected level failure");
    } catch (const Error& e) {
        CHECK(e.code() == "moment_reconstruction.level");
        CHECK(std::string(e.what()).find("level 0") != std::string::npos);
    }
    cfg.center_planes = g.planes_in(-0.3, 0.3);
    CHECK_THROWS_WITH_AS(extract_plane_moments(noise, g, cfg), doctest::Contains("coverage"), Error);
}

TEST_CASE("invert_moments: zero, polynomial exactness and Gaussian convergence") {
    Grid g = box_grid(24);
    int k = g.planes_in(-1e-9, 1.0)[0];
    PlaneSpec pl = make_plane(g, k, v_window());
    std::vector<PlaneSpec> planes{pl};

    RVec zero = RVec::Zero(g.size());
    PlaneFit f0 = invert_moments(direct_moments(planes, zero, 3, 3), 0, pl, v_window());
    CHECK(f0.values.norm() == 0.0);

    // Real polynomial of bidegree (2, 2): 1 + 3 x1 - x1 x2 + 2 x1^2 x2^2.
    RVec poly = sample(g, [](const Vec3& x) { return 1 + 3 * x[0] - x[0] * x[1] + 2 * x[0] * x[0] * x[1] * x[1]; });
    PlaneFit fp = invert_moments(direct_moments(planes, poly, 4, 4), 0, pl, v_window(), 1e-14);
    for (size_t a = 0; a < pl.nodes.size(); ++a) CHECK(std::abs(fp.values[a] - poly[pl.nodes[a]]) <= 1e-6);

    RVec gauss = sample(g, [](const Vec3& x) { return std::exp(-(x[0] * x[0] + x[1] * x[1]) / 0.04); });
    double prev = 1e9, den = 0;
    for (int n : pl.nodes) den += gauss[n] * gauss[n];
    for (int deg : {2, 4, 6}) {
        PlaneFit fg = invert_moments(direct_moments(planes, gauss, deg, deg), 0, pl, v_window());
        double num = 0;
        for (size_t a = 0; a < pl.nodes.size(); ++a) num += std::pow(fg.values[a] - gauss[pl.nodes[a]], 2);
        double err = std::sqrt(num / den);
        CHECK(err <= prev * 1.02);
        prev = err;
    }
    CHECK(prev <= 0.10);
}

TEST_CASE("stack_planes: constant extension, injection and coverage") {
    Grid g = box_grid(16);
    RVec qs = RVec::Constant(g.size(), 0.5);
    Box u = v_window();
    int k0 = g.planes_in(-1e-9, 1.0)[0];
    PlaneSpec one = make_plane(g, k0, u);
    RVec c = RVec::Constant(one.nodes.size(), 2.0);
    RVec out = stack_planes(g, {one}, {c}, qs, u);
    for (int n = 0; n < g.size(); ++n) CHECK(out[n] == (u.contains(g.coord(n)) ? 2.0 : 0.5));

    RVec truth = sample(g, offset_bump);
    std::vector<PlaneSpec> all;
    std::vector<RVec> fields;
    for (int k : g.planes_in(-0.4, 0.4)) {
        all.push_back(make_plane(g, k, u));
        RVec f(all.back().nodes.size());
        for (size_t a = 0; a < f.size(); ++a) f[a] = truth[all.back().nodes[a]];
        fields.push_back(f);
    }
    out = stack_planes(g, all, fields, truth, u);
    CHECK((out - truth).norm() == 0.0);

    std::vector<PlaneSpec> gap{all.front(), all.back()};
    std::vector<RVec> gf{fields.front(), fields.back()};
    CHECK_THROWS_WITH_AS(stack_planes(g, gap, gf, qs, u), doctest::Contains("coverage"), Error);
}
