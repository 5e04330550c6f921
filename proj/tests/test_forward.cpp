#include "doctest.h"

#include <cmath>
#include <random>

#include "eucgo/forward.hpp"

using namespace eucgo;

namespace {

Grid cube_grid(int n, double h, int pad) {
    GridConfig c;
    c.dims = {n, n, n};
    c.spacing = Vec3::Constant(h);
    c.omega_pad = pad;
    return build_grid(c);
}

} // namespace

TEST_CASE("linear data gives the linear solution exactly") {
    Grid g = cube_grid(12, 0.1, 2);
    MetricField m = MetricField::identity(g);
    ForwardSolver fs(g, m, RVec::Zero(g.size()));
    RVec x1 = sample(g, [](const Vec3& x) { return x[0]; });
    RVec u = fs.solve_dirichlet(restrict_to_boundary(g, x1));
    for (int n = 0; n < g.size(); ++n)
        if (g.in_omega[n]) CHECK(std::abs(u[n] - x1[n]) <= 1e-12);
}

TEST_CASE("harmonic quadratic data reproduces the harmonic polynomial") {
    Grid g = cube_grid(12, 0.1, 2);
    MetricField m = MetricField::identity(g);
    ForwardSolver fs(g, m, RVec::Zero(g.size()));
    RVec p = sample(g, [](const Vec3& x) { return x[0] * x[0] - x[2] * x[2]; });
    RVec u = fs.solve_dirichlet(restrict_to_boundary(g, p));
    // Second differences are exact on quadratics, so the match is to rounding.
    for (int n = 0; n < g.size(); ++n)
        if (g.in_omega[n]) CHECK(std::abs(u[n] - p[n]) <= 1e-11);
    CHECK(fs.interior_residual(u.cast<cplx>()) <= 1e-10);
}

TEST_CASE("potential tuned to the first Dirichlet eigenvalue is rejected") {
    Grid g = cube_grid(10, 0.1, 2);
    MetricField m = MetricField::identity(g);
    // Oracle: inverse iteration on the flat interior Dirichlet Laplacian.
    ForwardSolver base(g, m, RVec::Zero(g.size()));
    const int mi = 4; // interior nodes per axis
    double mu = 0;
    {
        int ni = mi * mi * mi;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ni, ni);
        auto id = [&](int i, int j, int k) { return (i * mi + j) * mi + k; };
        for (int i = 0; i < mi; ++i)
            for (int j = 0; j < mi; ++j)
                for (int k = 0; k < mi; ++k) {
                    int r = id(i, j, k);
                    A(r, r) = 6 / 0.01;
                    int c[3] = {i, j, k};
                    for (int a = 0; a < 3; ++a)
                        for (int s : {-1, 1}) {
                            int d[3] = {c[0], c[1], c[2]};
                            d[a] += s;
                            if (d[a] < 0 || d[a] >= mi) continue;
                            A(r, id(d[0], d[1], d[2])) = -1 / 0.01;
                        }
                }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
        Eigen::VectorXd x = Eigen::VectorXd::Ones(ni);
        for (int it = 0; it < 200; ++it) {
            Eigen::VectorXd y = lu.solve(x);
            mu = x.norm() / y.norm();
            x = y.normalized();
        }
    }
    double closed = 3 * 4 / 0.01 * std::pow(std::sin(M_PI / (2 * (mi + 1))), 2);
    CHECK(mu == doctest::Approx(closed).epsilon(1e-10));
    bool raised = false;
    try {
        ForwardSolver bad(g, m, RVec::Constant(g.size(), -mu));
    } catch (const Error& e) {
        raised = e.code() == "schrodinger_forward.eigenvalue";
    }
    CHECK(raised);
}

TEST_CASE("DN pairing of x1 with itself is the volume of Omega") {
    Grid g = cube_grid(12, 0.1, 2);
    MetricField m = MetricField::identity(g);
    ForwardSolver fs(g, m, RVec::Zero(g.size()));
    DNMatrix dn = fs.assemble_dn();
    CVec f = restrict_to_boundary(g, sample(g, [](const Vec3& x) { return x[0]; })).cast<cplx>();
    double vol = std::pow(0.7, 3); // Omega spans 8 nodes = 0.7 per axis
    CHECK(std::abs(dn.pair(f, f) - vol) <= 1e-12);
}

TEST_CASE("DN matrix symmetry on random pairs") {
    Grid g = cube_grid(12, 0.1, 2);
    MetricField m = MetricField::from_function(g, metric_diag_x3sq(0.3));
    RVec q = sample(g, [](const Vec3& x) { return 1 + x[0] * x[1]; });
    ForwardSolver fs(g, m, q);
    DNMatrix dn = fs.assemble_dn();
    CHECK(dn.symmetry_defect() <= 1e-8);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 10; ++t) {
        CVec f(g.boundary_nodes.size()), h(g.boundary_nodes.size());
        for (int i = 0; i < f.size(); ++i) {
            f[i] = nd(rng);
            h[i] = nd(rng);
        }
        cplx a = dn.pair(f, h), b = dn.pair(h, f);
        CHECK(std::abs(a - b) <= 1e-8 * std::abs(a));
    }
}

TEST_CASE("identical potentials give an identical DN matrix and zero pairing") {
    Grid g = cube_grid(10, 0.1, 2);
    MetricField m = MetricField::identity(g);
    RVec q = sample(g, [](const Vec3& x) { return 2 + x[2]; });
    DNMatrix a = ForwardSolver(g, m, q).assemble_dn();
    DNMatrix b = ForwardSolver(g, m, q).assemble_dn();
    CHECK((a.matrix - b.matrix).cwiseAbs().maxCoeff() == 0.0);
    CVec f = CVec::Ones(g.boundary_nodes.size());
    CHECK(green_pairing(a, b, f, f) == cplx(0, 0));
}

TEST_CASE("discrete Green identity and argument swap") {
    Grid g = cube_grid(12, 0.1, 2);
    MetricField m = MetricField::identity(g);
    RVec q1 = RVec::Zero(g.size());
    RVec q2 = sample(g, [](const Vec3& x) { return 3 * std::exp(-10 * x.squaredNorm()); });
    ForwardSolver s1(g, m, q1), s2(g, m, q2);
    DNMatrix l1 = s1.assemble_dn(), l2 = s2.assemble_dn();
    CVec f1 = restrict_to_boundary(g, sample_complex(g, [](const Vec3& x) {
                  return std::exp(cplx(x[0], x[1]));
              }));
    CVec f2 = restrict_to_boundary(g, sample_complex(g, [](const Vec3& x) {
                  return std::exp(cplx(-x[0], x[2]));
              }));
    CVec u1 = s1.solve_dirichlet(f1), u2 = s2.solve_dirichlet(f2);
    cplx vol = 0;
    for (int n = 0; n < g.size(); ++n) vol += s1.node_weights()[n] * (q2[n] - q1[n]) * u1[n] * u2[n];
    cplx p = green_pairing(l1, l2, f1, f2);
    CHECK(std::abs(p - vol) <= 1e-10 * std::abs(vol));
    CHECK(std::abs(green_pairing(l1, l2, f2, f1) - p) <= 1e-10 * std::abs(p));
}
