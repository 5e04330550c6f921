#include "eucgo/calculus.hpp"

#include <cmath>
#include <sstream>

namespace eucgo {

namespace {

int shift(const Grid& grid, int n, int a, int d) {
    auto c = grid.ijk(n);
    c[a] += d;
    return grid.index(c[0], c[1], c[2]);
}

Mat3 coefficient(const MetricField& m, int n) { return m.sqrt_det[n] * m.g_inv[n]; }

} // namespace

std::vector<int> lattice_interior_nodes(const Grid& grid) {
    std::vector<int> out;
    for (int n = 0; n < grid.size(); ++n)
        if (grid.lattice_interior(n)) out.push_back(n);
    return out;
}

SpMat laplace_beltrami_matrix(const Grid& grid, const MetricField& metric) {
    const int N = grid.size();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(N) * 19);
    const Vec3& h = grid.spacing;
    for (int n = 0; n < N; ++n) {
        if (!grid.lattice_interior(n)) continue;
        const double s = 1.0 / metric.sqrt_det[n];
        for (int a = 0; a < 3; ++a) {
            int up = shift(grid, n, a, 1), dn = shift(grid, n, a, -1);
            double cu = 0.5 * (coefficient(metric, n)(a, a) + coefficient(metric, up)(a, a));
            double cd = 0.5 * (coefficient(metric, n)(a, a) + coefficient(metric, dn)(a, a));
            double w = s / (h[a] * h[a]);
            trip.emplace_back(n, up, w * cu);
            trip.emplace_back(n, dn, w * cd);
            trip.emplace_back(n, n, -w * (cu + cd));
        }
        // Cross terms d_a(c_ab d_b u) with centred differences.
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                if (a == b) continue;
                for (int sa : {1, -1}) {
                    int m = shift(grid, n, a, sa);
                    double c = coefficient(metric, m)(a, b);
                    if (c == 0) continue;
                    double w = s * sa * c / (4 * h[a] * h[b]);
                    trip.emplace_back(n, shift(grid, m, b, 1), w);
                    trip.emplace_back(n, shift(grid, m, b, -1), -w);
                }
            }
    }
    SpMat L(N, N);
    L.setFromTriplets(trip.begin(), trip.end());
    return L;
}

RVec laplace_beltrami(const Grid& grid, const MetricField& metric, const RVec& u) {
    return laplace_beltrami_matrix(grid, metric) * u;
}

CVec laplace_beltrami(const Grid& grid, const MetricField& metric, const CVec& u) {
    SpMat L = laplace_beltrami_matrix(grid, metric);
    CVec out(u.size());
    out.real() = L * u.real();
    out.imag() = L * u.imag();
    return out;
}

std::array<Mat3, 3> christoffel(const Grid& grid, const MetricField& metric, int n) {
    // dg[m](j,k) = d_m g_jk
    std::array<Mat3, 3> dg;
    for (int m = 0; m < 3; ++m)
        dg[m] = (metric.g[shift(grid, n, m, 1)] - metric.g[shift(grid, n, m, -1)]) /
                (2 * grid.spacing[m]);
    std::array<Mat3, 3> G;
    const Mat3& gi = metric.g_inv[n];
    for (int l = 0; l < 3; ++l)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) {
                double v = 0;
                for (int m = 0; m < 3; ++m)
                    v += gi(l, m) * (dg[j](m, k) + dg[k](m, j) - dg[m](j, k));
                G[l](j, k) = 0.5 * v;
            }
    return G;
}

NodeDerivatives covariant_from_partials(const Grid& grid, const MetricField& metric, int n,
                                        const Vec3& df, const Mat3& ddf) {
    NodeDerivatives d;
    d.df = df;
    d.grad = metric.g_inv[n] * df;
    auto G = christoffel(grid, metric, n);
    d.hess = ddf;
    for (int l = 0; l < 3; ++l) d.hess -= G[l] * df[l];
    d.hess = 0.5 * (d.hess + d.hess.transpose()).eval();
    return d;
}

std::vector<NodeDerivatives> gradient_and_hessian(const Grid& grid, const MetricField& metric,
                                                  const RVec& f, const std::vector<int>& nodes) {
    std::vector<NodeDerivatives> out;
    out.reserve(nodes.size());
    const Vec3& h = grid.spacing;
    for (int n : nodes) {
        if (!grid.lattice_interior(n)) {
            std::ostringstream os;
            os << "derivative stencil leaves the lattice at node " << n;
            throw Error("domain_grid.margin", os.str());
        }
        Vec3 df;
        Mat3 ddf;
        for (int a = 0; a < 3; ++a) {
            int up = shift(grid, n, a, 1), dn = shift(grid, n, a, -1);
            df[a] = (f[up] - f[dn]) / (2 * h[a]);
            ddf(a, a) = (f[up] - 2 * f[n] + f[dn]) / (h[a] * h[a]);
        }
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) {
                int pp = shift(grid, shift(grid, n, a, 1), b, 1);
                int pm = shift(grid, shift(grid, n, a, 1), b, -1);
                int mp = shift(grid, shift(grid, n, a, -1), b, 1);
                int mm = shift(grid, shift(grid, n, a, -1), b, -1);
                ddf(a, b) = ddf(b, a) = (f[pp] - f[pm] - f[mp] + f[mm]) / (4 * h[a] * h[b]);
            }
        out.push_back(covariant_from_partials(grid, metric, n, df, ddf));
    }
    return out;
}

double weighted_dot(const Grid& grid, const MetricField& metric, const RVec& a, const RVec& b) {
    return grid.cell_volume() * (metric.sqrt_det.array() * a.array() * b.array()).sum();
}

} // namespace eucgo
