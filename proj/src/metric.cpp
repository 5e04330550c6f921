#include "eucgo/metric.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace eucgo {

MetricField MetricField::identity(const Grid& grid) {
    MetricField m;
    m.g.assign(grid.size(), Mat3::Identity());
    m.g_inv.assign(grid.size(), Mat3::Identity());
    m.sqrt_det = RVec::Ones(grid.size());
    return m;
}

MetricField MetricField::from_function(const Grid& grid,
                                       const std::function<Mat3(const Vec3&)>& fn) {
    MetricField m;
    const int N = grid.size();
    m.g.resize(N);
    m.g_inv.resize(N);
    m.sqrt_det.resize(N);
    for (int n = 0; n < N; ++n) {
        Mat3 g = fn(grid.coord(n));
        g = 0.5 * (g + g.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Mat3> es(g, Eigen::EigenvaluesOnly);
        if (!(es.eigenvalues()[0] > 0)) {
            std::ostringstream os;
            os << "metric not positive definite at node " << n;
            throw Error("domain_grid.metric", os.str());
        }
        m.g[n] = g;
        m.g_inv[n] = g.inverse();
        m.sqrt_det[n] = std::sqrt(g.determinant());
    }
    return m;
}

bool MetricField::diagonal_on(const std::vector<std::uint8_t>& mask) const {
    for (size_t n = 0; n < g.size(); ++n) {
        if (!mask[n]) continue;
        const Mat3& a = g[n];
        if (a(0, 1) != 0 || a(0, 2) != 0 || a(1, 2) != 0) return false;
    }
    return true;
}

bool MetricField::identity_on(const std::vector<std::uint8_t>& mask) const {
    for (size_t n = 0; n < g.size(); ++n)
        if (mask[n] && g[n] != Mat3::Identity()) return false;
    return true;
}

double MetricField::max_second_difference(const Grid& grid) const {
    double worst = 0;
    for (int n = 0; n < grid.size(); ++n) {
        auto c = grid.ijk(n);
        for (int a = 0; a < 3; ++a) {
            if (c[a] == 0 || c[a] == grid.dims[a] - 1) continue;
            std::array<int, 3> lo = c, hi = c;
            lo[a]--;
            hi[a]++;
            Mat3 d = g[grid.index(hi[0], hi[1], hi[2])] - 2 * g[n] + g[grid.index(lo[0], lo[1], lo[2])];
            worst = std::max(worst, d.cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

double smoother_step(double s) {
    if (s <= 0) return 0;
    if (s >= 1) return 1;
    return s * s * s * (10 - 15 * s + 6 * s * s);
}

std::function<Mat3(const Vec3&)> metric_diag_x3sq(double c) {
    return [c](const Vec3& x) {
        Mat3 g = Mat3::Identity();
        g(2, 2) = 1 + c * x[2] * x[2];
        return g;
    };
}

std::function<Mat3(const Vec3&)> metric_cap(double a, double b, double w) {
    return [a, b, w](const Vec3& x) {
        double s = smoother_step((std::abs(x[2]) - b) / w);
        Mat3 g = Mat3::Identity();
        g(0, 0) = g(1, 1) = 1 + a * s;
        return g;
    };
}

} // namespace eucgo
