#pragma once

#include <functional>
#include <vector>

#include "eucgo/grid.hpp"

namespace eucgo {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct MetricField {
    std::vector<Mat3> g;
    std::vector<Mat3> g_inv;
    RVec sqrt_det;

    static MetricField identity(const Grid& grid);
    // Throws domain_grid.metric with the node index if g is not SPD somewhere.
    static MetricField from_function(const Grid& grid, const std::function<Mat3(const Vec3&)>& fn);

    bool diagonal_on(const std::vector<std::uint8_t>& mask) const;
    bool identity_on(const std::vector<std::uint8_t>& mask) const;
    // Largest componentwise second difference along any axis (smoothness proxy).
    double max_second_difference(const Grid& grid) const;
};

// Analytic metric families selectable from a scenario.
// diag(1, 1, 1 + c x3^2)
std::function<Mat3(const Vec3&)> metric_diag_x3sq(double c);
// diag(1 + a s, 1 + a s, 1) with s a C2 ramp in |x3| from b to b + w.
std::function<Mat3(const Vec3&)> metric_cap(double a, double b, double w);

double smoother_step(double s);

} // namespace eucgo
