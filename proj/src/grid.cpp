#include "eucgo/grid.hpp"

#include <algorithm>
#include <sstream>

namespace eucgo {

int Grid::lattice_margin(int n) const {
    auto c = ijk(n);
    int m = c[0];
    for (int a = 0; a < 3; ++a) m = std::min({m, c[a], dims[a] - 1 - c[a]});
    return m;
}

Box Grid::omega_box() const {
    Box b;
    for (int a = 0; a < 3; ++a) {
        b.lo[a] = origin[a] + omega_lo(a) * spacing[a];
        b.hi[a] = origin[a] + omega_hi(a) * spacing[a];
    }
    return b;
}

Box Grid::lattice_box() const {
    Box b;
    for (int a = 0; a < 3; ++a) {
        b.lo[a] = origin[a];
        b.hi[a] = origin[a] + (dims[a] - 1) * spacing[a];
    }
    return b;
}

std::vector<int> Grid::planes_in(double lo, double hi) const {
    std::vector<int> out;
    for (int k = 0; k < dims[2]; ++k) {
        double x3 = origin[2] + k * spacing[2];
        if (x3 >= lo - 1e-12 && x3 <= hi + 1e-12) out.push_back(k);
    }
    return out;
}

namespace {

bool empty_box(const Box& b) { return (b.hi - b.lo).cwiseAbs().maxCoeff() == 0.0; }

Box shrink(const Box& b, const Eigen::Vector3d& d) {
    Box r = b;
    r.lo += d;
    r.hi -= d;
    return r;
}

[[noreturn]] void nesting(const std::string& pair, const std::string& why) {
    throw Error("domain_grid.nesting", pair + ": " + why);
}

} // namespace

Grid build_grid(const GridConfig& cfg) {
    for (int a = 0; a < 3; ++a) {
        if (cfg.dims[a] < 8) throw Error("domain_grid.config", "dims must be >= 8 on every axis");
        if (!(cfg.spacing[a] > 0)) throw Error("domain_grid.config", "spacing must be positive");
    }
    if (cfg.omega_pad < 2) nesting("Omega/Omega1", "padding must be at least 2 nodes");
    for (int a = 0; a < 3; ++a)
        if (cfg.dims[a] - 2 * cfg.omega_pad < 4)
            nesting("Omega/Omega1", "padding leaves fewer than 4 Omega nodes on an axis");

    Grid g;
    g.dims = cfg.dims;
    g.spacing = cfg.spacing;
    g.omega_pad = cfg.omega_pad;
    if (cfg.has_origin) {
        g.origin = cfg.origin;
    } else {
        for (int a = 0; a < 3; ++a) g.origin[a] = -0.5 * (cfg.dims[a] - 1) * cfg.spacing[a];
    }
    g.u1_box = empty_box(cfg.u1) ? shrink(g.lattice_box(), g.spacing) : cfg.u1;
    g.v_box = empty_box(cfg.v) ? shrink(g.omega_box(), g.spacing) : cfg.v;

    const int N = g.size();
    g.in_omega.assign(N, 0);
    g.in_omega_int.assign(N, 0);
    g.in_u1.assign(N, 0);
    g.in_v.assign(N, 0);
    g.boundary_pos.assign(N, -1);
    for (int n = 0; n < N; ++n) {
        auto c = g.ijk(n);
        bool inside = true, strict = true;
        for (int a = 0; a < 3; ++a) {
            if (c[a] < g.omega_lo(a) || c[a] > g.omega_hi(a)) inside = false;
            if (c[a] <= g.omega_lo(a) || c[a] >= g.omega_hi(a)) strict = false;
        }
        g.in_omega[n] = inside;
        g.in_omega_int[n] = strict;
        Eigen::Vector3d x = g.coord(n);
        g.in_u1[n] = g.u1_box.contains(x);
        g.in_v[n] = g.v_box.contains(x);
        if (inside && !strict) {
            g.boundary_pos[n] = static_cast<int>(g.boundary_nodes.size());
            g.boundary_nodes.push_back(n);
        }
        if (!inside) g.exterior_nodes.push_back(n);
    }

    int nv = 0, nu = 0;
    for (int n = 0; n < N; ++n) {
        nv += g.in_v[n];
        nu += g.in_u1[n];
    }
    if (nu == 0) throw Error("domain_grid.config", "U1 contains no nodes");
    if (nv == 0) throw Error("domain_grid.config", "V contains no nodes");

    for (int n = 0; n < N; ++n) {
        if (g.in_u1[n] && g.lattice_margin(n) < 1)
            nesting("U1/Omega1", "U1 touches the lattice boundary");
        if (!g.in_v[n]) continue;
        if (!g.in_omega_int[n]) nesting("V/Omega", "V reaches the faces of Omega");
        auto c = g.ijk(n);
        for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj)
                for (int dk = -1; dk <= 1; ++dk) {
                    int m = g.index(c[0] + di, c[1] + dj, c[2] + dk);
                    if (!g.in_u1[m]) nesting("V/U1", "V is not inside U1 with a one-node margin");
                }
    }
    return g;
}

ScalarField sample(const Grid& g, const std::function<double(const Eigen::Vector3d&)>& f) {
    ScalarField out(g.size());
    for (int n = 0; n < g.size(); ++n) out[n] = f(g.coord(n));
    return out;
}

ComplexField sample_complex(const Grid& g,
                            const std::function<cplx(const Eigen::Vector3d&)>& f) {
    ComplexField out(g.size());
    for (int n = 0; n < g.size(); ++n) out[n] = f(g.coord(n));
    return out;
}

CVec restrict_to_boundary(const Grid& g, const CVec& u) {
    CVec b(g.boundary_nodes.size());
    for (size_t i = 0; i < g.boundary_nodes.size(); ++i) b[i] = u[g.boundary_nodes[i]];
    return b;
}

RVec restrict_to_boundary(const Grid& g, const RVec& u) {
    RVec b(g.boundary_nodes.size());
    for (size_t i = 0; i < g.boundary_nodes.size(); ++i) b[i] = u[g.boundary_nodes[i]];
    return b;
}

} // namespace eucgo
