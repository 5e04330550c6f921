#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eucgo {

using cplx = std::complex<double>;
using RVec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;

// Fields are plain vectors over all lattice nodes (the lattice is Omega_1).
using ScalarField = RVec;
using ComplexField = CVec;

// Errors carry a module-qualified code so the CLI can report them uniformly.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(code + ": " + what), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

struct Box {
    Eigen::Vector3d lo = Eigen::Vector3d::Zero();
    Eigen::Vector3d hi = Eigen::Vector3d::Zero();
    bool contains(const Eigen::Vector3d& x, double tol = 1e-12) const {
        for (int a = 0; a < 3; ++a)
            if (x[a] < lo[a] - tol || x[a] > hi[a] + tol) return false;
        return true;
    }
};

struct GridConfig {
    std::array<int, 3> dims{16, 16, 16};
    Eigen::Vector3d spacing = Eigen::Vector3d::Constant(0.1);
    // When unset the lattice is centred on the origin.
    bool has_origin = false;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    int omega_pad = 4;
    // Empty boxes (lo == hi) fall back to defaults: U1 is the lattice shrunk by
    // one node, V is Omega shrunk by one node.
    Box u1;
    Box v;
};

class Grid {
public:
    std::array<int, 3> dims{};
    Eigen::Vector3d spacing;
    Eigen::Vector3d origin;
    int omega_pad = 0;
    Box u1_box, v_box;

    std::vector<std::uint8_t> in_omega;     // closed Omega
    std::vector<std::uint8_t> in_omega_int; // Omega without its faces
    std::vector<std::uint8_t> in_u1;
    std::vector<std::uint8_t> in_v;
    std::vector<int> boundary_nodes; // faces of Omega, ascending linear index
    std::vector<int> exterior_nodes; // Omega_1 \ closed Omega
    std::vector<int> boundary_pos;   // node -> position in boundary_nodes or -1

    int size() const { return dims[0] * dims[1] * dims[2]; }
    int index(int i, int j, int k) const { return (i * dims[1] + j) * dims[2] + k; }
    std::array<int, 3> ijk(int n) const {
        return {n / (dims[1] * dims[2]), (n / dims[2]) % dims[1], n % dims[2]};
    }
    Eigen::Vector3d coord(int n) const {
        auto c = ijk(n);
        return {origin[0] + c[0] * spacing[0], origin[1] + c[1] * spacing[1],
                origin[2] + c[2] * spacing[2]};
    }
    double cell_volume() const { return spacing.prod(); }
    // Distance (in nodes) to the nearest lattice face.
    int lattice_margin(int n) const;
    bool lattice_interior(int n) const { return lattice_margin(n) >= 1; }
    // Omega index box: [pad, dims-1-pad] on each axis.
    int omega_lo(int) const { return omega_pad; }
    int omega_hi(int a) const { return dims[a] - 1 - omega_pad; }
    Box omega_box() const;
    Box lattice_box() const;
    // Grid planes x3 = const that lie inside a physical interval.
    std::vector<int> planes_in(double lo, double hi) const;
};

Grid build_grid(const GridConfig& cfg);

ScalarField sample(const Grid& g, const std::function<double(const Eigen::Vector3d&)>& f);
ComplexField sample_complex(const Grid& g, const std::function<cplx(const Eigen::Vector3d&)>& f);

// Boundary data lives on Grid::boundary_nodes.
CVec restrict_to_boundary(const Grid& g, const CVec& u);
RVec restrict_to_boundary(const Grid& g, const RVec& u);

} // namespace eucgo
