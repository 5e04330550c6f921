#include "eucgo/field_io.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

namespace eucgo {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_out(const std::string& path) {
    File f(std::fopen(path.c_str(), "w"));
    if (!f) throw Error("io.open", "cannot write " + path);
    return f;
}

} // namespace

void write_field_csv(const std::string& path, const Grid& grid, const RVec& f) {
    File out = open_out(path);
    std::fprintf(out.get(), "i,j,k,x1,x2,x3,value\n");
    for (int n = 0; n < grid.size(); ++n) {
        auto c = grid.ijk(n);
        Eigen::Vector3d x = grid.coord(n);
        std::fprintf(out.get(), "%d,%d,%d,%.17g,%.17g,%.17g,%.17g\n", c[0], c[1], c[2], x[0], x[1],
                     x[2], f[n]);
    }
}

void write_complex_field_csv(const std::string& stem, const Grid& grid, const CVec& f) {
    write_field_csv(stem + "_re.csv", grid, f.real());
    write_field_csv(stem + "_im.csv", grid, f.imag());
}

void write_boundary_csv(const std::string& path, const Grid& grid, const CVec& b) {
    File out = open_out(path);
    std::fprintf(out.get(), "node,re,im\n");
    for (size_t i = 0; i < grid.boundary_nodes.size(); ++i)
        std::fprintf(out.get(), "%d,%.17g,%.17g\n", grid.boundary_nodes[i], b[i].real(),
                     b[i].imag());
}

void write_scaled_boundary_csv(const std::string& path, const Grid& grid, const CVec& b,
                               double log_scale) {
    File out = open_out(path);
    std::fprintf(out.get(), "node,re,im,log_scale\n");
    for (size_t i = 0; i < grid.boundary_nodes.size(); ++i)
        std::fprintf(out.get(), "%d,%.17g,%.17g,%.17g\n", grid.boundary_nodes[i], b[i].real(),
                     b[i].imag(), log_scale);
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
    File out = open_out(path);
    std::fprintf(out.get(), "row,col,re,im\n");
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            std::fprintf(out.get(), "%d,%d,%.17g,0\n", r, c, m(r, c));
}

RVec read_field_csv(const std::string& path, const Grid& grid) {
    std::ifstream in(path);
    if (!in) throw Error("io.open", "cannot read " + path);
    std::string line;
    std::getline(in, line);
    RVec f = RVec::Zero(grid.size());
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        int i, j, k;
        double x1, x2, x3, v;
        if (std::sscanf(line.c_str(), "%d,%d,%d,%lf,%lf,%lf,%lf", &i, &j, &k, &x1, &x2, &x3, &v) != 7)
            throw Error("io.parse", path + ":" + std::to_string(lineno) + ": malformed row");
        if (i < 0 || j < 0 || k < 0 || i >= grid.dims[0] || j >= grid.dims[1] || k >= grid.dims[2])
            throw Error("io.parse", path + ":" + std::to_string(lineno) + ": index out of range");
        f[grid.index(i, j, k)] = v;
    }
    return f;
}

} // namespace eucgo
