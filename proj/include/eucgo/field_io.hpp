#pragma once

#include <string>

#include "eucgo/grid.hpp"

namespace eucgo {

// i,j,k,x1,x2,x3,value in row-major node order.
void write_field_csv(const std::string& path, const Grid& grid, const RVec& f);
// Complex fields go to <stem>_re.csv and <stem>_im.csv.
void write_complex_field_csv(const std::string& stem, const Grid& grid, const CVec& f);
// node,re,im in boundary_nodes order; node is the lattice index.
void write_boundary_csv(const std::string& path, const Grid& grid, const CVec& b);
// Same plus a log_scale column: the stored value is exp(log_scale) * (re + i im).
void write_scaled_boundary_csv(const std::string& path, const Grid& grid, const CVec& b,
                               double log_scale);
// row,col,re,im
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m);

RVec read_field_csv(const std::string& path, const Grid& grid);

} // namespace eucgo
