#pragma once

#include <iosfwd>
#include <string>

#include "ptshadow/states.hpp"

namespace ptshadow {

// Debug/golden-file text format for states and matrices:
//   dims: d1,d2,...
// followed by one line per row, each holding `re,im` pairs separated by
// single spaces, row-major. A state vector is written as one pair per line.

void write_density_matrix_text(std::ostream& os, const DensityMatrix& rho);
void write_pure_state_text(std::ostream& os, const PureState& state);

void save_density_matrix(const std::string& path, const DensityMatrix& rho);
void save_pure_state(const std::string& path, const PureState& state);

// Parsers throw DataError naming the offending 1-based line.
DensityMatrix load_density_matrix(const std::string& path);
PureState load_pure_state(const std::string& path); // requires all dims = 2

} // namespace ptshadow
