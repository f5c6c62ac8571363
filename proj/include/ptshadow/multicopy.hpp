#pragma once

#include <vector>

#include "ptshadow/linalg.hpp"
#include "ptshadow/states.hpp"

namespace ptshadow {

// n-copy cyclic permutation machinery. A permutation operator here acts on
// basis kets of n copies of a system with per-axis dims `dims`; it shifts the
// digit content of the `subset_axes` (1-based labels into dims) across copies
// by `step` while leaving the remaining axes alone:
//   step = +1 ("forward"):  |y_1, y_2, ..., y_n>  ->  |y_n, y_1, ..., y_{n-1}>
//   step = -1 ("backward"): |y_1, y_2, ..., y_n>  ->  |y_2, ..., y_n, y_1>
// (y_c = subset digits of copy c). This is the operator convention under which
// Tr[forward_A backward_B (X_1 x ... x X_n)] = Tr(X_1^{T_A} X_2^{T_A} ... X_n^{T_A}),
// pinned by brute-force tests against explicit partial-transpose products.

// Image map sigma with P|y> = |sigma(y)>, as a flat index table of size
// (prod dims)^n_copies.
std::vector<Eigen::Index> copy_cycle_index_map(const std::vector<int>& dims,
                                               const std::vector<int>& subset_axes, int n_copies,
                                               int step);

// Dense matrix of the same operator (intended for test-scale dimensions).
Mat copy_cycle_operator(const std::vector<int>& dims, const std::vector<int>& subset_axes,
                        int n_copies, int step);

// Tr[forward_A backward_B (X_1 x ... x X_n)] evaluated directly from the
// permutation index map and entrywise tensor-product factors. All factors
// must be square with identical dims; dense size ((prod dims)^n)^2 is capped
// at 2^24 entries.
cplx multicopy_contraction(const std::vector<Mat>& factors, const std::vector<int>& dims,
                           const PartitionSpec& partition);

// Spec'd oracle entry point: real part of the contraction above (the only
// part that survives in the symmetrized U-statistic kernels; with all
// factors equal to rho it equals p_n exactly). n must be 2, 3 or 4 and must
// match factors.size().
double multicopy_pt_moment_oracle(const std::vector<Mat>& factors, const std::vector<int>& dims,
                                  const PartitionSpec& partition, int n);

// Convenience overload for qubit systems: dims deduced as all-2 from the
// factor size.
double multicopy_pt_moment_oracle(const std::vector<Mat>& factors,
                                  const PartitionSpec& partition, int n);

} // namespace ptshadow
