#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ptshadow/shadows.hpp"
#include "ptshadow/states.hpp"

namespace ptshadow {

// Upper bound on the variance of the order-2 single-shot estimator built
// from M snapshots on |AB| qubits:
//     Var[p2_hat] <= 4 * 2^|AB| * p2 / M + 4 * (2^{1.5 |AB|} / M)^2.
// Errors: ab_size < 1, m < 2, or p2 outside (0, 1] -> InvalidArgumentError.
double variance_bound_p2(int ab_size, double p2, int m);

// Smallest snapshot count the order-2 error lemma certifies for accuracy
// epsilon and failure probability delta:
//     M >= 8 * max{ 2^|AB| p2 / (eps^2 delta), 2^{1.5 |AB|} / (eps sqrt(delta)) }.
// The real-valued expression is snapped to the nearest integer when within
// 1e-9 (relative) before taking the ceiling, so exact-integer cases are not
// bumped up by float noise. Errors: ab_size < 1, p2 outside (0, 1], or
// epsilon/delta outside (0, 1) -> InvalidArgumentError.
std::int64_t sample_size_p2(int ab_size, double p2, double epsilon, double delta);

// Order-3 companion:
//     M >= 39 * max{ 2^|AB| p2^2 / (eps^2 delta),
//                    2^{1.5 |AB|} p2 / (eps sqrt(delta)),
//                    2^{2 |AB|} / (eps^{2/3} delta^{1/3}) }.
// Same snapping and validation as sample_size_p2.
std::int64_t sample_size_p3(int ab_size, double p2, double epsilon, double delta);

struct SweepPoint {
    int m = 0;
    double mean_abs_error = 0.0;
    double rmse = 0.0;      // root-mean-square error over the same trials
    double std_error = 0.0; // trial-spread standard error of mean_abs_error
    int trials = 0;
};

// Error-scaling study for one (state, partition, statistic): grid entries in
// increasing M plus least-squares log10-log10 slopes fitted separately to
// the points at or below / at or above the geometric midpoint of the grid
// (NaN when the half holds fewer than two points).
struct SweepResult {
    std::string statistic; // "p2" | "p3"
    std::string state_label;
    int ab_size = 0;
    std::vector<SweepPoint> grid;
    double slope_small_m = 0.0;
    double slope_large_m = 0.0;
};

// For each M in m_grid, simulates `trials` independent single-shot datasets
// (trial seed derived from (seed, M, trial index)), estimates the statistic,
// and records the spread of the absolute error against the exact moment of
// the reduced state. p is the shots-per-unitary override; the default 1 is
// the error-optimal budget split. Errors: statistic other than P2/P3,
// trials < 10, an empty/unsorted grid, or grid entries below the estimator
// order -> InvalidArgumentError; more than 8 measured sites, grid entries
// above 10^6, or trials above 10^5 -> ResourceLimitError.
SweepResult error_scaling_sweep(const PureState& state, const PartitionSpec& partition,
                                Statistic statistic, const std::vector<int>& m_grid, int trials,
                                std::uint64_t seed, const std::string& state_label = "",
                                int p = 1, int threads = 0);

// Plot-ready table of a sweep: header `M,mean_abs_err,stderr,trials`, one
// row per grid point, values printed with %.12g.
void write_sweep_csv(std::ostream& os, const SweepResult& result);

struct BudgetRow {
    int p = 0;
    int m = 0; // total_budget / p
    double mae_p2 = 0.0;
    double se_p2 = 0.0; // trial-spread standard error of mae_p2
    double mae_p3 = 0.0;
    double se_p3 = 0.0;
    int trials = 0;
};

// Fixed-budget study of the M*P split: for each P the budget buys
// M = total_budget / P rounds of P shots, and the row reports the spread of
// absolute errors of the order-2 and order-3 estimates over `trials`
// repetitions (trial seed derived from (seed, P, trial index)). Errors: a P
// that does not divide total_budget, nonpositive P, total_budget < 1, or
// trials < 10 -> InvalidArgumentError; more than 8 measured sites,
// total_budget > 10^7, or trials > 10^5 -> ResourceLimitError. A split with
// M below the estimator order propagates InsufficientDataError.
std::vector<BudgetRow> budget_split_study(const PureState& state, const PartitionSpec& partition,
                                          int total_budget, const std::vector<int>& p_values,
                                          std::uint64_t seed, int trials = 50, int threads = 0);

} // namespace ptshadow
