#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptshadow/linalg.hpp"
#include "ptshadow/measure.hpp"
#include "ptshadow/states.hpp"

namespace ptshadow {

// One measurement round collapsed to its estimator form. The P-shot
// estimator is the shot average of per-shot product operators,
//     (1/P) sum_s (x)_q [3 u_q^dag |k_s(q)><k_s(q)| u_q - I],
// stored with repeated outcomes merged: one product term per distinct
// outcome pattern, weighted by its frequency. Factors are term-major (the
// factor of term t at site index q is per_qubit[t * sites.size() + q]);
// weights sum to 1, and empty `weights` means a single term of weight 1.
// At P = 1 there is exactly one term, one factor per site. Single-site
// snapshots always collapse to one term holding the mean factor (with one
// site the average of products IS the product of the average). Every factor
// is Hermitian with trace exactly 1 (pinned after Hermitization);
// single-shot factors have eigenvalues {2, -1}.
struct Snapshot {
    std::vector<int> sites;      // chain labels, one per factor column
    std::vector<Mat2> per_qubit; // term-major 2x2 factors
    std::vector<double> weights; // one per term; empty = single term
    int shots_averaged = 1;      // P

    int n_terms() const { return weights.empty() ? 1 : static_cast<int>(weights.size()); }
    double term_weight(int t) const { return weights.empty() ? 1.0 : weights[t]; }
};

// Builds the factors for `sites` (any sub-list of the record's measured
// sites; dropping a site is the partial trace of the snapshot).
// Errors: requested site not measured in the record -> InvalidArgumentError.
Snapshot snapshot_from_record(const MeasurementRecord& record,
                              const std::vector<int>& record_sites,
                              const std::vector<int>& sites);

// Keeps only the factors for `sites` (partial trace over the rest).
Snapshot restrict_snapshot(const Snapshot& snap, const std::vector<int>& sites);

// One snapshot per record, restricted to `sites`.
std::vector<Snapshot> build_snapshots(const MeasurementDataset& ds, const std::vector<int>& sites,
                                      int threads = 0);

enum class Statistic { P2, P3, S3, P4 };
std::string statistic_name(Statistic s); // "p2", "p3", "s3", "p4"

// Both evaluation routes compute the same U-statistic. Factorized walks the
// index tuples with per-qubit 2x2 trace products (cost ~ (M * terms)^order
// * |AB|); Dense streams partially transposed mixture sums through power
// sums (cost ~ M * matmul(2^|AB|), plus an M^2 term for order 4). Auto picks
// the cheaper one from (M, order, |AB|, term counts) alone, so results never
// depend on it.
enum class EvalPath { Auto, Factorized, Dense };

struct EstimatorOptions {
    EvalPath path = EvalPath::Auto;
    bool jackknife = true; // delete-one-unitary std_error; disable to save a pass
    int threads = 0;       // 0 = default_threads(); never affects values
};

struct Estimate {
    double value = 0.0;
    double std_error = 0.0; // >= 0; jackknife unless method = median-of-means
    std::string method;     // "u-statistic" | "median-of-means"
    int m_used = 0;
    int p_used = 0;
    std::string statistic; // "p2" | "p3" | "s3" | "p4"
};

// U-statistic estimators of the partially transposed moments Tr[(rho^T_A)^n]
// (p2, p3, p4) and of Tr(rho^3) (s3, no transposition). Snapshots must all
// carry the same site list, equal as a set to A union B.
// Errors: M < order -> InsufficientDataError; mismatched sites or partition
// -> InvalidArgumentError. With M = order exactly there is no leave-one-out
// variability to measure and std_error is reported as 0.
Estimate estimate_p2(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                     const EstimatorOptions& opts = {});
Estimate estimate_p3(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                     const EstimatorOptions& opts = {});
Estimate estimate_s3(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                     const EstimatorOptions& opts = {});

// Full n!-symmetrized U-statistic; n in {2, 3} delegates to the ops above
// (the reduced kernels equal the full average). n = 4 averages the three
// cyclic-and-reversal classes of orderings.
// Errors: n outside {2,3,4} -> UnsupportedOrderError.
Estimate estimate_pn(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition, int n,
                     const EstimatorOptions& opts = {});

// Delete-one-unitary jackknife: sqrt[(M-1)/M * sum_r (theta_(r) - mean)^2],
// computed incrementally from per-index sums in the estimator pass.
// Errors: M < order + 1 -> InsufficientDataError.
double jackknife_error(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                       Statistic stat, const EstimatorOptions& opts = {});

// Median of the per-chunk U-statistics over k contiguous equal chunks
// (the first M mod k chunks take the extra record). std_error is the median
// absolute deviation scaled by 1.4826/sqrt(k). k = 1 reduces to the plain
// U-statistic. Errors: k < 1 -> InvalidArgumentError; floor(M/k) < order ->
// InsufficientDataError.
Estimate median_of_means(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                         Statistic stat, int k_groups, const EstimatorOptions& opts = {});

// Arithmetic mean of the dense snapshot operators (diagnostic; E[snapshot]
// is the reduced state). Errors: empty list -> InsufficientDataError; more
// than 8 sites -> ResourceLimitError.
DensityMatrix reconstruct_mean_state(const std::vector<Snapshot>& snapshots);

// One line of the result-record stream:
// {"statistic":…,"partition":{"A":…,"B":…},"value":…,"std_error":…,"m":…,"p":…,"method":…,"seed":…}
std::string estimate_json_line(const Estimate& est, const PartitionSpec& partition,
                               std::uint64_t seed);

} // namespace ptshadow
