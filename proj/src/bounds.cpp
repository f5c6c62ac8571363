#include "ptshadow/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "ptshadow/errors.hpp"
#include "ptshadow/measure.hpp"
#include "ptshadow/parallel.hpp"
#include "ptshadow/rng.hpp"

namespace ptshadow {

namespace {

constexpr int kMaxSweepSites = 8;
constexpr int kMaxSweepM = 1000000;
constexpr int kMaxTrials = 100000;

void validate_ab_size(int ab_size)
{
    if (ab_size < 1)
        throw InvalidArgumentError("system size must be at least 1 site, got " +
                                   std::to_string(ab_size));
}

void validate_p2_range(double p2)
{
    if (!(p2 > 0.0) || p2 > 1.0 + 1e-9)
        throw InvalidArgumentError("p2 is a purity and must lie in (0, 1], got " +
                                   std::to_string(p2));
}

void validate_eps_delta(double epsilon, double delta)
{
    if (!(epsilon > 0.0) || !(epsilon < 1.0))
        throw InvalidArgumentError("epsilon must lie in (0, 1), got " + std::to_string(epsilon));
    if (!(delta > 0.0) || !(delta < 1.0))
        throw InvalidArgumentError("delta must lie in (0, 1), got " + std::to_string(delta));
}

// Ceiling with a relative snap: lemma expressions that are integers in exact
// arithmetic (e.g. 8*4/(0.2^2*0.25) = 3200) must not round up on float noise.
std::int64_t snap_ceil(double x)
{
    const double snapped = std::nearbyint(x);
    if (std::abs(x - snapped) <= 1e-9 * std::max(1.0, std::abs(x)))
        return static_cast<std::int64_t>(snapped);
    return static_cast<std::int64_t>(std::ceil(x));
}

// Per-trial seed: two keyed avalanche steps separate trials from each other
// and from the record substreams the dataset generator derives internally.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key, std::uint64_t trial)
{
    return splitmix64_mix(splitmix64_mix(splitmix64_mix(master) + key) + trial);
}

// Measured-site list (ascending) for a partition, rejecting overlap early so
// the parallel workers below can assume throw-free inputs.
std::vector<int> partition_union(const PartitionSpec& partition)
{
    std::vector<int> sites = partition.a_sites;
    sites.insert(sites.end(), partition.b_sites.begin(), partition.b_sites.end());
    std::sort(sites.begin(), sites.end());
    if (std::adjacent_find(sites.begin(), sites.end()) != sites.end())
        throw InvalidArgumentError("partition halves overlap");
    return sites;
}

// Exact PT moments {p1, p2, p3} of the state reduced to the partition's
// sites.
std::vector<double> exact_pt_moments(const PureState& state, const PartitionSpec& partition)
{
    std::vector<int> ordered = partition.a_sites;
    ordered.insert(ordered.end(), partition.b_sites.begin(), partition.b_sites.end());
    const DensityMatrix rho_ab = reduced_density_matrix(state, ordered);
    PartitionSpec relabeled;
    for (int i = 1; i <= static_cast<int>(partition.a_sites.size()); ++i)
        relabeled.a_sites.push_back(i);
    for (int i = static_cast<int>(partition.a_sites.size()) + 1;
         i <= static_cast<int>(ordered.size()); ++i)
        relabeled.b_sites.push_back(i);
    return pt_moments_exact(rho_ab, relabeled, 3);
}

struct ErrorSpread {
    double mae = 0.0;
    double rmse = 0.0;
    double se = 0.0;
};

// Fixed-order reduction of signed errors for one configuration.
ErrorSpread reduce_errors(const double* err, int trials)
{
    CompensatedSum abs_sum, sq_sum;
    for (int t = 0; t < trials; ++t) {
        abs_sum.add(std::abs(err[t]));
        sq_sum.add(err[t] * err[t]);
    }
    ErrorSpread out;
    out.mae = abs_sum.value() / trials;
    out.rmse = std::sqrt(sq_sum.value() / trials);
    CompensatedSum dev_sum;
    for (int t = 0; t < trials; ++t) {
        const double d = std::abs(err[t]) - out.mae;
        dev_sum.add(d * d);
    }
    if (trials > 1)
        out.se = std::sqrt(dev_sum.value() / (trials - 1)) / std::sqrt(double(trials));
    return out;
}

// Least-squares slope of log10(err) vs log10(m); NaN with fewer than two
// usable points.
double loglog_slope(const std::vector<double>& ms, const std::vector<double>& errs)
{
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < ms.size(); ++i) {
        if (!(errs[i] > 0.0))
            continue; // a zero error has no log-log coordinate
        const double x = std::log10(ms[i]);
        const double y = std::log10(errs[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 2)
        return std::numeric_limits<double>::quiet_NaN();
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0)
        return std::numeric_limits<double>::quiet_NaN();
    return (n * sxy - sx * sy) / denom;
}

} // namespace

double variance_bound_p2(int ab_size, double p2, int m)
{
    validate_ab_size(ab_size);
    validate_p2_range(p2);
    if (m < 2)
        throw InvalidArgumentError("the order-2 estimator needs at least 2 rounds, got " +
                                   std::to_string(m));
    const double first = 4.0 * std::exp2(static_cast<double>(ab_size)) * p2 / m;
    const double ratio = std::exp2(1.5 * ab_size) / m;
    return first + 4.0 * ratio * ratio;
}

std::int64_t sample_size_p2(int ab_size, double p2, double epsilon, double delta)
{
    validate_ab_size(ab_size);
    validate_p2_range(p2);
    validate_eps_delta(epsilon, delta);
    const double t1 = std::exp2(static_cast<double>(ab_size)) * p2 / (epsilon * epsilon * delta);
    const double t2 = std::exp2(1.5 * ab_size) / (epsilon * std::sqrt(delta));
    return snap_ceil(8.0 * std::max(t1, t2));
}

std::int64_t sample_size_p3(int ab_size, double p2, double epsilon, double delta)
{
    validate_ab_size(ab_size);
    validate_p2_range(p2);
    validate_eps_delta(epsilon, delta);
    const double t1 =
        std::exp2(static_cast<double>(ab_size)) * p2 * p2 / (epsilon * epsilon * delta);
    const double t2 = std::exp2(1.5 * ab_size) * p2 / (epsilon * std::sqrt(delta));
    const double t3 =
        std::exp2(2.0 * ab_size) / (std::cbrt(epsilon * epsilon) * std::cbrt(delta));
    return snap_ceil(39.0 * std::max(t1, std::max(t2, t3)));
}

SweepResult error_scaling_sweep(const PureState& state, const PartitionSpec& partition,
                                Statistic statistic, const std::vector<int>& m_grid, int trials,
                                std::uint64_t seed, const std::string& state_label, int p,
                                int threads)
{
    if (statistic != Statistic::P2 && statistic != Statistic::P3)
        throw InvalidArgumentError("the scaling sweep covers the order-2 and order-3 "
                                   "transposed-moment statistics only");
    const int order = statistic == Statistic::P2 ? 2 : 3;
    if (trials < 10)
        throw InvalidArgumentError("a sweep needs at least 10 trials per point, got " +
                                   std::to_string(trials));
    if (trials > kMaxTrials)
        throw ResourceLimitError("trial count capped at " + std::to_string(kMaxTrials) +
                                 ", got " + std::to_string(trials));
    if (m_grid.empty())
        throw InvalidArgumentError("the sweep grid must not be empty");
    for (size_t i = 0; i < m_grid.size(); ++i) {
        if (m_grid[i] < order)
            throw InvalidArgumentError("grid entry " + std::to_string(m_grid[i]) +
                                       " is below the order-" + std::to_string(order) +
                                       " estimator minimum");
        if (m_grid[i] > kMaxSweepM)
            throw ResourceLimitError("grid entries are capped at " +
                                     std::to_string(kMaxSweepM) + " rounds, got " +
                                     std::to_string(m_grid[i]));
        if (i > 0 && m_grid[i] <= m_grid[i - 1])
            throw InvalidArgumentError("the sweep grid must be strictly increasing");
    }
    if (p < 1)
        throw InvalidArgumentError("shots per round must be at least 1, got " +
                                   std::to_string(p));

    const std::vector<double> exact = exact_pt_moments(state, partition);
    const double target = exact[static_cast<size_t>(order - 1)];
    const std::vector<int> sites = partition_union(partition);
    if (static_cast<int>(sites.size()) > kMaxSweepSites)
        throw ResourceLimitError("sweeps are capped at " + std::to_string(kMaxSweepSites) +
                                 " measured sites, got " + std::to_string(sites.size()));

    const int n_m = static_cast<int>(m_grid.size());
    std::vector<double> err(static_cast<size_t>(n_m) * trials, 0.0);
    for_each_block(n_m * trials, threads, [&](int block) {
        const int mi = block / trials;
        const int t = block % trials;
        const int m = m_grid[static_cast<size_t>(mi)];
        const std::uint64_t trial_seed =
            derive_seed(seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(t));
        const MeasurementDataset ds =
            generate_dataset(state, sites, m, p, Ensemble::Clifford, trial_seed, 1);
        const std::vector<Snapshot> snaps = build_snapshots(ds, sites, 1);
        EstimatorOptions opts;
        opts.jackknife = false;
        opts.threads = 1;
        const Estimate est = statistic == Statistic::P2 ? estimate_p2(snaps, partition, opts)
                                                        : estimate_p3(snaps, partition, opts);
        err[static_cast<size_t>(block)] = est.value - target;
    });

    SweepResult res;
    res.statistic = statistic_name(statistic);
    res.state_label = state_label;
    res.ab_size = static_cast<int>(sites.size());
    for (int mi = 0; mi < n_m; ++mi) {
        const ErrorSpread spread =
            reduce_errors(err.data() + static_cast<size_t>(mi) * trials, trials);
        SweepPoint pt;
        pt.m = m_grid[static_cast<size_t>(mi)];
        pt.mean_abs_error = spread.mae;
        pt.rmse = spread.rmse;
        pt.std_error = spread.se;
        pt.trials = trials;
        res.grid.push_back(pt);
    }

    // Regime split at the geometric midpoint of the grid span; points on the
    // midpoint count toward both fits.
    const double mid =
        std::sqrt(static_cast<double>(m_grid.front()) * static_cast<double>(m_grid.back()));
    std::vector<double> lo_m, lo_e, hi_m, hi_e;
    for (const SweepPoint& pt : res.grid) {
        if (pt.m <= mid * (1.0 + 1e-9)) {
            lo_m.push_back(pt.m);
            lo_e.push_back(pt.mean_abs_error);
        }
        if (pt.m >= mid * (1.0 - 1e-9)) {
            hi_m.push_back(pt.m);
            hi_e.push_back(pt.mean_abs_error);
        }
    }
    res.slope_small_m = loglog_slope(lo_m, lo_e);
    res.slope_large_m = loglog_slope(hi_m, hi_e);
    return res;
}

void write_sweep_csv(std::ostream& os, const SweepResult& result)
{
    os << "M,mean_abs_err,stderr,trials\n";
    char buf[160];
    for (const SweepPoint& pt : result.grid) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%d\n", pt.m, pt.mean_abs_error,
                      pt.std_error, pt.trials);
        os << buf;
    }
}

std::vector<BudgetRow> budget_split_study(const PureState& state, const PartitionSpec& partition,
                                          int total_budget, const std::vector<int>& p_values,
                                          std::uint64_t seed, int trials, int threads)
{
    if (total_budget < 1)
        throw InvalidArgumentError("the total budget must be positive, got " +
                                   std::to_string(total_budget));
    if (total_budget > kMaxSweepM)
        throw ResourceLimitError("budgets are capped at " + std::to_string(kMaxSweepM) +
                                 " shots, got " + std::to_string(total_budget));
    if (p_values.empty())
        throw InvalidArgumentError("the study needs at least one shots-per-round value");
    if (trials < 10)
        throw InvalidArgumentError("the study needs at least 10 trials, got " +
                                   std::to_string(trials));
    if (trials > kMaxTrials)
        throw ResourceLimitError("trial count capped at " + std::to_string(kMaxTrials) +
                                 ", got " + std::to_string(trials));
    for (int p : p_values) {
        if (p < 1)
            throw InvalidArgumentError("shots per round must be positive, got " +
                                       std::to_string(p));
        if (total_budget % p != 0)
            throw InvalidArgumentError("budget " + std::to_string(total_budget) +
                                       " is not divisible by P=" + std::to_string(p));
        if (total_budget / p < 3)
            throw InsufficientDataError(
                "P=" + std::to_string(p) + " leaves M=" + std::to_string(total_budget / p) +
                " rounds, below the order-3 estimator minimum of 3");
    }

    const std::vector<double> exact = exact_pt_moments(state, partition);
    const std::vector<int> sites = partition_union(partition);
    if (static_cast<int>(sites.size()) > kMaxSweepSites)
        throw ResourceLimitError("the study is capped at " + std::to_string(kMaxSweepSites) +
                                 " measured sites, got " + std::to_string(sites.size()));

    const int n_p = static_cast<int>(p_values.size());
    std::vector<double> err2(static_cast<size_t>(n_p) * trials, 0.0);
    std::vector<double> err3(static_cast<size_t>(n_p) * trials, 0.0);
    for_each_block(n_p * trials, threads, [&](int block) {
        const int pi = block / trials;
        const int t = block % trials;
        const int p = p_values[static_cast<size_t>(pi)];
        const int m = total_budget / p;
        const std::uint64_t trial_seed =
            derive_seed(seed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(t));
        const MeasurementDataset ds =
            generate_dataset(state, sites, m, p, Ensemble::Clifford, trial_seed, 1);
        const std::vector<Snapshot> snaps = build_snapshots(ds, sites, 1);
        EstimatorOptions opts;
        opts.jackknife = false;
        opts.threads = 1;
        err2[static_cast<size_t>(block)] = estimate_p2(snaps, partition, opts).value - exact[1];
        err3[static_cast<size_t>(block)] = estimate_p3(snaps, partition, opts).value - exact[2];
    });

    std::vector<BudgetRow> rows;
    for (int pi = 0; pi < n_p; ++pi) {
        const ErrorSpread s2 = reduce_errors(err2.data() + static_cast<size_t>(pi) * trials, trials);
        const ErrorSpread s3 = reduce_errors(err3.data() + static_cast<size_t>(pi) * trials, trials);
        BudgetRow row;
        row.p = p_values[static_cast<size_t>(pi)];
        row.m = total_budget / row.p;
        row.mae_p2 = s2.mae;
        row.se_p2 = s2.se;
        row.mae_p3 = s3.mae;
        row.se_p3 = s3.se;
        row.trials = trials;
        rows.push_back(row);
    }
    return rows;
}

} // namespace ptshadow
