#include "ptshadow/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "ptshadow/errors.hpp"
#include "ptshadow/parallel.hpp"

namespace ptshadow {

namespace {

constexpr double kTieTol = 1e-12;      // strict-inequality slack on every verdict
constexpr double kNegativityTol = 1e-10; // spectral cutoff shared with negativity()

double ipow(double x, int n)
{
    double out = 1.0;
    for (int i = 0; i < n; ++i)
        out *= x;
    return out;
}

double binom2(int n) { return 0.5 * static_cast<double>(n) * (n - 1); }

void validate_werner_spec(const WernerSpec& spec)
{
    if (spec.d < 2)
        throw InvalidArgumentError("werner local dimension must be at least 2, got " +
                                   std::to_string(spec.d));
    if (!(spec.alpha >= 0.0) || !(spec.alpha <= 1.0))
        throw InvalidArgumentError("werner alpha must lie in [0, 1], got " +
                                   std::to_string(spec.alpha));
}

double werner_lambda0(const WernerSpec& spec)
{
    return (2.0 * spec.alpha - 1.0) / spec.d;
}

double werner_lambda1(const WernerSpec& spec)
{
    const double d = spec.d;
    return (1.0 + d - 2.0 * spec.alpha) / (d * (d * d - 1.0));
}

} // namespace

bool p3_ppt_test(double p2, double p3)
{
    if (!(p2 > 0.0))
        throw InvalidArgumentError("p2 is a purity and must be strictly positive, got " +
                                   std::to_string(p2));
    return p3 < p2 * p2 - kTieTol;
}

bool generalized_moment_test(const std::vector<double>& moments, int p)
{
    if (p < 3 || p > 5)
        throw InvalidArgumentError("moment test order must lie in [3, 5], got " +
                                   std::to_string(p));
    if (moments.size() < static_cast<size_t>(p))
        throw InvalidArgumentError("moment test of order " + std::to_string(p) + " needs " +
                                   std::to_string(p) + " moments, got " +
                                   std::to_string(moments.size()));
    if (p == 3)
        return p3_ppt_test(moments[1], moments[2]);
    // Violation of p_{p-1}^{p-1} <= p_p^{p-2}, same tie handling as order 3.
    const double lhs = ipow(moments[static_cast<size_t>(p - 2)], p - 1);
    const double rhs = ipow(moments[static_cast<size_t>(p - 1)], p - 2);
    return rhs < lhs - kTieTol;
}

double f3_value(double p1, double p2, double p3, double a)
{
    return -p3 + 2.0 * a * p2 - a * a * p1;
}

double optimal_a(double p1, double p2)
{
    if (!(p1 > 0.0))
        throw InvalidArgumentError("the trace p1 must be strictly positive, got " +
                                   std::to_string(p1));
    return p2 / p1;
}

bool purity_condition(double purity_a, double purity_ab)
{
    // Purities live in (0, 1]; allow a whisker above 1 so exactly-pure states
    // computed in floating point do not trip the validator.
    const auto check = [](double v, const char* name) {
        if (!(v > 0.0) || v > 1.0 + 1e-9)
            throw InvalidArgumentError(std::string(name) + " must lie in (0, 1], got " +
                                       std::to_string(v));
    };
    check(purity_a, "purity_a");
    check(purity_ab, "purity_ab");
    return purity_a < purity_ab - kTieTol;
}

double r3_ratio(double p3, double s3)
{
    if (!(p3 > 0.0))
        throw UndefinedRatioError("the ratio needs p3 > 0, got p3 = " + std::to_string(p3));
    if (!(s3 > 0.0))
        throw UndefinedRatioError("the ratio needs s3 > 0, got s3 = " + std::to_string(s3));
    return -std::log2(p3 / s3);
}

double schatten_norm(const Mat& x, double p)
{
    if (std::isnan(p) || p < 1.0)
        throw InvalidArgumentError("schatten order must satisfy p >= 1");
    if (x.rows() != x.cols())
        throw InvalidArgumentError("schatten norm needs a square matrix, got " +
                                   std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
    if ((x - x.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw InvalidArgumentError("schatten norm is defined here for Hermitian input only");

    Eigen::SelfAdjointEigenSolver<Mat> es(x, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    if (std::isinf(p)) {
        double m = 0.0;
        for (Eigen::Index i = 0; i < ev.size(); ++i)
            m = std::max(m, std::abs(ev(i)));
        return m;
    }
    CompensatedSum acc;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        acc.add(std::pow(std::abs(ev(i)), p));
    return std::pow(acc.value(), 1.0 / p);
}

ConditionReport compare_conditions(const DensityMatrix& rho, const PartitionSpec& partition)
{
    ConditionReport rep;
    const std::vector<double> pm = pt_moments_exact(rho, partition, 3);
    rep.p2 = pm[1];
    rep.p3 = pm[2];
    rep.negativity = negativity(rho, partition);
    rep.p3_ppt_margin = 1.0 - rep.p3 / (rep.p2 * rep.p2);

    const double purity_ab = rho.matrix.squaredNorm();
    const DensityMatrix rho_a = reduced_density_matrix(rho, partition.a_sites);
    const double purity_a = rho_a.matrix.squaredNorm();
    rep.purity_gap = purity_ab - purity_a;

    rep.ppt_violated = rep.negativity > kNegativityTol;
    rep.p3_ppt_violated = p3_ppt_test(rep.p2, rep.p3);
    rep.purity_condition_met = purity_condition(purity_a, purity_ab);
    return rep;
}

std::string condition_json_line(const ConditionReport& rep, const PartitionSpec& partition,
                                double time_ms)
{
    nlohmann::ordered_json j;
    nlohmann::ordered_json p;
    p["A"] = partition.a_sites;
    p["B"] = partition.b_sites;
    j["partition"] = std::move(p);
    j["time_ms"] = time_ms;
    j["negativity"] = rep.negativity;
    j["p2"] = rep.p2;
    j["p3"] = rep.p3;
    j["p3_ppt_margin"] = rep.p3_ppt_margin;
    j["purity_gap"] = rep.purity_gap;
    nlohmann::ordered_json v;
    v["ppt_violated"] = rep.ppt_violated;
    v["p3_ppt_violated"] = rep.p3_ppt_violated;
    v["purity_condition_met"] = rep.purity_condition_met;
    j["verdicts"] = std::move(v);
    return j.dump();
}

DensityMatrix werner_state(const WernerSpec& spec)
{
    validate_werner_spec(spec);
    if (spec.d > 12)
        throw ResourceLimitError("werner construction is capped at local dimension 12, got " +
                                 std::to_string(spec.d));
    const int d = spec.d;
    const long dim = static_cast<long>(d) * d;

    // Swap on d (x) d: |a,b> -> |b,a> with |a,b> stored at index a*d + b.
    Mat swap = Mat::Zero(dim, dim);
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            swap(static_cast<long>(b) * d + a, static_cast<long>(a) * d + b) = 1.0;

    const Mat eye = Mat::Identity(dim, dim);
    const Mat proj_sym = 0.5 * (eye + swap);
    const Mat proj_anti = 0.5 * (eye - swap);

    DensityMatrix rho;
    rho.dims = {d, d};
    rho.matrix = (spec.alpha / binom2(d + 1)) * proj_sym +
                 ((1.0 - spec.alpha) / binom2(d)) * proj_anti;
    return rho;
}

double werner_pt_moment(const WernerSpec& spec, int n)
{
    validate_werner_spec(spec);
    if (n < 1)
        throw InvalidArgumentError("moment order must be at least 1, got " + std::to_string(n));
    const double d2m1 = static_cast<double>(spec.d) * spec.d - 1.0;
    return ipow(werner_lambda0(spec), n) + d2m1 * ipow(werner_lambda1(spec), n);
}

double werner_state_moment(const WernerSpec& spec, int n)
{
    validate_werner_spec(spec);
    if (n < 1)
        throw InvalidArgumentError("moment order must be at least 1, got " + std::to_string(n));
    return ipow(spec.alpha, n) / ipow(binom2(spec.d + 1), n - 1) +
           ipow(1.0 - spec.alpha, n) / ipow(binom2(spec.d), n - 1);
}

std::optional<double> werner_alpha_star(int d)
{
    if (d < 2)
        throw InvalidArgumentError("werner local dimension must be at least 2, got " +
                                   std::to_string(d));
    const auto p3 = [d](double alpha) { return werner_pt_moment(WernerSpec{d, alpha}, 3); };
    if (p3(0.0) >= -kTieTol)
        return std::nullopt; // d <= 3: the third moment never goes negative
    // p3 is negative at 0 and equals (d^2-1)^{-2} > 0 at 1/2; bisect the
    // bracket down to absolute width 1e-12.
    double lo = 0.0, hi = 0.5;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (p3(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

WernerSweepReport werner_equivalence_sweep(int d, const std::vector<double>& alpha_grid,
                                           int threads)
{
    if (d < 2 || d > 8)
        throw InvalidArgumentError("equivalence sweep supports local dimensions 2..8, got " +
                                   std::to_string(d));
    for (double alpha : alpha_grid)
        if (!(alpha >= 0.0) || !(alpha <= 1.0))
            throw InvalidArgumentError("sweep grid values must lie in [0, 1], got " +
                                       std::to_string(alpha));

    WernerSweepReport rep;
    rep.d = d;
    rep.alphas = alpha_grid;
    const int n = static_cast<int>(alpha_grid.size());
    rep.ppt_violated.assign(static_cast<size_t>(n), 0);
    rep.p3_ppt_violated.assign(static_cast<size_t>(n), 0);

    // One grid point per block; each writes only its own slots, so the
    // result is identical for any worker count.
    for_each_block(n, threads, [&](int i) {
        const WernerSpec spec{d, alpha_grid[static_cast<size_t>(i)]};
        const bool ppt_bad = werner_lambda0(spec) < -kTieTol;
        const bool p3_bad =
            p3_ppt_test(werner_pt_moment(spec, 2), werner_pt_moment(spec, 3));
        rep.ppt_violated[static_cast<size_t>(i)] = ppt_bad ? 1 : 0;
        rep.p3_ppt_violated[static_cast<size_t>(i)] = p3_bad ? 1 : 0;
    });

    for (int i = 0; i < n; ++i)
        if (rep.ppt_violated[static_cast<size_t>(i)] !=
            rep.p3_ppt_violated[static_cast<size_t>(i)])
            ++rep.disagreements;
    return rep;
}

std::optional<WernerR3Witness> werner_r3_nonmonotone_check(int d)
{
    if (d < 2)
        throw InvalidArgumentError("werner local dimension must be at least 2, got " +
                                   std::to_string(d));
    const double width = 0.5 / d; // the separable band is [1/2, 1/2 + 1/(2d))
    for (int i = 0; i < 100; ++i) {
        const double alpha = 0.5 + width * (static_cast<double>(i) / 100.0);
        const WernerSpec spec{d, alpha};
        const double p3 = werner_pt_moment(spec, 3);
        const double s3 = werner_state_moment(spec, 3);
        if (p3 > 0.0 && p3 < s3)
            return WernerR3Witness{alpha, p3, s3};
    }
    return std::nullopt;
}

} // namespace ptshadow
