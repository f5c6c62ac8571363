#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "ptshadow/errors.hpp"
#include "ptshadow/measure.hpp"
#include "ptshadow/multicopy.hpp"
#include "ptshadow/rng.hpp"
#include "ptshadow/shadows.hpp"
#include "ptshadow/states.hpp"

#include "support/oracles.hpp"

using namespace ptshadow;
using oracles::kron;
using oracles::Mat;
using oracles::Vec;

namespace {

Mat to_mat(const Mat2& m)
{
    Mat out(2, 2);
    out << m.a, m.b, m.c, m.d;
    return out;
}

double falling_f(int m, int n)
{
    double v = 1.0;
    for (int i = 0; i < n; ++i)
        v *= m - i;
    return v;
}

bool in_a_side(const PartitionSpec& part, int site)
{
    return std::find(part.a_sites.begin(), part.a_sites.end(), site) != part.a_sites.end();
}

// Dense form of one snapshot (weighted sum of its product terms),
// transposing the factors on the A side.
Mat dense_form(const Snapshot& s, const PartitionSpec& part, bool transpose)
{
    const size_t l = s.sites.size();
    const long d = 1L << l;
    Mat out = Mat::Zero(d, d);
    for (int t = 0; t < s.n_terms(); ++t) {
        Mat acc = Mat::Identity(1, 1) * s.term_weight(t);
        for (size_t q = 0; q < l; ++q) {
            Mat f = to_mat(s.per_qubit[static_cast<size_t>(t) * l + q]);
            if (transpose && in_a_side(part, s.sites[q]))
                f = f.transpose().eval();
            acc = kron(acc, f);
        }
        out += acc;
    }
    return out;
}

// Reference U-statistic: average Tr(X_{i1} ... X_{in}) over every ordered
// tuple of distinct snapshot indices, using explicit dense matrix products.
double brute_force_moment(const std::vector<Snapshot>& snaps, const PartitionSpec& part, int n,
                          bool transpose)
{
    const int m = static_cast<int>(snaps.size());
    std::vector<Mat> x;
    x.reserve(snaps.size());
    for (const Snapshot& s : snaps)
        x.push_back(dense_form(s, part, transpose));

    cplx total = 0.0;
    long codes = 1;
    for (int i = 0; i < n; ++i)
        codes *= m;
    std::vector<int> idx(static_cast<size_t>(n));
    for (long code = 0; code < codes; ++code) {
        long rem = code;
        bool distinct = true;
        for (int i = 0; i < n; ++i) {
            idx[static_cast<size_t>(i)] = static_cast<int>(rem % m);
            rem /= m;
            for (int j = 0; j < i; ++j)
                if (idx[static_cast<size_t>(j)] == idx[static_cast<size_t>(i)])
                    distinct = false;
        }
        if (!distinct)
            continue;
        Mat prod = x[static_cast<size_t>(idx[0])];
        for (int i = 1; i < n; ++i)
            prod = prod * x[static_cast<size_t>(idx[static_cast<size_t>(i)])];
        total += prod.trace();
    }
    return total.real() / falling_f(m, n);
}

std::vector<Snapshot> random_snapshots(int m, const std::vector<int>& sites, std::uint64_t seed)
{
    CounterRng rng(seed);
    std::vector<Snapshot> out;
    out.reserve(static_cast<size_t>(m));
    for (int r = 0; r < m; ++r) {
        Snapshot s;
        s.sites = sites;
        for (size_t q = 0; q < sites.size(); ++q)
            s.per_qubit.push_back(from_eigen2(oracles::random_hermitian(2, rng)));
        out.push_back(std::move(s));
    }
    return out;
}

Snapshot constant_snapshot(const std::vector<int>& sites, const Mat2& factor)
{
    Snapshot s;
    s.sites = sites;
    s.per_qubit.assign(sites.size(), factor);
    return s;
}

// Snapshots carrying several weighted product terms (as multi-shot rounds do).
std::vector<Snapshot> random_mixture_snapshots(int m, const std::vector<int>& sites,
                                               std::uint64_t seed, int max_terms)
{
    CounterRng rng(seed);
    std::vector<Snapshot> out;
    out.reserve(static_cast<size_t>(m));
    for (int r = 0; r < m; ++r) {
        Snapshot s;
        s.sites = sites;
        const int nt =
            1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_terms)));
        std::vector<double> w(static_cast<size_t>(nt));
        double wsum = 0.0;
        for (int t = 0; t < nt; ++t) {
            w[static_cast<size_t>(t)] = 0.1 + rng.next_double();
            wsum += w[static_cast<size_t>(t)];
            for (size_t q = 0; q < sites.size(); ++q)
                s.per_qubit.push_back(from_eigen2(oracles::random_hermitian(2, rng)));
        }
        if (nt > 1) {
            for (double& x : w)
                x /= wsum;
            s.weights = std::move(w);
        }
        s.shots_averaged = nt;
        out.push_back(std::move(s));
    }
    return out;
}

Estimate run_stat(const std::vector<Snapshot>& snaps, const PartitionSpec& part, Statistic st,
                  const EstimatorOptions& opts)
{
    switch (st) {
    case Statistic::P2:
        return estimate_p2(snaps, part, opts);
    case Statistic::P3:
        return estimate_p3(snaps, part, opts);
    case Statistic::S3:
        return estimate_s3(snaps, part, opts);
    default:
        return estimate_pn(snaps, part, 4, opts);
    }
}

int order_of(Statistic st)
{
    return st == Statistic::P2 ? 2 : st == Statistic::P4 ? 4 : 3;
}

// Literal delete-one-record recomputation of the jackknife error.
double leave_one_out_error(const std::vector<Snapshot>& snaps, const PartitionSpec& part,
                           Statistic st, EvalPath path)
{
    const int m = static_cast<int>(snaps.size());
    EstimatorOptions opts;
    opts.path = path;
    opts.jackknife = false;
    std::vector<double> theta;
    for (int r = 0; r < m; ++r) {
        std::vector<Snapshot> sub;
        for (int i = 0; i < m; ++i)
            if (i != r)
                sub.push_back(snaps[static_cast<size_t>(i)]);
        theta.push_back(run_stat(sub, part, st, opts).value);
    }
    double mean = 0.0;
    for (double t : theta)
        mean += t;
    mean /= m;
    double ss = 0.0;
    for (double t : theta)
        ss += (t - mean) * (t - mean);
    return std::sqrt((m - 1.0) / m * ss);
}

std::vector<Snapshot> simulate(const PureState& state, const std::vector<int>& sites, int m, int p,
                               std::uint64_t seed, Ensemble ens = Ensemble::Clifford)
{
    const MeasurementDataset ds = generate_dataset(state, sites, m, p, ens, seed);
    return build_snapshots(ds, sites);
}

void check_close(double got, double want, double tol, const char* label)
{
    const double scale = std::max({1.0, std::abs(got), std::abs(want)});
    CHECK_MESSAGE(std::abs(got - want) <= tol * scale,
                  label << ": got " << got << ", want " << want);
}

} // namespace

TEST_SUITE("shadows")
{
    TEST_CASE("snapshot from a hadamard round has the known factor")
    {
        const double r = 1.0 / std::sqrt(2.0);
        MeasurementRecord rec;
        rec.unitary.per_qubit = {Mat2{r, r, r, -r}};
        rec.outcomes = {0};
        const Snapshot s = snapshot_from_record(rec, {3}, {3});
        REQUIRE(s.per_qubit.size() == 1);
        const Mat2& f = s.per_qubit[0];
        CHECK(std::abs(f.a - cplx(0.5)) < 1e-12);
        CHECK(std::abs(f.b - cplx(1.5)) < 1e-12);
        CHECK(std::abs(f.c - cplx(1.5)) < 1e-12);
        CHECK(std::abs(f.d - cplx(0.5)) < 1e-12);
        CHECK(f.trace() == cplx(1.0));
        CHECK(s.shots_averaged == 1);
    }

    TEST_CASE("snapshot averages the shots of one round")
    {
        MeasurementRecord rec;
        rec.unitary.per_qubit = {Mat2::identity()};
        rec.outcomes = {0, 1};
        const Snapshot s = snapshot_from_record(rec, {1}, {1});
        CHECK(s.shots_averaged == 2);
        CHECK(std::abs(s.per_qubit[0].a - cplx(0.5)) < 1e-12);
        CHECK(std::abs(s.per_qubit[0].d - cplx(0.5)) < 1e-12);
        CHECK(std::abs(s.per_qubit[0].b) < 1e-12);
    }

    TEST_CASE("multi shot snapshots keep one product term per distinct outcome")
    {
        CounterRng rng(23);
        MeasurementRecord rec;
        rec.unitary.per_qubit = {sample_haar_su2(rng), sample_haar_su2(rng)};
        rec.outcomes = {0, 3, 3}; // patterns (0,0) once and (1,1) twice

        const Snapshot s = snapshot_from_record(rec, {1, 2}, {1, 2});
        REQUIRE(s.n_terms() == 2);
        REQUIRE(s.per_qubit.size() == 4);
        CHECK(s.shots_averaged == 3);
        CHECK(s.term_weight(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(s.term_weight(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

        // Term factors equal the single-shot builds for those outcomes.
        for (size_t t = 0; t < 2; ++t) {
            MeasurementRecord one = rec;
            one.outcomes = {t == 0 ? 0u : 3u};
            const Snapshot ref = snapshot_from_record(one, {1, 2}, {1, 2});
            CHECK(to_mat(s.per_qubit[t * 2 + 0]) == to_mat(ref.per_qubit[0]));
            CHECK(to_mat(s.per_qubit[t * 2 + 1]) == to_mat(ref.per_qubit[1]));
        }

        // All shots equal collapses back to a single unweighted term.
        MeasurementRecord flat = rec;
        flat.outcomes = {2, 2, 2};
        const Snapshot single = snapshot_from_record(flat, {1, 2}, {1, 2});
        CHECK(single.n_terms() == 1);
        CHECK(single.weights.empty());
        CHECK(single.shots_averaged == 3);
    }

    TEST_CASE("two shot snapshots average to the state over the full ensemble")
    {
        // Exact enumeration: over all unitary pairs and all shot-pair
        // outcomes weighted by their Born probabilities, the mean snapshot
        // operator must equal the state itself.
        CounterRng rng(29);
        const DensityMatrix rho = oracles::random_density({2, 2}, rng);
        const PartitionSpec part{{1}, {2}};

        Mat mean = Mat::Zero(4, 4);
        for (const Mat2& u1 : clifford_table())
            for (const Mat2& u2 : clifford_table()) {
                const Mat u = kron(to_mat(u1), to_mat(u2));
                const Mat rotated = u * rho.matrix * u.adjoint();
                for (std::uint32_t k1 = 0; k1 < 4; ++k1)
                    for (std::uint32_t k2 = 0; k2 < 4; ++k2) {
                        const double prob =
                            rotated(k1, k1).real() * rotated(k2, k2).real();
                        if (prob <= 0.0)
                            continue;
                        MeasurementRecord rec;
                        rec.unitary.per_qubit = {u1, u2};
                        rec.outcomes = {k1, k2};
                        const Snapshot s = snapshot_from_record(rec, {1, 2}, {1, 2});
                        mean += prob / 576.0 * dense_form(s, part, false);
                    }
            }
        CHECK((mean - rho.matrix).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("restriction merges terms that coincide on the kept sites")
    {
        CounterRng rng(31);
        MeasurementRecord rec;
        rec.unitary.per_qubit = {sample_haar_su2(rng), sample_haar_su2(rng),
                                 sample_haar_su2(rng)};
        rec.outcomes = {1, 5}; // (0,0,1) and (1,0,1): differ only on the first site

        const Snapshot full = snapshot_from_record(rec, {4, 5, 6}, {4, 5, 6});
        REQUIRE(full.n_terms() == 2);

        const Snapshot sub = restrict_snapshot(full, {5, 6});
        CHECK(sub.n_terms() == 1);
        CHECK(sub.weights.empty());
        const Snapshot direct = snapshot_from_record(rec, {4, 5, 6}, {5, 6});
        CHECK(direct.n_terms() == 1);
        CHECK(to_mat(sub.per_qubit[0]) == to_mat(direct.per_qubit[0]));
        CHECK(to_mat(sub.per_qubit[1]) == to_mat(direct.per_qubit[1]));

        // Restricting to one site collapses the mixture to its mean factor;
        // the operator stays the partial trace of the two-site restriction.
        const Snapshot one = restrict_snapshot(full, {4});
        CHECK(one.n_terms() == 1);
        const Snapshot pair = restrict_snapshot(full, {4, 5});
        const Mat traced = oracles::partial_trace_mixed(
            dense_form(pair, PartitionSpec{{4}, {5}}, false), {2, 2}, {1});
        CHECK((to_mat(one.per_qubit[0]) - traced).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("single shot factors are hermitian with eigenvalues two and minus one")
    {
        CounterRng rng(91);
        for (int trial = 0; trial < 50; ++trial) {
            MeasurementRecord rec;
            rec.unitary.per_qubit = {sample_haar_su2(rng)};
            rec.outcomes = {static_cast<std::uint32_t>(rng.next_below(2))};
            const Snapshot s = snapshot_from_record(rec, {1}, {1});
            const Mat f = to_mat(s.per_qubit[0]);
            CHECK((f - f.adjoint()).cwiseAbs().maxCoeff() == 0.0);
            Eigen::SelfAdjointEigenSolver<Mat> es(f);
            CHECK(std::abs(es.eigenvalues()(0) + 1.0) < 1e-10);
            CHECK(std::abs(es.eigenvalues()(1) - 2.0) < 1e-10);
        }
    }

    TEST_CASE("averaging the inversion over the clifford table returns the state")
    {
        // Single site: sum_u (1/24) sum_k <k|u sigma u^dag|k> (3 u^dag|k><k|u - 1)
        // must reproduce sigma exactly.
        CounterRng rng(17);
        const Mat h = oracles::random_hermitian(2, rng);
        const Mat sigma = 0.5 * (Mat::Identity(2, 2) + 0.2 * (h / h.cwiseAbs().maxCoeff()));

        Mat mean = Mat::Zero(2, 2);
        for (const Mat2& u : clifford_table()) {
            const Mat rotated = to_mat(u) * sigma * to_mat(u).adjoint();
            for (std::uint32_t k = 0; k < 2; ++k) {
                MeasurementRecord rec;
                rec.unitary.per_qubit = {u};
                rec.outcomes = {k};
                const Snapshot s = snapshot_from_record(rec, {1}, {1});
                mean += rotated(k, k).real() / 24.0 * to_mat(s.per_qubit[0]);
            }
        }
        CHECK((mean - sigma).cwiseAbs().maxCoeff() < 1e-13);
    }

    TEST_CASE("averaging the inversion over clifford pairs returns a two qubit state")
    {
        CounterRng rng(18);
        const DensityMatrix rho = oracles::random_density({2, 2}, rng);

        Mat mean = Mat::Zero(4, 4);
        for (const Mat2& u1 : clifford_table())
            for (const Mat2& u2 : clifford_table()) {
                const Mat u = kron(to_mat(u1), to_mat(u2));
                const Mat rotated = u * rho.matrix * u.adjoint();
                for (std::uint32_t k = 0; k < 4; ++k) {
                    MeasurementRecord rec;
                    rec.unitary.per_qubit = {u1, u2};
                    rec.outcomes = {k};
                    const Snapshot s = snapshot_from_record(rec, {1, 2}, {1, 2});
                    mean += rotated(k, k).real() / 576.0 *
                            kron(to_mat(s.per_qubit[0]), to_mat(s.per_qubit[1]));
                }
            }
        CHECK((mean - rho.matrix).cwiseAbs().maxCoeff() < 1e-12);
    }

    TEST_CASE("snapshot site selection and restriction")
    {
        CounterRng rng(7);
        MeasurementRecord rec;
        rec.unitary.per_qubit = {sample_haar_su2(rng), sample_haar_su2(rng),
                                 sample_haar_su2(rng)};
        rec.outcomes = {5}; // bits 101 across three sites

        const Snapshot full = snapshot_from_record(rec, {2, 5, 7}, {2, 5, 7});

        SUBCASE("factor order follows the requested site order")
        {
            const Snapshot swapped = snapshot_from_record(rec, {2, 5, 7}, {7, 2});
            CHECK(to_mat(swapped.per_qubit[0]) == to_mat(full.per_qubit[2]));
            CHECK(to_mat(swapped.per_qubit[1]) == to_mat(full.per_qubit[0]));
        }

        SUBCASE("dropping a site is the partial trace")
        {
            const Snapshot sub = restrict_snapshot(full, {2, 7});
            const Mat dense3 =
                kron(kron(to_mat(full.per_qubit[0]), to_mat(full.per_qubit[1])),
                     to_mat(full.per_qubit[2]));
            const Mat traced = oracles::partial_trace_mixed(dense3, {2, 2, 2}, {1, 3});
            const Mat dense2 = kron(to_mat(sub.per_qubit[0]), to_mat(sub.per_qubit[1]));
            CHECK((traced - dense2).cwiseAbs().maxCoeff() < 1e-12);
        }

        SUBCASE("unknown sites are rejected")
        {
            CHECK_THROWS_AS(snapshot_from_record(rec, {2, 5, 7}, {4}), InvalidArgumentError);
            CHECK_THROWS_AS(restrict_snapshot(full, {9}), InvalidArgumentError);
            CHECK_THROWS_AS(snapshot_from_record(rec, {2, 5, 7}, {2, 2}), InvalidArgumentError);
        }
    }

    TEST_CASE("build snapshots covers every record and respects restriction")
    {
        const PureState ghz = make_ghz(3);
        const MeasurementDataset ds =
            generate_dataset(ghz, {1, 2, 3}, 12, 2, Ensemble::Clifford, 33);
        const std::vector<Snapshot> all = build_snapshots(ds, {1, 2, 3});
        const std::vector<Snapshot> some = build_snapshots(ds, {3, 1});
        REQUIRE(all.size() == 12);
        REQUIRE(some.size() == 12);
        CHECK(all[0].shots_averaged == 2);
        auto same_snapshot = [&](const Snapshot& x, const Snapshot& y) {
            if (x.sites != y.sites || x.per_qubit.size() != y.per_qubit.size() ||
                x.weights != y.weights || x.shots_averaged != y.shots_averaged)
                return false;
            for (size_t i = 0; i < x.per_qubit.size(); ++i)
                if (to_mat(x.per_qubit[i]) != to_mat(y.per_qubit[i]))
                    return false;
            return true;
        };
        for (size_t r = 0; r < all.size(); ++r) {
            // Building on a site subset equals restricting the full build,
            // term order, weights, and factor bytes included.
            CHECK(same_snapshot(some[r], restrict_snapshot(all[r], {3, 1})));
            CHECK(all[r].per_qubit.size() ==
                  static_cast<size_t>(all[r].n_terms()) * 3);
        }
        CHECK_THROWS_AS(build_snapshots(ds, {6}), InvalidArgumentError);
    }

    TEST_CASE("frozen kernel values on constant diagonal snapshots")
    {
        const Mat2 diag{2.0, 0.0, 0.0, -1.0};
        const std::vector<Snapshot> snaps(4, constant_snapshot({1, 2}, diag));
        const PartitionSpec part{{1}, {2}};

        // Per site: Tr(f^2) = 5, Tr(f^3) = 7, Tr(f^4) = 17; two sites square them.
        CHECK(estimate_p2(snaps, part).value == doctest::Approx(25.0).epsilon(1e-12));
        CHECK(estimate_p3(snaps, part).value == doctest::Approx(49.0).epsilon(1e-12));
        CHECK(estimate_s3(snaps, part).value == doctest::Approx(49.0).epsilon(1e-12));
        CHECK(estimate_pn(snaps, part, 4).value == doctest::Approx(289.0).epsilon(1e-12));

        // Identical snapshots leave nothing for the delete-one error to see.
        CHECK(estimate_p2(snaps, part).std_error < 1e-10);
        CHECK(estimate_p3(snaps, part).std_error < 1e-10);
    }

    TEST_CASE("factorized and dense paths agree with each other and the tuple average")
    {
        const std::vector<std::pair<std::vector<int>, PartitionSpec>> configs = {
            {{1, 2}, PartitionSpec{{1}, {2}}},
            {{1, 2, 3}, PartitionSpec{{1, 3}, {2}}},
        };
        std::uint64_t seed = 100;
        for (const auto& [sites, part] : configs) {
            for (int n = 2; n <= 4; ++n) {
                for (int m = std::max(3, n); m <= std::max(3, n) + 2; ++m) {
                    const std::vector<Snapshot> snaps = random_snapshots(m, sites, seed++);
                    EstimatorOptions fact, dense;
                    fact.path = EvalPath::Factorized;
                    dense.path = EvalPath::Dense;
                    const Estimate ef = n == 3 ? estimate_p3(snaps, part, fact)
                                               : estimate_pn(snaps, part, n, fact);
                    const Estimate ed = n == 3 ? estimate_p3(snaps, part, dense)
                                               : estimate_pn(snaps, part, n, dense);
                    check_close(ef.value, ed.value, 1e-9, "value fact vs dense");
                    check_close(ef.std_error, ed.std_error, 1e-9, "error fact vs dense");
                    const double ref = brute_force_moment(snaps, part, n, true);
                    check_close(ef.value, ref, 1e-9, "value vs tuple average");
                }
            }
            // Same cross-checks for the untransposed third moment.
            const std::vector<Snapshot> snaps = random_snapshots(6, sites, seed++);
            EstimatorOptions fact, dense;
            fact.path = EvalPath::Factorized;
            dense.path = EvalPath::Dense;
            const Estimate ef = estimate_s3(snaps, part, fact);
            const Estimate ed = estimate_s3(snaps, part, dense);
            check_close(ef.value, ed.value, 1e-9, "s3 fact vs dense");
            check_close(ef.std_error, ed.std_error, 1e-9, "s3 error fact vs dense");
            check_close(ef.value, brute_force_moment(snaps, part, 3, false), 1e-9,
                        "s3 vs tuple average");
        }
    }

    TEST_CASE("mixture snapshots evaluate identically on both paths")
    {
        const std::vector<int> sites{1, 2, 3};
        const PartitionSpec part{{1, 3}, {2}};
        std::uint64_t seed = 150;
        for (int n = 2; n <= 4; ++n) {
            const std::vector<Snapshot> snaps =
                random_mixture_snapshots(n + 2, sites, seed++, 3);
            EstimatorOptions fact, dense;
            fact.path = EvalPath::Factorized;
            dense.path = EvalPath::Dense;
            const Estimate ef =
                n == 3 ? estimate_p3(snaps, part, fact) : estimate_pn(snaps, part, n, fact);
            const Estimate ed =
                n == 3 ? estimate_p3(snaps, part, dense) : estimate_pn(snaps, part, n, dense);
            check_close(ef.value, ed.value, 1e-9, "mixture value fact vs dense");
            check_close(ef.std_error, ed.std_error, 1e-9, "mixture error fact vs dense");
            check_close(ef.value, brute_force_moment(snaps, part, n, true), 1e-9,
                        "mixture value vs tuple average");
            // Delete-one error against the literal recomputation on each path.
            for (const EvalPath path : {EvalPath::Factorized, EvalPath::Dense}) {
                EstimatorOptions opts;
                opts.path = path;
                const Statistic st =
                    n == 2 ? Statistic::P2 : n == 3 ? Statistic::P3 : Statistic::P4;
                check_close(run_stat(snaps, part, st, opts).std_error,
                            leave_one_out_error(snaps, part, st, path), 1e-9,
                            "mixture jackknife vs leave-one-out");
            }
        }
        const std::vector<Snapshot> snaps = random_mixture_snapshots(6, sites, seed++, 3);
        EstimatorOptions fact, dense;
        fact.path = EvalPath::Factorized;
        dense.path = EvalPath::Dense;
        check_close(estimate_s3(snaps, part, fact).value, estimate_s3(snaps, part, dense).value,
                    1e-9, "mixture s3 fact vs dense");
        check_close(estimate_s3(snaps, part, fact).value,
                    brute_force_moment(snaps, part, 3, false), 1e-9,
                    "mixture s3 vs tuple average");
    }

    TEST_CASE("kernels match the multicopy contraction oracle")
    {
        const std::vector<int> sites{1, 2, 3};
        const PartitionSpec part{{2}, {1, 3}};
        auto dense_plain = [&](const std::vector<Snapshot>& snaps) {
            std::vector<Mat> x;
            for (const Snapshot& s : snaps)
                x.push_back(dense_form(s, part, false));
            return x;
        };

        const std::vector<Snapshot> two = random_snapshots(2, sites, 500);
        CHECK(estimate_p2(two, part).value ==
              doctest::Approx(multicopy_pt_moment_oracle(dense_plain(two), part, 2))
                  .epsilon(1e-10));

        const std::vector<Snapshot> three = random_snapshots(3, sites, 501);
        CHECK(estimate_p3(three, part).value ==
              doctest::Approx(multicopy_pt_moment_oracle(dense_plain(three), part, 3))
                  .epsilon(1e-10));

        const std::vector<Snapshot> four = random_snapshots(4, sites, 502);
        const std::vector<Mat> x = dense_plain(four);
        const double oracle = (multicopy_pt_moment_oracle({x[0], x[1], x[2], x[3]}, part, 4) +
                               multicopy_pt_moment_oracle({x[0], x[1], x[3], x[2]}, part, 4) +
                               multicopy_pt_moment_oracle({x[0], x[2], x[1], x[3]}, part, 4)) /
                              3.0;
        CHECK(estimate_pn(four, part, 4).value == doctest::Approx(oracle).epsilon(1e-10));

        // Untransposed moment against a direct product trace.
        const std::vector<Mat> y = dense_plain(three);
        const cplx t = (y[0] * y[1] * y[2]).trace();
        CHECK(estimate_s3(three, part).value == doctest::Approx(t.real()).epsilon(1e-10));
    }

    TEST_CASE("jackknife error equals the literal leave one out recomputation")
    {
        const std::vector<int> sites{1, 2};
        const PartitionSpec part{{1}, {2}};
        std::uint64_t seed = 700;
        for (const Statistic st :
             {Statistic::P2, Statistic::P3, Statistic::S3, Statistic::P4}) {
            const int m = st == Statistic::P4 ? 6 : 7;
            const std::vector<Snapshot> snaps = random_snapshots(m, sites, seed++);
            for (const EvalPath path : {EvalPath::Factorized, EvalPath::Dense}) {
                EstimatorOptions opts;
                opts.path = path;
                const Estimate est = run_stat(snaps, part, st, opts);
                const double ref = leave_one_out_error(snaps, part, st, path);
                check_close(est.std_error, ref, 1e-9, "jackknife vs leave-one-out");
                CHECK(est.std_error ==
                      doctest::Approx(jackknife_error(snaps, part, st, opts)).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("estimators validate their inputs")
    {
        const std::vector<Snapshot> snaps = random_snapshots(5, {1, 2}, 900);
        const PartitionSpec part{{1}, {2}};

        CHECK_THROWS_AS(estimate_p2({}, part), InsufficientDataError);
        CHECK_THROWS_AS(estimate_p2({snaps[0]}, part), InsufficientDataError);
        CHECK_THROWS_AS(estimate_p3({snaps[0], snaps[1]}, part), InsufficientDataError);
        CHECK_THROWS_AS(estimate_pn(snaps, part, 5), UnsupportedOrderError);
        CHECK_THROWS_AS(estimate_pn(snaps, part, 1), UnsupportedOrderError);
        CHECK_THROWS_AS(estimate_pn(snaps, part, 0), UnsupportedOrderError);
        CHECK_THROWS_AS(estimate_p2(snaps, PartitionSpec{{1}, {3}}), InvalidArgumentError);
        CHECK_THROWS_AS(estimate_p2(snaps, PartitionSpec{{1}, {1, 2}}), InvalidArgumentError);
        CHECK_THROWS_AS(estimate_p2(snaps, PartitionSpec{{1, 2}, {}}), InvalidArgumentError);

        std::vector<Snapshot> mixed = snaps;
        mixed[3].sites = {1, 4};
        CHECK_THROWS_AS(estimate_p2(mixed, part), InvalidArgumentError);

        CHECK_THROWS_AS(jackknife_error({snaps[0], snaps[1]}, part, Statistic::P2),
                        InsufficientDataError);

        // Forced dense evaluation refuses oversized systems without touching them.
        std::vector<int> wide(13);
        for (int i = 0; i < 13; ++i)
            wide[static_cast<size_t>(i)] = i + 1;
        const std::vector<Snapshot> big(2, constant_snapshot(wide, Mat2{2.0, 0.0, 0.0, -1.0}));
        PartitionSpec wide_part;
        wide_part.a_sites = {1};
        wide_part.b_sites.assign(wide.begin() + 1, wide.end());
        EstimatorOptions dense;
        dense.path = EvalPath::Dense;
        CHECK_THROWS_AS(estimate_p2(big, wide_part, dense), ResourceLimitError);
        // The automatic path falls back to the factorized route instead.
        CHECK(estimate_p2(big, wide_part).value ==
              doctest::Approx(std::pow(5.0, 13)).epsilon(1e-12));
    }

    TEST_CASE("minimal record counts give a value with zero error")
    {
        const std::vector<Snapshot> snaps = random_snapshots(2, {1, 2}, 910);
        const PartitionSpec part{{1}, {2}};
        const Estimate est = estimate_p2(snaps, part);
        CHECK(est.std_error == 0.0);
        check_close(est.value, brute_force_moment(snaps, part, 2, true), 1e-12,
                    "single pair kernel");
        CHECK(est.m_used == 2);
    }

    TEST_CASE("estimate metadata reports the inputs")
    {
        const std::vector<Snapshot> snaps = simulate(make_ghz(2), {1, 2}, 8, 3, 41);
        const Estimate est = estimate_p3(snaps, PartitionSpec{{1}, {2}});
        CHECK(est.method == "u-statistic");
        CHECK(est.statistic == "p3");
        CHECK(est.m_used == 8);
        CHECK(est.p_used == 3);
        CHECK(estimate_s3(snaps, PartitionSpec{{1}, {2}}).statistic == "s3");
    }

    TEST_CASE("order dispatch matches the dedicated estimators")
    {
        const std::vector<Snapshot> snaps = random_snapshots(6, {1, 2}, 920);
        const PartitionSpec part{{1}, {2}};
        CHECK(estimate_pn(snaps, part, 2).value == estimate_p2(snaps, part).value);
        CHECK(estimate_pn(snaps, part, 3).value == estimate_p3(snaps, part).value);
        CHECK(estimate_pn(snaps, part, 2).std_error == estimate_p2(snaps, part).std_error);
    }

    TEST_CASE("estimates are invariant under snapshot order and side swap")
    {
        const std::vector<Snapshot> snaps = random_snapshots(9, {1, 2, 3}, 930);
        const PartitionSpec part{{1, 3}, {2}};
        const PartitionSpec swapped{{2}, {1, 3}};

        std::vector<Snapshot> shuffled = snaps;
        std::reverse(shuffled.begin(), shuffled.end());
        std::swap(shuffled[0], shuffled[4]);

        for (int n = 2; n <= 4; ++n) {
            const double a = estimate_pn(snaps, part, n).value;
            check_close(a, estimate_pn(shuffled, part, n).value, 1e-10, "order invariance");
            check_close(a, estimate_pn(snaps, swapped, n).value, 1e-12, "side swap invariance");
        }
    }

    TEST_CASE("values do not depend on the thread option")
    {
        const std::vector<Snapshot> snaps = random_snapshots(60, {1, 2}, 940);
        const PartitionSpec part{{1}, {2}};
        EstimatorOptions one, three;
        one.path = three.path = EvalPath::Factorized;
        one.threads = 1;
        three.threads = 3;
        for (const Statistic st : {Statistic::P2, Statistic::P3, Statistic::S3}) {
            const Estimate a = run_stat(snaps, part, st, one);
            const Estimate b = run_stat(snaps, part, st, three);
            CHECK(a.value == b.value);
            CHECK(a.std_error == b.std_error);
        }
    }

    TEST_CASE("sampled moments are unbiased on a bell pair")
    {
        const PureState bell = make_ghz(2);
        const PartitionSpec part{{1}, {2}};
        const int datasets = 200;
        const int m = 30;

        std::vector<std::vector<double>> values(4);
        for (int d = 0; d < datasets; ++d) {
            const std::vector<Snapshot> snaps =
                simulate(bell, {1, 2}, m, 1, 1000 + static_cast<std::uint64_t>(d));
            EstimatorOptions opts;
            opts.jackknife = false;
            values[0].push_back(estimate_p2(snaps, part, opts).value);
            values[1].push_back(estimate_p3(snaps, part, opts).value);
            values[2].push_back(estimate_s3(snaps, part, opts).value);
            values[3].push_back(estimate_pn(snaps, part, 4, opts).value);
        }

        const double expected[4] = {1.0, 0.25, 1.0, 0.25};
        const char* names[4] = {"p2", "p3", "s3", "p4"};
        for (int s = 0; s < 4; ++s) {
            double mean = 0.0;
            for (double v : values[static_cast<size_t>(s)])
                mean += v;
            mean /= datasets;
            double var = 0.0;
            for (double v : values[static_cast<size_t>(s)])
                var += (v - mean) * (v - mean);
            var /= datasets - 1;
            const double se_mean = std::sqrt(var / datasets);
            CHECK_MESSAGE(std::abs(mean - expected[s]) < 4.5 * se_mean + 1e-12,
                          names[s] << " mean " << mean << " se " << se_mean);
        }
    }

    TEST_CASE("multi shot rounds stay unbiased")
    {
        const PureState bell = make_ghz(2);
        const PartitionSpec part{{1}, {2}};
        const int datasets = 220;
        std::vector<double> p2_vals, p3_vals;
        for (int d = 0; d < datasets; ++d) {
            const std::vector<Snapshot> snaps =
                simulate(bell, {1, 2}, 25, 5, 2000 + static_cast<std::uint64_t>(d));
            EstimatorOptions opts;
            opts.jackknife = false;
            p2_vals.push_back(estimate_p2(snaps, part, opts).value);
            p3_vals.push_back(estimate_p3(snaps, part, opts).value);
        }
        auto check_mean = [&](const std::vector<double>& vals, double expected,
                              const char* name) {
            double mean = 0.0, m2 = 0.0;
            for (double v : vals)
                mean += v;
            mean /= static_cast<double>(vals.size());
            for (double v : vals)
                m2 += (v - mean) * (v - mean);
            const double se_mean =
                std::sqrt(m2 / (static_cast<double>(vals.size()) - 1.0) / vals.size());
            CHECK_MESSAGE(std::abs(mean - expected) < 3.0 * se_mean,
                          name << " mean " << mean << " se " << se_mean);
        };
        check_mean(p2_vals, 1.0, "p2");
        check_mean(p3_vals, 0.25, "p3");
    }

    TEST_CASE("haar rounds estimate the same moment as clifford rounds")
    {
        const PureState bell = make_ghz(2);
        const PartitionSpec part{{1}, {2}};
        const Estimate c =
            estimate_p2(simulate(bell, {1, 2}, 4000, 1, 77, Ensemble::Clifford), part);
        const Estimate h = estimate_p2(simulate(bell, {1, 2}, 4000, 1, 78, Ensemble::Haar), part);
        CHECK_MESSAGE(std::abs(c.value - 1.0) < 5.0 * c.std_error, "clifford " << c.value);
        CHECK_MESSAGE(std::abs(h.value - 1.0) < 5.0 * h.std_error, "haar " << h.value);
        CHECK(std::abs(c.value - h.value) <
              5.0 * std::sqrt(c.std_error * c.std_error + h.std_error * h.std_error));
    }

    TEST_CASE("third moment of a bell pair approaches one quarter")
    {
        const std::vector<Snapshot> snaps = simulate(make_ghz(2), {1, 2}, 3000, 1, 55);
        const Estimate est = estimate_p3(snaps, PartitionSpec{{1}, {2}});
        CHECK(est.std_error > 0.0);
        CHECK_MESSAGE(std::abs(est.value - 0.25) < 5.0 * est.std_error,
                      "p3 " << est.value << " se " << est.std_error);
        CHECK(std::abs(est.value - 0.25) < 0.1);
    }

    TEST_CASE("fourth moment of a bell pair approaches one quarter")
    {
        const std::vector<Snapshot> snaps = simulate(make_ghz(2), {1, 2}, 1500, 1, 56);
        const Estimate est = estimate_pn(snaps, PartitionSpec{{1}, {2}}, 4);
        CHECK(est.std_error > 0.0);
        CHECK_MESSAGE(std::abs(est.value - 0.25) < 5.0 * est.std_error,
                      "p4 " << est.value << " se " << est.std_error);
    }

    TEST_CASE("untransposed third moment sees purity")
    {
        SUBCASE("pure state gives one")
        {
            const std::vector<Snapshot> snaps = simulate(make_ghz(2), {1, 2}, 2000, 1, 57);
            const Estimate est = estimate_s3(snaps, PartitionSpec{{1}, {2}});
            CHECK_MESSAGE(std::abs(est.value - 1.0) < 5.0 * est.std_error, "s3 " << est.value);
        }
        SUBCASE("maximally mixed pair gives one sixteenth")
        {
            // Two bell pairs (1,2) and (3,4); sites 1 and 3 carry I/4.
            Vec amp = Vec::Zero(16);
            const double r = 0.5;
            for (int g12 : {0, 3})
                for (int g34 : {0, 3})
                    amp(g12 * 4 + g34) = r;
            const PureState state = state_from_amplitudes(amp);
            const std::vector<Snapshot> snaps = simulate(state, {1, 3}, 2500, 1, 58);
            const Estimate est = estimate_s3(snaps, PartitionSpec{{1}, {3}});
            CHECK_MESSAGE(std::abs(est.value - 0.0625) < 5.0 * est.std_error,
                          "s3 " << est.value << " se " << est.std_error);
        }
    }

    TEST_CASE("jackknife error tracks the spread across datasets")
    {
        const PureState bell = make_ghz(2);
        const PartitionSpec part{{1}, {2}};
        std::vector<double> values;
        double se_sum = 0.0;
        for (int d = 0; d < 60; ++d) {
            const std::vector<Snapshot> snaps =
                simulate(bell, {1, 2}, 300, 1, 3000 + static_cast<std::uint64_t>(d));
            const Estimate est = estimate_p2(snaps, part);
            values.push_back(est.value);
            se_sum += est.std_error;
        }
        double mean = 0.0;
        for (double v : values)
            mean += v;
        mean /= values.size();
        double var = 0.0;
        for (double v : values)
            var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / (values.size() - 1));
        const double se_avg = se_sum / values.size();
        CHECK_MESSAGE(sd / se_avg > 0.6, "sd " << sd << " se " << se_avg);
        CHECK_MESSAGE(sd / se_avg < 1.6, "sd " << sd << " se " << se_avg);
    }

    TEST_CASE("jackknife error shrinks roughly like the inverse square root")
    {
        const PureState bell = make_ghz(2);
        const PartitionSpec part{{1}, {2}};
        const double se_small =
            estimate_p2(simulate(bell, {1, 2}, 800, 1, 64), part).std_error;
        const double se_large =
            estimate_p2(simulate(bell, {1, 2}, 3200, 1, 65), part).std_error;
        const double ratio = se_large / se_small;
        CHECK_MESSAGE(ratio > 0.33, "ratio " << ratio);
        CHECK_MESSAGE(ratio < 0.72, "ratio " << ratio);
    }

    TEST_CASE("median of means with one group is the plain estimator")
    {
        const std::vector<Snapshot> snaps = random_snapshots(12, {1, 2}, 950);
        const PartitionSpec part{{1}, {2}};
        const Estimate mom = median_of_means(snaps, part, Statistic::P2, 1);
        EstimatorOptions opts;
        opts.jackknife = false;
        CHECK(mom.value == estimate_p2(snaps, part, opts).value);
        CHECK(mom.std_error == 0.0);
        CHECK(mom.method == "median-of-means");
    }

    TEST_CASE("median of means splits contiguous chunks with the extra up front")
    {
        const std::vector<Snapshot> snaps = random_snapshots(10, {1, 2}, 951);
        const PartitionSpec part{{1}, {2}};
        EstimatorOptions opts;
        opts.jackknife = false;

        // M = 10, k = 3 -> chunks of 4, 3, 3.
        std::vector<double> chunk_values;
        chunk_values.push_back(
            estimate_p2({snaps.begin(), snaps.begin() + 4}, part, opts).value);
        chunk_values.push_back(
            estimate_p2({snaps.begin() + 4, snaps.begin() + 7}, part, opts).value);
        chunk_values.push_back(
            estimate_p2({snaps.begin() + 7, snaps.end()}, part, opts).value);
        std::vector<double> sorted = chunk_values;
        std::sort(sorted.begin(), sorted.end());

        const Estimate mom = median_of_means(snaps, part, Statistic::P2, 3);
        CHECK(mom.value == sorted[1]);

        std::vector<double> dev;
        for (double v : chunk_values)
            dev.push_back(std::abs(v - sorted[1]));
        std::sort(dev.begin(), dev.end());
        CHECK(mom.std_error == doctest::Approx(1.4826 * dev[1] / std::sqrt(3.0)).epsilon(1e-12));
    }

    TEST_CASE("median of means rejects impossible groupings")
    {
        const std::vector<Snapshot> snaps = random_snapshots(10, {1, 2}, 952);
        const PartitionSpec part{{1}, {2}};
        CHECK_THROWS_AS(median_of_means(snaps, part, Statistic::P2, 0), InvalidArgumentError);
        CHECK_THROWS_AS(median_of_means(snaps, part, Statistic::P2, -2), InvalidArgumentError);
        CHECK_THROWS_AS(median_of_means(snaps, part, Statistic::P2, 6), InsufficientDataError);
        CHECK_THROWS_AS(median_of_means(snaps, part, Statistic::P3, 5), InsufficientDataError);
    }

    TEST_CASE("median of means shrugs off a corrupted block")
    {
        const PureState bell = make_ghz(2);
        const PartitionSpec part{{1}, {2}};
        std::vector<Snapshot> snaps = simulate(bell, {1, 2}, 2400, 1, 959);
        for (size_t r = 0; r < 240; ++r)
            for (Mat2& f : snaps[r].per_qubit)
                f = f * 5.0;

        EstimatorOptions opts;
        opts.jackknife = false;
        const double plain = estimate_p2(snaps, part, opts).value;
        const double robust = median_of_means(snaps, part, Statistic::P2, 12).value;
        CHECK_MESSAGE(plain - 1.0 > 1.5, "plain " << plain);
        CHECK_MESSAGE(std::abs(robust - 1.0) < 0.45, "robust " << robust);
    }

    TEST_CASE("mean state reconstruction")
    {
        SUBCASE("single snapshot is its tensor product")
        {
            const Mat2 diag{2.0, 0.0, 0.0, -1.0};
            const DensityMatrix rho = reconstruct_mean_state({constant_snapshot({1, 2}, diag)});
            REQUIRE(rho.dims == std::vector<int>{2, 2});
            const Mat want = kron(to_mat(diag), to_mat(diag));
            CHECK((rho.matrix - want).cwiseAbs().maxCoeff() == 0.0);
        }
        SUBCASE("sampled mean approaches the measured state")
        {
            const std::vector<Snapshot> snaps = simulate(make_ghz(2), {1, 2}, 20000, 1, 61);
            const DensityMatrix rho = reconstruct_mean_state(snaps);
            Mat bell = Mat::Zero(4, 4);
            bell(0, 0) = bell(0, 3) = bell(3, 0) = bell(3, 3) = 0.5;
            CHECK((rho.matrix - bell).cwiseAbs().maxCoeff() < 0.06);
            CHECK(std::abs(rho.matrix.trace() - cplx(1.0)) < 1e-10);
        }
        SUBCASE("input limits")
        {
            CHECK_THROWS_AS(reconstruct_mean_state({}), InsufficientDataError);
            std::vector<int> nine(9);
            for (int i = 0; i < 9; ++i)
                nine[static_cast<size_t>(i)] = i + 1;
            CHECK_THROWS_AS(
                reconstruct_mean_state({constant_snapshot(nine, Mat2::identity())}),
                ResourceLimitError);
        }
    }

    TEST_CASE("result lines serialize in the documented shape")
    {
        Estimate est;
        est.value = 0.5;
        est.std_error = 0.25;
        est.method = "u-statistic";
        est.m_used = 10;
        est.p_used = 1;
        est.statistic = "p2";
        const std::string line = estimate_json_line(est, PartitionSpec{{1, 2}, {3}}, 7);
        CHECK(line ==
              "{\"statistic\":\"p2\",\"partition\":{\"A\":[1,2],\"B\":[3]},\"value\":0.5,"
              "\"std_error\":0.25,\"m\":10,\"p\":1,\"method\":\"u-statistic\",\"seed\":7}");
    }
}
