#include "ptshadow/shadows.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <json.hpp>

#include "ptshadow/errors.hpp"
#include "ptshadow/parallel.hpp"

namespace ptshadow {

namespace {

// 3 u^dag |k><k| u - I; |k><k| u selects row `bit` of u.
Mat2 shot_term(const Mat2& u, int bit)
{
    const cplx r0 = bit ? u.c : u.a;
    const cplx r1 = bit ? u.d : u.b;
    return {3.0 * std::conj(r0) * r0 - 1.0, 3.0 * std::conj(r0) * r1,
            3.0 * std::conj(r1) * r0, 3.0 * std::conj(r1) * r1 - 1.0};
}

// Hermitize, then pin the trace to exactly 1 (each shot term has trace
// 3|row|^2 - 2 = 1 up to roundoff, so this is a no-op mathematically).
Mat2 finalize_factor(const Mat2& f)
{
    const cplx off = 0.5 * (f.b + std::conj(f.c));
    const double a00 = f.a.real();
    return {a00, off, std::conj(off), 1.0 - a00};
}

void check_distinct_sites(const std::vector<int>& sites)
{
    if (sites.empty())
        throw InvalidArgumentError("site list must be nonempty");
    std::set<int> seen(sites.begin(), sites.end());
    if (seen.size() != sites.size())
        throw InvalidArgumentError("site list must not repeat sites");
}

// ---------------------------------------------------------------------------
// Shared estimator state. A snapshot is a weighted sum of product terms;
// factors are flattened term-major (factor of global term t, site position q
// at f[t * l + q]), with off[r]..off[r+1] the term range of record r and a
// per-position flag marking membership in A.

struct EstimatorContext {
    int m = 0;
    int l = 0;
    int p_used = 1;
    std::vector<Mat2> f;
    std::vector<double> w;  // weight per term
    std::vector<int> off;   // m + 1 entries
    std::vector<char> in_a;
    double mean_terms = 1.0; // terms per record, averaged (path cost model)

    const Mat2* term_row(int t) const { return f.data() + static_cast<size_t>(t) * l; }
};

EstimatorContext make_context(const std::vector<Snapshot>& snaps, const PartitionSpec& part)
{
    check_partition(part);
    if (snaps.empty())
        throw InsufficientDataError("no snapshots given");

    const std::vector<int>& sites = snaps.front().sites;
    check_distinct_sites(sites);

    std::set<int> want(part.a_sites.begin(), part.a_sites.end());
    want.insert(part.b_sites.begin(), part.b_sites.end());
    if (want != std::set<int>(sites.begin(), sites.end()))
        throw InvalidArgumentError("partition must cover exactly the snapshot sites");

    EstimatorContext cx;
    cx.m = static_cast<int>(snaps.size());
    cx.l = static_cast<int>(sites.size());
    cx.p_used = snaps.front().shots_averaged;
    cx.in_a.resize(sites.size());
    for (size_t q = 0; q < sites.size(); ++q)
        cx.in_a[q] = std::find(part.a_sites.begin(), part.a_sites.end(), sites[q]) !=
                             part.a_sites.end()
                         ? 1
                         : 0;

    cx.off.reserve(snaps.size() + 1);
    cx.off.push_back(0);
    for (const Snapshot& s : snaps) {
        if (s.sites != sites)
            throw InvalidArgumentError("snapshots must share one site list");
        const int nt = s.n_terms();
        if (s.per_qubit.size() != static_cast<size_t>(nt) * sites.size())
            throw InvalidArgumentError("snapshot needs one factor per term and site");
        cx.f.insert(cx.f.end(), s.per_qubit.begin(), s.per_qubit.end());
        for (int t = 0; t < nt; ++t)
            cx.w.push_back(s.term_weight(t));
        cx.off.push_back(cx.off.back() + nt);
    }
    cx.mean_terms = static_cast<double>(cx.w.size()) / cx.m;
    return cx;
}

int statistic_order(Statistic s) { return s == Statistic::P2 ? 2 : s == Statistic::P4 ? 4 : 3; }

bool statistic_transposes(Statistic s) { return s != Statistic::S3; }

double falling(int m, int n)
{
    double v = 1.0;
    for (int i = 0; i < n; ++i)
        v *= m - i;
    return v;
}

// ---------------------------------------------------------------------------
// Evaluation-path choice. Deterministic in (statistic, M, |AB|, term counts)
// only.

constexpr int kDenseMaxSites = 12;           // 4096 x 4096 dense cap
constexpr double kDenseP4CacheEntries = double(1 << 24); // cached A_r + A_r^2

bool dense_feasible(Statistic stat, int m, int l)
{
    if (l > kDenseMaxSites)
        return false;
    if (stat == Statistic::P4 && 2.0 * m * std::pow(4.0, l) > kDenseP4CacheEntries)
        return false;
    return true;
}

EvalPath resolve_path(const EstimatorOptions& opts, Statistic stat, const EstimatorContext& cx)
{
    const int m = cx.m, l = cx.l;
    if (opts.path == EvalPath::Dense) {
        if (!dense_feasible(stat, m, l))
            throw ResourceLimitError("dense evaluation exceeds the size cap for this request");
        return EvalPath::Dense;
    }
    if (opts.path == EvalPath::Factorized)
        return EvalPath::Factorized;
    if (!dense_feasible(stat, m, l))
        return EvalPath::Factorized;

    const double md = m, ld = l, nt = cx.mean_terms;
    const double dim = std::pow(4.0, l);        // entries of a dense snapshot
    const double mm = std::pow(8.0, l);         // one dense matmul
    const double build = md * nt * dim * 4.0;   // mixture-sum construction
    double fact = 0.0, dense = 0.0;
    switch (statistic_order(stat)) {
    case 2:
        fact = 0.5 * md * md * ld * 30.0 * nt * nt;
        dense = build + md * 2.0 * dim * 4.0;
        break;
    case 3:
        fact = md * md * md / 6.0 * ld * 30.0 * nt * nt * nt +
               0.5 * md * md * ld * 80.0 * nt * nt;
        dense = build + md * 3.0 * mm;
        break;
    default:
        fact = md * md * md * md / 24.0 * ld * 500.0 * nt * nt * nt * nt;
        dense = build + 0.5 * md * md * mm + md * 8.0 * mm;
        break;
    }
    return dense <= fact ? EvalPath::Dense : EvalPath::Factorized;
}

// ---------------------------------------------------------------------------
// Factorized kernels.

struct UStatValue {
    double total = 0.0;            // sum of kernels over index subsets
    std::vector<double> per_index; // R_r = sum of kernels of subsets containing r
};

int block_count(int m) { return std::min(m, 64); }

template <typename BlockBody>
UStatValue run_blocks(int m, int threads, bool jackknife, const BlockBody& body)
{
    const int nb = block_count(m);
    std::vector<CompensatedSum> totals(static_cast<size_t>(nb));
    std::vector<std::vector<double>> index_sums;
    if (jackknife)
        index_sums.assign(static_cast<size_t>(nb), std::vector<double>(static_cast<size_t>(m)));

    for_each_block(nb, threads, [&](int b) {
        const int lo = static_cast<int>(static_cast<long long>(m) * b / nb);
        const int hi = static_cast<int>(static_cast<long long>(m) * (b + 1) / nb);
        double* r = jackknife ? index_sums[static_cast<size_t>(b)].data() : nullptr;
        body(lo, hi, totals[static_cast<size_t>(b)], r);
    });

    UStatValue out;
    CompensatedSum total;
    for (const CompensatedSum& t : totals)
        total.merge(t);
    out.total = total.value();
    if (jackknife) {
        out.per_index.resize(static_cast<size_t>(m));
        for (int r = 0; r < m; ++r) {
            CompensatedSum s;
            for (int b = 0; b < nb; ++b)
                s.add(index_sums[static_cast<size_t>(b)][static_cast<size_t>(r)]);
            out.per_index[static_cast<size_t>(r)] = s.value();
        }
    }
    return out;
}

UStatValue pair_sum_factorized(const EstimatorContext& cx, bool jackknife, int threads)
{
    const int m = cx.m, l = cx.l;
    return run_blocks(m, threads, jackknife,
                      [&](int lo, int hi, CompensatedSum& total, double* r) {
                          for (int i = lo; i < hi; ++i) {
                              for (int j = i + 1; j < m; ++j) {
                                  double w = 0.0;
                                  for (int ti = cx.off[i]; ti < cx.off[i + 1]; ++ti) {
                                      const Mat2* fi = cx.term_row(ti);
                                      for (int tj = cx.off[j]; tj < cx.off[j + 1]; ++tj) {
                                          const Mat2* fj = cx.term_row(tj);
                                          cplx prod = trace_mul(fi[0], fj[0]);
                                          for (int q = 1; q < l; ++q)
                                              prod *= trace_mul(fi[q], fj[q]);
                                          w += cx.w[static_cast<size_t>(ti)] *
                                               cx.w[static_cast<size_t>(tj)] * prod.real();
                                      }
                                  }
                                  total.add(w);
                                  if (r) {
                                      r[i] += w;
                                      r[j] += w;
                                  }
                              }
                          }
                      });
}

// Triple kernel, symmetrized: Re of prod_q Tr(front_q a_k,q), where front is
// a_j a_i on transposed positions (Tr(a_i^T a_j^T a_k^T) = Tr(a_j a_i a_k))
// and a_i a_j elsewhere. Fronts are built once per (i, j) term pair, then
// contracted against every term of every k.
UStatValue triple_sum_factorized(const EstimatorContext& cx, bool transpose_a, bool jackknife,
                                 int threads)
{
    const int m = cx.m, l = cx.l;
    return run_blocks(
        m, threads, jackknife, [&](int lo, int hi, CompensatedSum& total, double* r) {
            std::vector<Mat2> front;
            std::vector<double> fw;
            for (int i = lo; i < hi; ++i) {
                for (int j = i + 1; j < m; ++j) {
                    const int pairs = (cx.off[i + 1] - cx.off[i]) * (cx.off[j + 1] - cx.off[j]);
                    front.resize(static_cast<size_t>(pairs) * l);
                    fw.resize(static_cast<size_t>(pairs));
                    int idx = 0;
                    for (int ti = cx.off[i]; ti < cx.off[i + 1]; ++ti) {
                        const Mat2* fi = cx.term_row(ti);
                        for (int tj = cx.off[j]; tj < cx.off[j + 1]; ++tj) {
                            const Mat2* fj = cx.term_row(tj);
                            Mat2* dst = front.data() + static_cast<size_t>(idx) * l;
                            for (int q = 0; q < l; ++q)
                                dst[q] = (transpose_a && cx.in_a[static_cast<size_t>(q)])
                                             ? mul(fj[q], fi[q])
                                             : mul(fi[q], fj[q]);
                            fw[static_cast<size_t>(idx)] = cx.w[static_cast<size_t>(ti)] *
                                                           cx.w[static_cast<size_t>(tj)];
                            ++idx;
                        }
                    }
                    for (int k = j + 1; k < m; ++k) {
                        double w = 0.0;
                        for (int tk = cx.off[k]; tk < cx.off[k + 1]; ++tk) {
                            const Mat2* fk = cx.term_row(tk);
                            for (int p = 0; p < pairs; ++p) {
                                const Mat2* fr = front.data() + static_cast<size_t>(p) * l;
                                cplx prod = trace_mul(fr[0], fk[0]);
                                for (int q = 1; q < l; ++q)
                                    prod *= trace_mul(fr[q], fk[q]);
                                w += fw[static_cast<size_t>(p)] *
                                     cx.w[static_cast<size_t>(tk)] * prod.real();
                            }
                        }
                        total.add(w);
                        if (r) {
                            r[i] += w;
                            r[j] += w;
                            r[k] += w;
                        }
                    }
                }
            }
        });
}

// Order-4 kernel: mean over the three cyclic-and-reversal classes of the 24
// orderings; each class contributes the real part of one representative.
UStatValue quad_sum_factorized(const EstimatorContext& cx, bool jackknife, int threads)
{
    const int m = cx.m, l = cx.l;

    // Tr(a_w a_x a_y a_z) on plain positions; Tr(a_w^T a_x^T a_y^T a_z^T) =
    // Tr(a_z a_y a_x a_w) on transposed ones.
    auto site4 = [&](const Mat2& w, const Mat2& x, const Mat2& y, const Mat2& z, bool transposed) {
        return transposed ? trace_mul(mul(mul(z, y), x), w) : trace_mul(mul(mul(w, x), y), z);
    };
    auto ordering = [&](const Mat2* w, const Mat2* x, const Mat2* y, const Mat2* z) {
        cplx prod = 1.0;
        for (int q = 0; q < l; ++q)
            prod *= site4(w[q], x[q], y[q], z[q], cx.in_a[static_cast<size_t>(q)] != 0);
        return prod.real();
    };

    return run_blocks(
        m, threads, jackknife, [&](int lo, int hi, CompensatedSum& total, double* r) {
            for (int i = lo; i < hi; ++i) {
                for (int j = i + 1; j < m; ++j) {
                    for (int k = j + 1; k < m; ++k) {
                        for (int e = k + 1; e < m; ++e) {
                            double w = 0.0;
                            for (int ti = cx.off[i]; ti < cx.off[i + 1]; ++ti) {
                                const Mat2* fi = cx.term_row(ti);
                                for (int tj = cx.off[j]; tj < cx.off[j + 1]; ++tj) {
                                    const Mat2* fj = cx.term_row(tj);
                                    const double wij = cx.w[static_cast<size_t>(ti)] *
                                                       cx.w[static_cast<size_t>(tj)];
                                    for (int tk = cx.off[k]; tk < cx.off[k + 1]; ++tk) {
                                        const Mat2* fk = cx.term_row(tk);
                                        for (int te = cx.off[e]; te < cx.off[e + 1]; ++te) {
                                            const Mat2* fe = cx.term_row(te);
                                            w += wij * cx.w[static_cast<size_t>(tk)] *
                                                 cx.w[static_cast<size_t>(te)] *
                                                 (ordering(fi, fj, fk, fe) +
                                                  ordering(fi, fj, fe, fk) +
                                                  ordering(fi, fk, fj, fe)) /
                                                 3.0;
                                        }
                                    }
                                }
                            }
                            total.add(w);
                            if (r) {
                                r[i] += w;
                                r[j] += w;
                                r[k] += w;
                                r[e] += w;
                            }
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Dense kernels: stream partially transposed tensor products through power
// sums. Sequential by design (the reductions are matrix additions in record
// order), so results are trivially thread-count independent.

// Tr(X Y) = sum_{jk} X_jk Y_kj, no product formed.
double tr_prod(const Mat& x, const Mat& y)
{
    return (x.transpose().cwiseProduct(y)).sum().real();
}

Mat dense_snapshot(const EstimatorContext& cx, int r, bool transpose_a)
{
    const long d = 1L << cx.l;
    Mat out = Mat::Zero(d, d);
    for (int t = cx.off[r]; t < cx.off[r + 1]; ++t) {
        const Mat2* f = cx.term_row(t);
        Mat acc = Mat::Identity(1, 1) * cx.w[static_cast<size_t>(t)];
        for (int q = 0; q < cx.l; ++q) {
            const Mat2 g =
                (transpose_a && cx.in_a[static_cast<size_t>(q)]) ? f[q].transposed() : f[q];
            Mat next(acc.rows() * 2, acc.cols() * 2);
            next.topLeftCorner(acc.rows(), acc.cols()) = acc * g.a;
            next.topRightCorner(acc.rows(), acc.cols()) = acc * g.b;
            next.bottomLeftCorner(acc.rows(), acc.cols()) = acc * g.c;
            next.bottomRightCorner(acc.rows(), acc.cols()) = acc * g.d;
            acc = std::move(next);
        }
        out += acc;
    }
    return out;
}

UStatValue pair_sum_dense(const EstimatorContext& cx, bool jackknife)
{
    const int m = cx.m;
    const long d = 1L << cx.l;
    Mat s = Mat::Zero(d, d);
    std::vector<double> q(static_cast<size_t>(m));
    CompensatedSum q_total;
    for (int r = 0; r < m; ++r) {
        const Mat a = dense_snapshot(cx, r, true);
        s += a;
        q[static_cast<size_t>(r)] = tr_prod(a, a);
        q_total.add(q[static_cast<size_t>(r)]);
    }
    UStatValue out;
    out.total = 0.5 * (tr_prod(s, s) - q_total.value());
    if (jackknife) {
        // T - T_(r) = Tr(S A_r) - Tr(A_r^2); return it in per_index form.
        out.per_index.resize(static_cast<size_t>(m));
        for (int r = 0; r < m; ++r) {
            const Mat a = dense_snapshot(cx, r, true);
            out.per_index[static_cast<size_t>(r)] = tr_prod(s, a) - q[static_cast<size_t>(r)];
        }
    }
    return out;
}

UStatValue triple_sum_dense(const EstimatorContext& cx, bool transpose_a, bool jackknife)
{
    const int m = cx.m;
    const long d = 1L << cx.l;
    Mat s = Mat::Zero(d, d);
    Mat qm = Mat::Zero(d, d);
    std::vector<double> c(static_cast<size_t>(m));
    CompensatedSum c_total;
    for (int r = 0; r < m; ++r) {
        const Mat a = dense_snapshot(cx, r, transpose_a);
        const Mat a2 = a * a;
        s += a;
        qm += a2;
        c[static_cast<size_t>(r)] = tr_prod(a2, a);
        c_total.add(c[static_cast<size_t>(r)]);
    }
    const Mat s2 = s * s;
    const double tr_s3 = tr_prod(s2, s);
    const double tr_qs = tr_prod(qm, s);

    UStatValue out;
    out.total = (tr_s3 - 3.0 * tr_qs + 2.0 * c_total.value()) / 6.0;
    if (jackknife) {
        // T - T_(r) = Tr(S^2 A_r)/2 - Tr(S A_r^2) - Tr(Q A_r)/2 + Tr(A_r^3).
        out.per_index.resize(static_cast<size_t>(m));
        for (int r = 0; r < m; ++r) {
            const Mat a = dense_snapshot(cx, r, transpose_a);
            const Mat a2 = a * a;
            out.per_index[static_cast<size_t>(r)] = 0.5 * tr_prod(s2, a) - tr_prod(s, a2) -
                                                    0.5 * tr_prod(qm, a) +
                                                    c[static_cast<size_t>(r)];
        }
    }
    return out;
}

// Order 4 by inclusion-exclusion over the index-coincidence patterns of
// sum_{a,b,c,d distinct} Tr(A_a A_b A_c A_d):
//   W = Tr(S^4) - 4 Tr(Q S^2) - 2 D2 + 2 Tr(Q^2) + E2 + 8 Tr(C S) - 6 F4
// with S = sum A, Q = sum A^2, C = sum A^3, D2 = sum_r Tr(A_r S A_r S),
// E2 = sum_{r,t} Tr[(A_r A_t)^2], F4 = sum_r Tr(A_r^4). The plain U-statistic
// sum over unordered subsets with the 24-ordering average equals W / 24.
UStatValue quad_sum_dense(const EstimatorContext& cx, bool jackknife)
{
    const int m = cx.m;
    const long d = 1L << cx.l;
    const size_t mu = static_cast<size_t>(m);

    std::vector<Mat> a(mu), a2(mu);
    Mat s = Mat::Zero(d, d), qm = Mat::Zero(d, d), cm = Mat::Zero(d, d);
    std::vector<double> f4(mu);
    for (int r = 0; r < m; ++r) {
        a[static_cast<size_t>(r)] = dense_snapshot(cx, r, true);
        const Mat& ar = a[static_cast<size_t>(r)];
        a2[static_cast<size_t>(r)] = ar * ar;
        const Mat& ar2 = a2[static_cast<size_t>(r)];
        s += ar;
        qm += ar2;
        cm += ar2 * ar;
        f4[static_cast<size_t>(r)] = tr_prod(ar2, ar2);
    }
    const Mat s2 = s * s;
    const Mat s3 = s2 * s;
    const Mat qs = qm * s;
    const Mat sq = s * qm;

    const double t1 = tr_prod(s2, s2);
    const double t2 = tr_prod(qm, s2);
    const double t4 = tr_prod(qm, qm);
    const double t6 = tr_prod(cm, s);
    CompensatedSum t7;
    for (int r = 0; r < m; ++r)
        t7.add(f4[static_cast<size_t>(r)]);

    // D2 pass; G = sum_r A_r S A_r feeds the jackknife.
    Mat g = Mat::Zero(d, d);
    std::vector<double> d2(mu);
    CompensatedSum d2_total;
    for (int r = 0; r < m; ++r) {
        const Mat z = a[static_cast<size_t>(r)] * s;
        d2[static_cast<size_t>(r)] = tr_prod(z, z);
        d2_total.add(d2[static_cast<size_t>(r)]);
        if (jackknife)
            g += z * a[static_cast<size_t>(r)];
    }

    // E2 pass over unordered pairs; per-index row sums feed the jackknife.
    std::vector<double> e2(f4);
    for (int i = 0; i < m; ++i)
        for (int k = i + 1; k < m; ++k) {
            const Mat b = a[static_cast<size_t>(i)] * a[static_cast<size_t>(k)];
            const double val = tr_prod(b, b);
            e2[static_cast<size_t>(i)] += val;
            e2[static_cast<size_t>(k)] += val;
        }
    CompensatedSum e2_total;
    for (int r = 0; r < m; ++r)
        e2_total.add(e2[static_cast<size_t>(r)]);

    const double big_d2 = d2_total.value();
    const double big_e2 = e2_total.value();
    const double big_f4 = t7.value();
    const double w =
        t1 - 4.0 * t2 - 2.0 * big_d2 + 2.0 * t4 + big_e2 + 8.0 * t6 - 6.0 * big_f4;

    UStatValue out;
    out.total = w / 24.0; // sum over unordered subsets of the ordering-averaged kernel

    if (jackknife) {
        out.per_index.resize(mu);
        for (int r = 0; r < m; ++r) {
            const Mat& ar = a[static_cast<size_t>(r)];
            const Mat& ar2 = a2[static_cast<size_t>(r)];
            const Mat z = ar * s;
            const double tr_s3a = tr_prod(s3, ar);
            const double tr_s2a2 = tr_prod(s2, ar2);
            const double tr_sa3 = tr_prod(z, ar2); // Tr(A S A^2) = Tr(S A^3)
            const double tr_zz = d2[static_cast<size_t>(r)];
            const double tr_qsa = tr_prod(qs, ar);
            const double tr_qas = tr_prod(sq, ar); // Tr(Q A S) = Tr(S Q A)
            const double tr_qa2 = tr_prod(qm, ar2);
            const double tr_ga = tr_prod(g, ar);
            const double tr_ca = tr_prod(cm, ar);
            const double fr = f4[static_cast<size_t>(r)];
            const double er = e2[static_cast<size_t>(r)];

            const double t1_r =
                t1 - 4.0 * tr_s3a + 4.0 * tr_s2a2 + 2.0 * tr_zz - 4.0 * tr_sa3 + fr;
            const double t2_r =
                t2 - tr_qsa - tr_qas + tr_qa2 - tr_s2a2 + 2.0 * tr_sa3 - fr;
            const double t3_r =
                big_d2 - tr_zz - 2.0 * tr_ga + 2.0 * tr_sa3 + er - fr;
            const double t4_r = t4 - 2.0 * tr_qa2 + fr;
            const double t5_r = big_e2 - 2.0 * er + fr;
            const double t6_r = t6 - tr_ca - tr_sa3 + fr;
            const double t7_r = big_f4 - fr;

            const double w_r =
                t1_r - 4.0 * t2_r - 2.0 * t3_r + 2.0 * t4_r + t5_r + 8.0 * t6_r - 6.0 * t7_r;
            // Stored as T - T_(r), matching the factorized per-index sums.
            out.per_index[static_cast<size_t>(r)] = (w - w_r) / 24.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Assembly: value + jackknife std_error from the subset sums.

double jackknife_se(double total, const std::vector<double>& removed, int m, int order)
{
    // removed[r] = T - T_(r); theta_(r) = T_(r) / C(m-1, order).
    const double denom = falling(m - 1, order) / falling(order, order);
    std::vector<double> theta(removed.size());
    CompensatedSum mean;
    for (size_t r = 0; r < removed.size(); ++r) {
        theta[r] = (total - removed[r]) / denom;
        mean.add(theta[r]);
    }
    const double mu = mean.value() / m;
    CompensatedSum ss;
    for (double t : theta)
        ss.add((t - mu) * (t - mu));
    return std::sqrt(std::max(0.0, (m - 1.0) / m * ss.value()));
}

UStatValue evaluate(const EstimatorContext& cx, Statistic stat, EvalPath path, bool jackknife,
                    int threads)
{
    const bool tp = statistic_transposes(stat);
    if (path == EvalPath::Dense) {
        switch (statistic_order(stat)) {
        case 2:
            return pair_sum_dense(cx, jackknife);
        case 3:
            return triple_sum_dense(cx, tp, jackknife);
        default:
            return quad_sum_dense(cx, jackknife);
        }
    }
    switch (statistic_order(stat)) {
    case 2:
        return pair_sum_factorized(cx, jackknife, threads);
    case 3:
        return triple_sum_factorized(cx, tp, jackknife, threads);
    default:
        // Per-index sums over subsets containing r equal T - T_(r), the same
        // convention the dense paths report.
        return quad_sum_factorized(cx, jackknife, threads);
    }
}

Estimate run_estimator(const std::vector<Snapshot>& snaps, const PartitionSpec& part,
                       Statistic stat, const EstimatorOptions& opts)
{
    const EstimatorContext cx = make_context(snaps, part);
    const int order = statistic_order(stat);
    if (cx.m < order)
        throw InsufficientDataError(statistic_name(stat) + " needs at least " +
                                    std::to_string(order) + " records, got " +
                                    std::to_string(cx.m));

    const EvalPath path = resolve_path(opts, stat, cx);
    const bool jack = opts.jackknife && cx.m > order;
    const UStatValue v = evaluate(cx, stat, path, jack, opts.threads);

    Estimate est;
    est.value = v.total / (falling(cx.m, order) / falling(order, order));
    est.std_error = jack ? jackknife_se(v.total, v.per_index, cx.m, order) : 0.0;
    est.method = "u-statistic";
    est.m_used = cx.m;
    est.p_used = cx.p_used;
    est.statistic = statistic_name(stat);
    return est;
}

} // namespace

std::string statistic_name(Statistic s)
{
    switch (s) {
    case Statistic::P2:
        return "p2";
    case Statistic::P3:
        return "p3";
    case Statistic::S3:
        return "s3";
    case Statistic::P4:
        return "p4";
    }
    throw InvalidArgumentError("unknown statistic");
}

Snapshot snapshot_from_record(const MeasurementRecord& record,
                              const std::vector<int>& record_sites,
                              const std::vector<int>& sites)
{
    if (record.unitary.per_qubit.size() != record_sites.size())
        throw InvalidArgumentError("record needs one unitary factor per measured site");
    if (record.outcomes.empty())
        throw InvalidArgumentError("record has no outcomes");
    check_distinct_sites(record_sites);
    check_distinct_sites(sites);

    const int l = static_cast<int>(record_sites.size());
    const int p = static_cast<int>(record.outcomes.size());

    // Column position of each requested site within the record.
    std::vector<int> cols;
    cols.reserve(sites.size());
    for (int site : sites) {
        const auto it = std::find(record_sites.begin(), record_sites.end(), site);
        if (it == record_sites.end())
            throw InvalidArgumentError("site " + std::to_string(site) +
                                       " was not measured in this record");
        cols.push_back(static_cast<int>(it - record_sites.begin()));
    }

    Snapshot snap;
    snap.sites = sites;
    snap.shots_averaged = p;

    if (sites.size() == 1) {
        // One site: the shot average of products is the product of the
        // average, so collapse to a single mean factor.
        const int j = cols.front();
        const Mat2& u = record.unitary.per_qubit[static_cast<size_t>(j)];
        Mat2 sum = Mat2::zero();
        for (std::uint32_t code : record.outcomes)
            sum += shot_term(u, static_cast<int>((code >> (l - 1 - j)) & 1u));
        snap.per_qubit.push_back(finalize_factor(sum * (1.0 / p)));
        return snap;
    }

    // One product term per distinct outcome pattern on the kept sites,
    // weighted by its shot frequency (first-appearance order).
    std::vector<std::uint32_t> patterns;
    std::vector<int> counts;
    for (std::uint32_t code : record.outcomes) {
        std::uint32_t pat = 0;
        for (size_t q = 0; q < cols.size(); ++q)
            pat |= ((code >> (l - 1 - cols[q])) & 1u) << q;
        const auto it = std::find(patterns.begin(), patterns.end(), pat);
        if (it == patterns.end()) {
            patterns.push_back(pat);
            counts.push_back(1);
        } else {
            ++counts[static_cast<size_t>(it - patterns.begin())];
        }
    }

    snap.per_qubit.reserve(patterns.size() * sites.size());
    snap.weights.reserve(patterns.size());
    for (size_t t = 0; t < patterns.size(); ++t) {
        for (size_t q = 0; q < cols.size(); ++q) {
            const Mat2& u = record.unitary.per_qubit[static_cast<size_t>(cols[q])];
            snap.per_qubit.push_back(
                finalize_factor(shot_term(u, static_cast<int>((patterns[t] >> q) & 1u))));
        }
        snap.weights.push_back(static_cast<double>(counts[t]) / p);
    }
    if (snap.weights.size() == 1)
        snap.weights.clear(); // canonical single-term form (weight exactly 1)
    return snap;
}

Snapshot restrict_snapshot(const Snapshot& snap, const std::vector<int>& sites)
{
    check_distinct_sites(sites);
    const size_t l_old = snap.sites.size();
    const int nt = snap.n_terms();
    if (snap.per_qubit.size() != static_cast<size_t>(nt) * l_old)
        throw InvalidArgumentError("snapshot needs one factor per term and site");

    std::vector<size_t> pos;
    pos.reserve(sites.size());
    for (int site : sites) {
        const auto it = std::find(snap.sites.begin(), snap.sites.end(), site);
        if (it == snap.sites.end())
            throw InvalidArgumentError("site " + std::to_string(site) + " is not in the snapshot");
        pos.push_back(static_cast<size_t>(it - snap.sites.begin()));
    }

    const size_t l_new = sites.size();
    auto same_factor = [](const Mat2& x, const Mat2& y) {
        return x.a == y.a && x.b == y.b && x.c == y.c && x.d == y.d;
    };

    Snapshot out;
    out.sites = sites;
    out.shots_averaged = snap.shots_averaged;
    std::vector<double> wts;
    for (int t = 0; t < nt; ++t) {
        const Mat2* src = snap.per_qubit.data() + static_cast<size_t>(t) * l_old;
        // Dropping a trace-1 factor is the partial trace over its site; terms
        // that restrict to the same product merge exactly by adding weights.
        int found = -1;
        for (size_t u = 0; u < wts.size() && found < 0; ++u) {
            bool equal = true;
            for (size_t q = 0; q < l_new && equal; ++q)
                equal = same_factor(out.per_qubit[u * l_new + q], src[pos[q]]);
            if (equal)
                found = static_cast<int>(u);
        }
        if (found >= 0) {
            wts[static_cast<size_t>(found)] += snap.term_weight(t);
        } else {
            for (size_t q = 0; q < l_new; ++q)
                out.per_qubit.push_back(src[pos[q]]);
            wts.push_back(snap.term_weight(t));
        }
    }

    if (l_new == 1 && wts.size() > 1) {
        // Single site: collapse the mixture to its (exact) mean factor.
        Mat2 mean = Mat2::zero();
        for (size_t u = 0; u < wts.size(); ++u)
            mean += out.per_qubit[u] * wts[u];
        out.per_qubit.assign(1, mean);
        wts.assign(1, 1.0);
    }
    if (wts.size() > 1)
        out.weights = std::move(wts);
    return out;
}

std::vector<Snapshot> build_snapshots(const MeasurementDataset& ds, const std::vector<int>& sites,
                                      int threads)
{
    check_distinct_sites(ds.site_list);
    check_distinct_sites(sites);
    for (int site : sites)
        if (std::find(ds.site_list.begin(), ds.site_list.end(), site) == ds.site_list.end())
            throw InvalidArgumentError("site " + std::to_string(site) +
                                       " was not measured in this dataset");
    for (const MeasurementRecord& rec : ds.records) {
        if (rec.unitary.per_qubit.size() != ds.site_list.size())
            throw InvalidArgumentError("record needs one unitary factor per measured site");
        if (rec.outcomes.empty())
            throw InvalidArgumentError("record has no outcomes");
    }

    std::vector<Snapshot> snaps(ds.records.size());
    for_each_block(static_cast<int>(ds.records.size()), threads, [&](int r) {
        snaps[static_cast<size_t>(r)] =
            snapshot_from_record(ds.records[static_cast<size_t>(r)], ds.site_list, sites);
    });
    return snaps;
}

Estimate estimate_p2(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                     const EstimatorOptions& opts)
{
    return run_estimator(snapshots, partition, Statistic::P2, opts);
}

Estimate estimate_p3(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                     const EstimatorOptions& opts)
{
    return run_estimator(snapshots, partition, Statistic::P3, opts);
}

Estimate estimate_s3(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                     const EstimatorOptions& opts)
{
    return run_estimator(snapshots, partition, Statistic::S3, opts);
}

Estimate estimate_pn(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition, int n,
                     const EstimatorOptions& opts)
{
    switch (n) {
    case 2:
        return estimate_p2(snapshots, partition, opts);
    case 3:
        return estimate_p3(snapshots, partition, opts);
    case 4:
        return run_estimator(snapshots, partition, Statistic::P4, opts);
    default:
        throw UnsupportedOrderError("moment order " + std::to_string(n) +
                                    " is not supported (use 2, 3, or 4)");
    }
}

double jackknife_error(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                       Statistic stat, const EstimatorOptions& opts)
{
    const int order = statistic_order(stat);
    if (static_cast<int>(snapshots.size()) < order + 1)
        throw InsufficientDataError("jackknife needs at least " + std::to_string(order + 1) +
                                    " records");
    EstimatorOptions o = opts;
    o.jackknife = true;
    return run_estimator(snapshots, partition, stat, o).std_error;
}

Estimate median_of_means(const std::vector<Snapshot>& snapshots, const PartitionSpec& partition,
                         Statistic stat, int k_groups, const EstimatorOptions& opts)
{
    const int m = static_cast<int>(snapshots.size());
    const int order = statistic_order(stat);
    if (k_groups < 1)
        throw InvalidArgumentError("k_groups must be >= 1");
    if (m / k_groups < order)
        throw InsufficientDataError("chunks of " + std::to_string(m / k_groups) +
                                    " records cannot support order " + std::to_string(order));

    EstimatorOptions chunk_opts = opts;
    chunk_opts.jackknife = false;

    const int base = m / k_groups;
    const int extra = m % k_groups;
    std::vector<double> values(static_cast<size_t>(k_groups));
    int offset = 0;
    int p_used = snapshots.front().shots_averaged;
    for (int g = 0; g < k_groups; ++g) {
        const int size = base + (g < extra ? 1 : 0);
        const std::vector<Snapshot> chunk(snapshots.begin() + offset,
                                          snapshots.begin() + offset + size);
        values[static_cast<size_t>(g)] = run_estimator(chunk, partition, stat, chunk_opts).value;
        offset += size;
    }

    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    const double med = median_of(values);
    std::vector<double> dev(values.size());
    for (size_t i = 0; i < values.size(); ++i)
        dev[i] = std::abs(values[i] - med);
    const double mad = median_of(dev);

    Estimate est;
    est.value = med;
    est.std_error = 1.4826 * mad / std::sqrt(static_cast<double>(k_groups));
    est.method = "median-of-means";
    est.m_used = m;
    est.p_used = p_used;
    est.statistic = statistic_name(stat);
    return est;
}

DensityMatrix reconstruct_mean_state(const std::vector<Snapshot>& snapshots)
{
    if (snapshots.empty())
        throw InsufficientDataError("no snapshots given");
    const std::vector<int>& sites = snapshots.front().sites;
    check_distinct_sites(sites);
    if (sites.size() > 8)
        throw ResourceLimitError("mean-state reconstruction is capped at 8 sites");

    const long d = 1L << sites.size();
    Mat acc = Mat::Zero(d, d);
    for (const Snapshot& s : snapshots) {
        if (s.sites != sites)
            throw InvalidArgumentError("snapshots must share one site list");
        const int nt = s.n_terms();
        if (s.per_qubit.size() != static_cast<size_t>(nt) * sites.size())
            throw InvalidArgumentError("snapshot needs one factor per term and site");
        for (int term = 0; term < nt; ++term) {
            Mat t = Mat::Identity(1, 1) * s.term_weight(term);
            for (size_t q = 0; q < sites.size(); ++q) {
                const Mat2& g = s.per_qubit[static_cast<size_t>(term) * sites.size() + q];
                Mat next(t.rows() * 2, t.cols() * 2);
                next.topLeftCorner(t.rows(), t.cols()) = t * g.a;
                next.topRightCorner(t.rows(), t.cols()) = t * g.b;
                next.bottomLeftCorner(t.rows(), t.cols()) = t * g.c;
                next.bottomRightCorner(t.rows(), t.cols()) = t * g.d;
                t = std::move(next);
            }
            acc += t;
        }
    }
    acc /= static_cast<double>(snapshots.size());

    DensityMatrix rho;
    rho.dims.assign(sites.size(), 2);
    rho.matrix = std::move(acc);
    return rho;
}

std::string estimate_json_line(const Estimate& est, const PartitionSpec& partition,
                               std::uint64_t seed)
{
    nlohmann::ordered_json j;
    j["statistic"] = est.statistic;
    nlohmann::ordered_json p;
    p["A"] = partition.a_sites;
    p["B"] = partition.b_sites;
    j["partition"] = std::move(p);
    j["value"] = est.value;
    j["std_error"] = est.std_error;
    j["m"] = est.m_used;
    j["p"] = est.p_used;
    j["method"] = est.method;
    j["seed"] = seed;
    return j.dump();
}

} // namespace ptshadow
