#include "ptshadow/multicopy.hpp"

#include <set>

namespace ptshadow {

namespace {

Eigen::Index copy_dim(const std::vector<int>& dims)
{
    Eigen::Index d = 1;
    for (int x : dims) {
        if (x < 2)
            throw InvalidArgumentError("axis dimension must be >= 2");
        d *= x;
    }
    return d;
}

void check_subset(const std::vector<int>& subset_axes, int n_axes)
{
    if (subset_axes.empty())
        throw InvalidArgumentError("permutation subset must be nonempty");
    std::set<int> seen;
    for (int s : subset_axes)
        if (s < 1 || s > n_axes || !seen.insert(s).second)
            throw InvalidArgumentError("permutation subset labels invalid");
}

} // namespace

std::vector<Eigen::Index> copy_cycle_index_map(const std::vector<int>& dims,
                                               const std::vector<int>& subset_axes, int n_copies,
                                               int step)
{
    if (n_copies < 2)
        throw InvalidArgumentError("need at least 2 copies");
    check_subset(subset_axes, static_cast<int>(dims.size()));

    const Eigen::Index d = copy_dim(dims);
    Eigen::Index total = 1;
    for (int c = 0; c < n_copies; ++c) {
        if (total > (Eigen::Index(1) << 24) / d)
            throw ResourceLimitError("copy space exceeds dense cap");
        total *= d;
    }

    // Per-copy strides: copy 1 is the most significant digit group, matching
    // the site-1-most-significant convention inside each copy.
    std::vector<Eigen::Index> copy_strides(static_cast<size_t>(n_copies));
    {
        Eigen::Index s = 1;
        for (int c = n_copies - 1; c >= 0; --c) {
            copy_strides[static_cast<size_t>(c)] = s;
            s *= d;
        }
    }
    // Within-copy strides for the subset axes.
    std::vector<Eigen::Index> axis_strides(dims.size());
    {
        Eigen::Index s = 1;
        for (size_t j = dims.size(); j-- > 0;) {
            axis_strides[j] = s;
            s *= dims[j];
        }
    }

    const int nshift = ((step % n_copies) + n_copies) % n_copies;

    std::vector<Eigen::Index> sigma(static_cast<size_t>(total));
    std::vector<Eigen::Index> local(static_cast<size_t>(n_copies));
    for (Eigen::Index y = 0; y < total; ++y) {
        Eigen::Index tmp = y;
        for (size_t c = static_cast<size_t>(n_copies); c-- > 0;) {
            local[c] = tmp % d;
            tmp /= d;
        }
        Eigen::Index z = y;
        // Move subset digits of copy c to copy (c + step) mod n.
        for (int c = 0; c < n_copies; ++c) {
            const int dest = (c + nshift) % n_copies;
            if (dest == c)
                continue;
            for (int axis : subset_axes) {
                const Eigen::Index stride = axis_strides[static_cast<size_t>(axis - 1)];
                const int dim_a = dims[static_cast<size_t>(axis - 1)];
                const Eigen::Index digit_src = (local[static_cast<size_t>(c)] / stride) % dim_a;
                const Eigen::Index digit_dst = (local[static_cast<size_t>(dest)] / stride) % dim_a;
                z += (digit_src - digit_dst) * stride * copy_strides[static_cast<size_t>(dest)];
            }
        }
        sigma[static_cast<size_t>(y)] = z;
    }
    return sigma;
}

Mat copy_cycle_operator(const std::vector<int>& dims, const std::vector<int>& subset_axes,
                        int n_copies, int step)
{
    const std::vector<Eigen::Index> sigma = copy_cycle_index_map(dims, subset_axes, n_copies, step);
    const Eigen::Index total = static_cast<Eigen::Index>(sigma.size());
    if (total > 4096)
        throw ResourceLimitError("dense permutation operator too large");
    Mat p = Mat::Zero(total, total);
    for (Eigen::Index y = 0; y < total; ++y)
        p(sigma[static_cast<size_t>(y)], y) = 1.0;
    return p;
}

cplx multicopy_contraction(const std::vector<Mat>& factors, const std::vector<int>& dims,
                           const PartitionSpec& partition)
{
    const int n = static_cast<int>(factors.size());
    if (n < 2)
        throw InvalidArgumentError("need at least 2 factors");
    const Eigen::Index d = copy_dim(dims);
    for (const Mat& x : factors)
        if (x.rows() != d || x.cols() != d)
            throw InvalidArgumentError("factor dimensions do not match dims");
    check_partition_covers(partition, static_cast<int>(dims.size()));

    // Dense-size cap: the contraction touches (d^n)^2 tensor entries.
    {
        double entries = 1.0;
        for (int c = 0; c < 2 * n; ++c)
            entries *= static_cast<double>(d);
        if (entries > 16777216.0)
            throw ResourceLimitError("multicopy contraction exceeds 2^24 dense entries");
    }

    const std::vector<Eigen::Index> fwd_a = copy_cycle_index_map(dims, partition.a_sites, n, +1);
    const std::vector<Eigen::Index> bwd_b = copy_cycle_index_map(dims, partition.b_sites, n, -1);

    const Eigen::Index total = static_cast<Eigen::Index>(fwd_a.size());

    // Composite image sigma = fwd_a o bwd_b (disjoint digit groups commute),
    // then invert: Tr[P (X_1 x...x X_n)] = sum_x (x-th column picked at row
    // sigma^{-1}(x)) = sum_x prod_c X_c[row digits, col digits].
    std::vector<Eigen::Index> sigma_inv(static_cast<size_t>(total));
    for (Eigen::Index y = 0; y < total; ++y) {
        const Eigen::Index img = bwd_b[static_cast<size_t>(fwd_a[static_cast<size_t>(y)])];
        sigma_inv[static_cast<size_t>(img)] = y;
    }

    cplx acc = 0.0;
    std::vector<Eigen::Index> row_digits(static_cast<size_t>(n)), col_digits(static_cast<size_t>(n));
    for (Eigen::Index x = 0; x < total; ++x) {
        Eigen::Index r = sigma_inv[static_cast<size_t>(x)];
        Eigen::Index c = x;
        for (size_t k = static_cast<size_t>(n); k-- > 0;) {
            row_digits[k] = r % d;
            col_digits[k] = c % d;
            r /= d;
            c /= d;
        }
        cplx term = 1.0;
        for (size_t k = 0; k < static_cast<size_t>(n); ++k)
            term *= factors[k](row_digits[k], col_digits[k]);
        acc += term;
    }
    return acc;
}

double multicopy_pt_moment_oracle(const std::vector<Mat>& factors, const std::vector<int>& dims,
                                  const PartitionSpec& partition, int n)
{
    if (n < 2 || n > 4)
        throw InvalidArgumentError("multicopy oracle supports n in {2,3,4}");
    if (static_cast<int>(factors.size()) != n)
        throw InvalidArgumentError("factor count must equal n");
    return multicopy_contraction(factors, dims, partition).real();
}

double multicopy_pt_moment_oracle(const std::vector<Mat>& factors,
                                  const PartitionSpec& partition, int n)
{
    if (factors.empty())
        throw InvalidArgumentError("need at least 2 factors");
    Eigen::Index d = factors.front().rows();
    int n_axes = 0;
    while ((Eigen::Index(1) << n_axes) < d)
        ++n_axes;
    if ((Eigen::Index(1) << n_axes) != d)
        throw InvalidArgumentError("factor dimension is not a power of two; pass dims explicitly");
    return multicopy_pt_moment_oracle(factors, std::vector<int>(static_cast<size_t>(n_axes), 2),
                                      partition, n);
}

} // namespace ptshadow
