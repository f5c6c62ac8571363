#include "ptshadow/states.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace ptshadow {

namespace {

constexpr double kHermTol = 1e-10;
constexpr double kNormTol = 1e-10;
constexpr double kPsdTol = -1e-9;

Eigen::Index product_of_dims(const std::vector<int>& dims)
{
    Eigen::Index d = 1;
    for (int x : dims) {
        if (x < 2)
            throw InvalidArgumentError("density matrix axis dimension must be >= 2");
        d *= x;
    }
    return d;
}

// Strides for mixed-radix digit decomposition, axis 1 most significant.
std::vector<Eigen::Index> make_strides(const std::vector<int>& dims)
{
    std::vector<Eigen::Index> strides(dims.size());
    Eigen::Index s = 1;
    for (int j = static_cast<int>(dims.size()) - 1; j >= 0; --j) {
        strides[static_cast<size_t>(j)] = s;
        s *= dims[static_cast<size_t>(j)];
    }
    return strides;
}

} // namespace

std::vector<int> PartitionSpec::all_sites() const
{
    std::vector<int> out = a_sites;
    out.insert(out.end(), b_sites.begin(), b_sites.end());
    return out;
}

void check_pure_state(const PureState& s)
{
    if (s.n_qubits < 1 || s.n_qubits > kMaxQubits)
        throw InvalidArgumentError("pure state qubit count out of range");
    if (s.amplitudes.size() != (Eigen::Index(1) << s.n_qubits))
        throw InvalidArgumentError("amplitude vector length does not match qubit count");
    if (std::abs(s.amplitudes.norm() - 1.0) > kNormTol)
        throw InvalidArgumentError("pure state is not normalized");
}

void check_partition(const PartitionSpec& p)
{
    if (p.a_sites.empty() || p.b_sites.empty())
        throw InvalidArgumentError("partition sides must be nonempty");
    std::set<int> seen;
    for (int s : p.a_sites) {
        if (s < 1 || !seen.insert(s).second)
            throw InvalidArgumentError("partition A sites must be distinct labels >= 1");
    }
    for (int s : p.b_sites) {
        if (s < 1 || !seen.insert(s).second)
            throw InvalidArgumentError("partition sides must be disjoint, labels >= 1");
    }
}

void check_partition_covers(const PartitionSpec& p, int n_axes)
{
    check_partition(p);
    if (static_cast<int>(p.a_sites.size() + p.b_sites.size()) != n_axes)
        throw InvalidArgumentError("partition does not cover all axes");
    for (int s : p.a_sites)
        if (s > n_axes)
            throw InvalidArgumentError("partition label exceeds axis count");
    for (int s : p.b_sites)
        if (s > n_axes)
            throw InvalidArgumentError("partition label exceeds axis count");
}

void check_density_matrix(const DensityMatrix& rho, bool require_psd)
{
    const Eigen::Index d = product_of_dims(rho.dims);
    if (rho.matrix.rows() != d || rho.matrix.cols() != d)
        throw InvalidArgumentError("density matrix size does not match dims");
    if (max_abs_entry(rho.matrix - rho.matrix.adjoint()) > kHermTol)
        throw InvalidArgumentError("density matrix is not Hermitian");
    if (std::abs(rho.matrix.trace().real() - 1.0) > kHermTol ||
        std::abs(rho.matrix.trace().imag()) > kHermTol)
        throw InvalidArgumentError("density matrix trace is not 1");
    if (require_psd) {
        Eigen::SelfAdjointEigenSolver<Mat> es(rho.matrix, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < kPsdTol)
            throw InvalidArgumentError("density matrix has a negative eigenvalue");
    }
}

PureState make_ghz(int n_qubits)
{
    if (n_qubits < 1)
        throw InvalidArgumentError("make_ghz: need at least one qubit");
    if (n_qubits > kMaxQubits)
        throw ResourceLimitError("make_ghz: qubit count exceeds dense cap");
    PureState s;
    s.n_qubits = n_qubits;
    s.amplitudes = Vec::Zero(Eigen::Index(1) << n_qubits);
    const double r = 1.0 / std::sqrt(2.0);
    s.amplitudes(0) = r;
    s.amplitudes(s.dim() - 1) = r;
    return s;
}

PureState make_neel(int n_qubits)
{
    if (n_qubits < 1)
        throw InvalidArgumentError("make_neel: need at least one qubit");
    if (n_qubits > kMaxQubits)
        throw ResourceLimitError("make_neel: qubit count exceeds dense cap");
    PureState s;
    s.n_qubits = n_qubits;
    s.amplitudes = Vec::Zero(Eigen::Index(1) << n_qubits);
    // Sites 2, 4, ... are down (bit 1); site i has bit weight 2^(N-i).
    Eigen::Index idx = 0;
    for (int site = 2; site <= n_qubits; site += 2)
        idx |= Eigen::Index(1) << (n_qubits - site);
    s.amplitudes(idx) = 1.0;
    return s;
}

PureState make_product_state(int n_qubits, const std::vector<Vec>& single_site)
{
    if (n_qubits < 1 || static_cast<int>(single_site.size()) != n_qubits)
        throw InvalidArgumentError("make_product_state: one 2-vector per site required");
    PureState s;
    s.n_qubits = n_qubits;
    s.amplitudes = Vec::Ones(1);
    for (const Vec& v : single_site) {
        if (v.size() != 2)
            throw InvalidArgumentError("make_product_state: site vectors must have length 2");
        Vec next(s.amplitudes.size() * 2);
        for (Eigen::Index i = 0; i < s.amplitudes.size(); ++i) {
            next(2 * i) = s.amplitudes(i) * v(0);
            next(2 * i + 1) = s.amplitudes(i) * v(1);
        }
        s.amplitudes = std::move(next);
    }
    const double n = s.amplitudes.norm();
    if (n <= 0.0)
        throw InvalidArgumentError("make_product_state: zero vector");
    s.amplitudes /= n;
    return s;
}

PureState state_from_amplitudes(Vec amplitudes)
{
    Eigen::Index d = amplitudes.size();
    int n = 0;
    while ((Eigen::Index(1) << n) < d)
        ++n;
    if ((Eigen::Index(1) << n) != d)
        throw InvalidArgumentError("amplitude vector length is not a power of two");
    PureState s;
    s.n_qubits = n;
    s.amplitudes = std::move(amplitudes);
    check_pure_state(s);
    return s;
}

Mat build_hamiltonian(const HamiltonianSpec& spec)
{
    if (spec.n_qubits < 2)
        throw InvalidArgumentError("hamiltonian needs at least 2 sites");
    if (spec.n_qubits > kMaxQubits)
        throw ResourceLimitError("hamiltonian size exceeds dense cap");
    if (spec.model == HamiltonianModel::XY) {
        if (!(spec.j0 > 0.0))
            throw InvalidArgumentError("XY coupling j0 must be positive");
        if (spec.alpha < 0.0)
            throw InvalidArgumentError("power-law exponent must be >= 0");
    }

    const int n = spec.n_qubits;
    const Eigen::Index dim = Eigen::Index(1) << n;
    Mat h = Mat::Zero(dim, dim);

    auto bit_of_site = [n](Eigen::Index k, int site) -> int {
        return static_cast<int>((k >> (n - site)) & 1);
    };

    if (spec.model == HamiltonianModel::XY) {
        // sum_{i<j} J_ij (s+_i s-_j + s-_i s+_j) + B sum_i sz_i, J_ij = J0/|i-j|^alpha.
        // The flip-flop term couples basis states differing by a 01 <-> 10 swap
        // at (i, j); sz_i = +1 for bit 0 (spin up).
        for (Eigen::Index k = 0; k < dim; ++k) {
            double diag = 0.0;
            for (int i = 1; i <= n; ++i)
                diag += (bit_of_site(k, i) == 0) ? spec.b_field : -spec.b_field;
            h(k, k) = diag;
            for (int i = 1; i <= n; ++i) {
                for (int j = i + 1; j <= n; ++j) {
                    if (bit_of_site(k, i) == bit_of_site(k, j))
                        continue;
                    const Eigen::Index flipped =
                        k ^ (Eigen::Index(1) << (n - i)) ^ (Eigen::Index(1) << (n - j));
                    if (flipped > k)
                        continue; // fill each pair once, symmetrically below
                    const double jij = spec.j0 / std::pow(double(j - i), spec.alpha);
                    h(k, flipped) += jij;
                    h(flipped, k) += jij;
                }
            }
        }
    } else {
        // TFIM: J (sum_i sx_i sx_{i+1} + sum_i sz_i), open chain, dimensionless.
        for (Eigen::Index k = 0; k < dim; ++k) {
            double diag = 0.0;
            for (int i = 1; i <= n; ++i)
                diag += (bit_of_site(k, i) == 0) ? spec.j_tfim : -spec.j_tfim;
            h(k, k) = diag;
            for (int i = 1; i < n; ++i) {
                const Eigen::Index flipped =
                    k ^ (Eigen::Index(1) << (n - i)) ^ (Eigen::Index(1) << (n - i - 1));
                h(k, flipped) += spec.j_tfim;
            }
        }
    }
    return h;
}

namespace {

void check_hermitian_operator(const Mat& h)
{
    if (h.rows() != h.cols() || h.rows() < 2)
        throw InvalidArgumentError("operator must be square");
    if (max_abs_entry(h - h.adjoint()) > 1e-9)
        throw InvalidArgumentError("operator is not Hermitian");
}

} // namespace

SpectralPropagator::SpectralPropagator(const Mat& h)
{
    check_hermitian_operator(h);
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    if (es.info() != Eigen::Success)
        throw Error("eigendecomposition failed");
    eigenvalues_ = es.eigenvalues();
    eigenvectors_ = es.eigenvectors();
}

PureState SpectralPropagator::evolve(const PureState& state, double t_seconds) const
{
    check_pure_state(state);
    if (state.dim() != eigenvectors_.rows())
        throw InvalidArgumentError("state dimension does not match Hamiltonian");
    if (t_seconds < 0.0)
        throw InvalidArgumentError("evolution time must be >= 0");
    Vec coeffs = eigenvectors_.adjoint() * state.amplitudes;
    for (Eigen::Index i = 0; i < coeffs.size(); ++i)
        coeffs(i) *= std::polar(1.0, -eigenvalues_(i) * t_seconds);
    PureState out;
    out.n_qubits = state.n_qubits;
    out.amplitudes = eigenvectors_ * coeffs;
    return out;
}

PureState evolve(const PureState& state, const Mat& h, double t_seconds)
{
    return SpectralPropagator(h).evolve(state, t_seconds);
}

GroundState ground_state(const Mat& h)
{
    check_hermitian_operator(h);
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    if (es.info() != Eigen::Success)
        throw Error("eigendecomposition failed");
    GroundState g;
    g.energy = es.eigenvalues()(0);
    g.degenerate = es.eigenvalues().size() > 1 && (es.eigenvalues()(1) - es.eigenvalues()(0)) < 1e-10;

    Vec v = es.eigenvectors().col(0);
    // Deterministic global phase: first non-negligible amplitude real positive.
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double m = std::abs(v(i));
        if (m > 1e-12) {
            v *= std::conj(v(i)) / m;
            break;
        }
    }
    int n = 0;
    while ((Eigen::Index(1) << n) < v.size())
        ++n;
    g.state.n_qubits = n;
    g.state.amplitudes = std::move(v);
    return g;
}

namespace {

std::vector<int> axis_positions(const std::vector<int>& labels, int n_axes, const char* what)
{
    if (labels.empty())
        throw InvalidArgumentError(std::string(what) + ": site list must be nonempty");
    std::set<int> seen;
    std::vector<int> pos;
    pos.reserve(labels.size());
    for (int s : labels) {
        if (s < 1 || s > n_axes)
            throw InvalidArgumentError(std::string(what) + ": site label out of range");
        if (!seen.insert(s).second)
            throw InvalidArgumentError(std::string(what) + ": duplicate site label");
        pos.push_back(s - 1);
    }
    return pos;
}

} // namespace

DensityMatrix reduced_density_matrix(const PureState& state, const std::vector<int>& sites)
{
    check_pure_state(state);
    const int n = state.n_qubits;
    const std::vector<int> keep = axis_positions(sites, n, "reduced_density_matrix");

    std::vector<int> env;
    {
        std::vector<bool> kept(static_cast<size_t>(n), false);
        for (int p : keep)
            kept[static_cast<size_t>(p)] = true;
        for (int p = 0; p < n; ++p)
            if (!kept[static_cast<size_t>(p)])
                env.push_back(p);
    }

    const int ns = static_cast<int>(keep.size());
    const int ne = static_cast<int>(env.size());
    const Eigen::Index ds = Eigen::Index(1) << ns;
    const Eigen::Index de = Eigen::Index(1) << ne;

    // Global index from (subsystem digits x, environment digits e); bit for
    // chain position p carries weight 2^(n-1-p).
    auto global_index = [&](Eigen::Index x, Eigen::Index e) {
        Eigen::Index g = 0;
        for (int j = 0; j < ns; ++j)
            if ((x >> (ns - 1 - j)) & 1)
                g |= Eigen::Index(1) << (n - 1 - keep[static_cast<size_t>(j)]);
        for (int j = 0; j < ne; ++j)
            if ((e >> (ne - 1 - j)) & 1)
                g |= Eigen::Index(1) << (n - 1 - env[static_cast<size_t>(j)]);
        return g;
    };

    DensityMatrix out;
    out.dims.assign(static_cast<size_t>(ns), 2);
    out.matrix = Mat::Zero(ds, ds);
    for (Eigen::Index x = 0; x < ds; ++x) {
        for (Eigen::Index y = x; y < ds; ++y) {
            cplx acc = 0.0;
            for (Eigen::Index e = 0; e < de; ++e)
                acc += state.amplitudes(global_index(x, e)) *
                       std::conj(state.amplitudes(global_index(y, e)));
            out.matrix(x, y) = acc;
            if (y != x)
                out.matrix(y, x) = std::conj(acc);
        }
    }
    return out;
}

DensityMatrix reduced_density_matrix(const DensityMatrix& rho, const std::vector<int>& sites)
{
    const Eigen::Index d = product_of_dims(rho.dims);
    if (rho.matrix.rows() != d || rho.matrix.cols() != d)
        throw InvalidArgumentError("density matrix size does not match dims");
    const int n = rho.n_axes();
    const std::vector<int> keep = axis_positions(sites, n, "reduced_density_matrix");

    std::vector<int> env;
    {
        std::vector<bool> kept(static_cast<size_t>(n), false);
        for (int p : keep)
            kept[static_cast<size_t>(p)] = true;
        for (int p = 0; p < n; ++p)
            if (!kept[static_cast<size_t>(p)])
                env.push_back(p);
    }

    const std::vector<Eigen::Index> strides = make_strides(rho.dims);

    Eigen::Index ds = 1;
    std::vector<int> keep_dims;
    for (int p : keep) {
        keep_dims.push_back(rho.dims[static_cast<size_t>(p)]);
        ds *= rho.dims[static_cast<size_t>(p)];
    }
    Eigen::Index de = 1;
    std::vector<int> env_dims;
    for (int p : env) {
        env_dims.push_back(rho.dims[static_cast<size_t>(p)]);
        de *= rho.dims[static_cast<size_t>(p)];
    }

    auto expand = [](Eigen::Index flat, const std::vector<int>& dims_list,
                     std::vector<Eigen::Index>& digits) {
        for (int j = static_cast<int>(dims_list.size()) - 1; j >= 0; --j) {
            digits[static_cast<size_t>(j)] = flat % dims_list[static_cast<size_t>(j)];
            flat /= dims_list[static_cast<size_t>(j)];
        }
    };

    std::vector<Eigen::Index> xd(keep.size()), yd(keep.size()), ed(env.size());
    DensityMatrix out;
    out.dims = keep_dims;
    out.matrix = Mat::Zero(ds, ds);
    for (Eigen::Index x = 0; x < ds; ++x) {
        expand(x, keep_dims, xd);
        for (Eigen::Index y = 0; y < ds; ++y) {
            expand(y, keep_dims, yd);
            cplx acc = 0.0;
            for (Eigen::Index e = 0; e < de; ++e) {
                expand(e, env_dims, ed);
                Eigen::Index r = 0, c = 0;
                for (size_t j = 0; j < keep.size(); ++j) {
                    r += xd[j] * strides[static_cast<size_t>(keep[j])];
                    c += yd[j] * strides[static_cast<size_t>(keep[j])];
                }
                for (size_t j = 0; j < env.size(); ++j) {
                    r += ed[j] * strides[static_cast<size_t>(env[j])];
                    c += ed[j] * strides[static_cast<size_t>(env[j])];
                }
                acc += rho.matrix(r, c);
            }
            out.matrix(x, y) = acc;
        }
    }
    return out;
}

Mat partial_transpose(const DensityMatrix& rho, const PartitionSpec& partition)
{
    const Eigen::Index d = product_of_dims(rho.dims);
    if (rho.matrix.rows() != d || rho.matrix.cols() != d)
        throw InvalidArgumentError("density matrix size does not match dims");
    check_partition_covers(partition, rho.n_axes());

    const std::vector<Eigen::Index> strides = make_strides(rho.dims);
    std::vector<bool> in_a(rho.dims.size(), false);
    for (int s : partition.a_sites)
        in_a[static_cast<size_t>(s - 1)] = true;

    Mat out(d, d);
    std::vector<Eigen::Index> rd(rho.dims.size()), cd(rho.dims.size());
    for (Eigen::Index r = 0; r < d; ++r) {
        Eigen::Index tmp = r;
        for (size_t j = rho.dims.size(); j-- > 0;) {
            rd[j] = tmp % rho.dims[j];
            tmp /= rho.dims[j];
        }
        for (Eigen::Index c = 0; c < d; ++c) {
            tmp = c;
            for (size_t j = rho.dims.size(); j-- > 0;) {
                cd[j] = tmp % rho.dims[j];
                tmp /= rho.dims[j];
            }
            Eigen::Index rr = 0, cc = 0;
            for (size_t j = 0; j < rho.dims.size(); ++j) {
                const Eigen::Index row_digit = in_a[j] ? cd[j] : rd[j];
                const Eigen::Index col_digit = in_a[j] ? rd[j] : cd[j];
                rr += row_digit * strides[j];
                cc += col_digit * strides[j];
            }
            out(rr, cc) = rho.matrix(r, c);
        }
    }
    return out;
}

Eigen::VectorXd pt_spectrum(const DensityMatrix& rho, const PartitionSpec& partition)
{
    const Mat pt = partial_transpose(rho, partition);
    Eigen::SelfAdjointEigenSolver<Mat> es(pt, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw Error("eigendecomposition failed");
    return es.eigenvalues();
}

std::vector<double> pt_moments_exact(const DensityMatrix& rho, const PartitionSpec& partition,
                                     int n_max)
{
    if (n_max < 1)
        throw InvalidArgumentError("pt_moments_exact: n_max must be >= 1");
    const Eigen::VectorXd lam = pt_spectrum(rho, partition);
    std::vector<double> moments(static_cast<size_t>(n_max));
    for (int n = 1; n <= n_max; ++n) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < lam.size(); ++i)
            acc += std::pow(lam(i), n);
        moments[static_cast<size_t>(n - 1)] = acc;
    }
    return moments;
}

double negativity(const DensityMatrix& rho, const PartitionSpec& partition)
{
    const Eigen::VectorXd lam = pt_spectrum(rho, partition);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (lam(i) < -1e-10)
            acc += -lam(i);
    return acc;
}

DensityMatrix depolarize(const DensityMatrix& rho, double strength)
{
    if (!(strength >= 0.0 && strength <= 1.0))
        throw InvalidArgumentError("depolarize: strength must be in [0,1]");
    const Eigen::Index d = product_of_dims(rho.dims);
    if (rho.matrix.rows() != d || rho.matrix.cols() != d)
        throw InvalidArgumentError("density matrix size does not match dims");
    DensityMatrix out;
    out.dims = rho.dims;
    out.matrix = (1.0 - strength) * rho.matrix +
                 strength / static_cast<double>(d) * Mat::Identity(d, d);
    return out;
}

} // namespace ptshadow
