#pragma once

// Reference implementations used only by the test suite. They are written
// independently of src/ (explicit loops, literal index arithmetic) so that
// agreement with the library is meaningful evidence and not a tautology.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "ptshadow/linalg.hpp"
#include "ptshadow/rng.hpp"
#include "ptshadow/states.hpp"

namespace oracles {

using ptshadow::cplx;
using ptshadow::Mat;
using ptshadow::Vec;

inline Mat kron(const Mat& x, const Mat& y)
{
    Mat out(x.rows() * y.rows(), x.cols() * y.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
    return out;
}

inline Mat pauli_x()
{
    Mat m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

inline Mat pauli_y()
{
    Mat m(2, 2);
    m << cplx(0, 0), cplx(0, -1), cplx(0, 1), cplx(0, 0);
    return m;
}

inline Mat pauli_z()
{
    Mat m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

inline Mat eye2() { return Mat::Identity(2, 2); }

// op acting on chain site `site` (1-based; site 1 = leftmost tensor factor),
// identity elsewhere.
inline Mat site_operator(int n_qubits, int site, const Mat& op)
{
    Mat out = Mat::Identity(1, 1);
    for (int q = 1; q <= n_qubits; ++q)
        out = kron(out, q == site ? op : eye2());
    return out;
}

// Classic fixed-step RK4 for d/dt psi = -i H psi.
inline Vec rk4_schrodinger(const Mat& h, Vec psi, double t_total, double dt)
{
    const cplx mi(0.0, -1.0);
    const long steps = std::lround(t_total / dt);
    for (long s = 0; s < steps; ++s) {
        const Vec k1 = mi * (h * psi);
        const Vec k2 = mi * (h * (psi + (0.5 * dt) * k1));
        const Vec k3 = mi * (h * (psi + (0.5 * dt) * k2));
        const Vec k4 = mi * (h * (psi + dt * k3));
        psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return psi;
}

// Global basis index with the bits of `value` (most significant first)
// placed at the given chain sites; site 1 carries weight 2^(n-1).
inline long place_bits(int n_qubits, const std::vector<int>& sites, long value)
{
    long g = 0;
    const int m = static_cast<int>(sites.size());
    for (int a = 0; a < m; ++a) {
        const long bit = (value >> (m - 1 - a)) & 1;
        g |= bit << (n_qubits - sites[static_cast<size_t>(a)]);
    }
    return g;
}

// Partial trace of |psi><psi| keeping `kept` chain sites, via the most
// literal triple loop.
inline Mat partial_trace_pure(const ptshadow::PureState& s, const std::vector<int>& kept)
{
    std::vector<int> env;
    for (int q = 1; q <= s.n_qubits; ++q)
        if (std::find(kept.begin(), kept.end(), q) == kept.end())
            env.push_back(q);
    const long dk = 1L << kept.size();
    const long de = 1L << env.size();
    Mat rho = Mat::Zero(dk, dk);
    for (long i = 0; i < dk; ++i)
        for (long j = 0; j < dk; ++j)
            for (long e = 0; e < de; ++e) {
                const long gi = place_bits(s.n_qubits, kept, i) | place_bits(s.n_qubits, env, e);
                const long gj = place_bits(s.n_qubits, kept, j) | place_bits(s.n_qubits, env, e);
                rho(i, j) += s.amplitudes(gi) * std::conj(s.amplitudes(gj));
            }
    return rho;
}

// Mixed-radix helpers for general dims (axis 1 most significant).
inline std::vector<long> digits_of(long idx, const std::vector<int>& dims)
{
    std::vector<long> d(dims.size());
    for (int j = static_cast<int>(dims.size()) - 1; j >= 0; --j) {
        d[static_cast<size_t>(j)] = idx % dims[static_cast<size_t>(j)];
        idx /= dims[static_cast<size_t>(j)];
    }
    return d;
}

inline long index_of(const std::vector<long>& digits, const std::vector<int>& dims)
{
    long idx = 0;
    for (size_t j = 0; j < dims.size(); ++j)
        idx = idx * dims[j] + digits[j];
    return idx;
}

// Partial trace of a general matrix over the complement of `kept` (1-based
// axis labels, result ordered as given).
inline Mat partial_trace_mixed(const Mat& rho, const std::vector<int>& dims,
                               const std::vector<int>& kept)
{
    std::vector<int> env;
    for (int a = 1; a <= static_cast<int>(dims.size()); ++a)
        if (std::find(kept.begin(), kept.end(), a) == kept.end())
            env.push_back(a);

    long dk = 1, de = 1;
    for (int a : kept)
        dk *= dims[static_cast<size_t>(a - 1)];
    for (int a : env)
        de *= dims[static_cast<size_t>(a - 1)];

    // Assemble a global index from digits assigned to listed axes.
    auto assemble = [&](const std::vector<int>& axes_a, long va, const std::vector<int>& axes_b,
                        long vb) {
        std::vector<long> dig(dims.size(), 0);
        for (int j = static_cast<int>(axes_a.size()) - 1; j >= 0; --j) {
            const int ax = axes_a[static_cast<size_t>(j)] - 1;
            dig[static_cast<size_t>(ax)] = va % dims[static_cast<size_t>(ax)];
            va /= dims[static_cast<size_t>(ax)];
        }
        for (int j = static_cast<int>(axes_b.size()) - 1; j >= 0; --j) {
            const int ax = axes_b[static_cast<size_t>(j)] - 1;
            dig[static_cast<size_t>(ax)] = vb % dims[static_cast<size_t>(ax)];
            vb /= dims[static_cast<size_t>(ax)];
        }
        return index_of(dig, dims);
    };

    Mat out = Mat::Zero(dk, dk);
    for (long i = 0; i < dk; ++i)
        for (long j = 0; j < dk; ++j)
            for (long e = 0; e < de; ++e)
                out(i, j) += rho(assemble(kept, i, env, e), assemble(kept, j, env, e));
    return out;
}

// Partial transpose by entrywise relabeling: the element at row digits
// (k_A, k_B) and column digits (l_A, l_B) moves to ((l_A, k_B), (k_A, l_B)).
inline Mat partial_transpose_entrywise(const Mat& m, const std::vector<int>& dims,
                                       const std::vector<int>& a_axes)
{
    Mat out = Mat::Zero(m.rows(), m.cols());
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) {
            std::vector<long> rd = digits_of(r, dims);
            std::vector<long> cd = digits_of(c, dims);
            for (int a : a_axes)
                std::swap(rd[static_cast<size_t>(a - 1)], cd[static_cast<size_t>(a - 1)]);
            out(index_of(rd, dims), index_of(cd, dims)) = m(r, c);
        }
    return out;
}

inline Mat random_matrix(long d, ptshadow::CounterRng& rng)
{
    Mat m(d, d);
    for (long r = 0; r < d; ++r)
        for (long c = 0; c < d; ++c)
            m(r, c) = cplx(rng.next_gaussian(), rng.next_gaussian());
    return m;
}

inline Mat random_hermitian(long d, ptshadow::CounterRng& rng)
{
    const Mat m = random_matrix(d, rng);
    return 0.5 * (m + m.adjoint());
}

inline ptshadow::DensityMatrix random_density(const std::vector<int>& dims,
                                              ptshadow::CounterRng& rng)
{
    long d = 1;
    for (int x : dims)
        d *= x;
    const Mat m = random_matrix(d, rng);
    Mat r = m * m.adjoint();
    r = 0.5 * (r + r.adjoint());
    r /= r.trace().real();
    ptshadow::DensityMatrix rho;
    rho.dims = dims;
    rho.matrix = std::move(r);
    return rho;
}

inline ptshadow::PureState random_pure(int n_qubits, ptshadow::CounterRng& rng)
{
    Vec v(Eigen::Index(1) << n_qubits);
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = cplx(rng.next_gaussian(), rng.next_gaussian());
    v /= v.norm();
    return ptshadow::state_from_amplitudes(std::move(v));
}

inline std::vector<double> sorted_eigenvalues(const Mat& h)
{
    Eigen::SelfAdjointEigenSolver<Mat> es(h, Eigen::EigenvaluesOnly);
    std::vector<double> out(static_cast<size_t>(es.eigenvalues().size()));
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        out[static_cast<size_t>(i)] = es.eigenvalues()(i);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace oracles
