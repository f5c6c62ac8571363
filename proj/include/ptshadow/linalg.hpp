#pragma once

#include <complex>

#include <Eigen/Dense>

namespace ptshadow {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXcd;

// Flat complex 2x2. The estimator kernels evaluate trace products of these
// inside O(M^2)/O(M^3) loops, so the type stays POD with everything inline.
// Layout: [a b; c d].
struct Mat2 {
    cplx a{}, b{}, c{}, d{};

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 zero() { return {}; }

    Mat2 operator+(const Mat2& o) const { return {a + o.a, b + o.b, c + o.c, d + o.d}; }
    Mat2 operator-(const Mat2& o) const { return {a - o.a, b - o.b, c - o.c, d - o.d}; }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Mat2& operator+=(const Mat2& o)
    {
        a += o.a;
        b += o.b;
        c += o.c;
        d += o.d;
        return *this;
    }

    cplx trace() const { return a + d; }
    Mat2 transposed() const { return {a, c, b, d}; }
    Mat2 adjoint() const { return {std::conj(a), std::conj(c), std::conj(b), std::conj(d)}; }
};

inline Mat2 mul(const Mat2& x, const Mat2& y)
{
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d,
            x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
}

// Tr(x*y) without forming the product.
inline cplx trace_mul(const Mat2& x, const Mat2& y)
{
    return x.a * y.a + x.b * y.c + x.c * y.b + x.d * y.d;
}

inline Mat2 from_eigen2(const Mat& m) { return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)}; }

inline Mat to_eigen2(const Mat2& m)
{
    Mat out(2, 2);
    out << m.a, m.b, m.c, m.d;
    return out;
}

inline double max_abs_entry(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

inline bool is_unitary2(const Mat2& u, double tol)
{
    const Mat2 g = mul(u.adjoint(), u);
    return std::abs(g.a - 1.0) <= tol && std::abs(g.d - 1.0) <= tol &&
           std::abs(g.b) <= tol && std::abs(g.c) <= tol;
}

} // namespace ptshadow
