#pragma once

// Small dense real-matrix kernel for control analysis (n <= 16): LU solve and
// inverse, one-sided Jacobi SVD, Moore-Penrose pseudoinverses, spectral norm,
// real-Schur (Francis double shift) eigenvalues, finite-difference Jacobians.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "spsim/errors.hpp"

namespace spsim {

using Complex = std::complex<double>;
using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double norm2(const Vec& v)
{
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline double norm_inf(const Vec& v)
{
    double acc = 0.0;
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

inline bool all_finite(const Vec& v)
{
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Vec add(const Vec& a, const Vec& b)
{
    if (a.size() != b.size()) throw DimensionMismatch("vector add: size mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Vec sub(const Vec& a, const Vec& b)
{
    if (a.size() != b.size()) throw DimensionMismatch("vector sub: size mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Vec scaled(const Vec& a, double c)
{
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
    return out;
}

inline double dot(const Vec& a, const Vec& b)
{
    if (a.size() != b.size()) throw DimensionMismatch("vector dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline Vec concat(const Vec& a, const Vec& b)
{
    Vec out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

inline Vec slice(const Vec& v, std::size_t from, std::size_t count)
{
    if (from + count > v.size()) throw DimensionMismatch("vector slice out of range");
    return Vec(v.begin() + static_cast<std::ptrdiff_t>(from),
               v.begin() + static_cast<std::ptrdiff_t>(from + count));
}

// ---------------------------------------------------------------------------
// RealMatrix: value-semantic dense matrix, row-major storage
// ---------------------------------------------------------------------------

class RealMatrix {
public:
    RealMatrix() = default;

    RealMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    RealMatrix(std::size_t rows, std::size_t cols, Vec entries)
        : rows_(rows), cols_(cols), data_(std::move(entries))
    {
        if (data_.size() != rows_ * cols_)
            throw DimensionMismatch("matrix: entry count does not match rows*cols");
    }

    RealMatrix(std::initializer_list<std::initializer_list<double>> rows)
    {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_)
                throw DimensionMismatch("matrix: ragged initializer rows");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static RealMatrix identity(std::size_t n)
    {
        RealMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const Vec& entries() const { return data_; }

    bool is_finite() const { return all_finite(data_); }

    RealMatrix transpose() const
    {
        RealMatrix out(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j)
                out(j, i) = (*this)(i, j);
        return out;
    }

    RealMatrix operator+(const RealMatrix& other) const
    {
        require_same_shape(other, "matrix add");
        RealMatrix out(rows_, cols_);
        for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] = data_[k] + other.data_[k];
        return out;
    }

    RealMatrix operator-(const RealMatrix& other) const
    {
        require_same_shape(other, "matrix sub");
        RealMatrix out(rows_, cols_);
        for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] = data_[k] - other.data_[k];
        return out;
    }

    RealMatrix operator-() const
    {
        RealMatrix out(rows_, cols_);
        for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] = -data_[k];
        return out;
    }

    RealMatrix operator*(const RealMatrix& other) const
    {
        if (cols_ != other.rows_)
            throw DimensionMismatch("matrix multiply: inner dimensions disagree");
        RealMatrix out(rows_, other.cols_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t k = 0; k < cols_; ++k) {
                const double aik = (*this)(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < other.cols_; ++j)
                    out(i, j) += aik * other(k, j);
            }
        return out;
    }

    RealMatrix operator*(double c) const
    {
        RealMatrix out(rows_, cols_);
        for (std::size_t k = 0; k < data_.size(); ++k) out.data_[k] = c * data_[k];
        return out;
    }

    Vec operator*(const Vec& v) const
    {
        if (cols_ != v.size())
            throw DimensionMismatch("matrix-vector multiply: dimensions disagree");
        Vec out(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < cols_; ++j) acc += (*this)(i, j) * v[j];
            out[i] = acc;
        }
        return out;
    }

    double frobenius_norm() const
    {
        double acc = 0.0;
        for (double x : data_) acc += x * x;
        return std::sqrt(acc);
    }

    double max_abs() const
    {
        double acc = 0.0;
        for (double x : data_) acc = std::max(acc, std::abs(x));
        return acc;
    }

    double trace() const
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) acc += (*this)(i, i);
        return acc;
    }

    Vec column(std::size_t j) const
    {
        Vec out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
        return out;
    }

private:
    void require_same_shape(const RealMatrix& other, const char* what) const
    {
        if (rows_ != other.rows_ || cols_ != other.cols_)
            throw DimensionMismatch(std::string(what) + ": shapes disagree");
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

inline RealMatrix operator*(double c, const RealMatrix& m) { return m * c; }

/// [[a, b], [c, d]] block assembly; dimensions must be consistent.
inline RealMatrix block2x2(const RealMatrix& a, const RealMatrix& b,
                           const RealMatrix& c, const RealMatrix& d)
{
    if (a.rows() != b.rows() || c.rows() != d.rows() ||
        a.cols() != c.cols() || b.cols() != d.cols())
        throw DimensionMismatch("block2x2: inconsistent block shapes");
    RealMatrix out(a.rows() + c.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
    }
    for (std::size_t i = 0; i < c.rows(); ++i) {
        for (std::size_t j = 0; j < c.cols(); ++j) out(a.rows() + i, j) = c(i, j);
        for (std::size_t j = 0; j < d.cols(); ++j) out(a.rows() + i, a.cols() + j) = d(i, j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LU factorization with partial pivoting
// ---------------------------------------------------------------------------

namespace detail {

struct LuFactors {
    RealMatrix lu;                 // packed L (unit diagonal) and U
    std::vector<std::size_t> perm; // row permutation
};

/// Factor a square matrix; throws SingularMatrix when a pivot falls below
/// pivot_floor (an absolute threshold supplied by the caller).
inline LuFactors lu_factor(RealMatrix a, double pivot_floor)
{
    const std::size_t n = a.rows();
    LuFactors f{std::move(a), std::vector<std::size_t>(n)};
    std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::abs(f.lu(col, col));
        for (std::size_t row = col + 1; row < n; ++row) {
            const double v = std::abs(f.lu(row, col));
            if (v > best) { best = v; pivot = row; }
        }
        if (!(best > pivot_floor))
            throw SingularMatrix("matrix is singular to working precision (pivot "
                                 + std::to_string(best) + ")");
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j)
                std::swap(f.lu(col, j), f.lu(pivot, j));
            std::swap(f.perm[col], f.perm[pivot]);
        }
        const double inv_p = 1.0 / f.lu(col, col);
        for (std::size_t row = col + 1; row < n; ++row) {
            const double factor = f.lu(row, col) * inv_p;
            f.lu(row, col) = factor;
            if (factor == 0.0) continue;
            for (std::size_t j = col + 1; j < n; ++j)
                f.lu(row, j) -= factor * f.lu(col, j);
        }
    }
    return f;
}

inline Vec lu_solve(const LuFactors& f, const Vec& b)
{
    const std::size_t n = f.lu.rows();
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
    for (std::size_t i = 1; i < n; ++i) {
        double acc = x[i];
        for (std::size_t j = 0; j < i; ++j) acc -= f.lu(i, j) * x[j];
        x[i] = acc;
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) acc -= f.lu(ii, j) * x[j];
        x[ii] = acc / f.lu(ii, ii);
    }
    return x;
}

} // namespace detail

// ---------------------------------------------------------------------------
// SVD (one-sided Jacobi) and pseudoinverses
// ---------------------------------------------------------------------------

/// Thin SVD A = U diag(s) V^T with s sorted nonincreasing. Columns of U
/// corresponding to zero singular values are left zero; they span nothing.
struct SvdFactors {
    RealMatrix u;
    Vec singular_values;
    RealMatrix v;
};

inline SvdFactors svd(const RealMatrix& a_in)
{
    if (!a_in.is_finite()) throw NonFiniteEvaluation("svd: non-finite entries");
    const bool transposed = a_in.rows() < a_in.cols();
    RealMatrix w = transposed ? a_in.transpose() : a_in;
    const std::size_t m = w.rows(), n = w.cols();
    RealMatrix v = RealMatrix::identity(n);

    const double tol = 4.0 * std::numeric_limits<double>::epsilon();
    const int max_sweeps = 60;
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += w(i, p) * w(i, p);
                    beta += w(i, q) * w(i, q);
                    gamma += w(i, p) * w(i, q);
                }
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta))
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * wq;
                    w(i, q) = s * wp + c * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep == max_sweeps)
        throw NoConvergence("svd: Jacobi sweeps did not converge");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Vec norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += w(i, j) * w(i, j);
        norms[j] = std::sqrt(acc);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    RealMatrix u_sorted(m, n), v_sorted(n, n);
    Vec s_sorted(n);
    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        s_sorted[jj] = norms[j];
        if (norms[j] > 0.0) {
            const double inv = 1.0 / norms[j];
            for (std::size_t i = 0; i < m; ++i) u_sorted(i, jj) = w(i, j) * inv;
        }
        for (std::size_t i = 0; i < n; ++i) v_sorted(i, jj) = v(i, j);
    }

    if (transposed) return SvdFactors{std::move(v_sorted), std::move(s_sorted), std::move(u_sorted)};
    return SvdFactors{std::move(u_sorted), std::move(s_sorted), std::move(v_sorted)};
}

/// Largest singular value; zero only for the zero matrix.
inline double spectral_norm(const RealMatrix& a)
{
    if (!a.is_finite()) throw NonFiniteEvaluation("spectral_norm: non-finite entries");
    if (a.empty()) return 0.0;
    return svd(a).singular_values.front();
}

namespace detail {

inline RealMatrix pinv_from_svd(const SvdFactors& f, double cutoff)
{
    const std::size_t m = f.u.rows(), n = f.v.rows(), k = f.singular_values.size();
    RealMatrix out(n, m);
    for (std::size_t r = 0; r < k; ++r) {
        const double s = f.singular_values[r];
        if (s <= cutoff) continue;
        const double inv = 1.0 / s;
        for (std::size_t i = 0; i < n; ++i) {
            const double vir = f.v(i, r) * inv;
            if (vir == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out(i, j) += vir * f.u(j, r);
        }
    }
    return out;
}

} // namespace detail

/// Left pseudoinverse (B^T B)^{-1} B^T of a tall or square full-column-rank
/// matrix, computed through the SVD. Satisfies pinv_left(B) * B = I.
inline RealMatrix pinv_left(const RealMatrix& b, double rcond = 1e-12)
{
    if (b.rows() < b.cols())
        throw DimensionMismatch("pinv_left: matrix has more columns than rows");
    SvdFactors f = svd(b);
    const double smax = f.singular_values.empty() ? 0.0 : f.singular_values.front();
    const double smin = f.singular_values.empty() ? 0.0 : f.singular_values.back();
    if (smax == 0.0 || smin < rcond * smax)
        throw RankDeficient("pinv_left: matrix is column-rank deficient");
    return detail::pinv_from_svd(f, rcond * smax);
}

/// Right pseudoinverse B^T (B B^T)^{-1} of a wide or square full-row-rank
/// matrix. Satisfies B * pinv_right(B) = I.
inline RealMatrix pinv_right(const RealMatrix& b, double rcond = 1e-12)
{
    if (b.cols() < b.rows())
        throw DimensionMismatch("pinv_right: matrix has more rows than columns");
    SvdFactors f = svd(b);
    const double smax = f.singular_values.empty() ? 0.0 : f.singular_values.front();
    const double smin = f.singular_values.empty() ? 0.0 : f.singular_values.back();
    if (smax == 0.0 || smin < rcond * smax)
        throw RankDeficient("pinv_right: matrix is row-rank deficient");
    return detail::pinv_from_svd(f, rcond * smax);
}

// ---------------------------------------------------------------------------
// Linear solve / inverse
// ---------------------------------------------------------------------------

/// Solve A x = b for square A. Rejects ill-conditioned systems: estimated
/// condition number above cond_limit, or any pivot below pivot_rel * ||A||_2.
inline Vec solve_linear(const RealMatrix& a, const Vec& b,
                        double cond_limit = 1e12, double pivot_rel = 1e-14)
{
    if (a.rows() != a.cols()) throw DimensionMismatch("solve_linear: matrix not square");
    if (a.rows() != b.size()) throw DimensionMismatch("solve_linear: rhs size mismatch");
    if (!a.is_finite() || !all_finite(b))
        throw NonFiniteEvaluation("solve_linear: non-finite input");
    if (a.rows() == 0) return {};

    const Vec& s = svd(a).singular_values;
    const double smax = s.front(), smin = s.back();
    if (smax == 0.0 || smin == 0.0 || smax / smin > cond_limit)
        throw SingularMatrix("solve_linear: condition number exceeds "
                             + std::to_string(cond_limit));
    auto f = detail::lu_factor(a, pivot_rel * smax);
    return detail::lu_solve(f, b);
}

/// Multi-RHS variant: solve A X = B column by column.
inline RealMatrix solve_linear(const RealMatrix& a, const RealMatrix& b,
                               double cond_limit = 1e12, double pivot_rel = 1e-14)
{
    if (a.rows() != a.cols()) throw DimensionMismatch("solve_linear: matrix not square");
    if (a.rows() != b.rows()) throw DimensionMismatch("solve_linear: rhs rows mismatch");
    if (!a.is_finite() || !b.is_finite())
        throw NonFiniteEvaluation("solve_linear: non-finite input");
    const Vec& s = svd(a).singular_values;
    const double smax = s.empty() ? 0.0 : s.front();
    const double smin = s.empty() ? 0.0 : s.back();
    if (a.rows() > 0 && (smax == 0.0 || smin == 0.0 || smax / smin > cond_limit))
        throw SingularMatrix("solve_linear: condition number exceeds "
                             + std::to_string(cond_limit));
    RealMatrix x(a.rows(), b.cols());
    if (a.rows() == 0) return x;
    auto f = detail::lu_factor(a, pivot_rel * smax);
    for (std::size_t j = 0; j < b.cols(); ++j) {
        Vec col = detail::lu_solve(f, b.column(j));
        for (std::size_t i = 0; i < a.rows(); ++i) x(i, j) = col[i];
    }
    return x;
}

inline RealMatrix inverse(const RealMatrix& a,
                          double cond_limit = 1e12, double pivot_rel = 1e-14)
{
    if (a.rows() != a.cols()) throw DimensionMismatch("inverse: matrix not square");
    return solve_linear(a, RealMatrix::identity(a.rows()), cond_limit, pivot_rel);
}

// ---------------------------------------------------------------------------
// Eigenvalues: Hessenberg reduction + Francis double-shift QR
// ---------------------------------------------------------------------------

namespace detail {

/// Householder similarity reduction to upper Hessenberg form, in place.
inline void hessenberg_inplace(RealMatrix& a)
{
    const std::size_t n = a.rows();
    if (n < 3) return;
    Vec v(n, 0.0);
    for (std::size_t k = 0; k + 2 < n; ++k) {
        double scale = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) scale += std::abs(a(i, k));
        if (scale == 0.0) continue;
        double h = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            v[i] = a(i, k) / scale;
            h += v[i] * v[i];
        }
        double g = std::sqrt(h);
        if (v[k + 1] >= 0.0) g = -g;
        h -= v[k + 1] * g;
        v[k + 1] -= g;
        for (std::size_t j = 0; j < n; ++j) {
            double f = 0.0;
            for (std::size_t i = k + 1; i < n; ++i) f += v[i] * a(i, j);
            f /= h;
            for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= f * v[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            double f = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) f += v[j] * a(i, j);
            f /= h;
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * v[j];
        }
        a(k + 1, k) = scale * g;
        for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

/// Eigenvalues of an upper Hessenberg matrix by the implicitly shifted
/// (Francis double shift) QR iteration. Destroys the input.
inline std::vector<Complex> hqr_eigen(RealMatrix& a, int max_total_sweeps)
{
    const int n = static_cast<int>(a.rows());
    std::vector<Complex> out(static_cast<std::size_t>(n));
    const double eps = std::numeric_limits<double>::epsilon();

    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));
    if (anorm == 0.0) return out;

    int nn = n - 1;
    double t = 0.0;
    int total_sweeps = 0;
    while (nn >= 0) {
        int its = 0;
        for (;;) {
            int l;
            for (l = nn; l >= 1; --l) {
                double s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
                if (s == 0.0) s = anorm;
                if (std::abs(a(l, l - 1)) <= eps * s) {
                    a(l, l - 1) = 0.0;
                    break;
                }
            }
            double x = a(nn, nn);
            if (l == nn) {
                out[static_cast<std::size_t>(nn--)] = Complex(x + t, 0.0);
                break;
            }
            double y = a(nn - 1, nn - 1);
            double w = a(nn, nn - 1) * a(nn - 1, nn);
            if (l == nn - 1) {
                double p = 0.5 * (y - x);
                double q = p * p + w;
                double z = std::sqrt(std::abs(q));
                x += t;
                if (q >= 0.0) {
                    z = p + std::copysign(z, p);
                    out[static_cast<std::size_t>(nn - 1)] = Complex(x + z, 0.0);
                    out[static_cast<std::size_t>(nn)] =
                        Complex(z != 0.0 ? x - w / z : x + z, 0.0);
                } else {
                    out[static_cast<std::size_t>(nn)] = Complex(x + p, z);
                    out[static_cast<std::size_t>(nn - 1)] = Complex(x + p, -z);
                }
                nn -= 2;
                break;
            }
            if (++total_sweeps > max_total_sweeps)
                throw NoConvergence("eigenvalues: QR iteration exceeded "
                                    + std::to_string(max_total_sweeps) + " sweeps");
            if (its == 10 || its == 20) {
                // exceptional shift to break cycling
                t += x;
                for (int i = 0; i <= nn; ++i) a(i, i) -= x;
                double s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
                y = x = 0.75 * s;
                w = -0.4375 * s * s;
            }
            ++its;
            int m;
            double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
            for (m = nn - 2; m >= l; --m) {
                z = a(m, m);
                double rr = x - z;
                double ss = y - z;
                p = (rr * ss - w) / a(m + 1, m) + a(m, m + 1);
                q = a(m + 1, m + 1) - z - rr - ss;
                r = a(m + 2, m + 1);
                double scale = std::abs(p) + std::abs(q) + std::abs(r);
                p /= scale;
                q /= scale;
                r /= scale;
                if (m == l) break;
                const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
                const double v = std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z)
                                                + std::abs(a(m + 1, m + 1)));
                if (u <= eps * v) break;
            }
            for (int i = m + 2; i <= nn; ++i) {
                a(i, i - 2) = 0.0;
                if (i > m + 2) a(i, i - 3) = 0.0;
            }
            for (int k = m; k <= nn - 1; ++k) {
                if (k != m) {
                    p = a(k, k - 1);
                    q = a(k + 1, k - 1);
                    r = (k + 1 != nn) ? a(k + 2, k - 1) : 0.0;
                    x = std::abs(p) + std::abs(q) + std::abs(r);
                    if (x != 0.0) { p /= x; q /= x; r /= x; }
                }
                double s = std::copysign(std::sqrt(p * p + q * q + r * r), p);
                if (s == 0.0) continue;
                if (k == m) {
                    if (l != m) a(k, k - 1) = -a(k, k - 1);
                } else {
                    a(k, k - 1) = -s * x;
                }
                p += s;
                x = p / s;
                y = q / s;
                z = r / s;
                q /= p;
                r /= p;
                for (int j = k; j <= nn; ++j) {
                    p = a(k, j) + q * a(k + 1, j);
                    if (k + 1 != nn) {
                        p += r * a(k + 2, j);
                        a(k + 2, j) -= p * z;
                    }
                    a(k + 1, j) -= p * y;
                    a(k, j) -= p * x;
                }
                const int mmin = nn < k + 3 ? nn : k + 3;
                for (int i = l; i <= mmin; ++i) {
                    p = x * a(i, k) + y * a(i, k + 1);
                    if (k + 1 != nn) {
                        p += z * a(i, k + 2);
                        a(i, k + 2) -= p * r;
                    }
                    a(i, k + 1) -= p * q;
                    a(i, k) -= p;
                }
            }
        }
    }
    return out;
}

} // namespace detail

inline bool complex_less(const Complex& a, const Complex& b)
{
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
}

/// All eigenvalues of a square real matrix (n <= 16), conjugate-paired and
/// sorted by (real, imag). Throws NoConvergence after 100*n QR sweeps.
inline std::vector<Complex> eigenvalues(const RealMatrix& a)
{
    if (a.rows() != a.cols()) throw DimensionMismatch("eigenvalues: matrix not square");
    if (!a.is_finite()) throw NonFiniteEvaluation("eigenvalues: non-finite entries");
    const std::size_t n = a.rows();
    if (n == 0) return {};
    if (n == 1) return {Complex(a(0, 0), 0.0)};
    RealMatrix work = a;
    detail::hessenberg_inplace(work);
    auto values = detail::hqr_eigen(work, 100 * static_cast<int>(n));
    std::sort(values.begin(), values.end(), complex_less);
    return values;
}

// ---------------------------------------------------------------------------
// Finite-difference Jacobian
// ---------------------------------------------------------------------------

using VectorFunction = std::function<Vec(const Vec&)>;

/// Central-difference Jacobian with per-component step scale*max(1, |x_i|).
inline RealMatrix jacobian_fd(const VectorFunction& func, const Vec& point,
                              double scale = 1e-6)
{
    const std::size_t n = point.size();
    Vec probe = point;
    Vec f0 = func(point);
    if (!all_finite(f0))
        throw NonFiniteEvaluation("jacobian_fd: function returned non-finite values");
    RealMatrix jac(f0.size(), n);
    for (std::size_t j = 0; j < n; ++j) {
        const double h = scale * std::max(1.0, std::abs(point[j]));
        probe[j] = point[j] + h;
        Vec fp = func(probe);
        probe[j] = point[j] - h;
        Vec fm = func(probe);
        probe[j] = point[j];
        if (!all_finite(fp) || !all_finite(fm))
            throw NonFiniteEvaluation("jacobian_fd: function returned non-finite values");
        if (fp.size() != f0.size() || fm.size() != f0.size())
            throw DimensionMismatch("jacobian_fd: function output size changed");
        const double inv = 1.0 / (2.0 * h);
        for (std::size_t i = 0; i < f0.size(); ++i)
            jac(i, j) = (fp[i] - fm[i]) * inv;
    }
    return jac;
}

} // namespace spsim
