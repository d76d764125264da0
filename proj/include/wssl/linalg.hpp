// SPDX-License-Identifier: Apache-2.0
#ifndef WSSL_LINALG_HPP
#define WSSL_LINALG_HPP

// Dense row-major matrices, a Cholesky-based SPD solver and small vector
// helpers. Everything is 64-bit float; tolerances downstream depend on it.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wssl {

// Thrown when a Cholesky factorization hits a non-positive pivot. Callers
// that damp the matrix themselves can recover by increasing the damping.
class NotPositiveDefinite : public std::runtime_error {
public:
    explicit NotPositiveDefinite(const std::string& what)
        : std::runtime_error(what) {}
};

class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    // Reshape reusing existing capacity; contents are zeroed.
    void resize(std::size_t rows, std::size_t cols) {
        rows_ = rows;
        cols_ = cols;
        data_.assign(rows * cols, 0.0);
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    DenseMatrix transposed() const {
        DenseMatrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline std::string shape_str(const DenseMatrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a) +
                                    " and " + shape_str(b));
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        double* crow = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: length mismatch " + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline std::vector<double> matvec(const DenseMatrix& m, std::span<const double> v) {
    if (m.cols() != v.size())
        throw std::invalid_argument("matvec: incompatible shapes " + shape_str(m) +
                                    " and vector of length " + std::to_string(v.size()));
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), v);
    return out;
}

inline double max_abs_asymmetry(const DenseMatrix& h) {
    double worst = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t j = i + 1; j < h.cols(); ++j)
            worst = std::max(worst, std::abs(h(i, j) - h(j, i)));
    return worst;
}

// Lower-triangular Cholesky factor of an SPD matrix. No pivoting; a
// non-positive pivot means the input was not (numerically) positive definite.
inline DenseMatrix cholesky(const DenseMatrix& h) {
    if (h.rows() != h.cols())
        throw std::invalid_argument("cholesky: matrix must be square, got " + shape_str(h));
    const std::size_t n = h.rows();
    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = h(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0 || !std::isfinite(s))
                    throw NotPositiveDefinite(
                        "cholesky: non-positive pivot at index " + std::to_string(i) +
                        "; increase damping");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

inline std::vector<double> cholesky_solve(const DenseMatrix& l, std::span<const double> v) {
    const std::size_t n = l.rows();
    if (v.size() != n)
        throw std::invalid_argument("cholesky_solve: length mismatch");
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = v[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

// Solves H x = v for symmetric positive definite H. Symmetry is checked to an
// absolute 1e-9; a failed factorization surfaces as NotPositiveDefinite.
inline std::vector<double> solve_spd(const DenseMatrix& h, std::span<const double> v) {
    if (h.rows() != h.cols())
        throw std::invalid_argument("solve_spd: matrix must be square, got " + shape_str(h));
    if (h.rows() != v.size())
        throw std::invalid_argument("solve_spd: incompatible shapes " + shape_str(h) +
                                    " and vector of length " + std::to_string(v.size()));
    if (max_abs_asymmetry(h) > 1e-9)
        throw std::invalid_argument("solve_spd: matrix is not symmetric within 1e-9");
    return cholesky_solve(cholesky(h), v);
}

}  // namespace wssl

#endif  // WSSL_LINALG_HPP
