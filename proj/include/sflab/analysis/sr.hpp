#pragma once

// Analytical successor representation SR = (I - gamma T)^-1.

#include <cmath>
#include <vector>

#include "sflab/errors.hpp"
#include "sflab/numkit/matrix.hpp"

namespace sflab::analysis {

struct SRMatrix {
    Matrix values;
    double gamma = 0.0;
    std::size_t n_states() const { return values.rows; }
};

// Partial-pivot LU, in place. perm[i] is the original row now at i.
struct LU {
    Matrix a;
    std::vector<std::size_t> perm;
};

inline LU lu_decompose(Matrix a, double singular_tol = 1e-14) {
    if (a.rows != a.cols) throw DimensionError("lu_decompose: matrix is not square");
    const std::size_t n = a.rows;
    LU out{std::move(a), std::vector<std::size_t>(n)};
    Matrix& m = out.a;
    for (std::size_t i = 0; i < n; ++i) out.perm[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(m(k, k));
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(m(i, k)) > best) {
                best = std::abs(m(i, k));
                piv = i;
            }
        if (best < singular_tol) throw NumericalError("lu_decompose: matrix is singular to working precision");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(out.perm[k], out.perm[piv]);
        }
        const double inv = 1.0 / m(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = m(i, k) * inv;
            m(i, k) = f;
            if (f == 0.0) continue;
            for (std::size_t j = k + 1; j < n; ++j) m(i, j) -= f * m(k, j);
        }
    }
    return out;
}

// Solves A X = B for every column of B.
inline Matrix lu_solve(const LU& lu, const Matrix& b) {
    const std::size_t n = lu.a.rows;
    if (b.rows != n) throw DimensionError("lu_solve: right-hand side has wrong row count");
    Matrix x(n, b.cols);
    std::vector<double> y(n);
    for (std::size_t c = 0; c < b.cols; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b(lu.perm[i], c);
            for (std::size_t j = 0; j < i; ++j) s -= lu.a(i, j) * y[j];
            y[i] = s;
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = y[i];
            for (std::size_t j = i + 1; j < n; ++j) s -= lu.a(i, j) * x(j, c);
            x(i, c) = s / lu.a(i, i);
        }
    }
    return x;
}

inline void require_row_stochastic(const Matrix& t, double tol = 1e-9) {
    if (t.rows != t.cols) throw DimensionError("transition matrix is not square");
    for (std::size_t i = 0; i < t.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < t.cols; ++j) {
            if (t(i, j) < -tol) throw DegenerateInputError("transition matrix has a negative entry");
            s += t(i, j);
        }
        if (std::abs(s - 1.0) > tol)
            throw DegenerateInputError("transition matrix row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
}

inline Matrix sr_system(const Matrix& t, double gamma) {
    Matrix a = Matrix::identity(t.rows);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] -= gamma * t.data[i];
    return a;
}

// |(I - gamma T) SR - I|_inf
inline double sr_residual(const Matrix& t, double gamma, const Matrix& sr) {
    Matrix r = matmul(sr_system(t, gamma), sr);
    for (std::size_t i = 0; i < r.rows; ++i) r(i, i) -= 1.0;
    return inf_norm(r);
}

inline SRMatrix analytical_sr(const Matrix& t, double gamma, double residual_tol = 1e-10) {
    require_row_stochastic(t);
    if (!(gamma >= 0.0 && gamma < 1.0)) throw DegenerateInputError("analytical_sr: gamma must lie in [0, 1)");
    const LU lu = lu_decompose(sr_system(t, gamma));
    SRMatrix sr{lu_solve(lu, Matrix::identity(t.rows)), gamma};
    const double res = sr_residual(t, gamma, sr.values);
    if (!(res <= residual_tol))
        throw NumericalError("analytical_sr: residual " + std::to_string(res) + " exceeds tolerance");
    return sr;
}

// sum_{k=0}^{K} gamma^k T^k, the independent oracle.
inline Matrix truncated_sr_series(const Matrix& t, double gamma, int terms) {
    Matrix acc = Matrix::identity(t.rows);
    Matrix power = Matrix::identity(t.rows);
    double g = 1.0;
    for (int k = 1; k <= terms; ++k) {
        power = matmul(power, t);
        g *= gamma;
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g * power.data[i];
    }
    return acc;
}

} // namespace sflab::analysis
