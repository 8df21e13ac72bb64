#pragma once

#include <cassert>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace renf {

/**
 * Dense row-major matrix of doubles.
 *
 * The whole engine works on two layouts:
 *   - Matrix [rows x cols]: generic 2-D storage. Model code uses rows =
 *     (window, variate) pairs so every temporal operation is a row op.
 *   - Tensor3 [batch x len x var]: the dataloader-facing layout.
 */
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

/// [batch x len x var] tensor, row-major over (batch, len, var).
struct Tensor3 {
    std::size_t batch = 0;
    std::size_t len = 0;
    std::size_t vars = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t b, std::size_t l, std::size_t v, double fill = 0.0)
        : batch(b), len(l), vars(v), data(b * l * v, fill) {}

    double& at(std::size_t b, std::size_t t, std::size_t v) {
        return data[(b * len + t) * vars + v];
    }
    double at(std::size_t b, std::size_t t, std::size_t v) const {
        return data[(b * len + t) * vars + v];
    }

    std::size_t size() const { return data.size(); }
};

/// Reorders [batch x len x var] into rows keyed by (batch, variate):
/// row b*vars+v holds the length-len series of variate v in window b.
inline Matrix to_rows(const Tensor3& x) {
    Matrix out(x.batch * x.vars, x.len);
    for (std::size_t b = 0; b < x.batch; ++b)
        for (std::size_t t = 0; t < x.len; ++t)
            for (std::size_t v = 0; v < x.vars; ++v)
                out.at(b * x.vars + v, t) = x.at(b, t, v);
    return out;
}

/// Inverse of to_rows.
inline Tensor3 from_rows(const Matrix& m, std::size_t batch, std::size_t vars) {
    assert(m.rows == batch * vars);
    Tensor3 out(batch, m.cols, vars);
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t t = 0; t < m.cols; ++t)
            for (std::size_t v = 0; v < vars; ++v)
                out.at(b, t, v) = m.at(b * vars + v, t);
    return out;
}

// ---------------------------------------------------------------------------
// GEMM kernels. C is always accumulated into, so callers can fold several
// contributions into one gradient buffer. Loop orders are chosen so the inner
// loop is a contiguous axpy/dot; every output element is written by exactly
// one thread, which keeps results bit-identical for any thread count.
// ---------------------------------------------------------------------------

/// C[ra x cb] += A[ra x ca] * B[ca x cb]. 2x2 blocked over (row, k): each
/// pass over a pair of B rows feeds two output rows, halving B traffic.
inline void gemm_accum(const Matrix& A, const Matrix& B, Matrix& C) {
    assert(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols);
    const std::size_t ra = A.rows, ca = A.cols, cb = B.cols;
#pragma omp parallel for schedule(static)
    for (long long ii = 0; ii < static_cast<long long>(ra); ii += 2) {
        const auto i = static_cast<std::size_t>(ii);
        const bool two = i + 1 < ra;
        double* c0 = C.data.data() + i * cb;
        double* c1 = two ? C.data.data() + (i + 1) * cb : c0;
        const double* a0 = A.data.data() + i * ca;
        const double* a1 = two ? A.data.data() + (i + 1) * ca : a0;
        std::size_t k = 0;
        for (; k + 1 < ca; k += 2) {
            const double a00 = a0[k], a01 = a0[k + 1];
            const double a10 = a1[k], a11 = a1[k + 1];
            const double* b0 = B.data.data() + k * cb;
            const double* b1 = B.data.data() + (k + 1) * cb;
            if (two) {
                for (std::size_t j = 0; j < cb; ++j) {
                    const double bv0 = b0[j], bv1 = b1[j];
                    c0[j] += a00 * bv0 + a01 * bv1;
                    c1[j] += a10 * bv0 + a11 * bv1;
                }
            } else {
                for (std::size_t j = 0; j < cb; ++j) c0[j] += a00 * b0[j] + a01 * b1[j];
            }
        }
        for (; k < ca; ++k) {
            const double* b0 = B.data.data() + k * cb;
            const double av0 = a0[k], av1 = a1[k];
            if (two) {
                for (std::size_t j = 0; j < cb; ++j) {
                    c0[j] += av0 * b0[j];
                    c1[j] += av1 * b0[j];
                }
            } else {
                for (std::size_t j = 0; j < cb; ++j) c0[j] += av0 * b0[j];
            }
        }
    }
}

/// C[ra x rb] += A[ra x ca] * B[rb x ca]^T. Goes through an explicit
/// transpose so the hot loop stays a contiguous axpy; the O(n^2) transpose is
/// noise next to the O(n^3) product.
inline void gemm_abt_accum(const Matrix& A, const Matrix& B, Matrix& C) {
    assert(A.cols == B.cols && C.rows == A.rows && C.cols == B.rows);
    Matrix bt(B.cols, B.rows);
#pragma omp parallel for schedule(static)
    for (long long jj = 0; jj < static_cast<long long>(B.rows); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        const double* brow = B.data.data() + j * B.cols;
        for (std::size_t k = 0; k < B.cols; ++k) bt.data[k * B.rows + j] = brow[k];
    }
    gemm_accum(A, bt, C);
}

/// C[ca x cb] += A[ra x ca]^T * B[ra x cb], blocked like gemm_accum with the
/// A columns (adjacent in memory per row) playing the row-pair role.
inline void gemm_atb_accum(const Matrix& A, const Matrix& B, Matrix& C) {
    assert(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols);
    const std::size_t ra = A.rows, ca = A.cols, cb = B.cols;
#pragma omp parallel for schedule(static)
    for (long long kk = 0; kk < static_cast<long long>(ca); kk += 2) {
        const auto k = static_cast<std::size_t>(kk);
        const bool two = k + 1 < ca;
        double* c0 = C.data.data() + k * cb;
        double* c1 = two ? C.data.data() + (k + 1) * cb : c0;
        std::size_t r = 0;
        for (; r + 1 < ra; r += 2) {
            const double* arow0 = A.data.data() + r * ca + k;
            const double* arow1 = arow0 + ca;
            const double a00 = arow0[0], a10 = arow1[0];
            const double a01 = two ? arow0[1] : 0.0, a11 = two ? arow1[1] : 0.0;
            const double* b0 = B.data.data() + r * cb;
            const double* b1 = b0 + cb;
            if (two) {
                for (std::size_t j = 0; j < cb; ++j) {
                    const double bv0 = b0[j], bv1 = b1[j];
                    c0[j] += a00 * bv0 + a10 * bv1;
                    c1[j] += a01 * bv0 + a11 * bv1;
                }
            } else {
                for (std::size_t j = 0; j < cb; ++j) c0[j] += a00 * b0[j] + a10 * b1[j];
            }
        }
        for (; r < ra; ++r) {
            const double* arow = A.data.data() + r * ca + k;
            const double* b0 = B.data.data() + r * cb;
            const double av0 = arow[0];
            if (two) {
                const double av1 = arow[1];
                for (std::size_t j = 0; j < cb; ++j) {
                    c0[j] += av0 * b0[j];
                    c1[j] += av1 * b0[j];
                }
            } else {
                for (std::size_t j = 0; j < cb; ++j) c0[j] += av0 * b0[j];
            }
        }
    }
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

}  // namespace renf
