#include "balgrad/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace balgrad::kernels {

namespace {

constexpr double kProbFloor = 1e-300;

void check_affine(const Mat64& out, const Mat64& X, const Mat64& W, const Vec64& b) {
    require(X.cols == W.cols, "affine_batch: X cols must match W cols");
    require(b.size() == W.rows, "affine_batch: bias length must match W rows");
    require(out.rows == X.rows && out.cols == W.rows, "affine_batch: bad output shape");
}

void check_softmax(const Mat64& P, const Mat64& Z) {
    require(Z.cols >= 2, "softmax_rows: need at least 2 columns");
    require(P.same_shape(Z), "softmax_rows: bad output shape");
    require(all_finite(Z), "softmax_rows: non-finite input");
}

void check_at_b(const Mat64& G, const Mat64& A, const Mat64& B) {
    require(A.rows == B.rows, "matmul_at_b: row counts must match");
    require(G.rows == A.cols && G.cols == B.cols, "matmul_at_b: bad output shape");
}

void check_a_b(const Mat64& Y, const Mat64& A, const Mat64& W) {
    require(A.cols == W.rows, "matmul_a_b: inner dimensions must match");
    require(Y.rows == A.rows && Y.cols == W.cols, "matmul_a_b: bad output shape");
}

void check_colsum(const Vec64& out, const Mat64& D) {
    require(out.size() == D.cols, "column_sums: bad output length");
}

inline void affine_row(double* out_row, const double* x, const Mat64& W, const Vec64& b) {
    const std::size_t R = W.rows, D = W.cols;
    for (std::size_t r = 0; r < R; ++r) {
        const double* w = W.row(r);
        double acc = b[r];
        for (std::size_t d = 0; d < D; ++d) acc += w[d] * x[d];
        out_row[r] = acc;
    }
}

inline void softmax_row(double* p, const double* z, std::size_t C) {
    double zmax = z[0];
    for (std::size_t c = 1; c < C; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        p[c] = std::exp(z[c] - zmax);
        sum += p[c];
    }
    for (std::size_t c = 0; c < C; ++c) {
        p[c] = std::max(p[c] / sum, kProbFloor);
    }
}

inline void at_b_row(double* g_row, std::size_t r, const Mat64& A, const Mat64& B) {
    const std::size_t N = A.rows, D = B.cols;
    for (std::size_t d = 0; d < D; ++d) g_row[d] = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double a = A.at(i, r);
        const double* b_row = B.row(i);
        for (std::size_t d = 0; d < D; ++d) g_row[d] += a * b_row[d];
    }
}

inline void a_b_row(double* y_row, const double* a_row, const Mat64& W) {
    const std::size_t R = W.rows, D = W.cols;
    for (std::size_t d = 0; d < D; ++d) y_row[d] = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        const double a = a_row[r];
        const double* w = W.row(r);
        for (std::size_t d = 0; d < D; ++d) y_row[d] += a * w[d];
    }
}

}  // namespace

void affine_batch(Mat64& out, const Mat64& X, const Mat64& W, const Vec64& b) {
    check_affine(out, X, W, b);
    const std::int64_t B = static_cast<std::int64_t>(X.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < B; ++i) {
        affine_row(out.row(i), X.row(i), W, b);
    }
}

void softmax_rows(Mat64& P, const Mat64& Z) {
    check_softmax(P, Z);
    const std::int64_t B = static_cast<std::int64_t>(Z.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < B; ++i) {
        softmax_row(P.row(i), Z.row(i), Z.cols);
    }
}

void matmul_at_b(Mat64& G, const Mat64& A, const Mat64& B) {
    check_at_b(G, A, B);
    const std::int64_t R = static_cast<std::int64_t>(A.cols);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < R; ++r) {
        at_b_row(G.row(r), static_cast<std::size_t>(r), A, B);
    }
}

void matmul_a_b(Mat64& Y, const Mat64& A, const Mat64& W) {
    check_a_b(Y, A, W);
    const std::int64_t B = static_cast<std::int64_t>(A.rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < B; ++i) {
        a_b_row(Y.row(i), A.row(i), W);
    }
}

void column_sums(Vec64& out, const Mat64& D) {
    check_colsum(out, D);
    const std::int64_t C = static_cast<std::int64_t>(D.cols);
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < D.rows; ++i) acc += D.at(i, c);
        out[c] = acc;
    }
}

double dot(const Vec64& a, const Vec64& b) {
    require(a.size() == b.size(), "dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm(const Vec64& a) {
    double acc = 0.0;
    for (double x : a) acc += x * x;
    return acc;
}

void axpy(Vec64& y, double alpha, const Vec64& x) {
    require(y.size() == x.size(), "axpy: length mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

void add_inplace(Mat64& y, const Mat64& x) {
    require(y.same_shape(x), "add_inplace: shape mismatch");
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
}

namespace serial {

void affine_batch(Mat64& out, const Mat64& X, const Mat64& W, const Vec64& b) {
    check_affine(out, X, W, b);
    for (std::size_t i = 0; i < X.rows; ++i) {
        affine_row(out.row(i), X.row(i), W, b);
    }
}

void softmax_rows(Mat64& P, const Mat64& Z) {
    check_softmax(P, Z);
    for (std::size_t i = 0; i < Z.rows; ++i) {
        softmax_row(P.row(i), Z.row(i), Z.cols);
    }
}

void matmul_at_b(Mat64& G, const Mat64& A, const Mat64& B) {
    check_at_b(G, A, B);
    for (std::size_t r = 0; r < A.cols; ++r) {
        at_b_row(G.row(r), r, A, B);
    }
}

void matmul_a_b(Mat64& Y, const Mat64& A, const Mat64& W) {
    check_a_b(Y, A, W);
    for (std::size_t i = 0; i < A.rows; ++i) {
        a_b_row(Y.row(i), A.row(i), W);
    }
}

void column_sums(Vec64& out, const Mat64& D) {
    check_colsum(out, D);
    for (std::size_t c = 0; c < D.cols; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < D.rows; ++i) acc += D.at(i, c);
        out[c] = acc;
    }
}

}  // namespace serial

}  // namespace balgrad::kernels
