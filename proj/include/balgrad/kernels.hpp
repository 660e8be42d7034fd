#pragma once

#include "balgrad/tensor.hpp"

namespace balgrad::kernels {

// Batched dense primitives. The default entry points are OpenMP-parallel; the
// `serial` namespace holds plain-loop references with identical semantics.
//
// Parallel loops are owner-computes over output elements with a fixed-order
// inner summation, so results are bit-identical to the serial versions for
// any thread count. Tests compare the two byte for byte; tools/bench_kernels
// compares their throughput.

/// out[i,:] = W * x[i,:] + b   (X: B x D, W: R x D, b: R, out: B x R)
void affine_batch(Mat64& out, const Mat64& X, const Mat64& W, const Vec64& b);

/// Row-wise softmax with max subtraction; probabilities floored at 1e-300.
void softmax_rows(Mat64& P, const Mat64& Z);

/// G = A^T * B   (A: N x R, B: N x D, G: R x D)
void matmul_at_b(Mat64& G, const Mat64& A, const Mat64& B);

/// Y = A * W   (A: B x R, W: R x D, Y: B x D)
void matmul_a_b(Mat64& Y, const Mat64& A, const Mat64& W);

/// out[c] = sum_i D[i,c]
void column_sums(Vec64& out, const Mat64& D);

// Small serial helpers shared by both paths (vector-length work is too small
// to benefit from threading).
double dot(const Vec64& a, const Vec64& b);
double squared_norm(const Vec64& a);
void axpy(Vec64& y, double alpha, const Vec64& x);  // y += alpha * x
void add_inplace(Mat64& y, const Mat64& x);

namespace serial {
void affine_batch(Mat64& out, const Mat64& X, const Mat64& W, const Vec64& b);
void softmax_rows(Mat64& P, const Mat64& Z);
void matmul_at_b(Mat64& G, const Mat64& A, const Mat64& B);
void matmul_a_b(Mat64& Y, const Mat64& A, const Mat64& W);
void column_sums(Vec64& out, const Mat64& D);
}  // namespace serial

}  // namespace balgrad::kernels
