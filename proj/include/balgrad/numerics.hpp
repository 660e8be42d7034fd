#pragma once

#include <functional>

#include "balgrad/tensor.hpp"

namespace balgrad {

/// Numerically stable softmax (max-subtracted). Probabilities are floored at
/// 1e-300 so downstream logs stay finite.
ProbVec softmax(const Vec64& logits);

/// -log p[label].
double cross_entropy(const ProbVec& probs, std::size_t label);

/// KL(p || q) = sum_k p_k log(p_k / q_k). Returns exactly 0.0 when the inputs
/// are bitwise equal; tiny negative rounding residue is clamped to 0.
double kl_divergence(const ProbVec& p, const ProbVec& q);

/// Mean KL between corresponding rows of two row-stochastic matrices.
double mean_row_kl(const Mat64& P, const Mat64& Q);

/// KL between row `row` of P and row `row` of Q.
double kl_between_rows(const Mat64& P, const Mat64& Q, std::size_t row);

/// a.b / (|a| |b|); returns 0.0 if either norm is below 1e-15.
double cosine_similarity(const Vec64& a, const Vec64& b);

using LossFn = std::function<double(const Vec64&)>;

/// Central-difference gradient probe. `loss_fn` must be pure (it is called
/// concurrently from multiple threads on private copies of `params`).
/// epsilon must lie in [1e-8, 1e-3]. Throws OracleFailure if the loss goes
/// non-finite at any probe point.
Vec64 finite_difference_grad(const LossFn& loss_fn, const Vec64& params, double epsilon);

namespace serial {
Vec64 finite_difference_grad(const LossFn& loss_fn, const Vec64& params, double epsilon);
}

}  // namespace balgrad
