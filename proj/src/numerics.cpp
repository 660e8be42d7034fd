#include "balgrad/numerics.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>

#include "balgrad/kernels.hpp"

namespace balgrad {

ProbVec softmax(const Vec64& logits) {
    require(logits.size() >= 2, "softmax: need at least 2 logits");
    require(all_finite(logits), "softmax: non-finite logit");
    Mat64 z(1, logits.size());
    z.data = logits;
    Mat64 p(1, logits.size());
    kernels::serial::softmax_rows(p, z);
    return ProbVec::from_values(std::move(p.data));
}

double cross_entropy(const ProbVec& probs, std::size_t label) {
    require(label < probs.size(), "cross_entropy: label out of range");
    return -std::log(std::max(probs[label], 1e-300));
}

namespace {

double row_kl(const double* p, const double* q, std::size_t n) {
    bool identical = true;
    for (std::size_t k = 0; k < n; ++k) {
        if (p[k] != q[k]) {
            identical = false;
            break;
        }
    }
    if (identical) return 0.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (p[k] > 0.0) {
            acc += p[k] * std::log(p[k] / std::max(q[k], 1e-300));
        }
    }
    return std::max(acc, 0.0);
}

}  // namespace

double kl_divergence(const ProbVec& p, const ProbVec& q) {
    require(p.size() == q.size(), "kl_divergence: length mismatch");
    return row_kl(p.values().data(), q.values().data(), p.size());
}

double mean_row_kl(const Mat64& P, const Mat64& Q) {
    require(P.same_shape(Q), "mean_row_kl: shape mismatch");
    require(P.rows > 0, "mean_row_kl: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < P.rows; ++i) {
        acc += row_kl(P.row(i), Q.row(i), P.cols);
    }
    return acc / static_cast<double>(P.rows);
}

double kl_between_rows(const Mat64& P, const Mat64& Q, std::size_t row) {
    require(P.same_shape(Q), "kl_between_rows: shape mismatch");
    require(row < P.rows, "kl_between_rows: row out of range");
    return row_kl(P.row(row), Q.row(row), P.cols);
}

double cosine_similarity(const Vec64& a, const Vec64& b) {
    require(a.size() == b.size(), "cosine_similarity: length mismatch");
    require(all_finite(a) && all_finite(b), "cosine_similarity: non-finite input");
    const double na = std::sqrt(kernels::squared_norm(a));
    const double nb = std::sqrt(kernels::squared_norm(b));
    if (na < 1e-15 || nb < 1e-15) return 0.0;
    return kernels::dot(a, b) / (na * nb);
}

namespace {

void check_fd_args(const Vec64& params, double epsilon) {
    require(epsilon >= 1e-8 && epsilon <= 1e-3, "finite_difference_grad: epsilon must be in [1e-8, 1e-3]");
    require(!params.empty(), "finite_difference_grad: empty parameter vector");
    require(all_finite(params), "finite_difference_grad: non-finite parameter");
}

}  // namespace

Vec64 finite_difference_grad(const LossFn& loss_fn, const Vec64& params, double epsilon) {
    check_fd_args(params, epsilon);
    const std::int64_t n = static_cast<std::int64_t>(params.size());
    Vec64 grad(params.size(), 0.0);
    std::atomic<bool> bad{false};
#pragma omp parallel
    {
        Vec64 probe = params;
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) {
            if (bad.load(std::memory_order_relaxed)) continue;
            const double orig = probe[i];
            probe[i] = orig + epsilon;
            const double f_plus = loss_fn(probe);
            probe[i] = orig - epsilon;
            const double f_minus = loss_fn(probe);
            probe[i] = orig;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                bad.store(true, std::memory_order_relaxed);
                continue;
            }
            grad[i] = (f_plus - f_minus) / (2.0 * epsilon);
        }
    }
    if (bad.load()) throw OracleFailure("finite_difference_grad: loss not finite at a probe point");
    return grad;
}

namespace serial {

Vec64 finite_difference_grad(const LossFn& loss_fn, const Vec64& params, double epsilon) {
    check_fd_args(params, epsilon);
    Vec64 probe = params;
    Vec64 grad(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + epsilon;
        const double f_plus = loss_fn(probe);
        probe[i] = orig - epsilon;
        const double f_minus = loss_fn(probe);
        probe[i] = orig;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
            throw OracleFailure("finite_difference_grad: loss not finite at a probe point");
        }
        grad[i] = (f_plus - f_minus) / (2.0 * epsilon);
    }
    return grad;
}

}  // namespace serial

}  // namespace balgrad
