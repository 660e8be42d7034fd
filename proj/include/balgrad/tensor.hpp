#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "balgrad/errors.hpp"

namespace balgrad {

using Vec64 = std::vector<double>;

/// Dense row-major matrix of doubles.
struct Mat64 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec64 data;

    Mat64() = default;
    Mat64(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool same_shape(const Mat64& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

inline bool all_finite(const Vec64& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline bool all_finite(const Mat64& m) { return all_finite(m.data); }

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw InvalidInput(msg);
}

/// Probability vector: nonnegative entries summing to 1 within 1e-12.
/// Constructible only through `from_values`, so any instance is valid.
class ProbVec {
  public:
    static ProbVec from_values(Vec64 values) {
        require(values.size() >= 2, "ProbVec: need at least 2 entries");
        double sum = 0.0;
        for (double p : values) {
            require(std::isfinite(p) && p >= 0.0, "ProbVec: entries must be finite and nonnegative");
            sum += p;
        }
        require(std::abs(sum - 1.0) <= 1e-12, "ProbVec: entries must sum to 1 within 1e-12");
        return ProbVec(std::move(values));
    }

    const Vec64& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

  private:
    explicit ProbVec(Vec64 v) : values_(std::move(v)) {}
    Vec64 values_;
};

/// FNV-1a over raw bytes; used to bind backward() calls to the forward()
/// outputs they were computed from.
inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const Vec64& v, std::uint64_t h = 1469598103934665603ull) {
    return fnv1a(v.data(), v.size() * sizeof(double), h);
}

}  // namespace balgrad
