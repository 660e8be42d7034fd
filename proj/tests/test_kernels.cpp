#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "balgrad/kernels.hpp"
#include "balgrad/rng.hpp"

using namespace balgrad;

namespace {

Mat64 random_mat(Rng& rng, std::size_t r, std::size_t c) {
    Mat64 m(r, c);
    for (auto& x : m.data) x = rng.normal();
    return m;
}

Vec64 random_vec(Rng& rng, std::size_t n) {
    Vec64 v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bitwise_equal(const Mat64& a, const Mat64& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        if (a.data[i] != b.data[i]) return false;
    }
    return true;
}

}  // namespace

// The parallel kernels are owner-computes with a fixed inner summation order,
// so they must agree with the serial references byte for byte -- not just
// approximately -- at any thread count. Shapes include non-multiples of
// typical chunk sizes to exercise remainder handling.
TEST_CASE("parallel kernels are bit-identical to the serial references") {
    Rng rng(42);
    const std::size_t shapes[][3] = {{1, 2, 2}, {3, 5, 2}, {17, 7, 13}, {64, 33, 10}, {128, 2, 9}};
    for (const auto& s : shapes) {
        const std::size_t B = s[0], D = s[1], R = s[2];
        const Mat64 X = random_mat(rng, B, D);
        const Mat64 W = random_mat(rng, R, D);
        const Vec64 b = random_vec(rng, R);

        Mat64 z_par(B, R), z_ser(B, R);
        kernels::affine_batch(z_par, X, W, b);
        kernels::serial::affine_batch(z_ser, X, W, b);
        CHECK(bitwise_equal(z_par, z_ser));

        Mat64 p_par(B, R), p_ser(B, R);
        kernels::softmax_rows(p_par, z_par);
        kernels::serial::softmax_rows(p_ser, z_ser);
        CHECK(bitwise_equal(p_par, p_ser));

        const Mat64 A = random_mat(rng, B, R);
        Mat64 g_par(R, D), g_ser(R, D);
        kernels::matmul_at_b(g_par, A, X);
        kernels::serial::matmul_at_b(g_ser, A, X);
        CHECK(bitwise_equal(g_par, g_ser));

        Mat64 y_par(B, D), y_ser(B, D);
        kernels::matmul_a_b(y_par, A, W);
        kernels::serial::matmul_a_b(y_ser, A, W);
        CHECK(bitwise_equal(y_par, y_ser));

        Vec64 c_par(R), c_ser(R);
        kernels::column_sums(c_par, A);
        kernels::serial::column_sums(c_ser, A);
        for (std::size_t i = 0; i < R; ++i) CHECK(c_par[i] == c_ser[i]);
    }
}

TEST_CASE("affine_batch computes W x + b on a hand case") {
    // W = [[1, 2], [3, 4]], b = [10, 20], x = [1, 1] -> [13, 27].
    Mat64 X(1, 2);
    X.at(0, 0) = 1.0;
    X.at(0, 1) = 1.0;
    Mat64 W(2, 2);
    W.at(0, 0) = 1.0; W.at(0, 1) = 2.0;
    W.at(1, 0) = 3.0; W.at(1, 1) = 4.0;
    const Vec64 b = {10.0, 20.0};
    Mat64 out(1, 2);
    kernels::affine_batch(out, X, W, b);
    CHECK(out.at(0, 0) == 13.0);
    CHECK(out.at(0, 1) == 27.0);
}

TEST_CASE("matmul_at_b equals a naive triple loop") {
    Rng rng(5);
    const Mat64 A = random_mat(rng, 9, 4);
    const Mat64 B = random_mat(rng, 9, 6);
    Mat64 G(4, 6);
    kernels::matmul_at_b(G, A, B);
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 6; ++c) {
            double acc = 0.0;
            for (std::size_t i = 0; i < 9; ++i) acc += A.at(i, r) * B.at(i, c);
            CHECK(G.at(r, c) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax_rows normalizes every row and respects ordering") {
    Rng rng(8);
    const Mat64 Z = random_mat(rng, 12, 5);
    Mat64 P(12, 5);
    kernels::softmax_rows(P, Z);
    for (std::size_t i = 0; i < Z.rows; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < Z.cols; ++k) {
            CHECK(P.at(i, k) > 0.0);
            sum += P.at(i, k);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t a = 0; a < Z.cols; ++a) {
            for (std::size_t b = 0; b < Z.cols; ++b) {
                if (Z.at(i, a) < Z.at(i, b)) CHECK(P.at(i, a) <= P.at(i, b));
            }
        }
    }
}

TEST_CASE("kernels validate shapes") {
    Mat64 X(2, 3), W(4, 5), out(2, 4);
    Vec64 b(4);
    CHECK_THROWS_AS(kernels::affine_batch(out, X, W, b), InvalidInput);  // D mismatch
    Mat64 W2(4, 3);
    Vec64 b_short(3);
    CHECK_THROWS_AS(kernels::affine_batch(out, X, W2, b_short), InvalidInput);
    Mat64 A(3, 2), B(4, 2), G(2, 2);
    CHECK_THROWS_AS(kernels::matmul_at_b(G, A, B), InvalidInput);  // row mismatch
    Mat64 P(2, 2), Z(2, 3);
    CHECK_THROWS_AS(kernels::softmax_rows(P, Z), InvalidInput);
}

TEST_CASE("dot, squared_norm and axpy agree with direct evaluation") {
    const Vec64 a = {1.0, -2.0, 3.0};
    const Vec64 b = {4.0, 5.0, -6.0};
    CHECK(kernels::dot(a, b) == doctest::Approx(1.0 * 4 - 2 * 5 - 3 * 6).epsilon(1e-15));
    CHECK(kernels::squared_norm(a) == doctest::Approx(14.0).epsilon(1e-15));
    Vec64 y = {1.0, 1.0, 1.0};
    kernels::axpy(y, 2.0, a);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == -3.0);
    CHECK(y[2] == 7.0);
    CHECK_THROWS_AS(kernels::dot(a, {1.0}), InvalidInput);
}
