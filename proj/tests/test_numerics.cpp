#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "balgrad/numerics.hpp"
#include "balgrad/rng.hpp"

using namespace balgrad;

namespace {

ProbVec random_prob(Rng& rng, std::size_t n) {
    Vec64 v(n);
    double sum = 0.0;
    for (auto& x : v) {
        x = rng.uniform(0.05, 1.0);
        sum += x;
    }
    for (auto& x : v) x /= sum;
    // Renormalize exactly enough for the ProbVec 1e-12 gate.
    double s2 = 0.0;
    for (double x : v) s2 += x;
    v.back() += 1.0 - s2;
    return ProbVec::from_values(std::move(v));
}

}  // namespace

TEST_CASE("softmax of [1,2,3] matches the closed form") {
    const ProbVec p = softmax({1.0, 2.0, 3.0});
    // e^1 / (e^1 + e^2 + e^3) etc., evaluated independently.
    CHECK(p[0] == doctest::Approx(0.09003057317038046).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.24472847105479767).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(0.66524095577482178).epsilon(1e-12));
}

TEST_CASE("softmax is invariant under a constant logit shift") {
    const ProbVec a = softmax({1.0, 2.0, 3.0});
    const ProbVec b = softmax({1.0 + 10.0, 2.0 + 10.0, 3.0 + 10.0});
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(b[k] == doctest::Approx(a[k]).epsilon(1e-14));
    }
    // Integer shifts of integer logits are exact in binary floating point,
    // so the max-subtracted form reproduces the same bytes.
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k] == b[k]);
    }
}

TEST_CASE("softmax survives extreme logits without overflow") {
    const ProbVec p = softmax({1000.0, 0.0, -1000.0});
    CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(p[1]));
    CHECK(p[2] >= 0.0);
    double sum = p[0] + p[1] + p[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax rejects degenerate input") {
    CHECK_THROWS_AS(softmax({1.0}), InvalidInput);
    CHECK_THROWS_AS(softmax({1.0, std::nan("")}), InvalidInput);
}

TEST_CASE("cross_entropy is -log p[label]") {
    const ProbVec p = softmax({1.0, 2.0, 3.0});
    CHECK(cross_entropy(p, 0) == doctest::Approx(2.4076059644443806).epsilon(1e-12));
    CHECK(cross_entropy(p, 2) == doctest::Approx(-std::log(0.66524095577482178)).epsilon(1e-12));
    const ProbVec uniform = ProbVec::from_values({0.25, 0.25, 0.25, 0.25});
    CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK_THROWS_AS(cross_entropy(p, 3), InvalidInput);
}

TEST_CASE("kl_divergence hand value: KL((.5,.5) || (.25,.75)) = .5 ln(4/3)") {
    const ProbVec p = ProbVec::from_values({0.5, 0.5});
    const ProbVec q = ProbVec::from_values({0.25, 0.75});
    CHECK(kl_divergence(p, q) == doctest::Approx(0.14384103622589045).epsilon(1e-12));
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(4.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("kl_divergence of identical distributions is exactly zero") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
        const ProbVec p = random_prob(rng, 5);
        CHECK(kl_divergence(p, p) == 0.0);
    }
}

TEST_CASE("kl_divergence is nonnegative and asymmetric on random pairs") {
    Rng rng(11);
    bool saw_asymmetry = false;
    for (int i = 0; i < 100; ++i) {
        const ProbVec p = random_prob(rng, 6);
        const ProbVec q = random_prob(rng, 6);
        const double pq = kl_divergence(p, q);
        const double qp = kl_divergence(q, p);
        CHECK(pq >= 0.0);
        CHECK(qp >= 0.0);
        if (std::abs(pq - qp) > 1e-6) saw_asymmetry = true;
    }
    CHECK(saw_asymmetry);
}

TEST_CASE("mean_row_kl averages per-row KL") {
    Mat64 P(2, 2), Q(2, 2);
    P.at(0, 0) = 0.5; P.at(0, 1) = 0.5;
    P.at(1, 0) = 0.25; P.at(1, 1) = 0.75;
    Q.at(0, 0) = 0.25; Q.at(0, 1) = 0.75;
    Q.at(1, 0) = 0.25; Q.at(1, 1) = 0.75;  // identical row -> exactly 0
    const double expect = 0.5 * (0.14384103622589045 + 0.0);
    CHECK(mean_row_kl(P, Q) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(kl_between_rows(P, Q, 1) == 0.0);
    Mat64 R(1, 2);
    CHECK_THROWS_AS(mean_row_kl(P, R), InvalidInput);
    CHECK_THROWS_AS(kl_between_rows(P, Q, 2), InvalidInput);
}

TEST_CASE("cosine_similarity basics and scale invariance") {
    CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == 0.0);
    CHECK(cosine_similarity({1.0, 2.0}, {2.0, 4.0}) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cosine_similarity({1.0, 2.0}, {-2.0, -4.0}) == doctest::Approx(-1.0).epsilon(1e-14));

    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        Vec64 a(8), b(8);
        for (auto& x : a) x = rng.normal();
        for (auto& x : b) x = rng.normal();
        const double c = cosine_similarity(a, b);
        CHECK(c >= -1.0 - 1e-12);
        CHECK(c <= 1.0 + 1e-12);
        Vec64 b_scaled = b;
        for (auto& x : b_scaled) x *= 37.5;
        CHECK(cosine_similarity(a, b_scaled) == doctest::Approx(c).epsilon(1e-12));
    }
}

TEST_CASE("cosine_similarity treats near-zero vectors as no signal") {
    CHECK(cosine_similarity({0.0, 0.0, 0.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK(cosine_similarity({1e-20, 0.0, 0.0}, {1.0, 2.0, 3.0}) == 0.0);
    CHECK_THROWS_AS(cosine_similarity({1.0}, {1.0, 2.0}), InvalidInput);
}

TEST_CASE("finite differences recover the gradient of a quadratic") {
    const LossFn quad = [](const Vec64& x) {
        double acc = 0.0;
        for (double v : x) acc += v * v;
        return acc;
    };
    // d/dx sum x^2 = 2x; central differences are exact for quadratics up to
    // rounding.
    const Vec64 g = finite_difference_grad(quad, {3.0, -1.5, 0.25}, 1e-5);
    CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-9));
    CHECK(g[1] == doctest::Approx(-3.0).epsilon(1e-9));
    CHECK(g[2] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("finite differences match the softmax cross-entropy gradient p - onehot") {
    const std::size_t label = 1;
    const LossFn loss = [label](const Vec64& z) {
        return cross_entropy(softmax(z), label);
    };
    const Vec64 z = {0.3, -1.2, 0.9, 2.1};
    const Vec64 g = finite_difference_grad(loss, z, 1e-6);
    const ProbVec p = softmax(z);
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double analytic = p[k] - (k == label ? 1.0 : 0.0);
        CHECK(g[k] == doctest::Approx(analytic).epsilon(1e-6));
    }
}

TEST_CASE("parallel and serial finite differences agree bitwise") {
    const LossFn loss = [](const Vec64& x) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += std::sin(x[i]) * double(i + 1);
        return acc;
    };
    Rng rng(19);
    Vec64 x(40);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    const Vec64 gp = finite_difference_grad(loss, x, 1e-5);
    const Vec64 gs = serial::finite_difference_grad(loss, x, 1e-5);
    REQUIRE(gp.size() == gs.size());
    for (std::size_t i = 0; i < gp.size(); ++i) CHECK(gp[i] == gs[i]);
}

TEST_CASE("finite differences reject bad epsilon and non-finite probes") {
    const LossFn quad = [](const Vec64& x) { return x[0] * x[0]; };
    CHECK_THROWS_AS(finite_difference_grad(quad, {1.0}, 1e-9), InvalidInput);
    CHECK_THROWS_AS(finite_difference_grad(quad, {1.0}, 1e-2), InvalidInput);
    CHECK_THROWS_AS(finite_difference_grad(quad, {}, 1e-5), InvalidInput);

    const LossFn exploding = [](const Vec64& x) { return std::log(x[0]); };
    // Probing 0 +/- epsilon hits log of a negative number.
    CHECK_THROWS_AS(finite_difference_grad(exploding, {0.0}, 1e-5), OracleFailure);
    CHECK_THROWS_AS(serial::finite_difference_grad(exploding, {0.0}, 1e-5), OracleFailure);
}

TEST_CASE("ProbVec rejects unnormalized or negative inputs") {
    CHECK_THROWS_AS(ProbVec::from_values({0.5, 0.6}), InvalidInput);
    CHECK_THROWS_AS(ProbVec::from_values({-0.1, 1.1}), InvalidInput);
    CHECK_THROWS_AS(ProbVec::from_values({1.0}), InvalidInput);
}
