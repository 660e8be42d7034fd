// Throughput comparison: OpenMP kernels vs their serial references, plus the
// full forward/backward pass built on top of them. The two variants are
// bit-identical by construction (owner-computes loops, fixed summation
// order); tests assert that, this tool just measures the speed difference.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "balgrad/datagen.hpp"
#include "balgrad/kernels.hpp"
#include "balgrad/model.hpp"
#include "balgrad/rng.hpp"

using namespace balgrad;

namespace {

double checksum_sink = 0.0;  // keeps the measured work observable

double time_ms(const std::function<void()>& fn, int iterations) {
    fn();  // warm-up
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < iterations; ++i) fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count() / iterations;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-24s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

Mat64 random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Mat64 m(rows, cols);
    for (double& x : m.data) x = rng.normal();
    return m;
}

}  // namespace

int main(int argc, char** argv) {
    int iterations = 20;
    int threads = 0;
    CLI::App app{"kernel throughput: serial reference vs OpenMP"};
    app.add_option("--iterations", iterations, "timed iterations per kernel")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "worker thread count (0 = default)")->check(CLI::NonNegativeNumber);
    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
    std::printf("OpenMP max threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run serial code\n");
#endif

    Rng rng(1234);
    const std::size_t B = 2048, D = 256, R = 64;
    const Mat64 X = random_matrix(B, D, rng);
    const Mat64 W = random_matrix(R, D, rng);
    Vec64 bias(R);
    for (double& x : bias) x = rng.normal();
    const Mat64 A = random_matrix(B, R, rng);
    Mat64 out_br(B, R), out_rd(R, D), out_bd(B, D);
    Vec64 colsum(R);

    report("affine_batch",
           time_ms([&] { kernels::serial::affine_batch(out_br, X, W, bias); checksum_sink += out_br.at(0, 0); }, iterations),
           time_ms([&] { kernels::affine_batch(out_br, X, W, bias); checksum_sink += out_br.at(0, 0); }, iterations));
    report("matmul_at_b",
           time_ms([&] { kernels::serial::matmul_at_b(out_rd, A, X); checksum_sink += out_rd.at(0, 0); }, iterations),
           time_ms([&] { kernels::matmul_at_b(out_rd, A, X); checksum_sink += out_rd.at(0, 0); }, iterations));
    report("matmul_a_b",
           time_ms([&] { kernels::serial::matmul_a_b(out_bd, A, W); checksum_sink += out_bd.at(0, 0); }, iterations),
           time_ms([&] { kernels::matmul_a_b(out_bd, A, W); checksum_sink += out_bd.at(0, 0); }, iterations));
    report("softmax_rows",
           time_ms([&] { kernels::serial::softmax_rows(out_br, A); checksum_sink += out_br.at(0, 0); }, iterations),
           time_ms([&] { kernels::softmax_rows(out_br, A); checksum_sink += out_br.at(0, 0); }, iterations));
    report("column_sums",
           time_ms([&] { kernels::serial::column_sums(colsum, A); checksum_sink += colsum[0]; }, iterations),
           time_ms([&] { kernels::column_sums(colsum, A); checksum_sink += colsum[0]; }, iterations));

    // End-to-end: one full-batch forward + backward at experiment scale.
    SynthConfig synth;
    synth.samples = 2000;
    synth.classes = 10;
    synth.image_dim = 32;
    synth.text_dim = 32;
    synth.alpha = 0.9;
    synth.seed = 7;
    const Dataset data = generate(synth);
    const Batch batch = gather_batch(data);
    ModelConfig model;
    model.image_dim = 32;
    model.text_dim = 32;
    model.embed_dim = 16;
    model.classes = 10;
    const Params params = init_params(model, 7);

    const double fwd_bwd_ms = time_ms(
        [&] {
            const ForwardOutputs fwd = forward(model, params, batch);
            const GradientSet grads = backward(model, params, batch, fwd);
            checksum_sink += grads.fused.W.at(0, 0) + fwd.losses.fused_ce;
        },
        iterations);
    std::printf("%-24s %9.3f ms per full-batch step (B=%zu)\n", "forward+backward", fwd_bwd_ms,
                batch.size());

    std::printf("(checksum %.6g)\n", checksum_sink);
    return 0;
}
