#include "balgrad/expansion.hpp"

#include <cmath>

#include "balgrad/datagen.hpp"
#include "balgrad/kernels.hpp"
#include "balgrad/numerics.hpp"

namespace balgrad {

namespace {

void check_lambda(double lambda) {
    require(std::isfinite(lambda) && lambda > 0.0, "expansion check: lambda must be positive");
}

double block_sqnorm(const LayerGrad& g) {
    return kernels::squared_norm(g.W.data) + kernels::squared_norm(g.b);
}

double block_dot(const LayerGrad& a, const LayerGrad& b) {
    return kernels::dot(a.W.data, b.W.data) + kernels::dot(a.b, b.b);
}

void step_layer(LinearLayer& layer, const LayerGrad& g, double lambda) {
    for (std::size_t i = 0; i < layer.W.data.size(); ++i) layer.W.data[i] -= lambda * g.W.data[i];
    for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= lambda * g.b[i];
}

LayerGrad layer_sum(const LayerGrad& a, const LayerGrad& b, double b_scale) {
    LayerGrad out = a;
    for (std::size_t i = 0; i < out.W.data.size(); ++i) out.W.data[i] += b_scale * b.W.data[i];
    for (std::size_t i = 0; i < out.b.size(); ++i) out.b[i] += b_scale * b.b[i];
    return out;
}

}  // namespace

ResidualReport verify_target_expansion(const ModelConfig& cfg, const Params& params,
                                       const Batch& batch, double lambda) {
    check_lambda(lambda);
    const ForwardOutputs base = forward(cfg, params, batch);
    const GradientSet grads = backward(cfg, params, batch, base);

    Params stepped = params;
    step_layer(stepped.embed_image, grads.embed_image, lambda);
    step_layer(stepped.embed_text, grads.embed_text, lambda);
    step_layer(stepped.fused, grads.fused, lambda);
    const ForwardOutputs after = forward(cfg, stepped, batch);

    ResidualReport report;
    report.lambda = lambda;
    report.delta_actual = after.losses.target_total() - base.losses.target_total();
    report.delta_firstorder = -lambda * (block_sqnorm(grads.embed_image) + block_sqnorm(grads.embed_text) +
                                         block_sqnorm(grads.fused));
    report.residual = std::abs(report.delta_actual - report.delta_firstorder);
    report.cross_term = kernels::dot(grads.fused_image_block.data, grads.fused_text_block.data);
    if (!std::isfinite(report.delta_actual)) {
        throw OracleFailure("verify_target_expansion: non-finite loss after step");
    }
    return report;
}

namespace {

struct CombinedMeasurement {
    double delta_actual = 0.0;
    double target_sq = 0.0;
    double kl_sq = 0.0;
    double cross = 0.0;
};

CombinedMeasurement measure_combined(const ModelConfig& cfg, const Params& params, const Batch& batch,
                                     double lambda, double kl_sign) {
    const ForwardOutputs base = forward(cfg, params, batch);
    const GradientSet grads = backward(cfg, params, batch, base);

    Params stepped = params;
    step_layer(stepped.embed_image, layer_sum(grads.embed_image, grads.image_kl.embed, kl_sign), lambda);
    step_layer(stepped.embed_text, layer_sum(grads.embed_text, grads.text_kl.embed, kl_sign), lambda);
    step_layer(stepped.fused, grads.fused, lambda);
    const ForwardOutputs after = forward(cfg, stepped, batch);

    // Teacher predictions stay at the pre-update state: each branch's KL term
    // is measured against the other branch's old output, matching the
    // objective whose gradient the update direction actually is.
    const double loss_before = base.losses.target_total() + base.losses.image_kl + base.losses.text_kl;
    const double loss_after = after.losses.target_total() + mean_row_kl(after.p_image, base.p_text) +
                              mean_row_kl(after.p_text, base.p_image);

    CombinedMeasurement m;
    m.delta_actual = loss_after - loss_before;
    m.target_sq = block_sqnorm(grads.embed_image) + block_sqnorm(grads.embed_text) + block_sqnorm(grads.fused);
    m.kl_sq = block_sqnorm(grads.image_kl.embed) + block_sqnorm(grads.text_kl.embed);
    m.cross = block_dot(grads.embed_image, grads.image_kl.embed) + block_dot(grads.embed_text, grads.text_kl.embed);
    if (!std::isfinite(m.delta_actual)) {
        throw OracleFailure("verify_combined_expansion: non-finite loss after step");
    }
    return m;
}

}  // namespace

ResidualReport verify_combined_expansion(const ModelConfig& cfg, const Params& params,
                                         const Batch& batch, double lambda,
                                         const UpdateConfig& update_cfg) {
    check_lambda(lambda);
    update_cfg.validate();
    const CombinedMeasurement m = measure_combined(cfg, params, batch, lambda, 1.0);

    ResidualReport report;
    report.lambda = lambda;
    report.delta_actual = m.delta_actual;
    report.delta_firstorder = -lambda * (m.target_sq + m.kl_sq + 2.0 * m.cross);
    report.residual = std::abs(report.delta_actual - report.delta_firstorder);
    report.cross_term = m.cross;
    return report;
}

double combined_loss_change(const ModelConfig& cfg, const Params& params, const Batch& batch,
                            double lambda, bool negate_kl) {
    check_lambda(lambda);
    return measure_combined(cfg, params, batch, lambda, negate_kl ? -1.0 : 1.0).delta_actual;
}

void ExpansionGridConfig::validate() const {
    model.validate();
    require(batch_size >= 1, "ExpansionGridConfig: batch_size must be positive");
    require(states >= 1, "ExpansionGridConfig: states must be positive");
    require(lambdas.size() >= 2, "ExpansionGridConfig: need at least 2 lambdas");
    for (std::size_t i = 0; i + 1 < lambdas.size(); ++i) {
        require(std::isfinite(lambdas[i]) && lambdas[i] > 0.0, "ExpansionGridConfig: lambdas must be positive");
        require(std::abs(lambdas[i + 1] - 0.5 * lambdas[i]) <= 1e-9 * lambdas[i],
                "ExpansionGridConfig: each lambda must be half the previous one");
    }
    require(band_lo > 0.0 && band_lo < band_hi && band_hi < 1.0, "ExpansionGridConfig: bad band");
}

ExpansionGridResult run_expansion_grid(const ExpansionGridConfig& cfg) {
    cfg.validate();
    UpdateConfig update_cfg;  // defaults; the identity itself is mode-independent

    ExpansionGridResult result;
    for (std::size_t state = 0; state < cfg.states; ++state) {
        // Independent state draw: fresh parameters plus a small balanced batch.
        const Params params = init_params(cfg.model, cfg.seed + 2 * state);
        SynthConfig synth;
        synth.samples = std::max<std::uint64_t>(cfg.batch_size, cfg.model.classes);
        synth.classes = static_cast<std::uint32_t>(cfg.model.classes);
        synth.image_dim = static_cast<std::uint32_t>(cfg.model.image_dim);
        synth.text_dim = static_cast<std::uint32_t>(cfg.model.text_dim);
        synth.seed = cfg.seed + 2 * state + 1;
        const Batch batch = gather_batch(generate(synth));

        std::vector<ResidualReport> target_reports, combined_reports;
        for (double lambda : cfg.lambdas) {
            ExpansionGridRow row;
            row.state = state;
            row.target = verify_target_expansion(cfg.model, params, batch, lambda);
            row.combined = verify_combined_expansion(cfg.model, params, batch, lambda, update_cfg);
            target_reports.push_back(row.target);
            combined_reports.push_back(row.combined);
            result.rows.push_back(std::move(row));
        }

        auto check_band = [&](const std::vector<ResidualReport>& reports, const char* which) {
            for (std::size_t i = 0; i + 1 < reports.size(); ++i) {
                const double large = reports[i].residual;
                const double small = reports[i + 1].residual;
                // Residuals this small are numerically converged; the ratio
                // carries no information there.
                if (large < 1e-18 && small < 1e-18) continue;
                const double ratio = small / large;
                if (!(ratio >= cfg.band_lo && ratio <= cfg.band_hi)) {
                    result.violations.push_back({state, which, reports[i].lambda, ratio});
                }
            }
        };
        check_band(target_reports, "target");
        check_band(combined_reports, "combined");
    }
    return result;
}

}  // namespace balgrad
