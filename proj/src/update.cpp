#include "balgrad/update.hpp"

#include <cmath>

#include "balgrad/kernels.hpp"
#include "balgrad/numerics.hpp"

namespace balgrad {

const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::Baseline: return "baseline";
        case Mode::FixedKL: return "fixed_kl";
        case Mode::ReweightOnly: return "reweight_only";
        case Mode::ProjectOnly: return "project_only";
        case Mode::Full: return "full";
    }
    return "unknown";
}

std::optional<Mode> mode_from_name(const std::string& name) {
    for (Mode mode : {Mode::Baseline, Mode::FixedKL, Mode::ReweightOnly, Mode::ProjectOnly, Mode::Full}) {
        if (name == mode_name(mode)) return mode;
    }
    return std::nullopt;
}

void UpdateConfig::validate() const {
    require(std::isfinite(gamma) && gamma > 0.0, "UpdateConfig: gamma must be positive");
    require(std::isfinite(schedule_tau) && schedule_tau > 0.0, "UpdateConfig: schedule_tau must be positive");
}

std::pair<double, double> reweight(double image_ce, double text_ce) {
    require(std::isfinite(image_ce) && std::isfinite(text_ce), "reweight: losses must be finite");
    require(image_ce >= 0.0 && text_ce >= 0.0, "reweight: losses must be nonnegative");
    const double total = image_ce + text_ce;
    if (total < 1e-12) return {0.5, 0.5};
    return {image_ce / total, text_ce / total};
}

double schedule_factor(std::uint64_t t, double gamma, double tau) {
    require(std::isfinite(gamma) && gamma > 0.0, "schedule_factor: gamma must be positive");
    require(std::isfinite(tau) && tau > 0.0, "schedule_factor: tau must be positive");
    const double sigmoid = 1.0 / (1.0 + std::exp(-(static_cast<double>(t) / tau)));
    return gamma * (1.0 + sigmoid);
}

Vec64 combine_kl_gradient(const ModelConfig& cfg, const BranchGrad& image_kl, const BranchGrad& text_kl,
                          double weight_image, double weight_text, double factor) {
    require(std::isfinite(weight_image) && std::isfinite(weight_text) && std::isfinite(factor),
            "combine_kl_gradient: non-finite scale");
    require(weight_image >= 0.0 && weight_text >= 0.0, "combine_kl_gradient: weights must be nonnegative");
    const FlatLayout layout = FlatLayout::from(cfg);
    Vec64 flat(layout.total, 0.0);
    auto place = [&flat](std::size_t off, const LayerGrad& g, double scale) {
        for (double w : g.W.data) flat[off++] = scale * w;
        for (double b : g.b) flat[off++] = scale * b;
    };
    const double image_scale = factor * weight_image;
    const double text_scale = factor * weight_text;
    require(image_kl.embed.W.rows == cfg.embed_dim && image_kl.embed.W.cols == cfg.image_dim,
            "combine_kl_gradient: image embed grad shape mismatch");
    require(text_kl.embed.W.rows == cfg.embed_dim && text_kl.embed.W.cols == cfg.text_dim,
            "combine_kl_gradient: text embed grad shape mismatch");
    require(image_kl.head.W.rows == cfg.classes && text_kl.head.W.rows == cfg.classes,
            "combine_kl_gradient: head grad shape mismatch");
    place(layout.embed_image_w, image_kl.embed, image_scale);
    place(layout.embed_text_w, text_kl.embed, text_scale);
    place(layout.head_image_w, image_kl.head, image_scale);
    place(layout.head_text_w, text_kl.head, text_scale);
    // fused block stays zero: the distillation losses do not touch it.
    return flat;
}

std::pair<Vec64, bool> project_target_gradient(const Vec64& target, const Vec64& kl) {
    require(target.size() == kl.size(), "project_target_gradient: length mismatch");
    require(all_finite(target) && all_finite(kl), "project_target_gradient: non-finite input");
    const double kl_sq = kernels::squared_norm(kl);
    if (std::sqrt(kl_sq) < 1e-15) return {target, false};
    const double d = kernels::dot(target, kl);
    if (d >= 0.0) return {target, false};
    Vec64 projected = target;
    kernels::axpy(projected, -d / kl_sq, kl);
    return {std::move(projected), true};
}

Vec64 compose_update(const ModelConfig& cfg, const GradientSet& grads, const LossBundle& losses,
                     const UpdateConfig& update_cfg, std::uint64_t t, StepDiagnostics& diag) {
    update_cfg.validate();
    Vec64 target = flatten_target_gradient(cfg, grads);
    diag = StepDiagnostics{};
    diag.target_norm = std::sqrt(kernels::squared_norm(target));

    if (update_cfg.mode == Mode::Baseline) {
        diag.schedule = 0.0;
        diag.cos_target_kl = std::nullopt;
        return target;
    }

    const bool loss_weighted = update_cfg.mode == Mode::ReweightOnly || update_cfg.mode == Mode::Full;
    const bool projecting = update_cfg.mode == Mode::ProjectOnly || update_cfg.mode == Mode::Full;

    if (loss_weighted) {
        std::tie(diag.weight_image, diag.weight_text) = reweight(losses.image_ce, losses.text_ce);
    } else {
        diag.weight_image = diag.weight_text = 0.5;
    }
    diag.schedule = schedule_factor(t, update_cfg.gamma, update_cfg.schedule_tau);

    const Vec64 kl = combine_kl_gradient(cfg, grads.image_kl, grads.text_kl, diag.weight_image,
                                         diag.weight_text, diag.schedule);
    diag.kl_norm = std::sqrt(kernels::squared_norm(kl));
    diag.cos_target_kl = cosine_similarity(target, kl);
    diag.conflicted = diag.kl_norm >= 1e-15 && kernels::dot(target, kl) < 0.0;

    if (projecting) {
        auto [projected, fired] = project_target_gradient(target, kl);
        require(fired == diag.conflicted, "compose_update: projection gate mismatch");
        target = std::move(projected);
    }
    kernels::axpy(target, 1.0, kl);
    return target;
}

}  // namespace balgrad
