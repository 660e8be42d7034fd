#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "balgrad/model.hpp"

namespace balgrad {

/// Update composition modes, from plain descent to the full balanced update:
///  - Baseline:     target gradients only, no distillation.
///  - FixedKL:      add the KL gradient with fixed 1/2, 1/2 modality weights.
///  - ReweightOnly: KL gradient with loss-proportional modality weights.
///  - ProjectOnly:  fixed 1/2, 1/2 weights plus conflict projection.
///  - Full:         loss-proportional weights plus conflict projection.
enum class Mode { Baseline, FixedKL, ReweightOnly, ProjectOnly, Full };

const char* mode_name(Mode mode);
std::optional<Mode> mode_from_name(const std::string& name);

struct UpdateConfig {
    double gamma = 0.5;         // base scale of the KL gradient contribution
    double schedule_tau = 1.0;  // time constant of the ramp-up schedule
    Mode mode = Mode::Full;

    void validate() const;
};

/// Per-step bookkeeping emitted alongside the update direction.
struct StepDiagnostics {
    double weight_image = 0.5;
    double weight_text = 0.5;
    double schedule = 0.0;
    /// Cosine between the flat target gradient and the flat KL gradient;
    /// absent in Baseline mode (no KL gradient exists there).
    std::optional<double> cos_target_kl;
    /// True when a conflict was detected (negative dot with a non-degenerate
    /// KL gradient). In the projecting modes this is also when projection fires.
    bool conflicted = false;
    double kl_norm = 0.0;
    double target_norm = 0.0;
};

/// Loss-proportional modality weights: each branch's KL gradient is scaled by
/// its own head's share of the total head loss, so the currently weaker
/// (higher-loss) modality drives the shared update more. Returns
/// (weight_image, weight_text); weights are nonnegative and sum to 1. When
/// both losses are below 1e-12 the split falls back to (1/2, 1/2).
std::pair<double, double> reweight(double image_ce, double text_ce);

/// gamma * (1 + sigmoid(t / tau)): ramps from 1.5 * gamma at t = 0 towards
/// 2 * gamma, monotone nondecreasing in t.
double schedule_factor(std::uint64_t t, double gamma, double tau);

/// factor * (w_image * image_kl + w_text * text_kl) assembled as a flat vector
/// in canonical layout (zero on the fused-classifier block).
Vec64 combine_kl_gradient(const ModelConfig& cfg, const BranchGrad& image_kl, const BranchGrad& text_kl,
                          double weight_image, double weight_text, double factor);

/// If target . kl < 0 (and |kl| >= 1e-15), remove the conflicting component:
/// target - (target . kl / |kl|^2) * kl. Otherwise return target unchanged.
/// Second element reports whether projection fired.
std::pair<Vec64, bool> project_target_gradient(const Vec64& target, const Vec64& kl);

/// Full update direction (to be applied as params -= lambda * direction) in
/// canonical flat layout, per the configured mode. `losses` feeds the
/// loss-proportional weights; `t` feeds the schedule.
Vec64 compose_update(const ModelConfig& cfg, const GradientSet& grads, const LossBundle& losses,
                     const UpdateConfig& update_cfg, std::uint64_t t, StepDiagnostics& diag);

}  // namespace balgrad
