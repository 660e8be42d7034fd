#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "balgrad/model.hpp"
#include "balgrad/update.hpp"

namespace balgrad {

/// One numeric check of a first-order loss-change identity: after a gradient
/// step of size lambda, the measured loss change should match the predicted
/// -lambda * |gradient|^2 term up to an O(lambda^2) residual.
struct ResidualReport {
    double lambda = 0.0;
    double delta_actual = 0.0;      // measured loss change
    double delta_firstorder = 0.0;  // predicted first-order change
    double residual = 0.0;          // |actual - firstorder|
    double cross_term = 0.0;        // interaction dot product (see each check)
};

/// Target-loss descent check. Update: embeddings and fused classifier move
/// along their target-loss gradients (heads stay put); measured loss is
/// fused_ce + image_ce + text_ce. First-order prediction is
/// -lambda * (|g_embed_image|^2 + |g_embed_text|^2 + |g_fused|^2), i.e. the
/// squared norm of the target gradient restricted to the updated blocks.
/// cross_term reports the dot of the two modality blocks of the fused
/// classifier gradient (their interaction inside |g_fused|^2 under Add
/// fusion; pure bookkeeping under Concat).
/// lambda must be positive; the expansion is informative for lambda <= 1e-2.
ResidualReport verify_target_expansion(const ModelConfig& cfg, const Params& params,
                                       const Batch& batch, double lambda);

/// Combined descent check for the distillation update. Update: embeddings
/// move along target + own-branch KL gradients, the fused classifier along
/// its target gradient; heads stay put. Measured loss is the target total
/// plus both KL terms with the teacher side frozen at the pre-update
/// predictions (each KL trains only its own branch, so the frozen teacher is
/// what the update direction is actually the gradient of). The KL gradients
/// enter unweighted here; `update_cfg` is validated for completeness but its
/// mode/weights govern training, not this identity. cross_term is the dot
/// between the restricted target gradient and the restricted KL gradient.
ResidualReport verify_combined_expansion(const ModelConfig& cfg, const Params& params,
                                         const Batch& batch, double lambda,
                                         const UpdateConfig& update_cfg);

/// Measured combined-loss change for the same update, optionally with the KL
/// gradient negated. On a conflicted state (negative cross term) negating the
/// KL direction strictly deepens the first-order descent; this helper lets
/// tests measure that.
double combined_loss_change(const ModelConfig& cfg, const Params& params, const Batch& batch,
                            double lambda, bool negate_kl);

/// Residual-halving grid: `states` random (params, batch) draws, each checked
/// at every lambda in `lambdas` (which must halve left to right). For a true
/// O(lambda^2) residual, halving lambda scales the residual by ~1/4; ratios
/// outside [band_lo, band_hi] are reported as violations.
struct ExpansionGridConfig {
    ModelConfig model;
    std::size_t batch_size = 4;
    std::size_t states = 20;
    std::vector<double> lambdas = {1e-3, 5e-4, 2.5e-4};
    std::uint64_t seed = 0;
    double band_lo = 0.15;
    double band_hi = 0.4;

    void validate() const;
};

struct ExpansionGridRow {
    std::size_t state = 0;
    ResidualReport target;
    ResidualReport combined;
};

struct BandViolation {
    std::size_t state = 0;
    std::string which;       // "target" or "combined"
    double lambda_large = 0; // the larger lambda of the offending pair
    double ratio = 0;
};

struct ExpansionGridResult {
    std::vector<ExpansionGridRow> rows;
    std::vector<BandViolation> violations;

    bool passed() const { return violations.empty(); }
};

ExpansionGridResult run_expansion_grid(const ExpansionGridConfig& cfg);

}  // namespace balgrad
