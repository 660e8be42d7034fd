#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "balgrad/datagen.hpp"
#include "balgrad/tensor.hpp"

namespace balgrad {

enum class Fusion { Concat, Add };

const char* fusion_name(Fusion f);

/// Two linear probes (one per modality) feeding per-modality classifier heads
/// plus a fused classifier over the combined embedding.
struct ModelConfig {
    std::size_t image_dim = 0;
    std::size_t text_dim = 0;
    std::size_t embed_dim = 0;
    std::size_t classes = 0;
    Fusion fusion = Fusion::Concat;

    std::size_t fused_dim() const { return fusion == Fusion::Concat ? 2 * embed_dim : embed_dim; }
    void validate() const;
};

/// y = W x + b with W stored row-major (out_dim x in_dim).
struct LinearLayer {
    Mat64 W;
    Vec64 b;
};

struct Params {
    LinearLayer embed_image;  // image_dim -> embed_dim
    LinearLayer embed_text;   // text_dim  -> embed_dim
    LinearLayer head_image;   // embed_dim -> classes (image-only classifier)
    LinearLayer head_text;    // embed_dim -> classes (text-only classifier)
    LinearLayer fused;        // fused_dim -> classes (main classifier)
};

/// Column-gathered batch: one matrix per modality plus labels.
struct Batch {
    Mat64 image;  // B x image_dim
    Mat64 text;   // B x text_dim
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return labels.size(); }
};

Batch gather_batch(const Dataset& data, std::span<const std::size_t> indices);
Batch gather_batch(const Dataset& data);

struct LossBundle {
    double fused_ce = 0.0;   // cross-entropy of the fused classifier
    double image_ce = 0.0;   // cross-entropy of the image-only head
    double text_ce = 0.0;    // cross-entropy of the text-only head
    double image_kl = 0.0;   // mean KL(image head || text head)
    double text_kl = 0.0;    // mean KL(text head || image head)

    double target_total() const { return fused_ce + image_ce + text_ce; }
};

struct ForwardOutputs {
    Mat64 z_image, z_text;          // B x embed_dim
    Mat64 fused_in;                 // B x fused_dim (cached for backward)
    Mat64 p_image, p_text, p_fused; // B x classes, row-stochastic
    LossBundle losses;
    std::uint64_t checksum = 0;     // binds these outputs to (params, batch)
};

struct LayerGrad {
    Mat64 W;
    Vec64 b;
};

/// Gradients of one KL loss with respect to one branch (embedding + head).
struct BranchGrad {
    LayerGrad embed;
    LayerGrad head;
};

/// Mean-loss gradients. The embed entries accumulate both the fused path and
/// the modality head path; the head entries are head-CE only; `fused` is the
/// fused-CE gradient. fused_image_block/fused_text_block split fused.W by the
/// modality that feeds each column (for Concat the split is exact slicing).
struct GradientSet {
    LayerGrad embed_image;  // d(fused_ce + image_ce) / d embed_image
    LayerGrad embed_text;   // d(fused_ce + text_ce)  / d embed_text
    LayerGrad head_image;   // d(image_ce) / d head_image
    LayerGrad head_text;    // d(text_ce)  / d head_text
    LayerGrad fused;        // d(fused_ce) / d fused
    Mat64 fused_image_block;  // classes x embed_dim
    Mat64 fused_text_block;   // classes x embed_dim
    BranchGrad image_kl;    // d(image_kl) / d (embed_image, head_image)
    BranchGrad text_kl;     // d(text_kl)  / d (embed_text, head_text)
};

/// Weights uniform in +/- 1/sqrt(fan_in), biases zero. Deterministic in seed.
Params init_params(const ModelConfig& cfg, std::uint64_t seed);

ForwardOutputs forward(const ModelConfig& cfg, const Params& params, const Batch& batch);

/// `outputs` must come from forward() on exactly this (params, batch) pair;
/// a stale pair is rejected via the checksum.
GradientSet backward(const ModelConfig& cfg, const Params& params, const Batch& batch,
                     const ForwardOutputs& outputs);

/// Canonical flat parameter order: embed_image.W, embed_image.b, embed_text.W,
/// embed_text.b, head_image.W, head_image.b, head_text.W, head_text.b,
/// fused.W, fused.b. All flat vectors in this codebase use this layout.
struct FlatLayout {
    std::size_t embed_image_w = 0, embed_image_b = 0;
    std::size_t embed_text_w = 0, embed_text_b = 0;
    std::size_t head_image_w = 0, head_image_b = 0;
    std::size_t head_text_w = 0, head_text_b = 0;
    std::size_t fused_w = 0, fused_b = 0;
    std::size_t total = 0;

    static FlatLayout from(const ModelConfig& cfg);
};

Vec64 flatten_params(const Params& params);
Params unflatten_params(const ModelConfig& cfg, const Vec64& flat);

/// Gradient of the target objective (fused_ce + image_ce + text_ce) as one
/// flat vector in canonical layout.
Vec64 flatten_target_gradient(const ModelConfig& cfg, const GradientSet& grads);

/// params -= lambda * flat_update (canonical layout).
void apply_update(const ModelConfig& cfg, Params& params, const Vec64& flat_update, double lambda);

bool all_finite(const Params& params);

// Binary parameter file, little-endian, no padding:
//   magic 'BMP1' | version u32 = 1 | image_dim u32 | text_dim u32 |
//   embed_dim u32 | classes u32 | fusion u8 (0 = concat, 1 = add) |
//   flat parameters (canonical layout) as f64.
void save_params(const ModelConfig& cfg, const Params& params, const std::string& path);
std::pair<ModelConfig, Params> load_params(const std::string& path);

}  // namespace balgrad
