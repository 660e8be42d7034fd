#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "balgrad/tensor.hpp"

namespace balgrad {

/// One bimodal sample: an image feature vector and a text feature vector.
struct FeatureRecord {
    Vec64 image;
    Vec64 text;
    std::uint32_t label = 0;
};

struct Dataset {
    std::uint32_t classes = 0;
    std::uint32_t image_dim = 0;
    std::uint32_t text_dim = 0;
    std::vector<FeatureRecord> records;

    std::size_t size() const { return records.size(); }
    void validate() const;
};

/// Gaussian class-prototype generator. `alpha` in [0, 1] sets how much more
/// informative the image modality is than the text modality: the image noise
/// scale is sigma*(1.5 - alpha) and the text noise scale is sigma*(0.5 + alpha),
/// so alpha = 0.5 is balanced and alpha > 0.5 favors the image side.
struct SynthConfig {
    std::uint64_t samples = 0;
    std::uint32_t classes = 0;
    std::uint32_t image_dim = 0;
    std::uint32_t text_dim = 0;
    double alpha = 0.5;
    double sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-modality noise scales implied by a SynthConfig (image, text).
std::pair<double, double> modality_sigmas(const SynthConfig& cfg);

enum class PerturbKind { None, MissingImage, MissingText, NoisyImage, NoisyText };

/// Test-time corruption. `ratio` is the fraction of samples affected;
/// `rate` is the fraction of coordinates hit within an affected sample
/// (used by the Noisy kinds only). Missing kinds zero the whole modality.
/// NoisyImage replaces hit coordinates with +/-3x the modality's empirical
/// standard deviation (salt-and-pepper analog); NoisyText zeroes hit
/// coordinates (token-deletion analog).
struct PerturbSpec {
    PerturbKind kind = PerturbKind::None;
    double ratio = 0.0;
    double rate = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

const char* perturb_kind_name(PerturbKind kind);

/// Balanced synthetic dataset: label(i) = i mod classes, features are class
/// prototypes plus modality-scaled Gaussian noise. Deterministic in cfg.seed.
Dataset generate(const SynthConfig& cfg);

/// Returns a corrupted copy; the input is never modified. Deterministic in
/// spec.seed. Kind None returns a bit-exact copy.
Dataset apply_perturbation(const Dataset& data, const PerturbSpec& spec);

// Binary dataset file, little-endian, no padding:
//   magic 'BMF1' | version u32 = 1 | samples u64 | classes u32 |
//   image_dim u32 | text_dim u32 | records...
// Each record: label u32, image_dim f64, text_dim f64.
void write_dataset(const Dataset& data, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace balgrad
