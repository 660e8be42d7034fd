#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "balgrad/datagen.hpp"
#include "balgrad/model.hpp"
#include "balgrad/update.hpp"

namespace balgrad {

struct TrainConfig {
    double lambda = 0.05;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t init_seed = 0;     // parameter initialization
    std::uint64_t shuffle_seed = 0;  // epoch shuffling
    ModelConfig model;
    UpdateConfig update;

    void validate() const;
};

/// One row per optimizer step; losses are the step's batch losses before the
/// update was applied.
struct TrainLogRow {
    std::uint64_t t = 0;
    double loss_fused = 0.0;
    double loss_image = 0.0;
    double loss_text = 0.0;
    double kl_image = 0.0;
    double kl_text = 0.0;
    double weight_image = 0.5;
    double weight_text = 0.5;
    double schedule = 0.0;
    std::optional<double> cos_target_kl;
    bool conflicted = false;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
};

struct TrainResult {
    Params params;
    TrainLog log;
};

/// Thrown when a loss or parameter goes non-finite during training. Carries
/// the log up to the last completed step so partial runs stay inspectable.
struct TrainingDiverged : std::runtime_error {
    std::int64_t last_good_iteration;
    TrainLog partial_log;

    TrainingDiverged(const std::string& msg, std::int64_t last_good, TrainLog log)
        : std::runtime_error(msg), last_good_iteration(last_good), partial_log(std::move(log)) {}
};

/// Minibatch gradient descent with the configured update composition.
/// Deterministic: the same dataset and config reproduce the result bit for bit.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

/// Fraction of correctly classified records under the fused classifier.
/// Argmax ties resolve to the lowest class index.
double accuracy(const ModelConfig& cfg, const Params& params, const Dataset& data);

/// Accuracy under clean data plus the four standard corruptions, with the
/// derived robustness aggregates. Accuracies are in [0, 1]; the gaps are the
/// absolute accuracy differences in percentage points.
struct MetricsReport {
    double acc_full = 0.0;
    double acc_missing_image = 0.0;
    double acc_missing_text = 0.0;
    double acc_noisy_image = 0.0;
    double acc_noisy_text = 0.0;
    double avg_missing = 0.0;
    double gap_missing = 0.0;
    double avg_noisy = 0.0;
    double gap_noisy = 0.0;
    std::optional<double> conflict_fraction;
};

double metric_avg(double acc_a, double acc_b);
double metric_gap(double acc_a, double acc_b);

/// The four standard test corruptions: full modality drop on each side, plus
/// coordinate noise at the given per-modality rates on every sample.
std::vector<PerturbSpec> standard_conditions(double noisy_image_rate, double noisy_text_rate,
                                             std::uint64_t seed);

/// `specs` must contain exactly one spec of each non-None kind.
MetricsReport evaluate(const ModelConfig& cfg, const Params& params, const Dataset& data,
                       const std::vector<PerturbSpec>& specs);

/// Paired modality-drop sweep: for each trained model and each ratio, drop
/// that fraction of samples' image (resp. text) features and report both
/// impaired accuracies and their gap in points. The same seed drives every
/// ratio, so larger ratios extend the smaller ratios' drop sets.
struct SweepRow {
    Mode mode = Mode::Baseline;
    double ratio = 0.0;
    double acc_missing_image = 0.0;
    double acc_missing_text = 0.0;
    double gap = 0.0;
};

struct ModeParams {
    Mode mode;
    const Params* params;
};

std::vector<SweepRow> missing_ratio_sweep(const ModelConfig& cfg, const std::vector<ModeParams>& models,
                                          const Dataset& data, const std::vector<double>& ratios,
                                          std::uint64_t perturb_seed);

/// Histogram of the logged target-vs-KL cosines over [-1, 1].
struct CosineHistogram {
    std::vector<std::size_t> counts;
    std::size_t total = 0;
    double mean = 0.0;
};

CosineHistogram cosine_histogram(const TrainLog& log, std::size_t bins);

/// Fraction of logged steps whose pre-projection target/KL dot product was
/// negative, among steps where the KL gradient existed.
double conflict_fraction(const TrainLog& log);

}  // namespace balgrad
