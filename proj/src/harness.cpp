#include "balgrad/harness.hpp"

#include <cmath>
#include <span>

#include "balgrad/rng.hpp"

namespace balgrad {

void TrainConfig::validate() const {
    require(std::isfinite(lambda) && lambda >= 0.0, "TrainConfig: lambda must be nonnegative");
    require(epochs >= 1, "TrainConfig: epochs must be positive");
    require(batch_size >= 1, "TrainConfig: batch_size must be positive");
    model.validate();
    update.validate();
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
    data.validate();
    cfg.validate();
    require(data.image_dim == cfg.model.image_dim && data.text_dim == cfg.model.text_dim &&
                data.classes == cfg.model.classes,
            "train: dataset dims do not match model config");

    Params params = init_params(cfg.model, cfg.init_seed);
    Rng shuffle_rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainLog log;
    std::uint64_t t = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            const Batch batch = gather_batch(data, std::span(order).subspan(start, count));

            ForwardOutputs fwd;
            GradientSet grads;
            StepDiagnostics diag;
            Vec64 direction;
            try {
                fwd = forward(cfg.model, params, batch);
                const LossBundle& L = fwd.losses;
                const bool losses_ok = std::isfinite(L.fused_ce) && std::isfinite(L.image_ce) &&
                                       std::isfinite(L.text_ce) && std::isfinite(L.image_kl) &&
                                       std::isfinite(L.text_kl);
                if (!losses_ok) throw InvalidInput("non-finite loss");
                grads = backward(cfg.model, params, batch, fwd);
                direction = compose_update(cfg.model, grads, L, cfg.update, t, diag);
            } catch (const InvalidInput& err) {
                throw TrainingDiverged(std::string("training diverged at step ") + std::to_string(t) +
                                           ": " + err.what(),
                                       static_cast<std::int64_t>(t) - 1, std::move(log));
            }

            apply_update(cfg.model, params, direction, cfg.lambda);
            if (!all_finite(params)) {
                throw TrainingDiverged("training diverged at step " + std::to_string(t) +
                                           ": non-finite parameters after update",
                                       static_cast<std::int64_t>(t) - 1, std::move(log));
            }

            TrainLogRow row;
            row.t = t;
            row.loss_fused = fwd.losses.fused_ce;
            row.loss_image = fwd.losses.image_ce;
            row.loss_text = fwd.losses.text_ce;
            row.kl_image = fwd.losses.image_kl;
            row.kl_text = fwd.losses.text_kl;
            row.weight_image = diag.weight_image;
            row.weight_text = diag.weight_text;
            row.schedule = diag.schedule;
            row.cos_target_kl = diag.cos_target_kl;
            row.conflicted = diag.conflicted;
            log.rows.push_back(row);
            ++t;
        }
    }
    return {std::move(params), std::move(log)};
}

double accuracy(const ModelConfig& cfg, const Params& params, const Dataset& data) {
    const Batch batch = gather_batch(data);
    const ForwardOutputs fwd = forward(cfg, params, batch);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double* p = fwd.p_fused.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < cfg.classes; ++c) {
            if (p[c] > p[best]) best = c;
        }
        if (best == batch.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double metric_avg(double acc_a, double acc_b) {
    require(std::isfinite(acc_a) && std::isfinite(acc_b), "metric_avg: non-finite input");
    return 0.5 * (acc_a + acc_b);
}

double metric_gap(double acc_a, double acc_b) {
    require(std::isfinite(acc_a) && std::isfinite(acc_b), "metric_gap: non-finite input");
    return std::abs(acc_a - acc_b);
}

std::vector<PerturbSpec> standard_conditions(double noisy_image_rate, double noisy_text_rate,
                                             std::uint64_t seed) {
    std::vector<PerturbSpec> specs(4);
    specs[0] = {PerturbKind::MissingImage, 1.0, 0.0, seed};
    specs[1] = {PerturbKind::MissingText, 1.0, 0.0, seed};
    specs[2] = {PerturbKind::NoisyImage, 1.0, noisy_image_rate, seed};
    specs[3] = {PerturbKind::NoisyText, 1.0, noisy_text_rate, seed};
    return specs;
}

MetricsReport evaluate(const ModelConfig& cfg, const Params& params, const Dataset& data,
                       const std::vector<PerturbSpec>& specs) {
    MetricsReport report;
    report.acc_full = accuracy(cfg, params, data);
    bool seen[4] = {false, false, false, false};
    for (const PerturbSpec& spec : specs) {
        require(spec.kind != PerturbKind::None, "evaluate: None spec is implicit, pass corruptions only");
        const int slot = static_cast<int>(spec.kind) - 1;
        require(!seen[slot], "evaluate: duplicate perturbation kind");
        seen[slot] = true;
        const double acc = accuracy(cfg, params, apply_perturbation(data, spec));
        switch (spec.kind) {
            case PerturbKind::MissingImage: report.acc_missing_image = acc; break;
            case PerturbKind::MissingText: report.acc_missing_text = acc; break;
            case PerturbKind::NoisyImage: report.acc_noisy_image = acc; break;
            case PerturbKind::NoisyText: report.acc_noisy_text = acc; break;
            case PerturbKind::None: break;
        }
    }
    require(seen[0] && seen[1] && seen[2] && seen[3], "evaluate: need one spec of each corruption kind");
    report.avg_missing = metric_avg(report.acc_missing_image, report.acc_missing_text);
    report.gap_missing = metric_gap(report.acc_missing_image * 100.0, report.acc_missing_text * 100.0);
    report.avg_noisy = metric_avg(report.acc_noisy_image, report.acc_noisy_text);
    report.gap_noisy = metric_gap(report.acc_noisy_image * 100.0, report.acc_noisy_text * 100.0);
    return report;
}

std::vector<SweepRow> missing_ratio_sweep(const ModelConfig& cfg, const std::vector<ModeParams>& models,
                                          const Dataset& data, const std::vector<double>& ratios,
                                          std::uint64_t perturb_seed) {
    require(!models.empty(), "missing_ratio_sweep: no models");
    require(!ratios.empty(), "missing_ratio_sweep: no ratios");
    std::vector<SweepRow> rows;
    for (const ModeParams& entry : models) {
        require(entry.params != nullptr, "missing_ratio_sweep: null params");
        for (double ratio : ratios) {
            SweepRow row;
            row.mode = entry.mode;
            row.ratio = ratio;
            const Dataset no_image =
                apply_perturbation(data, {PerturbKind::MissingImage, ratio, 0.0, perturb_seed});
            const Dataset no_text =
                apply_perturbation(data, {PerturbKind::MissingText, ratio, 0.0, perturb_seed});
            row.acc_missing_image = accuracy(cfg, *entry.params, no_image);
            row.acc_missing_text = accuracy(cfg, *entry.params, no_text);
            row.gap = metric_gap(row.acc_missing_image * 100.0, row.acc_missing_text * 100.0);
            rows.push_back(row);
        }
    }
    return rows;
}

CosineHistogram cosine_histogram(const TrainLog& log, std::size_t bins) {
    require(bins >= 1, "cosine_histogram: bins must be positive");
    CosineHistogram hist;
    hist.counts.assign(bins, 0);
    double sum = 0.0;
    for (const TrainLogRow& row : log.rows) {
        if (!row.cos_target_kl) continue;
        const double c = *row.cos_target_kl;
        require(c >= -1.0 - 1e-9 && c <= 1.0 + 1e-9, "cosine_histogram: cosine out of range");
        std::size_t bin = static_cast<std::size_t>((c + 1.0) / 2.0 * static_cast<double>(bins));
        if (bin >= bins) bin = bins - 1;
        ++hist.counts[bin];
        sum += c;
        ++hist.total;
    }
    require(hist.total > 0, "cosine_histogram: no logged cosines");
    hist.mean = sum / static_cast<double>(hist.total);
    return hist;
}

double conflict_fraction(const TrainLog& log) {
    std::size_t with_kl = 0, conflicted = 0;
    for (const TrainLogRow& row : log.rows) {
        if (!row.cos_target_kl) continue;
        ++with_kl;
        if (*row.cos_target_kl < 0.0) ++conflicted;
    }
    require(with_kl > 0, "conflict_fraction: log has no KL steps");
    return static_cast<double>(conflicted) / static_cast<double>(with_kl);
}

}  // namespace balgrad
