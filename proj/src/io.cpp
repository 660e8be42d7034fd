#include "balgrad/io.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "balgrad/binio.hpp"

namespace balgrad {

std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace {

void append_metrics_fields(std::string& out, const MetricsReport& m) {
    out += format_float(m.acc_full);
    out += ',';
    out += format_float(m.acc_missing_image);
    out += ',';
    out += format_float(m.acc_missing_text);
    out += ',';
    out += format_float(m.acc_noisy_image);
    out += ',';
    out += format_float(m.acc_noisy_text);
    out += ',';
    out += format_float(m.avg_missing);
    out += ',';
    out += format_float(m.gap_missing);
    out += ',';
    out += format_float(m.avg_noisy);
    out += ',';
    out += format_float(m.gap_noisy);
    out += ',';
    if (m.conflict_fraction) out += format_float(*m.conflict_fraction);
}

constexpr const char* kMetricsHeader =
    "acc_full,acc_missing_image,acc_missing_text,acc_noisy_image,acc_noisy_text,"
    "avg_missing,gap_missing,avg_noisy,gap_noisy,conflict_fraction";

}  // namespace

std::string trainlog_csv(const TrainLog& log) {
    std::string out =
        "t,loss_fused,loss_image,loss_text,kl_image,kl_text,"
        "weight_image,weight_text,schedule,cos_target_kl,conflicted\n";
    for (const TrainLogRow& row : log.rows) {
        out += std::to_string(row.t);
        out += ',';
        out += format_float(row.loss_fused);
        out += ',';
        out += format_float(row.loss_image);
        out += ',';
        out += format_float(row.loss_text);
        out += ',';
        out += format_float(row.kl_image);
        out += ',';
        out += format_float(row.kl_text);
        out += ',';
        out += format_float(row.weight_image);
        out += ',';
        out += format_float(row.weight_text);
        out += ',';
        out += format_float(row.schedule);
        out += ',';
        if (row.cos_target_kl) {
            out += format_float(*row.cos_target_kl);
            out += ',';
            out += row.conflicted ? '1' : '0';
        } else {
            out += ',';  // no KL gradient this step: cosine and conflict empty
        }
        out += '\n';
    }
    return out;
}

std::string metrics_csv(const MetricsReport& report) {
    std::string out = kMetricsHeader;
    out += '\n';
    append_metrics_fields(out, report);
    out += '\n';
    return out;
}

std::string ablate_csv(const std::vector<AblateRow>& rows) {
    std::string out = "seed,mode,";
    out += kMetricsHeader;
    out += '\n';
    for (const AblateRow& row : rows) {
        out += std::to_string(row.seed);
        out += ',';
        out += mode_name(row.mode);
        out += ',';
        append_metrics_fields(out, row.metrics);
        out += '\n';
    }
    return out;
}

std::string sweep_csv(const std::vector<std::pair<std::uint64_t, SweepRow>>& rows) {
    std::string out = "seed,mode,ratio,acc_missing_image,acc_missing_text,gap\n";
    for (const auto& [seed, row] : rows) {
        out += std::to_string(seed);
        out += ',';
        out += mode_name(row.mode);
        out += ',';
        out += format_float(row.ratio);
        out += ',';
        out += format_float(row.acc_missing_image);
        out += ',';
        out += format_float(row.acc_missing_text);
        out += ',';
        out += format_float(row.gap);
        out += '\n';
    }
    return out;
}

std::string expansion_csv(const ExpansionGridResult& result) {
    std::string out =
        "state,lambda,target_delta,target_firstorder,target_residual,target_cross,"
        "combined_delta,combined_firstorder,combined_residual,combined_cross\n";
    for (const ExpansionGridRow& row : result.rows) {
        out += std::to_string(row.state);
        out += ',';
        out += format_float(row.target.lambda);
        out += ',';
        out += format_float(row.target.delta_actual);
        out += ',';
        out += format_float(row.target.delta_firstorder);
        out += ',';
        out += format_float(row.target.residual);
        out += ',';
        out += format_float(row.target.cross_term);
        out += ',';
        out += format_float(row.combined.delta_actual);
        out += ',';
        out += format_float(row.combined.delta_firstorder);
        out += ',';
        out += format_float(row.combined.residual);
        out += ',';
        out += format_float(row.combined.cross_term);
        out += '\n';
    }
    return out;
}

std::string histogram_csv(const CosineHistogram& hist) {
    std::string out = "bin_lo,bin_hi,count\n";
    const std::size_t bins = hist.counts.size();
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = -1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(bins);
        const double hi = -1.0 + 2.0 * static_cast<double>(b + 1) / static_cast<double>(bins);
        out += format_float(lo);
        out += ',';
        out += format_float(hi);
        out += ',';
        out += std::to_string(hist.counts[b]);
        out += '\n';
    }
    return out;
}

std::string summary_json(const MetricsReport& report, Mode mode, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["mode"] = mode_name(mode);
    j["seed"] = seed;
    j["acc_full"] = report.acc_full;
    j["acc_missing_image"] = report.acc_missing_image;
    j["acc_missing_text"] = report.acc_missing_text;
    j["acc_noisy_image"] = report.acc_noisy_image;
    j["acc_noisy_text"] = report.acc_noisy_text;
    j["avg_missing"] = report.avg_missing;
    j["gap_missing"] = report.gap_missing;
    j["avg_noisy"] = report.avg_noisy;
    j["gap_noisy"] = report.gap_noisy;
    if (report.conflict_fraction) {
        j["conflict_fraction"] = *report.conflict_fraction;
    } else {
        j["conflict_fraction"] = nullptr;
    }
    return j.dump(2) + "\n";
}

void write_text_atomic(const std::string& path, const std::string& content) {
    binio::write_file_atomic(path, content);
}

}  // namespace balgrad
