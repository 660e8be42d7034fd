#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "balgrad/expansion.hpp"
#include "balgrad/harness.hpp"

namespace balgrad {

// CSV/JSON serialization for experiment artifacts. All floating-point fields
// are rendered with %.9g (period decimal separator, \n line endings), so a
// given value always serializes to the same bytes. Files are written
// atomically (temp + rename). Column layouts are documented in README.md.

std::string format_float(double v);

std::string trainlog_csv(const TrainLog& log);

std::string metrics_csv(const MetricsReport& report);

struct AblateRow {
    std::uint64_t seed = 0;
    Mode mode = Mode::Baseline;
    MetricsReport metrics;
};

std::string ablate_csv(const std::vector<AblateRow>& rows);

std::string sweep_csv(const std::vector<std::pair<std::uint64_t, SweepRow>>& rows);

std::string expansion_csv(const ExpansionGridResult& result);

std::string histogram_csv(const CosineHistogram& hist);

/// Compact single-object summary of a training run (machine-readable copy of
/// metrics.csv plus identifying fields).
std::string summary_json(const MetricsReport& report, Mode mode, std::uint64_t seed);

void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace balgrad
