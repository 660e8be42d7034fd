// Experiment driver for the balanced-gradient bimodal training library.
//
// Subcommands:
//   generate            write a synthetic dataset file
//   train               train one model, emit params + logs + metrics
//   verify-props        numeric first-order expansion checks (exit 4 on failure)
//   ablate              all update modes x seeds, one metrics row each
//   sweep-missing-ratio paired modality-drop sweep across trained modes
//
// Exit codes: 0 success, 2 config/input error, 3 training diverged,
// 4 verification failure.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "balgrad/config.hpp"
#include "balgrad/io.hpp"

namespace fs = std::filesystem;
using namespace balgrad;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;       // empty = use the config's [output] dir
    std::int64_t seed = -1;    // negative = no override
    int threads = 0;           // 0 = library default
};

void add_common(CLI::App* cmd, CommonArgs* args) {
    cmd->add_option("--config", args->config_path, "experiment config file (INI)")
        ->required();
    cmd->add_option("--out", args->out_dir, "output directory (overrides [output] dir)");
    cmd->add_option("--seed", args->seed, "override every seed in the config")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--threads", args->threads, "worker thread count (0 = default)")
        ->check(CLI::NonNegativeNumber);
}

ExperimentSpec load_spec(const CommonArgs& args) {
    if (args.threads > 0) {
#ifdef _OPENMP
        omp_set_num_threads(args.threads);
#endif
    }
    ExperimentSpec spec = ExperimentSpec::load(args.config_path);
    if (!args.out_dir.empty()) spec.out_dir = args.out_dir;
    if (args.seed >= 0) {
        const auto seed = static_cast<std::uint64_t>(args.seed);
        if (spec.synth) spec.synth->seed = seed;
        spec.init_seed = seed;
        spec.shuffle_seed = seed;
        spec.expansion.seed = seed;
        spec.seeds = {seed};
    }
    fs::create_directories(spec.out_dir);
    return spec;
}

std::string out_path(const ExperimentSpec& spec, const std::string& name) {
    return (fs::path(spec.out_dir) / name).string();
}

int cmd_generate(const CommonArgs& args) {
    const ExperimentSpec spec = load_spec(args);
    if (!spec.synth) {
        throw ConfigError("generate: config needs a [synth] section");
    }
    const Dataset data = generate(*spec.synth);
    const std::string path = out_path(spec, "dataset.bmf");
    write_dataset(data, path);

    std::map<std::uint32_t, std::size_t> per_class;
    for (const FeatureRecord& rec : data.records) ++per_class[rec.label];
    std::printf("wrote %s: %zu samples, %u classes, image_dim %u, text_dim %u\n", path.c_str(),
                data.size(), data.classes, data.image_dim, data.text_dim);
    for (const auto& [label, count] : per_class) {
        std::printf("  class %u: %zu samples\n", label, count);
    }
    return 0;
}

/// Train one model; on divergence persist the partial log before rethrowing.
TrainResult train_persisting(const Dataset& data, const TrainConfig& cfg, const std::string& log_path) {
    try {
        return train(data, cfg);
    } catch (const TrainingDiverged& err) {
        write_text_atomic(log_path, trainlog_csv(err.partial_log));
        std::fprintf(stderr, "%s (last completed step: %lld; partial log in %s)\n", err.what(),
                     static_cast<long long>(err.last_good_iteration), log_path.c_str());
        throw;
    }
}

int cmd_train(const CommonArgs& args) {
    const ExperimentSpec spec = load_spec(args);
    const Dataset data = spec.make_dataset();
    const TrainConfig train_cfg = spec.train_config(data);

    const TrainResult result = train_persisting(data, train_cfg, out_path(spec, "trainlog.csv"));

    MetricsReport metrics =
        evaluate(train_cfg.model, result.params, data,
                 standard_conditions(spec.noisy_image_rate, spec.noisy_text_rate, spec.perturb_seed));
    if (train_cfg.update.mode != Mode::Baseline) {
        metrics.conflict_fraction = conflict_fraction(result.log);
    }

    save_params(train_cfg.model, result.params, out_path(spec, "params.bin"));
    write_text_atomic(out_path(spec, "trainlog.csv"), trainlog_csv(result.log));
    write_text_atomic(out_path(spec, "metrics.csv"), metrics_csv(metrics));
    write_text_atomic(out_path(spec, "summary.json"),
                      summary_json(metrics, train_cfg.update.mode, spec.init_seed));
    if (train_cfg.update.mode != Mode::Baseline) {
        write_text_atomic(out_path(spec, "histogram.csv"), histogram_csv(cosine_histogram(result.log, 40)));
    }

    std::printf("mode %s: acc_full %.4f, avg_missing %.4f, gap_missing %.2f pts, gap_noisy %.2f pts\n",
                mode_name(train_cfg.update.mode), metrics.acc_full, metrics.avg_missing,
                metrics.gap_missing, metrics.gap_noisy);
    std::printf("artifacts in %s\n", spec.out_dir.c_str());
    return 0;
}

int cmd_verify_props(const CommonArgs& args) {
    const ExperimentSpec spec = load_spec(args);
    const ExpansionGridResult result = run_expansion_grid(spec.expansion);
    write_text_atomic(out_path(spec, "expansion.csv"), expansion_csv(result));

    std::printf("expansion grid: %zu states x %zu lambdas -> %zu rows (%s)\n", spec.expansion.states,
                spec.expansion.lambdas.size(), result.rows.size(), out_path(spec, "expansion.csv").c_str());
    if (!result.passed()) {
        for (const BandViolation& v : result.violations) {
            std::fprintf(stderr,
                         "residual ratio out of band: state %zu, %s check, lambda %.3g -> ratio %.4f "
                         "(expected in [%.2f, %.2f])\n",
                         v.state, v.which.c_str(), v.lambda_large, v.ratio, spec.expansion.band_lo,
                         spec.expansion.band_hi);
        }
        std::fprintf(stderr, "verification failed: %zu residual ratios out of band\n",
                     result.violations.size());
        return 4;
    }
    std::printf("all residual halving ratios within [%.2f, %.2f]\n", spec.expansion.band_lo,
                spec.expansion.band_hi);
    return 0;
}

constexpr Mode kAllModes[] = {Mode::Baseline, Mode::FixedKL, Mode::ReweightOnly, Mode::ProjectOnly,
                              Mode::Full};

TrainConfig seeded_config(const ExperimentSpec& spec, const Dataset& data, Mode mode, std::uint64_t seed) {
    TrainConfig cfg = spec.train_config(data);
    cfg.update.mode = mode;
    cfg.init_seed = seed;
    cfg.shuffle_seed = seed;
    return cfg;
}

int cmd_ablate(const CommonArgs& args) {
    const ExperimentSpec spec = load_spec(args);
    std::vector<AblateRow> rows;
    for (std::uint64_t seed : spec.seeds) {
        const Dataset data = spec.make_dataset(seed);
        for (Mode mode : kAllModes) {
            const TrainConfig cfg = seeded_config(spec, data, mode, seed);
            const TrainResult result = train(data, cfg);
            AblateRow row;
            row.seed = seed;
            row.mode = mode;
            row.metrics = evaluate(cfg.model, result.params, data,
                                   standard_conditions(spec.noisy_image_rate, spec.noisy_text_rate,
                                                       spec.perturb_seed));
            if (mode != Mode::Baseline) {
                row.metrics.conflict_fraction = conflict_fraction(result.log);
            }
            std::printf("seed %llu %-13s acc_full %.4f gap_missing %6.2f pts\n",
                        static_cast<unsigned long long>(seed), mode_name(mode), row.metrics.acc_full,
                        row.metrics.gap_missing);
            rows.push_back(std::move(row));
        }
    }
    write_text_atomic(out_path(spec, "ablate.csv"), ablate_csv(rows));
    std::printf("wrote %s (%zu rows)\n", out_path(spec, "ablate.csv").c_str(), rows.size());
    return 0;
}

int cmd_sweep(const CommonArgs& args) {
    const ExperimentSpec spec = load_spec(args);
    std::vector<std::pair<std::uint64_t, SweepRow>> rows;
    for (std::uint64_t seed : spec.seeds) {
        const Dataset data = spec.make_dataset(seed);
        std::vector<TrainResult> results;
        std::vector<ModeParams> models;
        results.reserve(spec.sweep_modes.size());
        for (Mode mode : spec.sweep_modes) {
            results.push_back(train(data, seeded_config(spec, data, mode, seed)));
            models.push_back({mode, &results.back().params});
        }
        for (const SweepRow& row : missing_ratio_sweep(spec.train_config(data).model, models, data,
                                                       spec.sweep_ratios, spec.perturb_seed)) {
            rows.emplace_back(seed, row);
        }
    }
    write_text_atomic(out_path(spec, "sweep.csv"), sweep_csv(rows));
    std::printf("wrote %s (%zu rows)\n", out_path(spec, "sweep.csv").c_str(), rows.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"balanced-gradient bimodal training experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    std::map<const CLI::App*, int (*)(const CommonArgs&)> handlers;
    auto add = [&](const char* name, const char* help, int (*fn)(const CommonArgs&)) {
        CLI::App* cmd = app.add_subcommand(name, help);
        add_common(cmd, &args);
        handlers[cmd] = fn;
    };
    add("generate", "write a synthetic dataset file", cmd_generate);
    add("train", "train one model and emit artifacts", cmd_train);
    add("verify-props", "run the first-order expansion checks", cmd_verify_props);
    add("ablate", "train every update mode per seed", cmd_ablate);
    add("sweep-missing-ratio", "paired modality-drop sweep", cmd_sweep);

    CLI11_PARSE(app, argc, argv);

    try {
        return handlers.at(app.get_subcommands().front())(args);
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return 2;
    } catch (const FormatError& err) {
        std::fprintf(stderr, "file format error: %s\n", err.what());
        return 2;
    } catch (const InvalidInput& err) {
        std::fprintf(stderr, "invalid input: %s\n", err.what());
        return 2;
    } catch (const TrainingDiverged& err) {
        std::fprintf(stderr, "training diverged: %s\n", err.what());
        return 3;
    } catch (const OracleFailure& err) {
        std::fprintf(stderr, "verification probe failed: %s\n", err.what());
        return 4;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    }
}
