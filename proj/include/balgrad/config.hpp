#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "balgrad/datagen.hpp"
#include "balgrad/expansion.hpp"
#include "balgrad/harness.hpp"

namespace balgrad {

/// INI-style config: [section] headers, key = value lines, # or ; comments.
/// Every diagnostic carries the file name, line number and section.key so a
/// bad experiment file points at the exact field.
class ConfigFile {
  public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& origin);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key);
    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback);

    double get_double(const std::string& section, const std::string& key, double fallback);
    double get_double_in(const std::string& section, const std::string& key, double fallback, double lo,
                         double hi);
    /// Positive number with an exclusive lower bound of 0.
    double get_positive(const std::string& section, const std::string& key, double fallback);

    std::uint64_t get_u64(const std::string& section, const std::string& key, std::uint64_t fallback);
    std::uint64_t get_count(const std::string& section, const std::string& key, std::uint64_t fallback);  // >= 1

    std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                        std::vector<double> fallback);
    std::vector<std::uint64_t> get_u64_list(const std::string& section, const std::string& key,
                                            std::vector<std::uint64_t> fallback);
    std::vector<std::string> get_string_list(const std::string& section, const std::string& key,
                                             std::vector<std::string> fallback);

    /// Rejects any key that was never read: catches typos and stray sections.
    void reject_unconsumed() const;

  private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool consumed = false;
    };

    [[noreturn]] void fail(const std::string& section, const std::string& key, int line,
                           const std::string& msg) const;
    const Entry* find(const std::string& section, const std::string& key) const;
    std::string take(const std::string& section, const std::string& key);

    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

/// Everything an experiment run needs, loaded from one config file. The CLI
/// subcommands read the sections they care about; unknown keys anywhere are
/// rejected.
struct ExperimentSpec {
    // Data source: exactly one of [synth] / [dataset] for data-driven commands.
    std::optional<SynthConfig> synth;
    std::optional<std::string> dataset_path;

    // [model]
    std::size_t embed_dim = 16;
    Fusion fusion = Fusion::Concat;

    // [train]
    double lambda = 0.05;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t init_seed = 0;
    std::uint64_t shuffle_seed = 0;

    // [balgrad]
    UpdateConfig update;

    // [eval]
    double noisy_image_rate = 0.30;
    double noisy_text_rate = 0.15;
    std::uint64_t perturb_seed = 9000;

    // [experiment] seeds used by ablate / sweep-missing-ratio
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

    // [sweep]
    std::vector<double> sweep_ratios = {0.2, 0.4, 0.6, 0.8};
    std::vector<Mode> sweep_modes = {Mode::Baseline, Mode::Full};

    // [props]
    ExpansionGridConfig expansion;

    // [output]
    std::string out_dir = "out";

    static ExperimentSpec load(const std::string& path);
    static ExperimentSpec from_config(ConfigFile cfg);

    /// Generate from [synth] or read the [dataset] file. `seed_override`
    /// replaces the synth seed (used when one spec drives several seeds).
    Dataset make_dataset() const;
    Dataset make_dataset(std::uint64_t seed_override) const;

    /// Model + training config completed with the dataset's dimensions.
    TrainConfig train_config(const Dataset& data) const;
};

}  // namespace balgrad
