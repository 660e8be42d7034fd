#include "balgrad/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "balgrad/binio.hpp"

namespace balgrad {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = 0, end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = s.find(',', start);
        parts.push_back(trim(s.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return parts;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    return parse_string(binio::read_file(path, "config file"), path);
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string line = trim(text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos));
        pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        if (section.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": key '" + key +
                              "' appears before any [section]");
        }
        auto [it, inserted] = cfg.sections_[section].try_emplace(key, Entry{trim(line.substr(eq + 1)), line_no});
        if (!inserted) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + section + "." +
                              key + "' (first set on line " + std::to_string(it->second.line) + ")");
        }
    }
    return cfg;
}

void ConfigFile::fail(const std::string& section, const std::string& key, int line,
                      const std::string& msg) const {
    std::string where = origin_;
    if (line > 0) where += ":" + std::to_string(line);
    throw ConfigError(where + ": " + section + "." + key + " " + msg);
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section, const std::string& key) const {
    const auto sec = sections_.find(section);
    if (sec == sections_.end()) return nullptr;
    const auto entry = sec->second.find(key);
    if (entry == sec->second.end()) return nullptr;
    entry->second.consumed = true;
    return &entry->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    const auto sec = sections_.find(section);
    return sec != sections_.end() && sec->second.count(key) > 0;
}

std::string ConfigFile::take(const std::string& section, const std::string& key) {
    const Entry* entry = find(section, key);
    if (entry == nullptr) fail(section, key, 0, "is required but missing");
    if (entry->value.empty()) fail(section, key, entry->line, "has an empty value");
    return entry->value;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) {
    return take(section, key);
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) {
    return has(section, key) ? take(section, key) : fallback;
}

namespace {

bool parse_double_token(const std::string& token, double* out) {
    if (token.empty()) return false;
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (errno != 0 || end != token.c_str() + token.size() || !std::isfinite(v)) return false;
    *out = v;
    return true;
}

bool parse_u64_token(const std::string& token, std::uint64_t* out) {
    if (token.empty() || token[0] == '-' || token[0] == '+') return false;
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(token.c_str(), &end, 10);
    if (errno != 0 || end != token.c_str() + token.size()) return false;
    *out = v;
    return true;
}

}  // namespace

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) {
    if (!has(section, key)) return fallback;
    const Entry* entry = find(section, key);
    double v = 0.0;
    if (!parse_double_token(entry->value, &v)) {
        fail(section, key, entry->line, "must be a finite number, got '" + entry->value + "'");
    }
    return v;
}

double ConfigFile::get_double_in(const std::string& section, const std::string& key, double fallback,
                                 double lo, double hi) {
    const double v = get_double(section, key, fallback);
    if (v < lo || v > hi) {
        const Entry* entry = find(section, key);
        fail(section, key, entry != nullptr ? entry->line : 0,
             "must be in [" + num(lo) + ", " + num(hi) + "], got " + num(v));
    }
    return v;
}

double ConfigFile::get_positive(const std::string& section, const std::string& key, double fallback) {
    const double v = get_double(section, key, fallback);
    if (!(v > 0.0)) {
        const Entry* entry = find(section, key);
        fail(section, key, entry != nullptr ? entry->line : 0, "must be > 0, got " + num(v));
    }
    return v;
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key, std::uint64_t fallback) {
    if (!has(section, key)) return fallback;
    const Entry* entry = find(section, key);
    std::uint64_t v = 0;
    if (!parse_u64_token(entry->value, &v)) {
        fail(section, key, entry->line, "must be a nonnegative integer, got '" + entry->value + "'");
    }
    return v;
}

std::uint64_t ConfigFile::get_count(const std::string& section, const std::string& key,
                                    std::uint64_t fallback) {
    const std::uint64_t v = get_u64(section, key, fallback);
    if (v == 0) {
        const Entry* entry = find(section, key);
        fail(section, key, entry != nullptr ? entry->line : 0, "must be >= 1");
    }
    return v;
}

std::vector<double> ConfigFile::get_double_list(const std::string& section, const std::string& key,
                                                std::vector<double> fallback) {
    if (!has(section, key)) return fallback;
    const Entry* entry = find(section, key);
    std::vector<double> out;
    for (const std::string& token : split_csv(entry->value)) {
        double v = 0.0;
        if (!parse_double_token(token, &v)) {
            fail(section, key, entry->line, "must be a comma-separated list of numbers, got '" + entry->value + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::uint64_t> ConfigFile::get_u64_list(const std::string& section, const std::string& key,
                                                    std::vector<std::uint64_t> fallback) {
    if (!has(section, key)) return fallback;
    const Entry* entry = find(section, key);
    std::vector<std::uint64_t> out;
    for (const std::string& token : split_csv(entry->value)) {
        std::uint64_t v = 0;
        if (!parse_u64_token(token, &v)) {
            fail(section, key, entry->line,
                 "must be a comma-separated list of nonnegative integers, got '" + entry->value + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& section, const std::string& key,
                                                     std::vector<std::string> fallback) {
    if (!has(section, key)) return fallback;
    const Entry* entry = find(section, key);
    return split_csv(entry->value);
}

void ConfigFile::reject_unconsumed() const {
    for (const auto& [section, entries] : sections_) {
        for (const auto& [key, entry] : entries) {
            if (!entry.consumed) {
                fail(section, key, entry.line, "is not a recognized setting");
            }
        }
    }
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
    return from_config(ConfigFile::parse_file(path));
}

ExperimentSpec ExperimentSpec::from_config(ConfigFile cfg) {
    ExperimentSpec spec;

    if (cfg.has("dataset", "path")) {
        spec.dataset_path = cfg.get_string("dataset", "path");
    }
    if (cfg.has("synth", "samples") || cfg.has("synth", "classes")) {
        SynthConfig synth;
        synth.samples = cfg.get_count("synth", "samples", 2000);
        synth.classes = static_cast<std::uint32_t>(cfg.get_count("synth", "classes", 10));
        synth.image_dim = static_cast<std::uint32_t>(cfg.get_count("synth", "image_dim", 32));
        synth.text_dim = static_cast<std::uint32_t>(cfg.get_count("synth", "text_dim", 32));
        synth.alpha = cfg.get_double_in("synth", "alpha", 0.5, 0.0, 1.0);
        synth.sigma = cfg.get_positive("synth", "sigma", 1.0);
        synth.seed = cfg.get_u64("synth", "seed", 0);
        spec.synth = synth;
    }
    if (spec.synth && spec.dataset_path) {
        throw ConfigError("config: [synth] and [dataset] are mutually exclusive; keep one data source");
    }

    spec.embed_dim = cfg.get_count("model", "embed_dim", 16);
    const std::string fusion = cfg.get_string("model", "fusion", "concat");
    if (fusion == "concat") {
        spec.fusion = Fusion::Concat;
    } else if (fusion == "add") {
        spec.fusion = Fusion::Add;
    } else {
        throw ConfigError("config: model.fusion must be 'concat' or 'add', got '" + fusion + "'");
    }

    spec.lambda = cfg.get_positive("train", "lambda", 0.05);
    spec.epochs = cfg.get_count("train", "epochs", 30);
    spec.batch_size = cfg.get_count("train", "batch_size", 64);
    spec.init_seed = cfg.get_u64("train", "init_seed", 0);
    spec.shuffle_seed = cfg.get_u64("train", "shuffle_seed", 0);

    const std::string mode = cfg.get_string("balgrad", "mode", "full");
    const std::optional<Mode> parsed_mode = mode_from_name(mode);
    if (!parsed_mode) {
        throw ConfigError("config: balgrad.mode must be one of baseline, fixed_kl, reweight_only, "
                          "project_only, full; got '" + mode + "'");
    }
    spec.update.mode = *parsed_mode;
    spec.update.gamma = cfg.get_positive("balgrad", "gamma", 0.5);
    spec.update.schedule_tau = cfg.get_positive("balgrad", "schedule_tau", 1.0);

    spec.noisy_image_rate = cfg.get_double_in("eval", "noisy_image_rate", 0.30, 0.0, 1.0);
    spec.noisy_text_rate = cfg.get_double_in("eval", "noisy_text_rate", 0.15, 0.0, 1.0);
    spec.perturb_seed = cfg.get_u64("eval", "perturb_seed", 9000);

    spec.seeds = cfg.get_u64_list("experiment", "seeds", {0, 1, 2, 3, 4});
    if (spec.seeds.empty()) throw ConfigError("config: experiment.seeds must not be empty");

    spec.sweep_ratios = cfg.get_double_list("sweep", "ratios", {0.2, 0.4, 0.6, 0.8});
    for (double r : spec.sweep_ratios) {
        if (r < 0.0 || r > 1.0) {
            throw ConfigError("config: sweep.ratios entries must be in [0, 1], got " + num(r));
        }
    }
    spec.sweep_modes.clear();
    for (const std::string& name : cfg.get_string_list("sweep", "modes", {"baseline", "full"})) {
        const std::optional<Mode> m = mode_from_name(name);
        if (!m) throw ConfigError("config: sweep.modes contains unknown mode '" + name + "'");
        spec.sweep_modes.push_back(*m);
    }
    if (spec.sweep_modes.empty()) throw ConfigError("config: sweep.modes must not be empty");

    spec.expansion.model.image_dim = cfg.get_count("props", "image_dim", 6);
    spec.expansion.model.text_dim = cfg.get_count("props", "text_dim", 5);
    spec.expansion.model.embed_dim = cfg.get_count("props", "embed_dim", 4);
    spec.expansion.model.classes = cfg.get_count("props", "classes", 3);
    const std::string props_fusion = cfg.get_string("props", "fusion", "concat");
    if (props_fusion == "concat") {
        spec.expansion.model.fusion = Fusion::Concat;
    } else if (props_fusion == "add") {
        spec.expansion.model.fusion = Fusion::Add;
    } else {
        throw ConfigError("config: props.fusion must be 'concat' or 'add', got '" + props_fusion + "'");
    }
    if (spec.expansion.model.classes < 2) {
        throw ConfigError("config: props.classes must be >= 2");
    }
    spec.expansion.batch_size = cfg.get_count("props", "batch_size", 4);
    spec.expansion.states = cfg.get_count("props", "states", 20);
    spec.expansion.lambdas = cfg.get_double_list("props", "lambdas", {1e-3, 5e-4, 2.5e-4});
    spec.expansion.seed = cfg.get_u64("props", "seed", 0);
    for (std::size_t i = 0; i + 1 < spec.expansion.lambdas.size(); ++i) {
        const double big = spec.expansion.lambdas[i];
        const double small = spec.expansion.lambdas[i + 1];
        if (!(big > 0.0) || std::abs(small - 0.5 * big) > 1e-9 * big) {
            throw ConfigError("config: props.lambdas must be positive and halve left to right");
        }
    }
    if (spec.expansion.lambdas.size() < 2) {
        throw ConfigError("config: props.lambdas needs at least 2 entries");
    }

    spec.out_dir = cfg.get_string("output", "dir", "out");

    cfg.reject_unconsumed();
    return spec;
}

Dataset ExperimentSpec::make_dataset() const {
    if (synth) return generate(*synth);
    if (dataset_path) return read_dataset(*dataset_path);
    throw ConfigError("config: need a [synth] or [dataset] section for this command");
}

Dataset ExperimentSpec::make_dataset(std::uint64_t seed_override) const {
    if (synth) {
        SynthConfig cfg = *synth;
        cfg.seed = seed_override;
        return generate(cfg);
    }
    return make_dataset();
}

TrainConfig ExperimentSpec::train_config(const Dataset& data) const {
    TrainConfig cfg;
    cfg.lambda = lambda;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.init_seed = init_seed;
    cfg.shuffle_seed = shuffle_seed;
    cfg.model.image_dim = data.image_dim;
    cfg.model.text_dim = data.text_dim;
    cfg.model.classes = data.classes;
    cfg.model.embed_dim = embed_dim;
    cfg.model.fusion = fusion;
    cfg.update = update;
    return cfg;
}

}  // namespace balgrad
