#include "balgrad/datagen.hpp"

#include <cmath>

#include "balgrad/binio.hpp"
#include "balgrad/rng.hpp"

namespace balgrad {

void Dataset::validate() const {
    require(classes >= 2, "Dataset: need at least 2 classes");
    require(image_dim >= 1 && text_dim >= 1, "Dataset: feature dims must be positive");
    require(!records.empty(), "Dataset: no records");
    for (const FeatureRecord& rec : records) {
        require(rec.label < classes, "Dataset: label out of range");
        require(rec.image.size() == image_dim, "Dataset: image feature length mismatch");
        require(rec.text.size() == text_dim, "Dataset: text feature length mismatch");
        require(all_finite(rec.image) && all_finite(rec.text), "Dataset: non-finite feature");
    }
}

void SynthConfig::validate() const {
    require(classes >= 2, "SynthConfig: classes must be >= 2");
    require(samples >= classes, "SynthConfig: samples must be >= classes");
    require(image_dim >= 1 && text_dim >= 1, "SynthConfig: feature dims must be positive");
    require(std::isfinite(alpha) && alpha >= 0.0 && alpha <= 1.0, "SynthConfig: alpha must be in [0, 1]");
    require(std::isfinite(sigma) && sigma > 0.0, "SynthConfig: sigma must be positive");
}

std::pair<double, double> modality_sigmas(const SynthConfig& cfg) {
    return {cfg.sigma * (1.5 - cfg.alpha), cfg.sigma * (0.5 + cfg.alpha)};
}

void PerturbSpec::validate() const {
    require(std::isfinite(ratio) && ratio >= 0.0 && ratio <= 1.0, "PerturbSpec: ratio must be in [0, 1]");
    require(std::isfinite(rate) && rate >= 0.0 && rate <= 1.0, "PerturbSpec: rate must be in [0, 1]");
}

const char* perturb_kind_name(PerturbKind kind) {
    switch (kind) {
        case PerturbKind::None: return "none";
        case PerturbKind::MissingImage: return "missing_image";
        case PerturbKind::MissingText: return "missing_text";
        case PerturbKind::NoisyImage: return "noisy_image";
        case PerturbKind::NoisyText: return "noisy_text";
    }
    return "unknown";
}

Dataset generate(const SynthConfig& cfg) {
    cfg.validate();
    const auto [sigma_image, sigma_text] = modality_sigmas(cfg);
    Rng rng(cfg.seed);

    std::vector<Vec64> proto_image(cfg.classes), proto_text(cfg.classes);
    for (std::uint32_t c = 0; c < cfg.classes; ++c) {
        proto_image[c].resize(cfg.image_dim);
        for (double& x : proto_image[c]) x = rng.normal();
        proto_text[c].resize(cfg.text_dim);
        for (double& x : proto_text[c]) x = rng.normal();
    }

    Dataset out;
    out.classes = cfg.classes;
    out.image_dim = cfg.image_dim;
    out.text_dim = cfg.text_dim;
    out.records.resize(cfg.samples);
    for (std::uint64_t i = 0; i < cfg.samples; ++i) {
        FeatureRecord& rec = out.records[i];
        rec.label = static_cast<std::uint32_t>(i % cfg.classes);
        rec.image.resize(cfg.image_dim);
        for (std::uint32_t d = 0; d < cfg.image_dim; ++d) {
            rec.image[d] = proto_image[rec.label][d] + sigma_image * rng.normal();
        }
        rec.text.resize(cfg.text_dim);
        for (std::uint32_t d = 0; d < cfg.text_dim; ++d) {
            rec.text[d] = proto_text[rec.label][d] + sigma_text * rng.normal();
        }
    }
    return out;
}

namespace {

double modality_std(const Dataset& data, bool image_side) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (const FeatureRecord& rec : data.records) {
        const Vec64& v = image_side ? rec.image : rec.text;
        for (double x : v) {
            sum += x;
            sum_sq += x * x;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    return std::sqrt(std::max(sum_sq / static_cast<double>(n) - mean * mean, 0.0));
}

std::size_t rounded_count(double fraction, std::size_t total) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
}

}  // namespace

Dataset apply_perturbation(const Dataset& data, const PerturbSpec& spec) {
    data.validate();
    spec.validate();
    Dataset out = data;
    if (spec.kind == PerturbKind::None) return out;

    const bool image_side = spec.kind == PerturbKind::MissingImage || spec.kind == PerturbKind::NoisyImage;
    const bool missing = spec.kind == PerturbKind::MissingImage || spec.kind == PerturbKind::MissingText;
    const std::size_t dim = image_side ? data.image_dim : data.text_dim;

    Rng rng(spec.seed);
    const std::vector<std::size_t> affected = rng.sample_indices(data.size(), rounded_count(spec.ratio, data.size()));

    if (missing) {
        for (std::size_t i : affected) {
            Vec64& v = image_side ? out.records[i].image : out.records[i].text;
            std::fill(v.begin(), v.end(), 0.0);
        }
        return out;
    }

    // Noisy kinds: spike amplitude is tied to the clean data's spread.
    const double spike = 3.0 * modality_std(data, image_side);
    const std::size_t hits = rounded_count(spec.rate, dim);
    for (std::size_t i : affected) {
        Vec64& v = image_side ? out.records[i].image : out.records[i].text;
        const std::vector<std::size_t> coords = rng.sample_indices(dim, hits);
        for (std::size_t d : coords) {
            if (spec.kind == PerturbKind::NoisyImage) {
                v[d] = rng.below(2) == 1 ? spike : -spike;
            } else {
                v[d] = 0.0;
            }
        }
    }
    return out;
}

namespace {

constexpr char kMagic[4] = {'B', 'M', 'F', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 28;

}  // namespace

void write_dataset(const Dataset& data, const std::string& path) {
    data.validate();
    std::string buf;
    buf.reserve(kHeaderBytes + data.size() * (4 + 8ull * (data.image_dim + data.text_dim)));
    buf.append(kMagic, 4);
    binio::append_u32(buf, kVersion);
    binio::append_u64(buf, data.size());
    binio::append_u32(buf, data.classes);
    binio::append_u32(buf, data.image_dim);
    binio::append_u32(buf, data.text_dim);
    for (const FeatureRecord& rec : data.records) {
        binio::append_u32(buf, rec.label);
        for (double x : rec.image) binio::append_f64(buf, x);
        for (double x : rec.text) binio::append_f64(buf, x);
    }
    binio::write_file_atomic(path, buf);
}

Dataset read_dataset(const std::string& path) {
    const std::string buf = binio::read_file(path, "dataset file");

    binio::Reader r(buf, "dataset file");
    r.need(4);
    if (buf.compare(0, 4, kMagic, 4) != 0) throw FormatError("dataset file: bad magic", 0);
    r.pos = 4;
    if (r.read_u32() != kVersion) throw FormatError("dataset file: unsupported version", 4);
    const std::uint64_t samples = r.read_u64();
    if (samples == 0) throw FormatError("dataset file: zero samples", 8);
    Dataset out;
    out.classes = r.read_u32();
    if (out.classes < 2) throw FormatError("dataset file: classes must be >= 2", 16);
    out.image_dim = r.read_u32();
    if (out.image_dim == 0) throw FormatError("dataset file: zero image_dim", 20);
    out.text_dim = r.read_u32();
    if (out.text_dim == 0) throw FormatError("dataset file: zero text_dim", 24);

    const std::uint64_t record_bytes = 4 + 8ull * (out.image_dim + out.text_dim);
    const std::uint64_t expected = kHeaderBytes + samples * record_bytes;
    if (buf.size() > expected) throw FormatError("dataset file: trailing bytes", expected);

    out.records.resize(samples);
    for (std::uint64_t i = 0; i < samples; ++i) {
        FeatureRecord& rec = out.records[i];
        const std::size_t label_pos = r.pos;
        rec.label = r.read_u32();
        if (rec.label >= out.classes) throw FormatError("dataset file: label out of range", label_pos);
        rec.image.resize(out.image_dim);
        for (double& x : rec.image) {
            const std::size_t value_pos = r.pos;
            x = r.read_f64();
            if (!std::isfinite(x)) throw FormatError("dataset file: non-finite feature", value_pos);
        }
        rec.text.resize(out.text_dim);
        for (double& x : rec.text) {
            const std::size_t value_pos = r.pos;
            x = r.read_f64();
            if (!std::isfinite(x)) throw FormatError("dataset file: non-finite feature", value_pos);
        }
    }
    return out;
}

}  // namespace balgrad
