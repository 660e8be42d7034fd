#include "balgrad/model.hpp"

#include <cmath>

#include "balgrad/binio.hpp"
#include "balgrad/kernels.hpp"
#include "balgrad/numerics.hpp"
#include "balgrad/rng.hpp"

namespace balgrad {

const char* fusion_name(Fusion f) { return f == Fusion::Concat ? "concat" : "add"; }

void ModelConfig::validate() const {
    require(image_dim >= 1 && text_dim >= 1 && embed_dim >= 1, "ModelConfig: dims must be positive");
    require(classes >= 2, "ModelConfig: need at least 2 classes");
}

namespace {

void check_layer(const LinearLayer& layer, std::size_t out_dim, std::size_t in_dim, const char* name) {
    require(layer.W.rows == out_dim && layer.W.cols == in_dim && layer.b.size() == out_dim,
            std::string("Params: bad shape for ") + name);
}

void check_params(const ModelConfig& cfg, const Params& p) {
    check_layer(p.embed_image, cfg.embed_dim, cfg.image_dim, "embed_image");
    check_layer(p.embed_text, cfg.embed_dim, cfg.text_dim, "embed_text");
    check_layer(p.head_image, cfg.classes, cfg.embed_dim, "head_image");
    check_layer(p.head_text, cfg.classes, cfg.embed_dim, "head_text");
    check_layer(p.fused, cfg.classes, cfg.fused_dim(), "fused");
}

void check_batch(const ModelConfig& cfg, const Batch& batch) {
    require(batch.size() >= 1, "Batch: empty batch");
    require(batch.image.rows == batch.size() && batch.text.rows == batch.size(), "Batch: row count mismatch");
    require(batch.image.cols == cfg.image_dim && batch.text.cols == cfg.text_dim, "Batch: feature dims do not match config");
    require(all_finite(batch.image) && all_finite(batch.text), "Batch: non-finite feature");
    for (std::uint32_t y : batch.labels) {
        require(y < cfg.classes, "Batch: label out of range");
    }
}

std::uint64_t forward_checksum(const ModelConfig& cfg, const Params& p, const Batch& batch) {
    const std::uint64_t dims[5] = {cfg.image_dim, cfg.text_dim, cfg.embed_dim, cfg.classes,
                                   cfg.fusion == Fusion::Concat ? 0ull : 1ull};
    std::uint64_t h = fnv1a(dims, sizeof(dims));
    for (const LinearLayer* layer : {&p.embed_image, &p.embed_text, &p.head_image, &p.head_text, &p.fused}) {
        h = fnv1a(layer->W.data, h);
        h = fnv1a(layer->b, h);
    }
    h = fnv1a(batch.image.data, h);
    h = fnv1a(batch.text.data, h);
    h = fnv1a(batch.labels.data(), batch.labels.size() * sizeof(std::uint32_t), h);
    return h;
}

double mean_cross_entropy(const Mat64& P, const std::vector<std::uint32_t>& labels) {
    double acc = 0.0;
    for (std::size_t i = 0; i < P.rows; ++i) {
        acc += -std::log(P.at(i, labels[i]));
    }
    return acc / static_cast<double>(P.rows);
}

Mat64 concat_cols(const Mat64& a, const Mat64& b) {
    Mat64 out(a.rows, a.cols + b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* dst = out.row(i);
        const double* pa = a.row(i);
        const double* pb = b.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) dst[j] = pa[j];
        for (std::size_t j = 0; j < b.cols; ++j) dst[a.cols + j] = pb[j];
    }
    return out;
}

Mat64 col_slice(const Mat64& m, std::size_t c0, std::size_t c1) {
    Mat64 out(m.rows, c1 - c0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* src = m.row(i) + c0;
        double* dst = out.row(i);
        for (std::size_t j = 0; j < out.cols; ++j) dst[j] = src[j];
    }
    return out;
}

Mat64 added(const Mat64& a, const Mat64& b) {
    Mat64 out = a;
    kernels::add_inplace(out, b);
    return out;
}

/// delta[i,c] = (P[i,c] - [c == y_i]) / B  -- softmax+CE gradient wrt logits.
Mat64 ce_logit_delta(const Mat64& P, const std::vector<std::uint32_t>& labels) {
    const double inv_b = 1.0 / static_cast<double>(P.rows);
    Mat64 delta(P.rows, P.cols);
    for (std::size_t i = 0; i < P.rows; ++i) {
        const double* p = P.row(i);
        double* d = delta.row(i);
        for (std::size_t c = 0; c < P.cols; ++c) {
            d[c] = (p[c] - (c == labels[i] ? 1.0 : 0.0)) * inv_b;
        }
    }
    return delta;
}

/// delta[i,k] = P[i,k] * (log(P[i,k]/Q[i,k]) - KL(P_i || Q_i)) / B
/// -- gradient of mean KL(P || Q) wrt the logits behind P (Q held constant).
Mat64 kl_logit_delta(const Mat64& P, const Mat64& Q) {
    const double inv_b = 1.0 / static_cast<double>(P.rows);
    Mat64 delta(P.rows, P.cols);
    for (std::size_t i = 0; i < P.rows; ++i) {
        const double kl_i = kl_between_rows(P, Q, i);
        const double* p = P.row(i);
        const double* q = Q.row(i);
        double* d = delta.row(i);
        for (std::size_t k = 0; k < P.cols; ++k) {
            d[k] = p[k] * (std::log(p[k] / q[k]) - kl_i) * inv_b;
        }
    }
    return delta;
}

LayerGrad layer_grad_from_delta(const Mat64& delta, const Mat64& inputs) {
    LayerGrad g;
    g.W = Mat64(delta.cols, inputs.cols);
    kernels::matmul_at_b(g.W, delta, inputs);
    g.b.resize(delta.cols);
    kernels::column_sums(g.b, delta);
    return g;
}

}  // namespace

Batch gather_batch(const Dataset& data, std::span<const std::size_t> indices) {
    data.validate();
    require(!indices.empty(), "gather_batch: empty index list");
    Batch batch;
    batch.image = Mat64(indices.size(), data.image_dim);
    batch.text = Mat64(indices.size(), data.text_dim);
    batch.labels.resize(indices.size());
    for (std::size_t row = 0; row < indices.size(); ++row) {
        require(indices[row] < data.size(), "gather_batch: index out of range");
        const FeatureRecord& rec = data.records[indices[row]];
        std::copy(rec.image.begin(), rec.image.end(), batch.image.row(row));
        std::copy(rec.text.begin(), rec.text.end(), batch.text.row(row));
        batch.labels[row] = rec.label;
    }
    return batch;
}

Batch gather_batch(const Dataset& data) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return gather_batch(data, all);
}

Params init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    auto make_layer = [&rng](std::size_t out_dim, std::size_t in_dim) {
        LinearLayer layer;
        layer.W = Mat64(out_dim, in_dim);
        const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
        for (double& w : layer.W.data) w = rng.uniform(-bound, bound);
        layer.b.assign(out_dim, 0.0);
        return layer;
    };
    Params p;
    p.embed_image = make_layer(cfg.embed_dim, cfg.image_dim);
    p.embed_text = make_layer(cfg.embed_dim, cfg.text_dim);
    p.head_image = make_layer(cfg.classes, cfg.embed_dim);
    p.head_text = make_layer(cfg.classes, cfg.embed_dim);
    p.fused = make_layer(cfg.classes, cfg.fused_dim());
    return p;
}

ForwardOutputs forward(const ModelConfig& cfg, const Params& params, const Batch& batch) {
    cfg.validate();
    check_params(cfg, params);
    check_batch(cfg, batch);
    const std::size_t B = batch.size();

    ForwardOutputs out;
    out.z_image = Mat64(B, cfg.embed_dim);
    kernels::affine_batch(out.z_image, batch.image, params.embed_image.W, params.embed_image.b);
    out.z_text = Mat64(B, cfg.embed_dim);
    kernels::affine_batch(out.z_text, batch.text, params.embed_text.W, params.embed_text.b);

    Mat64 logits(B, cfg.classes);
    kernels::affine_batch(logits, out.z_image, params.head_image.W, params.head_image.b);
    out.p_image = Mat64(B, cfg.classes);
    kernels::softmax_rows(out.p_image, logits);

    kernels::affine_batch(logits, out.z_text, params.head_text.W, params.head_text.b);
    out.p_text = Mat64(B, cfg.classes);
    kernels::softmax_rows(out.p_text, logits);

    out.fused_in = cfg.fusion == Fusion::Concat ? concat_cols(out.z_image, out.z_text)
                                                : added(out.z_image, out.z_text);
    Mat64 fused_logits(B, cfg.classes);
    kernels::affine_batch(fused_logits, out.fused_in, params.fused.W, params.fused.b);
    out.p_fused = Mat64(B, cfg.classes);
    kernels::softmax_rows(out.p_fused, fused_logits);

    out.losses.fused_ce = mean_cross_entropy(out.p_fused, batch.labels);
    out.losses.image_ce = mean_cross_entropy(out.p_image, batch.labels);
    out.losses.text_ce = mean_cross_entropy(out.p_text, batch.labels);
    out.losses.image_kl = mean_row_kl(out.p_image, out.p_text);
    out.losses.text_kl = mean_row_kl(out.p_text, out.p_image);
    out.checksum = forward_checksum(cfg, params, batch);
    return out;
}

GradientSet backward(const ModelConfig& cfg, const Params& params, const Batch& batch,
                     const ForwardOutputs& outputs) {
    cfg.validate();
    check_params(cfg, params);
    check_batch(cfg, batch);
    require(outputs.checksum == forward_checksum(cfg, params, batch),
            "backward: outputs are stale for this (params, batch) pair");

    GradientSet g;

    // Fused classifier path.
    const Mat64 delta_fused = ce_logit_delta(outputs.p_fused, batch.labels);
    g.fused = layer_grad_from_delta(delta_fused, outputs.fused_in);
    g.fused_image_block = Mat64(cfg.classes, cfg.embed_dim);
    kernels::matmul_at_b(g.fused_image_block, delta_fused, outputs.z_image);
    g.fused_text_block = Mat64(cfg.classes, cfg.embed_dim);
    kernels::matmul_at_b(g.fused_text_block, delta_fused, outputs.z_text);

    Mat64 d_fused_in(batch.size(), cfg.fused_dim());
    kernels::matmul_a_b(d_fused_in, delta_fused, params.fused.W);
    const Mat64 dz_image_fused =
        cfg.fusion == Fusion::Concat ? col_slice(d_fused_in, 0, cfg.embed_dim) : d_fused_in;
    const Mat64 dz_text_fused =
        cfg.fusion == Fusion::Concat ? col_slice(d_fused_in, cfg.embed_dim, 2 * cfg.embed_dim) : d_fused_in;

    // Per-modality heads.
    const Mat64 delta_image = ce_logit_delta(outputs.p_image, batch.labels);
    g.head_image = layer_grad_from_delta(delta_image, outputs.z_image);
    Mat64 dz_image_head(batch.size(), cfg.embed_dim);
    kernels::matmul_a_b(dz_image_head, delta_image, params.head_image.W);

    const Mat64 delta_text = ce_logit_delta(outputs.p_text, batch.labels);
    g.head_text = layer_grad_from_delta(delta_text, outputs.z_text);
    Mat64 dz_text_head(batch.size(), cfg.embed_dim);
    kernels::matmul_a_b(dz_text_head, delta_text, params.head_text.W);

    // Embeddings accumulate the fused path and the own-head path.
    g.embed_image = layer_grad_from_delta(added(dz_image_fused, dz_image_head), batch.image);
    g.embed_text = layer_grad_from_delta(added(dz_text_fused, dz_text_head), batch.text);

    // KL branches: each distillation loss trains its own branch only
    // (the other modality's prediction acts as a fixed teacher).
    const Mat64 delta_image_kl = kl_logit_delta(outputs.p_image, outputs.p_text);
    g.image_kl.head = layer_grad_from_delta(delta_image_kl, outputs.z_image);
    Mat64 dz_image_kl(batch.size(), cfg.embed_dim);
    kernels::matmul_a_b(dz_image_kl, delta_image_kl, params.head_image.W);
    g.image_kl.embed = layer_grad_from_delta(dz_image_kl, batch.image);

    const Mat64 delta_text_kl = kl_logit_delta(outputs.p_text, outputs.p_image);
    g.text_kl.head = layer_grad_from_delta(delta_text_kl, outputs.z_text);
    Mat64 dz_text_kl(batch.size(), cfg.embed_dim);
    kernels::matmul_a_b(dz_text_kl, delta_text_kl, params.head_text.W);
    g.text_kl.embed = layer_grad_from_delta(dz_text_kl, batch.text);

    return g;
}

FlatLayout FlatLayout::from(const ModelConfig& cfg) {
    FlatLayout layout;
    std::size_t off = 0;
    auto block = [&off](std::size_t* w, std::size_t* b, std::size_t out_dim, std::size_t in_dim) {
        *w = off;
        off += out_dim * in_dim;
        *b = off;
        off += out_dim;
    };
    block(&layout.embed_image_w, &layout.embed_image_b, cfg.embed_dim, cfg.image_dim);
    block(&layout.embed_text_w, &layout.embed_text_b, cfg.embed_dim, cfg.text_dim);
    block(&layout.head_image_w, &layout.head_image_b, cfg.classes, cfg.embed_dim);
    block(&layout.head_text_w, &layout.head_text_b, cfg.classes, cfg.embed_dim);
    block(&layout.fused_w, &layout.fused_b, cfg.classes, cfg.fused_dim());
    layout.total = off;
    return layout;
}

namespace {

void append_block(Vec64& flat, const LinearLayer& layer) {
    flat.insert(flat.end(), layer.W.data.begin(), layer.W.data.end());
    flat.insert(flat.end(), layer.b.begin(), layer.b.end());
}

void append_block(Vec64& flat, const LayerGrad& g) {
    flat.insert(flat.end(), g.W.data.begin(), g.W.data.end());
    flat.insert(flat.end(), g.b.begin(), g.b.end());
}

LinearLayer take_layer(const Vec64& flat, std::size_t& off, std::size_t out_dim, std::size_t in_dim) {
    LinearLayer layer;
    layer.W = Mat64(out_dim, in_dim);
    std::copy(flat.begin() + off, flat.begin() + off + out_dim * in_dim, layer.W.data.begin());
    off += out_dim * in_dim;
    layer.b.assign(flat.begin() + off, flat.begin() + off + out_dim);
    off += out_dim;
    return layer;
}

}  // namespace

Vec64 flatten_params(const Params& params) {
    Vec64 flat;
    for (const LinearLayer* layer : {&params.embed_image, &params.embed_text, &params.head_image,
                                     &params.head_text, &params.fused}) {
        append_block(flat, *layer);
    }
    return flat;
}

Params unflatten_params(const ModelConfig& cfg, const Vec64& flat) {
    cfg.validate();
    const FlatLayout layout = FlatLayout::from(cfg);
    require(flat.size() == layout.total, "unflatten_params: flat length does not match config");
    Params p;
    std::size_t off = 0;
    p.embed_image = take_layer(flat, off, cfg.embed_dim, cfg.image_dim);
    p.embed_text = take_layer(flat, off, cfg.embed_dim, cfg.text_dim);
    p.head_image = take_layer(flat, off, cfg.classes, cfg.embed_dim);
    p.head_text = take_layer(flat, off, cfg.classes, cfg.embed_dim);
    p.fused = take_layer(flat, off, cfg.classes, cfg.fused_dim());
    return p;
}

Vec64 flatten_target_gradient(const ModelConfig& cfg, const GradientSet& grads) {
    const FlatLayout layout = FlatLayout::from(cfg);
    Vec64 flat;
    flat.reserve(layout.total);
    append_block(flat, grads.embed_image);
    append_block(flat, grads.embed_text);
    append_block(flat, grads.head_image);
    append_block(flat, grads.head_text);
    append_block(flat, grads.fused);
    require(flat.size() == layout.total, "flatten_target_gradient: gradient shapes do not match config");
    return flat;
}

void apply_update(const ModelConfig& cfg, Params& params, const Vec64& flat_update, double lambda) {
    const FlatLayout layout = FlatLayout::from(cfg);
    require(flat_update.size() == layout.total, "apply_update: update length does not match config");
    std::size_t off = 0;
    auto sub_block = [&off, &flat_update, lambda](LinearLayer& layer) {
        for (double& w : layer.W.data) w -= lambda * flat_update[off++];
        for (double& b : layer.b) b -= lambda * flat_update[off++];
    };
    sub_block(params.embed_image);
    sub_block(params.embed_text);
    sub_block(params.head_image);
    sub_block(params.head_text);
    sub_block(params.fused);
}

bool all_finite(const Params& params) {
    for (const LinearLayer* layer : {&params.embed_image, &params.embed_text, &params.head_image,
                                     &params.head_text, &params.fused}) {
        if (!all_finite(layer->W) || !all_finite(layer->b)) return false;
    }
    return true;
}

namespace {
constexpr char kParamsMagic[4] = {'B', 'M', 'P', '1'};
constexpr std::uint32_t kParamsVersion = 1;
}  // namespace

void save_params(const ModelConfig& cfg, const Params& params, const std::string& path) {
    cfg.validate();
    check_params(cfg, params);
    std::string buf;
    buf.append(kParamsMagic, 4);
    binio::append_u32(buf, kParamsVersion);
    binio::append_u32(buf, static_cast<std::uint32_t>(cfg.image_dim));
    binio::append_u32(buf, static_cast<std::uint32_t>(cfg.text_dim));
    binio::append_u32(buf, static_cast<std::uint32_t>(cfg.embed_dim));
    binio::append_u32(buf, static_cast<std::uint32_t>(cfg.classes));
    buf.push_back(cfg.fusion == Fusion::Concat ? char(0) : char(1));
    for (double x : flatten_params(params)) binio::append_f64(buf, x);
    binio::write_file_atomic(path, buf);
}

std::pair<ModelConfig, Params> load_params(const std::string& path) {
    const std::string buf = binio::read_file(path, "params file");
    binio::Reader r(buf, "params file");
    r.need(4);
    if (buf.compare(0, 4, kParamsMagic, 4) != 0) throw FormatError("params file: bad magic", 0);
    r.pos = 4;
    if (r.read_u32() != kParamsVersion) throw FormatError("params file: unsupported version", 4);
    ModelConfig cfg;
    cfg.image_dim = r.read_u32();
    cfg.text_dim = r.read_u32();
    cfg.embed_dim = r.read_u32();
    cfg.classes = r.read_u32();
    const std::size_t fusion_pos = r.pos;
    const std::uint8_t fusion_byte = r.read_u8();
    if (fusion_byte > 1) throw FormatError("params file: bad fusion tag", fusion_pos);
    cfg.fusion = fusion_byte == 0 ? Fusion::Concat : Fusion::Add;
    if (cfg.image_dim == 0 || cfg.text_dim == 0 || cfg.embed_dim == 0 || cfg.classes < 2) {
        throw FormatError("params file: bad dimensions", 8);
    }

    const FlatLayout layout = FlatLayout::from(cfg);
    const std::size_t expected = r.pos + 8 * layout.total;
    if (buf.size() > expected) throw FormatError("params file: trailing bytes", expected);
    Vec64 flat(layout.total);
    for (double& x : flat) {
        const std::size_t value_pos = r.pos;
        x = r.read_f64();
        if (!std::isfinite(x)) throw FormatError("params file: non-finite parameter", value_pos);
    }
    return {cfg, unflatten_params(cfg, flat)};
}

}  // namespace balgrad
