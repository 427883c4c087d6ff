#include "gil/model.hpp"

#include <algorithm>
#include <cmath>

#include "gil/errors.hpp"

namespace gil {

void ModelConfig::validate() const {
    if (vocab_size < 1) throw ConfigError("model: vocab_size must be >= 1");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1)
        throw ConfigError("model: dimensions must be positive");
    if (d_model % n_heads != 0) throw ConfigError("model: d_model must be divisible by n_heads");
    if (max_len < 1) throw ConfigError("model: max_len must be >= 1");
}

namespace {

template <typename P, typename T>
std::vector<std::pair<std::string, T*>> named_impl(P& p) {
    std::vector<std::pair<std::string, T*>> out;
    out.emplace_back("embedding", &p.embedding);
    out.emplace_back("value_encoder", &p.value_encoder);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        const std::string prefix = "layers." + std::to_string(l) + ".";
        out.emplace_back(prefix + "ln1_gain", &layer.ln1_gain);
        out.emplace_back(prefix + "ln1_bias", &layer.ln1_bias);
        out.emplace_back(prefix + "wq", &layer.wq);
        out.emplace_back(prefix + "wk", &layer.wk);
        out.emplace_back(prefix + "wv", &layer.wv);
        out.emplace_back(prefix + "wo", &layer.wo);
        out.emplace_back(prefix + "ln2_gain", &layer.ln2_gain);
        out.emplace_back(prefix + "ln2_bias", &layer.ln2_bias);
        out.emplace_back(prefix + "w1", &layer.w1);
        out.emplace_back(prefix + "b1", &layer.b1);
        out.emplace_back(prefix + "w2", &layer.w2);
        out.emplace_back(prefix + "b2", &layer.b2);
    }
    out.emplace_back("final_norm.gain", &p.final_gain);
    out.emplace_back("final_norm.bias", &p.final_bias);
    out.emplace_back("value_head", &p.value_head);
    return out;
}

constexpr double kInitStd = 0.02;

void fill_normal(Tensor& t, Rng& rng, double std) {
    for (double& v : t.values) v = rng.normal() * std;
}

void fill_ones(Tensor& t) { std::fill(t.values.begin(), t.values.end(), 1.0); }

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return named_impl<ModelParams, Tensor>(*this);
}
std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    return named_impl<const ModelParams, const Tensor>(*this);
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    const auto d = config.d_model;
    p.embedding = Tensor(config.vocab_size, d);
    p.value_encoder = Tensor(1, d);
    p.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& layer : p.layers) {
        layer.ln1_gain = Tensor(1, d);
        layer.ln1_bias = Tensor(1, d);
        layer.wq = Tensor(d, d);
        layer.wk = Tensor(d, d);
        layer.wv = Tensor(d, d);
        layer.wo = Tensor(d, d);
        layer.ln2_gain = Tensor(1, d);
        layer.ln2_bias = Tensor(1, d);
        layer.w1 = Tensor(d, config.d_ff);
        layer.b1 = Tensor(1, config.d_ff);
        layer.w2 = Tensor(config.d_ff, d);
        layer.b2 = Tensor(1, d);
        fill_ones(layer.ln1_gain);
        fill_ones(layer.ln2_gain);
    }
    p.final_gain = Tensor(1, d);
    p.final_bias = Tensor(1, d);
    p.value_head = Tensor(d, 1);
    fill_ones(p.final_gain);

    // weight draws happen in a fixed order so the result only depends on seed
    Rng rng = stream_rng(seed, "model.init");
    fill_normal(p.embedding, rng, kInitStd);
    fill_normal(p.value_encoder, rng, kInitStd);
    for (auto& layer : p.layers) {
        fill_normal(layer.wq, rng, kInitStd);
        fill_normal(layer.wk, rng, kInitStd);
        fill_normal(layer.wv, rng, kInitStd);
        fill_normal(layer.wo, rng, kInitStd);
        fill_normal(layer.w1, rng, kInitStd);
        fill_normal(layer.w2, rng, kInitStd);
    }
    fill_normal(p.value_head, rng, kInitStd);
    return p;
}

void round_params_to_f32(ModelParams& params) {
    for (auto& [name, tensor] : params.named()) {
        (void)name;
        for (double& v : tensor->values) v = static_cast<double>(static_cast<float>(v));
    }
}

namespace {

template <typename Deref>
Batch make_batch_impl(std::size_t count, Deref deref) {
    Batch b;
    b.batch_size = static_cast<std::int64_t>(count);
    b.max_len = 0;
    for (std::size_t i = 0; i < count; ++i)
        b.max_len = std::max(b.max_len, static_cast<std::int64_t>(deref(i).size()));
    if (b.batch_size > 0 && b.max_len == 0) b.max_len = 1;  // keep tensors non-degenerate
    const std::int64_t n = b.numel();
    b.gene_indices.assign(static_cast<std::size_t>(n), 0);
    b.values.assign(static_cast<std::size_t>(n), 0.0);
    b.pad_mask.assign(static_cast<std::size_t>(n), 0);
    b.masked_positions.assign(static_cast<std::size_t>(n), 0);
    b.lengths.resize(static_cast<std::size_t>(b.batch_size));
    for (std::int64_t r = 0; r < b.batch_size; ++r) {
        const ExpressionSample& s = deref(static_cast<std::size_t>(r));
        const auto len = static_cast<std::int64_t>(s.size());
        b.lengths[static_cast<std::size_t>(r)] = len;
        for (std::int64_t i = 0; i < len; ++i) {
            const auto flat = static_cast<std::size_t>(r * b.max_len + i);
            b.gene_indices[flat] = s.gene_indices[static_cast<std::size_t>(i)];
            b.values[flat] = s.values[static_cast<std::size_t>(i)];
            b.pad_mask[flat] = 1;
        }
    }
    b.masked_values = b.values;
    return b;
}

}  // namespace

Batch make_batch(std::span<const ExpressionSample> samples) {
    return make_batch_impl(samples.size(),
                           [&](std::size_t i) -> const ExpressionSample& { return samples[i]; });
}

Batch make_batch(std::span<const ExpressionSample* const> samples) {
    return make_batch_impl(samples.size(),
                           [&](std::size_t i) -> const ExpressionSample& { return *samples[i]; });
}

MaskResult apply_mask(const std::vector<double>& values, const std::vector<std::uint8_t>& pad_mask,
                      std::int64_t rows, std::int64_t cols, const MaskSpec& spec, Rng& rng) {
    if (!(spec.mask_ratio > 0.0 && spec.mask_ratio < 1.0))
        throw ConfigError("mask_ratio must be in (0, 1)");
    if (!(spec.sentinel < 0.0))
        throw ConfigError("mask sentinel must be negative (outside the expression-value range)");
    MaskResult out;
    out.masked_values = values;
    out.masked_positions.assign(values.size(), 0);
    std::vector<std::size_t> eligible;
    for (std::int64_t r = 0; r < rows; ++r) {
        eligible.clear();
        for (std::int64_t c = 0; c < cols; ++c) {
            if (pad_mask[static_cast<std::size_t>(r * cols + c)]) {
                eligible.push_back(static_cast<std::size_t>(r * cols + c));
            }
        }
        if (eligible.empty())
            throw DataError("apply_mask: row " + std::to_string(r) + " has no non-pad positions");
        auto count = static_cast<std::size_t>(
            std::llround(spec.mask_ratio * static_cast<double>(eligible.size())));
        count = std::clamp<std::size_t>(count, 1, eligible.size());
        for (std::size_t pick : rng.sample_without_replacement(eligible.size(), count)) {
            out.masked_values[eligible[pick]] = spec.sentinel;
            out.masked_positions[eligible[pick]] = 1;
        }
    }
    return out;
}

void apply_mask(Batch& batch, const MaskSpec& spec, Rng& rng) {
    MaskResult r = apply_mask(batch.values, batch.pad_mask, batch.batch_size, batch.max_len, spec, rng);
    batch.masked_values = std::move(r.masked_values);
    batch.masked_positions = std::move(r.masked_positions);
}

ModelGraph::ModelGraph(GradTape& tape, const ModelParams& params, bool trainable)
    : tape_(&tape), params_(&params) {
    named_ = params.named();
    param_ids_.reserve(named_.size());
    for (auto& [name, tensor] : named_) {
        (void)name;
        Tensor leaf_copy = *tensor;
        leaf_copy.requires_grad = trainable;
        param_ids_.push_back(tape_->leaf(std::move(leaf_copy)));
    }
}

GradTape::ValueId ModelGraph::id(const std::string& name) const {
    for (std::size_t i = 0; i < named_.size(); ++i) {
        if (named_[i].first == name) return param_ids_[i];
    }
    throw UsageError("ModelGraph: unknown parameter " + name);
}

GradTape::ValueId ModelGraph::embed(const Batch& batch) const {
    for (std::size_t i = 0; i < batch.gene_indices.size(); ++i) {
        if (batch.pad_mask[i] && batch.gene_indices[i] >= params_->config.vocab_size)
            throw VocabularyError("embed: gene index " + std::to_string(batch.gene_indices[i]) +
                                  " outside vocabulary of " +
                                  std::to_string(params_->config.vocab_size));
    }
    auto gathered = tape_->gather_rows(id("embedding"), batch.gene_indices);
    auto vt = tape_->leaf(Tensor::column(batch.masked_values));
    auto value_part = tape_->matmul(vt, id("value_encoder"));
    return tape_->add(gathered, value_part);
}

GradTape::ValueId ModelGraph::encode(GradTape::ValueId embedded, const Batch& batch) const {
    AttentionMeta meta;
    meta.batch = batch.batch_size;
    meta.max_len = batch.max_len;
    meta.n_heads = params_->config.n_heads;
    meta.lengths = batch.lengths;
    auto x = embedded;
    for (std::size_t l = 0; l < params_->layers.size(); ++l) {
        const std::string prefix = "layers." + std::to_string(l) + ".";
        auto a = tape_->layer_norm(x, id(prefix + "ln1_gain"), id(prefix + "ln1_bias"));
        auto q = tape_->matmul(a, id(prefix + "wq"));
        auto k = tape_->matmul(a, id(prefix + "wk"));
        auto v = tape_->matmul(a, id(prefix + "wv"));
        auto att = tape_->self_attention(q, k, v, meta);
        auto o = tape_->matmul(att, id(prefix + "wo"));
        x = tape_->add(x, o);
        auto f = tape_->layer_norm(x, id(prefix + "ln2_gain"), id(prefix + "ln2_bias"));
        auto h = tape_->gelu(tape_->affine(f, id(prefix + "w1"), id(prefix + "b1")));
        auto y = tape_->affine(h, id(prefix + "w2"), id(prefix + "b2"));
        x = tape_->add(x, y);
    }
    return tape_->layer_norm(x, id("final_norm.gain"), id("final_norm.bias"));
}

GradTape::ValueId ModelGraph::predict_values(GradTape::ValueId encoded) const {
    return tape_->matmul(encoded, id("value_head"));
}

GradTape::ValueId ModelGraph::masked_mse(GradTape::ValueId predictions, const Batch& batch) const {
    if (batch.batch_size < 1) throw UsageError("masked_mse: empty batch");
    auto truth = tape_->leaf(Tensor::column(batch.values));
    std::vector<double> mask(batch.masked_positions.size());
    bool any = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = batch.masked_positions[i] ? 1.0 : 0.0;
        any = any || batch.masked_positions[i];
    }
    if (!any) throw UsageError("masked_mse: batch has no masked positions");
    auto mask_id = tape_->leaf(Tensor::column(std::move(mask)));
    auto diff = tape_->sub(predictions, truth);
    auto masked = tape_->mul(diff, mask_id);
    auto sq = tape_->mul(masked, masked);
    return tape_->scale(tape_->sum_all(sq), 1.0 / static_cast<double>(batch.batch_size));
}

GradTape::ValueId ModelGraph::loss_tran(const Batch& batch) const {
    auto e = embed(batch);
    auto enc = encode(e, batch);
    auto preds = predict_values(enc);
    return masked_mse(preds, batch);
}

double eval_masked_loss(const ModelParams& params, const Batch& batch) {
    GradTape tape;
    ModelGraph graph(tape, params, false);
    return tape.value(graph.loss_tran(batch)).values[0];
}

Tensor eval_predictions(const ModelParams& params, const Batch& batch) {
    GradTape tape;
    ModelGraph graph(tape, params, false);
    auto preds = graph.predict_values(graph.encode(graph.embed(batch), batch));
    return tape.value(preds);
}

Tensor extract_features(const ModelParams& params, const Batch& batch) {
    GradTape tape;
    ModelGraph graph(tape, params, false);
    auto enc = graph.encode(graph.embed(batch), batch);
    const Tensor& e = tape.value(enc);
    Tensor pooled(batch.batch_size, params.config.d_model);
    for (std::int64_t r = 0; r < batch.batch_size; ++r) {
        const std::int64_t len = batch.lengths[static_cast<std::size_t>(r)];
        if (len == 0) continue;
        for (std::int64_t i = 0; i < len; ++i) {
            const std::int64_t row = r * batch.max_len + i;
            for (std::int64_t c = 0; c < e.cols; ++c) pooled.at(r, c) += e.at(row, c);
        }
        for (std::int64_t c = 0; c < e.cols; ++c) pooled.at(r, c) /= static_cast<double>(len);
    }
    return pooled;
}

}  // namespace gil
