#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gil/expression.hpp"
#include "gil/rng.hpp"
#include "gil/tape.hpp"
#include "gil/tensor.hpp"

namespace gil {

struct ModelConfig {
    std::int64_t vocab_size = 0;
    std::int64_t d_model = 64;
    std::int64_t n_layers = 2;
    std::int64_t n_heads = 4;
    std::int64_t d_ff = 256;
    std::int64_t max_len = 512;

    void validate() const;
};

/// Masking procedure: per row, round(mask_ratio * non-pad count) positions
/// (at least one) get their value replaced by the sentinel. The sentinel
/// must be negative so it cannot collide with real expression values.
struct MaskSpec {
    double mask_ratio = 0.15;
    double sentinel = -1.0;
};

/// A padded minibatch. Flattened layout is row-major [batch_size x max_len];
/// each row's real tokens are a prefix of length lengths[b].
struct Batch {
    std::int64_t batch_size = 0;
    std::int64_t max_len = 0;
    std::vector<std::int64_t> gene_indices;      // pad entries are 0
    std::vector<double> values;                  // ground-truth v, pad 0
    std::vector<double> masked_values;           // v-tilde: sentinel at masked positions
    std::vector<std::uint8_t> pad_mask;          // 1 = real token
    std::vector<std::uint8_t> masked_positions;  // subset of non-pad positions
    std::vector<std::int64_t> lengths;

    std::int64_t numel() const { return batch_size * max_len; }
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, wk, wv, wo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
};

/// Gene-expression transformer parameters: gene embedding table, bias-free
/// value encoder [1 x d], pre-norm encoder layers, final layer norm, and a
/// bias-free value prediction head [d x 1].
struct ModelParams {
    ModelConfig config;
    Tensor embedding;
    Tensor value_encoder;
    std::vector<LayerParams> layers;
    Tensor final_gain, final_bias;
    Tensor value_head;

    /// Canonical (name, tensor) enumeration; ordering is fixed and shared
    /// by the optimizer, the tape graph, and the checkpoint writer.
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;
};

/// Scaled-normal init (std 0.02) for weights, ones for layer-norm gains,
/// zeros for biases. Deterministic under seed.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Round every parameter through IEEE-754 binary32, the checkpoint
/// precision. Applied at stage boundaries so that resuming from a saved
/// checkpoint is bit-identical to training straight through.
void round_params_to_f32(ModelParams& params);

/// Pack samples (already truncated to max_len) into a padded batch.
/// masked_values starts equal to values; call apply_mask to mask.
Batch make_batch(std::span<const ExpressionSample> samples);
Batch make_batch(std::span<const ExpressionSample* const> samples);

struct MaskResult {
    std::vector<double> masked_values;
    std::vector<std::uint8_t> masked_positions;
};

/// Replace round(mask_ratio * non-pad) values per row (minimum 1, chosen
/// uniformly without replacement among non-pad positions) by the sentinel.
MaskResult apply_mask(const std::vector<double>& values, const std::vector<std::uint8_t>& pad_mask,
                      std::int64_t rows, std::int64_t cols, const MaskSpec& spec, Rng& rng);

/// In-place convenience over a Batch.
void apply_mask(Batch& batch, const MaskSpec& spec, Rng& rng);

/// Builds the model graph on a tape. Parameters are pushed as leaves once
/// per graph; with trainable=false the graph is evaluation-only.
class ModelGraph {
public:
    ModelGraph(GradTape& tape, const ModelParams& params, bool trainable);

    /// e = E[x] + v-tilde * L1 (value encoder has no bias).
    GradTape::ValueId embed(const Batch& batch) const;
    /// Pre-norm bidirectional transformer encoder; padded positions cannot
    /// influence real ones; no positional encoding.
    GradTape::ValueId encode(GradTape::ValueId embedded, const Batch& batch) const;
    /// v-hat = e' L2 (no bias).
    GradTape::ValueId predict_values(GradTape::ValueId encoded) const;
    /// Eq.-style masked loss: per-sample sum of squared errors over masked
    /// positions, averaged over the batch.
    GradTape::ValueId masked_mse(GradTape::ValueId predictions, const Batch& batch) const;
    /// Full composition embed -> encode -> predict -> masked_mse.
    GradTape::ValueId loss_tran(const Batch& batch) const;

    /// Leaf ids aligned with ModelParams::named() order.
    const std::vector<GradTape::ValueId>& param_ids() const { return param_ids_; }
    GradTape& tape() const { return *tape_; }

private:
    GradTape* tape_;
    const ModelParams* params_;
    std::vector<GradTape::ValueId> param_ids_;
    GradTape::ValueId id(const std::string& name) const;
    std::vector<std::pair<std::string, const Tensor*>> named_;
};

/// Mean of masked_mse over an already-masked batch, no gradients.
double eval_masked_loss(const ModelParams& params, const Batch& batch);

/// Forward pass without gradients; returns predictions [batch*max_len x 1].
Tensor eval_predictions(const ModelParams& params, const Batch& batch);

/// Frozen-model features: forward with v-tilde = v (no masking), then mean
/// of e' over non-pad tokens per sample. Returns [batch x d_model].
Tensor extract_features(const ModelParams& params, const Batch& batch);

}  // namespace gil
