#pragma once

#include <cstdint>
#include <vector>

#include "gil/tensor.hpp"

namespace gil {

/// Shape metadata for the fused self-attention primitive. Rows of the
/// flattened [batch*max_len x d] activations belong to sample r/max_len;
/// each sample's real tokens are a prefix of length lengths[b], the rest
/// is padding that must not influence any real position.
struct AttentionMeta {
    std::int64_t batch = 0;
    std::int64_t max_len = 0;
    std::int64_t n_heads = 1;
    std::vector<std::int64_t> lengths;
};

/// Reverse-mode gradient tape over dense matrices.
///
/// Values are computed eagerly and stored on the tape; backward() replays
/// the record in reverse. The tape is append-only and therefore acyclic.
/// A tape and its tensors stay on one logical thread; no internal
/// parallelism, so identical inputs give bit-identical results.
class GradTape {
public:
    using ValueId = std::int32_t;

    ValueId leaf(Tensor t);

    ValueId matmul(ValueId a, ValueId b, bool trans_a = false, bool trans_b = false);
    ValueId add(ValueId a, ValueId b);
    ValueId sub(ValueId a, ValueId b);
    ValueId mul(ValueId a, ValueId b);
    ValueId scale(ValueId a, double c);
    /// matmul(x, w) + broadcast row bias [1 x n].
    ValueId affine(ValueId x, ValueId w, ValueId bias);
    ValueId softmax_rows(ValueId x);
    /// Per-row standardization over columns (epsilon 1e-5) then affine with
    /// [1 x n] gain/bias.
    ValueId layer_norm(ValueId x, ValueId gain, ValueId bias);
    /// Output row i is table row indices[i]; backward scatters additively.
    ValueId gather_rows(ValueId table, const std::vector<std::int64_t>& indices);
    ValueId gelu(ValueId x);
    ValueId sum_all(ValueId x);
    /// Fused bidirectional multi-head self-attention (no positional
    /// encoding; padded positions excluded from attention).
    ValueId self_attention(ValueId q, ValueId k, ValueId v, AttentionMeta meta);
    /// Mean over rows of -log softmax(logits)[label]; labels in [0, C).
    ValueId cross_entropy_mean(ValueId logits, const std::vector<int>& labels);

    const Tensor& value(ValueId id) const;
    /// Gradient of the last backward() loss w.r.t. node id. Empty until
    /// backward has run; leaves that backward cannot reach hold zeros.
    const Tensor& grad(ValueId id) const;

    /// Accumulates d(loss)/d(node) for every requires_grad leaf reachable
    /// from the loss. loss must be scalar and live on this tape.
    void backward(ValueId loss);

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf,
        Matmul,
        Add,
        Sub,
        Mul,
        Scale,
        Affine,
        SoftmaxRows,
        LayerNorm,
        GatherRows,
        Gelu,
        SumAll,
        SelfAttention,
        CrossEntropyMean,
    };

    struct Node {
        Tensor value;
        Tensor grad;
        Op op = Op::Leaf;
        ValueId a = -1, b = -1, c = -1;
        bool needs_grad = false;
        bool trans_a = false, trans_b = false;
        double scalar = 0.0;
        std::vector<std::int64_t> indices;  // gather
        std::vector<int> labels;            // cross entropy
        std::vector<double> cache;          // per-row stats / attention probs
        AttentionMeta meta;
    };

    ValueId push(Node n);
    Node& node(ValueId id);
    const Node& node(ValueId id) const;
    void backward_step(ValueId id);
    Tensor& grad_buffer(ValueId id);

    std::vector<Node> nodes_;
};

}  // namespace gil
