#include "gil/tape.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>
#include <string>

#include "gil/errors.hpp"

namespace gil {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MutMap = Eigen::Map<RowMat>;
using ConstMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, Eigen::Unaligned, Eigen::OuterStride<>>;

MutMap map(Tensor& t) { return MutMap(t.values.data(), t.rows, t.cols); }
ConstMap map(const Tensor& t) { return ConstMap(t.values.data(), t.rows, t.cols); }

// Block of a flattened [batch*max_len x d] tensor: sample b's first `len`
// rows, head column range [col0, col0+width).
ConstStridedMap block(const Tensor& t, std::int64_t row0, std::int64_t len, std::int64_t col0,
                      std::int64_t width) {
    return ConstStridedMap(t.values.data() + row0 * t.cols + col0, len, width,
                           Eigen::OuterStride<>(t.cols));
}
StridedMap block(Tensor& t, std::int64_t row0, std::int64_t len, std::int64_t col0,
                 std::int64_t width) {
    return StridedMap(t.values.data() + row0 * t.cols + col0, len, width,
                      Eigen::OuterStride<>(t.cols));
}

double stable_softmax_row(double* row, std::int64_t n) {
    double mx = row[0];
    for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }
    const double inv = 1.0 / sum;
    for (std::int64_t i = 0; i < n; ++i) row[i] *= inv;
    return mx + std::log(sum);  // logsumexp, used by cross entropy
}

constexpr double kLayerNormEps = 1e-5;

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

}  // namespace

GradTape::ValueId GradTape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
}

GradTape::Node& GradTape::node(ValueId id) { return nodes_.at(static_cast<std::size_t>(id)); }
const GradTape::Node& GradTape::node(ValueId id) const {
    return nodes_.at(static_cast<std::size_t>(id));
}

const Tensor& GradTape::value(ValueId id) const { return node(id).value; }
const Tensor& GradTape::grad(ValueId id) const { return node(id).grad; }

GradTape::ValueId GradTape::leaf(Tensor t) {
    t.check_finite("leaf");
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = t.requires_grad;
    n.value = std::move(t);
    return push(n);
}

GradTape::ValueId GradTape::matmul(ValueId a, ValueId b, bool trans_a, bool trans_b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    const std::int64_t m = trans_a ? A.cols : A.rows;
    const std::int64_t ka = trans_a ? A.rows : A.cols;
    const std::int64_t kb = trans_b ? B.cols : B.rows;
    const std::int64_t nn = trans_b ? B.rows : B.cols;
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions disagree (" + std::to_string(ka) + " vs " +
                         std::to_string(kb) + ")");
    Node n;
    n.op = Op::Matmul;
    n.a = a;
    n.b = b;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(m, nn);
    auto out = map(n.value);
    if (!trans_a && !trans_b)
        out.noalias() = map(A) * map(B);
    else if (trans_a && !trans_b)
        out.noalias() = map(A).transpose() * map(B);
    else if (!trans_a && trans_b)
        out.noalias() = map(A) * map(B).transpose();
    else
        out.noalias() = map(A).transpose() * map(B).transpose();
    n.value.check_finite("matmul");
    return push(n);
}

GradTape::ValueId GradTape::add(ValueId a, ValueId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ShapeError("add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(A.rows, A.cols);
    map(n.value) = map(A) + map(B);
    n.value.check_finite("add");
    return push(n);
}

GradTape::ValueId GradTape::sub(ValueId a, ValueId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ShapeError("sub: shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(A.rows, A.cols);
    map(n.value) = map(A) - map(B);
    n.value.check_finite("sub");
    return push(n);
}

GradTape::ValueId GradTape::mul(ValueId a, ValueId b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B)) throw ShapeError("mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.value = Tensor(A.rows, A.cols);
    map(n.value) = map(A).cwiseProduct(map(B));
    n.value.check_finite("mul");
    return push(n);
}

GradTape::ValueId GradTape::scale(ValueId a, double c) {
    const Tensor& A = value(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.scalar = c;
    n.needs_grad = node(a).needs_grad;
    n.value = Tensor(A.rows, A.cols);
    map(n.value) = map(A) * c;
    n.value.check_finite("scale");
    return push(n);
}

GradTape::ValueId GradTape::affine(ValueId x, ValueId w, ValueId bias) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    const Tensor& B = value(bias);
    if (X.cols != W.rows) throw ShapeError("affine: inner dimensions disagree");
    if (B.rows != 1 || B.cols != W.cols) throw ShapeError("affine: bias must be [1 x n]");
    Node n;
    n.op = Op::Affine;
    n.a = x;
    n.b = w;
    n.c = bias;
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(bias).needs_grad;
    n.value = Tensor(X.rows, W.cols);
    map(n.value).noalias() = map(X) * map(W);
    map(n.value).rowwise() += map(B).row(0);
    n.value.check_finite("affine");
    return push(n);
}

GradTape::ValueId GradTape::softmax_rows(ValueId x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = x;
    n.needs_grad = node(x).needs_grad;
    n.value = X;
    n.value.requires_grad = false;
    for (std::int64_t r = 0; r < X.rows; ++r) {
        stable_softmax_row(n.value.values.data() + r * X.cols, X.cols);
    }
    n.value.check_finite("softmax_rows");
    return push(n);
}

GradTape::ValueId GradTape::layer_norm(ValueId x, ValueId gain, ValueId bias) {
    const Tensor& X = value(x);
    const Tensor& G = value(gain);
    const Tensor& B = value(bias);
    if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
        throw ShapeError("layer_norm: gain/bias must be [1 x cols]");
    if (X.cols < 1) throw ShapeError("layer_norm: needs at least one column");
    Node n;
    n.op = Op::LayerNorm;
    n.a = x;
    n.b = gain;
    n.c = bias;
    n.needs_grad = node(x).needs_grad || node(gain).needs_grad || node(bias).needs_grad;
    n.value = Tensor(X.rows, X.cols);
    n.cache.resize(static_cast<std::size_t>(X.rows) * 2);  // per row: mean, invstd
    const double inv_cols = 1.0 / static_cast<double>(X.cols);
    for (std::int64_t r = 0; r < X.rows; ++r) {
        const double* src = X.values.data() + r * X.cols;
        double* dst = n.value.values.data() + r * X.cols;
        double mean = 0.0;
        for (std::int64_t cidx = 0; cidx < X.cols; ++cidx) mean += src[cidx];
        mean *= inv_cols;
        double var = 0.0;
        for (std::int64_t cidx = 0; cidx < X.cols; ++cidx) {
            const double d = src[cidx] - mean;
            var += d * d;
        }
        var *= inv_cols;
        const double invstd = 1.0 / std::sqrt(var + kLayerNormEps);
        n.cache[static_cast<std::size_t>(r) * 2] = mean;
        n.cache[static_cast<std::size_t>(r) * 2 + 1] = invstd;
        for (std::int64_t cidx = 0; cidx < X.cols; ++cidx) {
            dst[cidx] = (src[cidx] - mean) * invstd * G.values[static_cast<std::size_t>(cidx)] +
                        B.values[static_cast<std::size_t>(cidx)];
        }
    }
    n.value.check_finite("layer_norm");
    return push(n);
}

GradTape::ValueId GradTape::gather_rows(ValueId table, const std::vector<std::int64_t>& indices) {
    const Tensor& T = value(table);
    for (std::int64_t idx : indices) {
        if (idx < 0 || idx >= T.rows)
            throw VocabularyError("gather_rows: index " + std::to_string(idx) +
                                  " outside table of " + std::to_string(T.rows) + " rows");
    }
    Node n;
    n.op = Op::GatherRows;
    n.a = table;
    n.indices = indices;
    n.needs_grad = node(table).needs_grad;
    n.value = Tensor(static_cast<std::int64_t>(indices.size()), T.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const double* src = T.values.data() + indices[i] * T.cols;
        double* dst = n.value.values.data() + static_cast<std::int64_t>(i) * T.cols;
        std::copy(src, src + T.cols, dst);
    }
    n.value.check_finite("gather_rows");
    return push(n);
}

GradTape::ValueId GradTape::gelu(ValueId x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::Gelu;
    n.a = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor(X.rows, X.cols);
    for (std::size_t i = 0; i < X.values.size(); ++i) n.value.values[i] = gelu_value(X.values[i]);
    n.value.check_finite("gelu");
    return push(n);
}

GradTape::ValueId GradTape::sum_all(ValueId x) {
    const Tensor& X = value(x);
    Node n;
    n.op = Op::SumAll;
    n.a = x;
    n.needs_grad = node(x).needs_grad;
    n.value = Tensor::scalar(X.values.empty() ? 0.0 : map(X).sum());
    n.value.check_finite("sum_all");
    return push(n);
}

GradTape::ValueId GradTape::self_attention(ValueId q, ValueId k, ValueId v, AttentionMeta meta) {
    const Tensor& Q = value(q);
    const Tensor& K = value(k);
    const Tensor& V = value(v);
    if (!Q.same_shape(K) || !Q.same_shape(V)) throw ShapeError("self_attention: q/k/v shape mismatch");
    const std::int64_t d = Q.cols;
    if (meta.n_heads < 1 || d % meta.n_heads != 0)
        throw ShapeError("self_attention: head count must divide feature dim");
    if (Q.rows != meta.batch * meta.max_len ||
        static_cast<std::int64_t>(meta.lengths.size()) != meta.batch)
        throw ShapeError("self_attention: meta does not match tensor rows");
    const std::int64_t dk = d / meta.n_heads;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    Node n;
    n.op = Op::SelfAttention;
    n.a = q;
    n.b = k;
    n.c = v;
    n.needs_grad = node(q).needs_grad || node(k).needs_grad || node(v).needs_grad;
    n.value = Tensor(Q.rows, d);  // padded rows stay zero
    std::size_t probs_size = 0;
    for (std::int64_t b = 0; b < meta.batch; ++b) {
        const auto len = static_cast<std::size_t>(meta.lengths[b]);
        probs_size += len * len * static_cast<std::size_t>(meta.n_heads);
    }
    n.cache.resize(probs_size);

    std::size_t off = 0;
    for (std::int64_t b = 0; b < meta.batch; ++b) {
        const std::int64_t len = meta.lengths[b];
        if (len < 0 || len > meta.max_len) throw ShapeError("self_attention: bad sample length");
        if (len == 0) continue;
        const std::int64_t row0 = b * meta.max_len;
        for (std::int64_t h = 0; h < meta.n_heads; ++h) {
            const std::int64_t col0 = h * dk;
            MutMap probs(n.cache.data() + off, len, len);
            probs.noalias() = block(Q, row0, len, col0, dk) * block(K, row0, len, col0, dk).transpose();
            probs *= inv_sqrt_dk;
            for (std::int64_t r = 0; r < len; ++r) {
                stable_softmax_row(n.cache.data() + off + r * len, len);
            }
            block(n.value, row0, len, col0, dk).noalias() =
                ConstMap(n.cache.data() + off, len, len) * block(V, row0, len, col0, dk);
            off += static_cast<std::size_t>(len) * static_cast<std::size_t>(len);
        }
    }
    n.value.check_finite("self_attention");
    n.meta = std::move(meta);
    return push(n);
}

GradTape::ValueId GradTape::cross_entropy_mean(ValueId logits, const std::vector<int>& labels) {
    const Tensor& X = value(logits);
    if (static_cast<std::int64_t>(labels.size()) != X.rows)
        throw ShapeError("cross_entropy_mean: one label per row required");
    Node n;
    n.op = Op::CrossEntropyMean;
    n.a = logits;
    n.labels = labels;
    n.needs_grad = node(logits).needs_grad;
    n.cache.assign(X.values.begin(), X.values.end());  // becomes softmax probs
    double total = 0.0;
    for (std::int64_t r = 0; r < X.rows; ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= X.cols) throw UsageError("cross_entropy_mean: label out of range");
        const double lse = stable_softmax_row(n.cache.data() + r * X.cols, X.cols);
        total += lse - X.at(r, y);
    }
    n.value = Tensor::scalar(X.rows > 0 ? total / static_cast<double>(X.rows) : 0.0);
    n.value.check_finite("cross_entropy_mean");
    return push(n);
}

Tensor& GradTape::grad_buffer(ValueId id) {
    Node& nd = node(id);
    if (nd.grad.numel() == 0) {
        nd.grad = Tensor(nd.value.rows, nd.value.cols);
    }
    return nd.grad;
}

void GradTape::backward(ValueId loss) {
    if (!node(loss).value.is_scalar()) throw UsageError("backward: loss must be scalar");
    for (Node& nd : nodes_) nd.grad = Tensor{};
    // requires_grad leaves start at zero so unreachable ones end at zero
    for (Node& nd : nodes_) {
        if (nd.op == Op::Leaf && nd.needs_grad) nd.grad = Tensor(nd.value.rows, nd.value.cols);
    }
    grad_buffer(loss).values[0] = 1.0;
    for (ValueId id = loss; id >= 0; --id) {
        Node& nd = node(id);
        if (!nd.needs_grad || nd.grad.numel() == 0) continue;
        backward_step(id);
        if (nd.op != Op::Leaf) nd.grad = Tensor{};  // interior grads are no longer needed
    }
}

void GradTape::backward_step(ValueId id) {
    Node& nd = node(id);
    const Tensor& g = nd.grad;
    auto wants = [&](ValueId p) { return p >= 0 && node(p).needs_grad; };

    switch (nd.op) {
        case Op::Leaf:
            break;
        case Op::Matmul: {
            const Tensor& A = value(nd.a);
            const Tensor& B = value(nd.b);
            if (wants(nd.a)) {
                auto dA = map(grad_buffer(nd.a));
                if (!nd.trans_a && !nd.trans_b)
                    dA.noalias() += map(g) * map(B).transpose();
                else if (!nd.trans_a && nd.trans_b)
                    dA.noalias() += map(g) * map(B);
                else if (nd.trans_a && !nd.trans_b)
                    dA.noalias() += map(B) * map(g).transpose();
                else
                    dA.noalias() += map(B).transpose() * map(g).transpose();
            }
            if (wants(nd.b)) {
                auto dB = map(grad_buffer(nd.b));
                if (!nd.trans_a && !nd.trans_b)
                    dB.noalias() += map(A).transpose() * map(g);
                else if (!nd.trans_a && nd.trans_b)
                    dB.noalias() += map(g).transpose() * map(A);
                else if (nd.trans_a && !nd.trans_b)
                    dB.noalias() += map(A) * map(g);
                else
                    dB.noalias() += map(g).transpose() * map(A).transpose();
            }
            break;
        }
        case Op::Add:
            if (wants(nd.a)) map(grad_buffer(nd.a)) += map(g);
            if (wants(nd.b)) map(grad_buffer(nd.b)) += map(g);
            break;
        case Op::Sub:
            if (wants(nd.a)) map(grad_buffer(nd.a)) += map(g);
            if (wants(nd.b)) map(grad_buffer(nd.b)) -= map(g);
            break;
        case Op::Mul:
            if (wants(nd.a)) map(grad_buffer(nd.a)) += map(g).cwiseProduct(map(value(nd.b)));
            if (wants(nd.b)) map(grad_buffer(nd.b)) += map(g).cwiseProduct(map(value(nd.a)));
            break;
        case Op::Scale:
            if (wants(nd.a)) map(grad_buffer(nd.a)) += map(g) * nd.scalar;
            break;
        case Op::Affine: {
            const Tensor& X = value(nd.a);
            const Tensor& W = value(nd.b);
            if (wants(nd.a)) map(grad_buffer(nd.a)).noalias() += map(g) * map(W).transpose();
            if (wants(nd.b)) map(grad_buffer(nd.b)).noalias() += map(X).transpose() * map(g);
            if (wants(nd.c)) map(grad_buffer(nd.c)).row(0) += map(g).colwise().sum();
            break;
        }
        case Op::SoftmaxRows: {
            if (!wants(nd.a)) break;
            const Tensor& P = nd.value;
            auto dX = map(grad_buffer(nd.a));
            for (std::int64_t r = 0; r < P.rows; ++r) {
                const double* p = P.values.data() + r * P.cols;
                const double* gr = g.values.data() + r * P.cols;
                double dot = 0.0;
                for (std::int64_t cdx = 0; cdx < P.cols; ++cdx) dot += p[cdx] * gr[cdx];
                for (std::int64_t cdx = 0; cdx < P.cols; ++cdx)
                    dX(r, cdx) += p[cdx] * (gr[cdx] - dot);
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = value(nd.a);
            const Tensor& G = value(nd.b);
            const double inv_cols = 1.0 / static_cast<double>(X.cols);
            Tensor* dX = wants(nd.a) ? &grad_buffer(nd.a) : nullptr;
            Tensor* dG = wants(nd.b) ? &grad_buffer(nd.b) : nullptr;
            Tensor* dB = wants(nd.c) ? &grad_buffer(nd.c) : nullptr;
            for (std::int64_t r = 0; r < X.rows; ++r) {
                const double mean = nd.cache[static_cast<std::size_t>(r) * 2];
                const double invstd = nd.cache[static_cast<std::size_t>(r) * 2 + 1];
                const double* src = X.values.data() + r * X.cols;
                const double* gr = g.values.data() + r * X.cols;
                double sum_gg = 0.0, sum_ggy = 0.0;
                for (std::int64_t cdx = 0; cdx < X.cols; ++cdx) {
                    const double y = (src[cdx] - mean) * invstd;
                    const double gg = gr[cdx] * G.values[static_cast<std::size_t>(cdx)];
                    sum_gg += gg;
                    sum_ggy += gg * y;
                    if (dG) dG->values[static_cast<std::size_t>(cdx)] += gr[cdx] * y;
                    if (dB) dB->values[static_cast<std::size_t>(cdx)] += gr[cdx];
                }
                if (dX) {
                    double* dx = dX->values.data() + r * X.cols;
                    for (std::int64_t cdx = 0; cdx < X.cols; ++cdx) {
                        const double y = (src[cdx] - mean) * invstd;
                        const double gg = gr[cdx] * G.values[static_cast<std::size_t>(cdx)];
                        dx[cdx] += invstd * (gg - inv_cols * (sum_gg + y * sum_ggy));
                    }
                }
            }
            break;
        }
        case Op::GatherRows: {
            if (!wants(nd.a)) break;
            Tensor& dT = grad_buffer(nd.a);
            for (std::size_t i = 0; i < nd.indices.size(); ++i) {
                const double* src = g.values.data() + static_cast<std::int64_t>(i) * dT.cols;
                double* dst = dT.values.data() + nd.indices[i] * dT.cols;
                for (std::int64_t cdx = 0; cdx < dT.cols; ++cdx) dst[cdx] += src[cdx];
            }
            break;
        }
        case Op::Gelu: {
            if (!wants(nd.a)) break;
            const Tensor& X = value(nd.a);
            Tensor& dX = grad_buffer(nd.a);
            for (std::size_t i = 0; i < X.values.size(); ++i)
                dX.values[i] += g.values[i] * gelu_derivative(X.values[i]);
            break;
        }
        case Op::SumAll:
            if (wants(nd.a)) map(grad_buffer(nd.a)).array() += g.values[0];
            break;
        case Op::SelfAttention: {
            const Tensor& Q = value(nd.a);
            const Tensor& K = value(nd.b);
            const Tensor& V = value(nd.c);
            const std::int64_t d = Q.cols;
            const std::int64_t dk = d / nd.meta.n_heads;
            const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
            Tensor* dQ = wants(nd.a) ? &grad_buffer(nd.a) : nullptr;
            Tensor* dK = wants(nd.b) ? &grad_buffer(nd.b) : nullptr;
            Tensor* dV = wants(nd.c) ? &grad_buffer(nd.c) : nullptr;
            std::size_t off = 0;
            RowMat dP, dS;
            for (std::int64_t b = 0; b < nd.meta.batch; ++b) {
                const std::int64_t len = nd.meta.lengths[b];
                if (len == 0) continue;
                const std::int64_t row0 = b * nd.meta.max_len;
                for (std::int64_t h = 0; h < nd.meta.n_heads; ++h) {
                    const std::int64_t col0 = h * dk;
                    ConstMap probs(nd.cache.data() + off, len, len);
                    auto gO = block(g, row0, len, col0, dk);
                    if (dV) block(*dV, row0, len, col0, dk).noalias() += probs.transpose() * gO;
                    if (dQ || dK) {
                        dP.noalias() = gO * block(V, row0, len, col0, dk).transpose();
                        dS = probs.cwiseProduct(dP);
                        Eigen::VectorXd rowsum = dS.rowwise().sum();
                        dS.noalias() -= rowsum.asDiagonal() * probs;
                        dS *= inv_sqrt_dk;
                        if (dQ)
                            block(*dQ, row0, len, col0, dk).noalias() +=
                                dS * block(K, row0, len, col0, dk);
                        if (dK)
                            block(*dK, row0, len, col0, dk).noalias() +=
                                dS.transpose() * block(Q, row0, len, col0, dk);
                    }
                    off += static_cast<std::size_t>(len) * static_cast<std::size_t>(len);
                }
            }
            break;
        }
        case Op::CrossEntropyMean: {
            if (!wants(nd.a)) break;
            const Tensor& X = value(nd.a);
            Tensor& dX = grad_buffer(nd.a);
            const double scale_g = g.values[0] / static_cast<double>(X.rows);
            for (std::int64_t r = 0; r < X.rows; ++r) {
                const double* p = nd.cache.data() + r * X.cols;
                double* dst = dX.values.data() + r * X.cols;
                const int y = nd.labels[static_cast<std::size_t>(r)];
                for (std::int64_t cdx = 0; cdx < X.cols; ++cdx) {
                    dst[cdx] += scale_g * (p[cdx] - (cdx == y ? 1.0 : 0.0));
                }
            }
            break;
        }
    }
}

}  // namespace gil
