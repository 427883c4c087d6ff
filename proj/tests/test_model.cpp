#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "doctest.h"
#include "gil/errors.hpp"
#include "gil/model.hpp"
#include "gil/optim.hpp"
#include "gil/rng.hpp"
#include "test_helpers.hpp"

using namespace gil;
using gil::test::check_grad_close;

namespace {

ModelConfig tiny_config(std::int64_t vocab, std::int64_t d, std::int64_t layers,
                        std::int64_t heads) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = d;
    c.n_layers = layers;
    c.n_heads = heads;
    c.d_ff = 2 * d;
    c.max_len = 16;
    return c;
}

ExpressionSample sample_of(std::int64_t id, std::vector<std::int64_t> genes,
                           std::vector<double> values) {
    ExpressionSample s;
    s.id = id;
    s.gene_indices = std::move(genes);
    s.values = std::move(values);
    return s;
}

}  // namespace

TEST_CASE("apply_mask: forced counts, determinism, uniformity") {
    MaskSpec spec{0.5, -1.0};
    Rng rng = stream_rng(1, "train.mask", {1, 0, 0});
    std::vector<double> values{1, 2, 3, 4};
    std::vector<std::uint8_t> pad{1, 1, 1, 1};
    auto r = apply_mask(values, pad, 1, 4, spec, rng);
    int masked = 0;
    for (auto m : r.masked_positions) masked += m;
    CHECK(masked == 2);
    for (std::size_t i = 0; i < 4; ++i) {
        if (r.masked_positions[i])
            CHECK(r.masked_values[i] == -1.0);
        else
            CHECK(r.masked_values[i] == values[i]);
    }

    Rng rng_a = stream_rng(9, "train.mask", {1, 2, 3});
    Rng rng_b = stream_rng(9, "train.mask", {1, 2, 3});
    auto ra = apply_mask(values, pad, 1, 4, spec, rng_a);
    auto rb = apply_mask(values, pad, 1, 4, spec, rng_b);
    CHECK(ra.masked_positions == rb.masked_positions);

    // 1000 rows of length 100 at ratio 0.15: always 15 per row, and the
    // per-position counts stay within 3 sigma of Binomial(1000, 0.15)
    const std::int64_t rows = 1000, cols = 100;
    std::vector<double> big(static_cast<std::size_t>(rows * cols), 1.0);
    std::vector<std::uint8_t> bigpad(static_cast<std::size_t>(rows * cols), 1);
    MaskSpec spec15{0.15, -1.0};
    Rng rng_c = stream_rng(4, "train.mask", {2, 0, 0});
    auto rc = apply_mask(big, bigpad, rows, cols, spec15, rng_c);
    std::vector<int> per_position(static_cast<std::size_t>(cols), 0);
    for (std::int64_t row = 0; row < rows; ++row) {
        int count = 0;
        for (std::int64_t col = 0; col < cols; ++col) {
            if (rc.masked_positions[static_cast<std::size_t>(row * cols + col)]) {
                ++count;
                ++per_position[static_cast<std::size_t>(col)];
            }
        }
        CHECK(count == 15);
    }
    const double mean = 150.0, sigma = std::sqrt(1000 * 0.15 * 0.85);
    int within_3s = 0;
    for (int c : per_position) {
        // 100 simultaneous checks: individual positions stay under 4 sigma,
        // and nearly all of them under 3 sigma
        CHECK(std::fabs(c - mean) < 4 * sigma);
        if (std::fabs(c - mean) < 3 * sigma) ++within_3s;
    }
    CHECK(within_3s >= 90);

    std::vector<std::uint8_t> allpad(4, 0);
    Rng rng_d(1);
    CHECK_THROWS_AS(apply_mask(values, allpad, 1, 4, spec, rng_d), DataError);
    MaskSpec bad_ratio{1.5, -1.0};
    CHECK_THROWS_AS(apply_mask(values, pad, 1, 4, bad_ratio, rng_d), ConfigError);
    MaskSpec bad_sentinel{0.5, 2.0};
    CHECK_THROWS_AS(apply_mask(values, pad, 1, 4, bad_sentinel, rng_d), ConfigError);
}

TEST_CASE("embed: gather plus value encoder, hand case and locality") {
    ModelParams p = init_params(tiny_config(3, 2, 1, 1), 1);
    p.embedding = Tensor(3, 2, {0, 0, 1, 0, 0, 1});
    p.value_encoder = Tensor(1, 2, {2, 3});

    Batch b = make_batch(std::vector<ExpressionSample>{sample_of(0, {1, 2}, {0.0, 0.0})});
    GradTape tape;
    ModelGraph graph(tape, p, false);
    // v-tilde = 0 everywhere: embedding rows pass through untouched
    auto e0 = graph.embed(b);
    CHECK(tape.value(e0).at(0, 0) == 1.0);
    CHECK(tape.value(e0).at(0, 1) == 0.0);
    CHECK(tape.value(e0).at(1, 0) == 0.0);
    CHECK(tape.value(e0).at(1, 1) == 1.0);

    // d=2, E[g]=[1,0], L1=[2,3], v-tilde=2 -> e=[5,6]
    b.masked_values = {2.0, 0.0};
    auto e1 = graph.embed(b);
    CHECK(tape.value(e1).at(0, 0) == 5.0);
    CHECK(tape.value(e1).at(0, 1) == 6.0);
    // only that position moved
    CHECK(tape.value(e1).at(1, 0) == 0.0);
    CHECK(tape.value(e1).at(1, 1) == 1.0);

    Batch oob = make_batch(std::vector<ExpressionSample>{sample_of(0, {7}, {1.0})});
    CHECK_THROWS_AS(graph.embed(oob), VocabularyError);
}

TEST_CASE("embed output is affine in the value with slope L1") {
    ModelParams p = init_params(tiny_config(10, 4, 1, 1), 3);
    Batch b = make_batch(std::vector<ExpressionSample>{sample_of(0, {2, 5}, {1.0, 2.0})});
    auto embed_at = [&](double vtilde) {
        Batch probe = b;
        probe.masked_values[0] = vtilde;
        GradTape tape;
        ModelGraph graph(tape, p, false);
        return tape.value(graph.embed(probe));
    };
    const Tensor at0 = embed_at(0.0);
    const Tensor at1 = embed_at(1.0);
    const Tensor at3 = embed_at(3.0);
    for (std::int64_t c = 0; c < 4; ++c) {
        const double slope = at1.at(0, c) - at0.at(0, c);
        CHECK(slope == doctest::Approx(p.value_encoder.at(0, c)).epsilon(1e-12));
        CHECK(at3.at(0, c) == doctest::Approx(at0.at(0, c) + 3 * slope).epsilon(1e-12));
    }
}

TEST_CASE("encode matches a hand-unrolled single-head block") {
    const std::int64_t d = 2, L = 3;
    ModelConfig cfg = tiny_config(5, d, 1, 1);
    ModelParams p = init_params(cfg, 17);

    Batch b =
        make_batch(std::vector<ExpressionSample>{sample_of(0, {0, 2, 4}, {0.5, 1.5, 0.25})});
    Rng mask_rng(5);
    apply_mask(b, MaskSpec{0.34, -1.0}, mask_rng);

    GradTape tape;
    ModelGraph graph(tape, p, false);
    const Tensor got = tape.value(graph.encode(graph.embed(b), b));

    // hand computation with plain loops
    auto ln = [&](const std::vector<double>& x, const Tensor& gain, const Tensor& bias) {
        std::vector<double> out(x.size());
        double mean = 0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        double var = 0;
        for (double v : x) var += (v - mean) * (v - mean);
        var /= static_cast<double>(x.size());
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (std::size_t i = 0; i < x.size(); ++i)
            out[i] = (x[i] - mean) * inv * gain.values[i] + bias.values[i];
        return out;
    };
    auto matvec = [&](const std::vector<double>& x, const Tensor& w) {
        std::vector<double> out(static_cast<std::size_t>(w.cols), 0.0);
        for (std::int64_t i = 0; i < w.rows; ++i)
            for (std::int64_t j = 0; j < w.cols; ++j)
                out[static_cast<std::size_t>(j)] += x[static_cast<std::size_t>(i)] * w.at(i, j);
        return out;
    };

    std::vector<std::vector<double>> x(static_cast<std::size_t>(L));
    for (std::int64_t t = 0; t < L; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        const std::int64_t g = b.gene_indices[ti];
        x[ti] = {p.embedding.at(g, 0) + b.masked_values[ti] * p.value_encoder.at(0, 0),
                 p.embedding.at(g, 1) + b.masked_values[ti] * p.value_encoder.at(0, 1)};
    }
    const auto& layer = p.layers[0];
    std::vector<std::vector<double>> a(3), q(3), k(3), v(3);
    for (std::size_t t = 0; t < 3; ++t) {
        a[t] = ln(x[t], layer.ln1_gain, layer.ln1_bias);
        q[t] = matvec(a[t], layer.wq);
        k[t] = matvec(a[t], layer.wk);
        v[t] = matvec(a[t], layer.wv);
    }
    for (std::size_t t = 0; t < 3; ++t) {
        std::vector<double> scores(3);
        for (std::size_t u = 0; u < 3; ++u)
            scores[u] = (q[t][0] * k[u][0] + q[t][1] * k[u][1]) / std::sqrt(2.0);
        double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            denom += s;
        }
        std::vector<double> att(2, 0.0);
        for (std::size_t u = 0; u < 3; ++u) {
            att[0] += scores[u] / denom * v[u][0];
            att[1] += scores[u] / denom * v[u][1];
        }
        auto o = matvec(att, layer.wo);
        std::vector<double> x1{x[t][0] + o[0], x[t][1] + o[1]};
        auto f = ln(x1, layer.ln2_gain, layer.ln2_bias);
        auto h = matvec(f, layer.w1);
        for (std::size_t i = 0; i < h.size(); ++i) {
            h[i] += layer.b1.values[i];
            h[i] = 0.5 * h[i] * (1.0 + std::erf(h[i] / std::numbers::sqrt2));
        }
        auto y = matvec(h, layer.w2);
        std::vector<double> x2{x1[0] + y[0] + layer.b2.values[0],
                               x1[1] + y[1] + layer.b2.values[1]};
        auto ef = ln(x2, p.final_gain, p.final_bias);
        CHECK(got.at(static_cast<std::int64_t>(t), 0) == doctest::Approx(ef[0]).epsilon(1e-10));
        CHECK(got.at(static_cast<std::int64_t>(t), 1) == doctest::Approx(ef[1]).epsilon(1e-10));
    }
}

TEST_CASE("encode: permutation equivariance and pad isolation") {
    ModelConfig cfg = tiny_config(20, 8, 2, 2);
    ModelParams p = init_params(cfg, 23);

    Batch b = make_batch(std::vector<ExpressionSample>{
        sample_of(0, {1, 4, 7, 11, 15}, {0.2, 1.0, 0.0, 2.5, 0.7})});
    b.masked_values = {0.2, -1.0, 0.0, 2.5, -1.0};
    b.masked_positions = {0, 1, 0, 0, 1};

    GradTape t1;
    ModelGraph g1(t1, p, false);
    auto enc1 = t1.value(g1.encode(g1.embed(b), b));
    auto pred1 = t1.value(g1.predict_values(g1.encode(g1.embed(b), b)));
    const double loss1 = t1.value(g1.loss_tran(b)).values[0];

    // joint permutation of (genes, values, masks)
    const std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    Batch pb = b;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        pb.gene_indices[i] = b.gene_indices[perm[i]];
        pb.values[i] = b.values[perm[i]];
        pb.masked_values[i] = b.masked_values[perm[i]];
        pb.masked_positions[i] = b.masked_positions[perm[i]];
    }
    GradTape t2;
    ModelGraph g2(t2, p, false);
    auto enc2 = t2.value(g2.encode(g2.embed(pb), pb));
    auto pred2 = t2.value(g2.predict_values(g2.encode(g2.embed(pb), pb)));
    const double loss2 = t2.value(g2.loss_tran(pb)).values[0];

    for (std::size_t i = 0; i < perm.size(); ++i) {
        for (std::int64_t c = 0; c < 8; ++c) {
            CHECK(enc2.at(static_cast<std::int64_t>(i), c) ==
                  doctest::Approx(enc1.at(static_cast<std::int64_t>(perm[i]), c)).epsilon(1e-10));
        }
        CHECK(pred2.at(static_cast<std::int64_t>(i), 0) ==
              doctest::Approx(pred1.at(static_cast<std::int64_t>(perm[i]), 0)).epsilon(1e-10));
    }
    CHECK(loss1 == doctest::Approx(loss2).epsilon(1e-10));

    // appending a pad position must not move existing outputs
    Batch padded = b;
    padded.max_len = 6;
    padded.gene_indices.push_back(0);
    padded.values.push_back(0.0);
    padded.masked_values.push_back(0.0);
    padded.pad_mask = {1, 1, 1, 1, 1, 0};
    padded.masked_positions.push_back(0);
    GradTape t3;
    ModelGraph g3(t3, p, false);
    auto enc3 = t3.value(g3.encode(g3.embed(padded), padded));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::int64_t c = 0; c < 8; ++c)
            CHECK(enc3.at(static_cast<std::int64_t>(i), c) ==
                  doctest::Approx(enc1.at(static_cast<std::int64_t>(i), c)).epsilon(1e-10));
}

TEST_CASE("predict_values: zero features and hand dot product") {
    ModelParams p = init_params(tiny_config(4, 2, 1, 1), 2);
    p.value_head = Tensor(2, 1, {3, 4});
    GradTape tape;
    ModelGraph graph(tape, p, false);
    auto zeros = tape.leaf(Tensor(2, 2));
    CHECK(tape.value(graph.predict_values(zeros)).values == std::vector<double>{0, 0});
    auto row = tape.leaf(Tensor(1, 2, {1, 2}));
    CHECK(tape.value(graph.predict_values(row)).values[0] == 11.0);
}

TEST_CASE("loss_tran arithmetic from the masked-loss definition") {
    ModelConfig cfg = tiny_config(6, 4, 1, 1);
    ModelParams p = init_params(cfg, 5);

    Batch b = make_batch(std::vector<ExpressionSample>{sample_of(0, {1, 3}, {3.0, 5.0})});
    b.masked_positions = {1, 1};
    b.masked_values = {-1.0, -1.0};

    const Tensor preds = eval_predictions(p, b);
    GradTape tape;
    ModelGraph graph(tape, p, false);
    const double loss = tape.value(graph.loss_tran(b)).values[0];
    const double expect = (3.0 - preds.at(0, 0)) * (3.0 - preds.at(0, 0)) +
                          (5.0 - preds.at(1, 0)) * (5.0 - preds.at(1, 0));
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));

    // residuals (2, 0) -> 4; two samples with sums 4 and 2 -> mean 3
    GradTape t2;
    ModelGraph g2(t2, p, false);
    auto fake_preds = t2.leaf(Tensor::column({1.0, 5.0}));
    CHECK(t2.value(g2.masked_mse(fake_preds, b)).values[0] == doctest::Approx(4.0));

    Batch two = make_batch(std::vector<ExpressionSample>{sample_of(0, {1, 3}, {3.0, 5.0}),
                                                         sample_of(1, {2, 4}, {1.0, 1.0})});
    two.masked_positions = {1, 1, 1, 1};
    GradTape t3;
    ModelGraph g3(t3, p, false);
    auto preds2 = t3.leaf(Tensor::column({1.0, 5.0, 0.0, 0.0}));  // sums 4 and 2
    CHECK(t3.value(g3.masked_mse(preds2, two)).values[0] == doctest::Approx(3.0));
}

TEST_CASE("masked-loss locality: true values at unmasked positions are inert") {
    ModelConfig cfg = tiny_config(8, 4, 1, 2);
    ModelParams p = init_params(cfg, 31);
    Batch b = make_batch(std::vector<ExpressionSample>{sample_of(0, {0, 3, 6}, {1.0, 2.0, 0.5})});
    b.masked_positions = {0, 1, 0};
    b.masked_values = {1.0, -1.0, 0.5};

    GradTape t1;
    const double loss1 = t1.value(ModelGraph(t1, p, false).loss_tran(b)).values[0];
    Batch perturbed = b;
    perturbed.values[0] = 42.0;  // unmasked ground truth changes, v-tilde fixed
    perturbed.values[2] = 13.0;
    GradTape t2;
    const double loss2 = t2.value(ModelGraph(t2, p, false).loss_tran(perturbed)).values[0];
    CHECK(loss1 == loss2);
}

TEST_CASE("full-model gradients match finite differences (1 layer, d=8)") {
    ModelConfig cfg = tiny_config(6, 8, 1, 2);
    ModelParams p = init_params(cfg, 41);

    Batch b = make_batch(std::vector<ExpressionSample>{sample_of(0, {0, 2, 5}, {0.5, 1.2, 0.1}),
                                                       sample_of(1, {1, 3}, {2.0, 0.3})});
    Rng mask_rng = stream_rng(3, "train.mask", {1, 0, 0});
    apply_mask(b, MaskSpec{0.3, -1.0}, mask_rng);

    GradTape tape;
    ModelGraph graph(tape, p, true);
    auto loss = graph.loss_tran(b);
    tape.backward(loss);

    auto named = p.named();
    for (std::size_t i = 0; i < named.size(); ++i) {
        const auto& name = named[i].first;
        auto f = [&](const Tensor& probe) {
            ModelParams q = p;
            *q.named()[i].second = probe;
            return eval_masked_loss(q, b);
        };
        INFO("parameter " << name);
        const Tensor numeric = finite_diff_grad(f, *named[i].second, 1e-5);
        check_grad_close(tape.grad(graph.param_ids()[i]), numeric);
    }
}

TEST_CASE("extract_features: single token, duplication invariance, shape") {
    ModelConfig cfg = tiny_config(12, 8, 2, 2);
    ModelParams p = init_params(cfg, 13);

    Batch one = make_batch(std::vector<ExpressionSample>{sample_of(0, {7}, {1.3})});
    GradTape tape;
    ModelGraph graph(tape, p, false);
    const Tensor enc = tape.value(graph.encode(graph.embed(one), one));
    const Tensor feat = extract_features(p, one);
    CHECK(feat.rows == 1);
    CHECK(feat.cols == 8);
    for (std::int64_t c = 0; c < 8; ++c)
        CHECK(feat.at(0, c) == doctest::Approx(enc.at(0, c)).epsilon(1e-12));

    // duplicating every token leaves the mean feature unchanged
    Batch dup;
    dup.batch_size = 1;
    dup.max_len = 2;
    dup.gene_indices = {7, 7};
    dup.values = {1.3, 1.3};
    dup.masked_values = {1.3, 1.3};
    dup.pad_mask = {1, 1};
    dup.masked_positions = {0, 0};
    dup.lengths = {2};
    const Tensor feat2 = extract_features(p, dup);
    for (std::int64_t c = 0; c < 8; ++c)
        CHECK(feat2.at(0, c) == doctest::Approx(feat.at(0, c)).epsilon(1e-10));

    Batch many = make_batch(std::vector<ExpressionSample>{
        sample_of(0, {1, 2, 3}, {1, 1, 1}), sample_of(1, {4}, {2}), sample_of(2, {5, 9}, {0, 3})});
    const Tensor feat3 = extract_features(p, many);
    CHECK(feat3.rows == 3);
    CHECK(feat3.cols == 8);

    // feature extraction does not mutate parameters
    ModelParams before = p;
    (void)extract_features(p, many);
    auto nb = before.named();
    auto np = p.named();
    for (std::size_t i = 0; i < nb.size(); ++i) CHECK(bit_equal(*nb[i].second, *np[i].second));
}

TEST_CASE("init_params: determinism, layer-norm gains, embedding std") {
    ModelConfig cfg = tiny_config(200, 64, 2, 4);
    ModelParams a = init_params(cfg, 77);
    ModelParams b = init_params(cfg, 77);
    auto na = a.named();
    auto nb = b.named();
    for (std::size_t i = 0; i < na.size(); ++i) CHECK(bit_equal(*na[i].second, *nb[i].second));

    for (const auto& layer : a.layers) {
        for (double v : layer.ln1_gain.values) CHECK(v == 1.0);
        for (double v : layer.ln2_gain.values) CHECK(v == 1.0);
        for (double v : layer.b1.values) CHECK(v == 0.0);
    }
    for (double v : a.final_gain.values) CHECK(v == 1.0);

    // V*d = 12800 >= 1e4: empirical std within 10% of 0.02
    double sq = 0;
    for (double v : a.embedding.values) sq += v * v;
    const double std_hat = std::sqrt(sq / static_cast<double>(a.embedding.numel()));
    CHECK(std_hat > 0.018);
    CHECK(std_hat < 0.022);

    ModelParams c = init_params(cfg, 78);
    CHECK(!bit_equal(a.embedding, c.embedding));

    ModelConfig bad = cfg;
    bad.n_heads = 3;  // does not divide 64
    CHECK_THROWS_AS(init_params(bad, 1), ConfigError);
}

TEST_CASE("round_params_to_f32 is idempotent") {
    ModelParams p = init_params(tiny_config(10, 8, 1, 2), 3);
    round_params_to_f32(p);
    ModelParams q = p;
    round_params_to_f32(q);
    auto np = p.named();
    auto nq = q.named();
    for (std::size_t i = 0; i < np.size(); ++i) CHECK(bit_equal(*np[i].second, *nq[i].second));
}
