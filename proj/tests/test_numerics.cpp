#include <cmath>
#include <set>

#include "doctest.h"
#include "gil/errors.hpp"
#include "gil/optim.hpp"
#include "gil/rng.hpp"
#include "gil/tape.hpp"
#include "gil/tensor.hpp"
#include "test_helpers.hpp"

using namespace gil;
using gil::test::check_grad_close;
using gil::test::gradcheck;
using gil::test::random_tensor;

namespace {

// independent oracle: naive triple-loop product
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows, b.cols);
    for (std::int64_t i = 0; i < a.rows; ++i)
        for (std::int64_t k = 0; k < a.cols; ++k)
            for (std::int64_t j = 0; j < b.cols; ++j) c.at(i, j) += a.at(i, k) * b.at(k, j);
    return c;
}

double tape_eval(const Tensor& x,
                 const std::function<GradTape::ValueId(GradTape&, GradTape::ValueId)>& build) {
    GradTape tape;
    auto id = tape.leaf(x);
    return tape.value(build(tape, id)).values[0];
}

}  // namespace

TEST_CASE("tensor shape invariants") {
    CHECK_THROWS_AS(Tensor(2, 2, {1.0, 2.0}), ShapeError);
    Tensor t(2, 3);
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(Tensor::scalar(std::nan("")).check_finite("test"), NumericError);
}

TEST_CASE("matmul identity and hand cases") {
    GradTape tape;
    auto a = tape.leaf(Tensor(2, 2, {1, 2, 3, 4}));
    auto eye = tape.leaf(Tensor(2, 2, {1, 0, 0, 1}));
    auto c = tape.matmul(a, eye);
    CHECK(tape.value(c).values == std::vector<double>{1, 2, 3, 4});

    auto r = tape.leaf(Tensor(1, 2, {1, 2}));
    auto col = tape.leaf(Tensor(2, 1, {3, 4}));
    CHECK(tape.value(tape.matmul(r, col)).values[0] == doctest::Approx(11).epsilon(1e-15));

    auto bad = tape.leaf(Tensor(3, 2));
    CHECK_THROWS_AS(tape.matmul(a, bad), ShapeError);
}

TEST_CASE("matmul agrees with the naive triple loop") {
    Rng rng(42);
    const Tensor a = random_tensor(5, 7, rng);
    const Tensor b = random_tensor(7, 3, rng);
    GradTape tape;
    auto c = tape.matmul(tape.leaf(a), tape.leaf(b));
    CHECK(max_abs_diff(tape.value(c), naive_matmul(a, b)) < 1e-12);
}

TEST_CASE("softmax rows: symmetry, shift invariance, stability") {
    GradTape tape;
    auto flat = tape.softmax_rows(tape.leaf(Tensor(1, 3, {0, 0, 0})));
    for (double v : tape.value(flat).values) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-14));

    for (double c : {0.0, -17.5, 1234.0}) {
        auto two = tape.softmax_rows(tape.leaf(Tensor(1, 2, {c, c + std::log(2.0)})));
        CHECK(tape.value(two).values[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
        CHECK(tape.value(two).values[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
    }

    // stabilized formula vs extended-precision oracle
    auto big = tape.softmax_rows(tape.leaf(Tensor(1, 2, {1000.0, 0.0})));
    const long double z = expl(-1000.0L);
    CHECK(tape.value(big).values[0] ==
          doctest::Approx(static_cast<double>(1.0L / (1.0L + z))).epsilon(1e-14));
    CHECK(tape.value(big).values[1] ==
          doctest::Approx(static_cast<double>(z / (1.0L + z))).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one within 1e-12") {
    Rng rng(7);
    GradTape tape;
    auto x = tape.softmax_rows(tape.leaf(random_tensor(20, 13, rng, 30.0)));
    for (std::int64_t r = 0; r < 20; ++r) {
        double s = 0;
        for (std::int64_t c = 0; c < 13; ++c) s += tape.value(x).at(r, c);
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("layer_norm hand cases") {
    GradTape tape;
    auto gain = tape.leaf(Tensor(1, 2, {1, 1}));
    auto bias = tape.leaf(Tensor(1, 2, {0, 0}));

    auto constant = tape.layer_norm(tape.leaf(Tensor(1, 2, {5, 5})), gain, bias);
    CHECK(tape.value(constant).values[0] == doctest::Approx(0.0).epsilon(1e-12));

    auto pm = tape.layer_norm(tape.leaf(Tensor(1, 2, {1, -1})), gain, bias);
    CHECK(tape.value(pm).values[0] == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(tape.value(pm).values[1] == doctest::Approx(-1.0).epsilon(1e-4));

    auto zero_gain = tape.leaf(Tensor(1, 2, {0, 0}));
    auto b7 = tape.leaf(Tensor(1, 2, {7, 7}));
    auto out = tape.layer_norm(tape.leaf(Tensor(1, 2, {0.3, 123.0})), zero_gain, b7);
    CHECK(tape.value(out).values == std::vector<double>{7, 7});
}

TEST_CASE("gather_rows copies, accumulates, handles empty") {
    GradTape tape;
    Tensor table(3, 2, {1, 2, 3, 4, 5, 6}, true);
    auto tid = tape.leaf(table);

    auto dup = tape.gather_rows(tid, {0, 0});
    CHECK(tape.value(dup).values == std::vector<double>{1, 2, 1, 2});
    auto loss = tape.sum_all(dup);
    tape.backward(loss);
    CHECK(tape.grad(tid).at(0, 0) == 2.0);  // duplicate indices accumulate
    CHECK(tape.grad(tid).at(1, 0) == 0.0);

    auto empty = tape.gather_rows(tid, {});
    CHECK(tape.value(empty).rows == 0);
    CHECK(tape.value(empty).cols == 2);

    CHECK_THROWS_AS(tape.gather_rows(tid, {3}), VocabularyError);

    Rng rng(3);
    const Tensor big = random_tensor(10, 4, rng);
    std::vector<std::int64_t> idx{9, 0, 3, 3, 7};
    GradTape t2;
    auto out = t2.gather_rows(t2.leaf(big), idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::int64_t c = 0; c < 4; ++c)
            CHECK(t2.value(out).at(static_cast<std::int64_t>(i), c) == big.at(idx[i], c));
}

TEST_CASE("backward linear and quadratic hand cases") {
    GradTape tape;
    Tensor x(1, 3, {1, 2, 5}, true);
    auto xid = tape.leaf(x);
    tape.backward(tape.sum_all(xid));
    CHECK(tape.grad(xid).values == std::vector<double>{1, 1, 1});

    GradTape t2;
    Tensor y(1, 2, {1, 2}, true);
    auto yid = t2.leaf(y);
    t2.backward(t2.sum_all(t2.mul(yid, yid)));
    CHECK(t2.grad(yid).values == std::vector<double>{2, 4});
}

TEST_CASE("backward rejects non-scalar loss; unreachable leaves get zeros") {
    GradTape tape;
    Tensor x(2, 2, {1, 2, 3, 4}, true);
    auto xid = tape.leaf(x);
    CHECK_THROWS_AS(tape.backward(xid), UsageError);

    Tensor lonely(1, 2, {5, 5}, true);
    auto lid = tape.leaf(lonely);
    tape.backward(tape.sum_all(xid));
    CHECK(tape.grad(lid).values == std::vector<double>{0, 0});
}

TEST_CASE("finite_diff_grad exactness cases") {
    auto sum_f = [](const Tensor& t) {
        double s = 0;
        for (double v : t.values) s += v;
        return s;
    };
    Rng rng(11);
    const Tensor x = random_tensor(2, 3, rng);
    const Tensor g = finite_diff_grad(sum_f, x, 1e-5);
    for (double v : g.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));

    auto square = [](const Tensor& t) { return t.values[0] * t.values[0]; };
    const Tensor g2 = finite_diff_grad(square, Tensor::scalar(3.0), 1e-4);
    CHECK(g2.values[0] == doctest::Approx(6.0).epsilon(1e-7));

    CHECK_THROWS_AS(finite_diff_grad(square, Tensor::scalar(1.0), 0.0), UsageError);
}

TEST_CASE("gradcheck: every primitive matches finite differences over 10 seeds") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 7919);
        const Tensor x34 = random_tensor(3, 4, rng);
        const Tensor w45 = random_tensor(4, 5, rng);
        const Tensor w35 = random_tensor(3, 5, rng);
        const Tensor mate = random_tensor(3, 4, rng);
        const Tensor bias5 = random_tensor(1, 5, rng);
        const Tensor gain4 = random_tensor(1, 4, rng, 0.5);
        const Tensor bias4 = random_tensor(1, 4, rng, 0.5);

        // matmul, all transpose combinations (other operand constant)
        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.matmul(id, t.leaf(w45))); }, x34);
        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.matmul(t.leaf(x34), id)); }, w45);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.matmul(id, t.leaf(w35), true, false)); },
            x34);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.matmul(id, t.leaf(mate), false, true)); },
            x34);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.matmul(id, t.leaf(w45), true, true)); },
            random_tensor(5, 3, rng));

        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.add(id, t.leaf(mate))); }, x34);
        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.sub(t.leaf(mate), id)); }, x34);
        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.mul(id, t.leaf(mate))); }, x34);
        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.mul(id, id)); }, x34);
        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.scale(id, -2.5)); }, x34);

        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.affine(id, t.leaf(w45), t.leaf(bias5))); },
            x34);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.affine(t.leaf(x34), id, t.leaf(bias5))); },
            w45);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.affine(t.leaf(x34), t.leaf(w45), id)); },
            bias5);

        // weighted sums make softmax/layer-norm gradients non-trivial
        const Tensor wsum = random_tensor(3, 4, rng);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.mul(t.softmax_rows(id), t.leaf(wsum))); },
            x34);
        gradcheck(
            [&](GradTape& t, auto id) {
                return t.sum_all(
                    t.mul(t.layer_norm(id, t.leaf(gain4), t.leaf(bias4)), t.leaf(wsum)));
            },
            x34);
        gradcheck(
            [&](GradTape& t, auto id) {
                return t.sum_all(
                    t.mul(t.layer_norm(t.leaf(mate), id, t.leaf(bias4)), t.leaf(wsum)));
            },
            gain4);
        gradcheck(
            [&](GradTape& t, auto id) {
                return t.sum_all(
                    t.mul(t.layer_norm(t.leaf(mate), t.leaf(gain4), id), t.leaf(wsum)));
            },
            bias4);

        const std::vector<std::int64_t> idx{2, 0, 1, 0};
        const Tensor gsel = random_tensor(4, 4, rng);
        gradcheck(
            [&](GradTape& t, auto id) { return t.sum_all(t.mul(t.gather_rows(id, idx), t.leaf(gsel))); },
            x34);

        gradcheck([&](GradTape& t, auto id) { return t.sum_all(t.gelu(id)); }, x34);

        // fused attention: 2 samples, ragged lengths with padding, 2 heads
        AttentionMeta meta;
        meta.batch = 2;
        meta.max_len = 3;
        meta.n_heads = 2;
        meta.lengths = {3, 2};
        const Tensor q = random_tensor(6, 4, rng);
        const Tensor k = random_tensor(6, 4, rng);
        const Tensor v = random_tensor(6, 4, rng);
        const Tensor watt = random_tensor(6, 4, rng);
        gradcheck(
            [&](GradTape& t, auto id) {
                return t.sum_all(
                    t.mul(t.self_attention(id, t.leaf(k), t.leaf(v), meta), t.leaf(watt)));
            },
            q);
        gradcheck(
            [&](GradTape& t, auto id) {
                return t.sum_all(
                    t.mul(t.self_attention(t.leaf(q), id, t.leaf(v), meta), t.leaf(watt)));
            },
            k);
        gradcheck(
            [&](GradTape& t, auto id) {
                return t.sum_all(
                    t.mul(t.self_attention(t.leaf(q), t.leaf(k), id, meta), t.leaf(watt)));
            },
            v);

        const std::vector<int> labels{1, 0, 2};
        gradcheck([&](GradTape& t, auto id) { return t.cross_entropy_mean(id, labels); },
                  random_tensor(3, 3, rng));
    }
}

TEST_CASE("fused attention equals a hand-built softmax graph (single head)") {
    Rng rng(5);
    const std::int64_t L = 4, d = 3;
    const Tensor q = random_tensor(L, d, rng);
    const Tensor k = random_tensor(L, d, rng);
    const Tensor v = random_tensor(L, d, rng);

    GradTape fused;
    AttentionMeta meta{1, L, 1, {L}};
    auto out = fused.self_attention(fused.leaf(q), fused.leaf(k), fused.leaf(v), meta);

    GradTape manual;
    auto scores =
        manual.scale(manual.matmul(manual.leaf(q), manual.leaf(k), false, true), 1.0 / std::sqrt(3.0));
    auto probs = manual.softmax_rows(scores);
    auto expected = manual.matmul(probs, manual.leaf(v));

    CHECK(max_abs_diff(fused.value(out), manual.value(expected)) < 1e-12);
}

TEST_CASE("attention ignores padding entirely") {
    Rng rng(9);
    const std::int64_t d = 4;
    Tensor q = random_tensor(6, d, rng), k = random_tensor(6, d, rng), v = random_tensor(6, d, rng);

    GradTape t1;
    AttentionMeta m1{2, 3, 2, {2, 3}};
    auto o1 = t1.self_attention(t1.leaf(q), t1.leaf(k), t1.leaf(v), m1);

    // perturb only pad rows (row 2 of sample 0); real outputs must not move
    Tensor q2 = q, k2 = k, v2 = v;
    for (std::int64_t c = 0; c < d; ++c) {
        q2.at(2, c) += 100;
        k2.at(2, c) += 100;
        v2.at(2, c) += 100;
    }
    GradTape t2;
    auto o2 = t2.self_attention(t2.leaf(q2), t2.leaf(k2), t2.leaf(v2), m1);
    for (std::int64_t r : {0, 1, 3, 4, 5}) {
        for (std::int64_t c = 0; c < d; ++c) {
            CHECK(t1.value(o1).at(r, c) == doctest::Approx(t2.value(o2).at(r, c)).epsilon(1e-14));
        }
    }
    // pad rows produce zeros
    for (std::int64_t c = 0; c < d; ++c) CHECK(t1.value(o1).at(2, c) == 0.0);
}

TEST_CASE("tape determinism: identical inputs give bit-identical loss and grads") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        Tensor x = random_tensor(4, 6, rng, 1.0, true);
        Tensor w = random_tensor(6, 2, rng, 1.0, true);
        GradTape t;
        auto xid = t.leaf(x);
        auto wid = t.leaf(w);
        auto loss = t.sum_all(t.gelu(t.matmul(t.softmax_rows(xid), wid)));
        t.backward(loss);
        return std::tuple{t.value(loss).values[0], t.grad(xid), t.grad(wid)};
    };
    auto [l1, gx1, gw1] = run(123);
    auto [l2, gx2, gw2] = run(123);
    CHECK(l1 == l2);
    CHECK(bit_equal(gx1, gx2));
    CHECK(bit_equal(gw1, gw2));
}

TEST_CASE("adam: zero gradient is a fixed point") {
    Tensor p(2, 2, {1, 2, 3, 4});
    Tensor g(2, 2);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> grads{&g};
    AdamState st = make_adam_state({&p}, 0.1);
    for (int i = 0; i < 5; ++i) adam_step(params, grads, st, 0.1);
    CHECK(p.values == std::vector<double>{1, 2, 3, 4});
    CHECK(st.t == 5);
}

TEST_CASE("adam: single step matches the bias-corrected hand computation") {
    Tensor p = Tensor::scalar(0.0);
    Tensor g = Tensor::scalar(1.0);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> grads{&g};
    AdamState st = make_adam_state({&p}, 0.1);
    adam_step(params, grads, st, 0.1);
    CHECK(st.t == 1);
    CHECK(p.values[0] == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("adam: two steps match an explicit unroll within 1e-12") {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.05, g = 0.3;
    double m = 0, v = 0, x = 1.0;
    for (int t = 1; t <= 2; ++t) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        x -= lr * mhat / (std::sqrt(vhat) + eps);
    }

    Tensor p = Tensor::scalar(1.0);
    Tensor grad = Tensor::scalar(g);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> grads{&grad};
    AdamState st = make_adam_state({&p}, lr);
    adam_step(params, grads, st, lr);
    adam_step(params, grads, st, lr);
    CHECK(p.values[0] == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("adam shape mismatch raises usage error") {
    Tensor p(2, 2);
    Tensor g(1, 2);
    std::vector<Tensor*> params{&p};
    std::vector<const Tensor*> grads{&g};
    AdamState st = make_adam_state({&p}, 0.1);
    CHECK_THROWS_AS(adam_step(params, grads, st, 0.1), UsageError);
}

TEST_CASE("lr schedule: ramp then constant") {
    LrSchedule s{0.0005, 5000};
    CHECK(lr_at(s, 5000) == 0.0005);
    CHECK(lr_at(s, 0) == 0.0);
    CHECK(lr_at(s, 2500) == doctest::Approx(0.00025).epsilon(1e-15));
    CHECK(lr_at(s, 123456) == 0.0005);
    double prev = -1;
    for (int step = 0; step <= 5000; step += 100) {
        const double lr = lr_at(s, step);
        CHECK(lr >= prev);
        prev = lr;
    }
}

TEST_CASE("rng streams: deterministic, site-separated, unbiased helpers") {
    Rng a = stream_rng(7, "train.mask", {1, 2, 3});
    Rng b = stream_rng(7, "train.mask", {1, 2, 3});
    CHECK(a.next_u64() == b.next_u64());

    Rng c = stream_rng(7, "train.mask", {1, 2, 4});
    Rng d = stream_rng(7, "train.shuffle", {1, 2, 3});
    Rng e = stream_rng(8, "train.mask", {1, 2, 3});
    std::set<std::uint64_t> firsts{stream_rng(7, "train.mask", {1, 2, 3}).next_u64(), c.next_u64(),
                                   d.next_u64(), e.next_u64()};
    CHECK(firsts.size() == 4);

    Rng r(99);
    for (int i = 0; i < 1000; ++i) CHECK(r.uniform_int(13) < 13);
    auto sample = r.sample_without_replacement(10, 10);
    std::set<std::size_t> uniq(sample.begin(), sample.end());
    CHECK(uniq.size() == 10);
    CHECK_THROWS_AS(r.sample_without_replacement(3, 4), UsageError);

    double mean = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += r.normal();
    mean /= n;
    CHECK(std::fabs(mean) < 0.03);
}
