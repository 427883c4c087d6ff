#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "gil/datagen.hpp"
#include "gil/errors.hpp"
#include "gil/plan.hpp"

using namespace gil;

namespace {

GenConfig small_config() {
    GenConfig cfg;
    cfg.n_genes = 60;
    cfg.n_samples = 200;
    cfg.n_factors = 6;
    cfg.seed = 2024;
    return cfg;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

std::vector<double> gene_column(const std::vector<ExpressionSample>& corpus, std::int64_t gene) {
    std::vector<double> col;
    col.reserve(corpus.size());
    for (const auto& s : corpus) {
        auto it = std::lower_bound(s.gene_indices.begin(), s.gene_indices.end(), gene);
        if (it != s.gene_indices.end() && *it == gene) {
            col.push_back(s.values[static_cast<std::size_t>(it - s.gene_indices.begin())]);
        } else {
            col.push_back(0.0);
        }
    }
    return col;
}

}  // namespace

TEST_CASE("degenerate noiseless corpus: identical samples, softplus(bias)") {
    GenConfig cfg = small_config();
    cfg.loading_w = 0.0;
    cfg.noise_sigma = 0.0;
    cfg.bias_mean = 0.5;
    cfg.bias_std = 0.0;
    cfg.n_samples = 5;
    auto corpus = gen_pretrain_corpus(cfg);
    REQUIRE(corpus.size() == 5);
    const double expect = std::log1p(std::exp(0.5));
    for (const auto& s : corpus) {
        CHECK(s.gene_indices.size() == 60);  // nothing under the dropout threshold
        for (double v : s.values) CHECK(v == doctest::Approx(expect).epsilon(1e-12));
        CHECK(s.gene_indices == corpus[0].gene_indices);
        CHECK(s.values == corpus[0].values);
    }
}

TEST_CASE("shared-factor genes correlate strongly (sigma=0.1, w=1)") {
    GenConfig cfg;
    cfg.n_genes = 2;
    cfg.n_factors = 1;
    cfg.n_samples = 1000;
    cfg.loading_w = 1.0;
    cfg.noise_sigma = 0.1;
    cfg.bias_mean = 0.0;
    cfg.bias_std = 0.0;
    cfg.seed = 31;
    auto corpus = gen_pretrain_corpus(cfg);
    auto c0 = gene_column(corpus, 0);
    auto c1 = gene_column(corpus, 1);
    CHECK(correlation(c0, c1) > 0.8);
}

TEST_CASE("within-module correlation exceeds cross-module correlation") {
    GenConfig cfg = small_config();
    cfg.n_samples = 1000;
    cfg.bias_mean = -1.0;  // mostly expressed so correlations are estimable
    auto corpus = gen_pretrain_corpus(cfg);
    // genes 0 and 1 share factor 0; gene 30 lives in factor 3
    CHECK(gene_factor(cfg, 0) == gene_factor(cfg, 1));
    CHECK(gene_factor(cfg, 0) != gene_factor(cfg, 30));
    auto c0 = gene_column(corpus, 0);
    const double within = correlation(c0, gene_column(corpus, 1));
    const double across = correlation(c0, gene_column(corpus, 30));
    CHECK(within > across);
    CHECK(within > 0.5);
}

TEST_CASE("corpus generation is deterministic and well-formed") {
    GenConfig cfg = small_config();
    auto a = gen_pretrain_corpus(cfg);
    auto b = gen_pretrain_corpus(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].gene_indices == b[i].gene_indices);
        CHECK(a[i].values == b[i].values);
        a[i].validate(cfg.n_genes);
        CHECK(a[i].id == static_cast<std::int64_t>(i));
    }
    // variable lengths (sparsity actually happens)
    std::set<std::size_t> lengths;
    for (const auto& s : a) lengths.insert(s.size());
    CHECK(lengths.size() > 1);
}

TEST_CASE("class sign patterns: distinct, balanced when wide enough") {
    auto p4 = class_sign_patterns(4, 20);
    CHECK(p4.size() == 4);
    int plus_count = -1;
    for (const auto& row : p4) {
        int plus = 0;
        for (auto v : row) plus += (v == 1);
        if (plus_count < 0) plus_count = plus;
        CHECK(plus == plus_count);  // equal +1 count per class
    }
    for (std::size_t a = 0; a < p4.size(); ++a)
        for (std::size_t b = a + 1; b < p4.size(); ++b) CHECK(p4[a] != p4[b]);

    auto p2 = class_sign_patterns(2, 1);
    CHECK(p2[0] != p2[1]);

    auto p4n = class_sign_patterns(4, 2);  // binary-code fallback
    std::set<std::vector<std::int8_t>> uniq(p4n.begin(), p4n.end());
    CHECK(uniq.size() == 4);

    CHECK_THROWS_AS(class_sign_patterns(4, 1), ConfigError);
}

TEST_CASE("downstream datasets: balance, determinism, planted separation") {
    GenConfig cfg = small_config();
    cfg.downstream = {{"d1", 4, 1000, 8, 6.0}};
    auto crucial = plant_crucial_genes(cfg);
    REQUIRE(crucial.count("d1") == 1);
    CHECK(crucial["d1"].size() == 8);

    auto ds = gen_downstream_labeled(cfg, cfg.downstream[0], crucial["d1"]);
    ds.validate(cfg.n_genes);
    CHECK(ds.samples.size() == 1000);
    std::vector<int> histogram(4, 0);
    for (const auto& s : ds.samples) histogram[static_cast<std::size_t>(*s.label)]++;
    const int mx = *std::max_element(histogram.begin(), histogram.end());
    const int mn = *std::min_element(histogram.begin(), histogram.end());
    CHECK(mx - mn <= 1);

    auto ds2 = gen_downstream_labeled(cfg, cfg.downstream[0], crucial["d1"]);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(ds.samples[i].values == ds2.samples[i].values);
        CHECK(ds.samples[i].label == ds2.samples[i].label);
    }

    // C=2 with one crucial gene and a large shift: class-conditional value
    // distributions of that gene are disjoint
    GenConfig c2 = small_config();
    c2.downstream = {{"bin", 2, 300, 1, 8.0}};
    auto crucial2 = plant_crucial_genes(c2);
    auto binary = gen_downstream_labeled(c2, c2.downstream[0], crucial2["bin"]);
    const std::int64_t gene = crucial2["bin"][0];
    double max_low = -1.0, min_high = 1e300;
    for (const auto& s : binary.samples) {
        auto it = std::lower_bound(s.gene_indices.begin(), s.gene_indices.end(), gene);
        const bool present = it != s.gene_indices.end() && *it == gene;
        const double v =
            present ? s.values[static_cast<std::size_t>(it - s.gene_indices.begin())] : 0.0;
        // pattern maps class 0 -> -1 shift (gene vanishes), class 1 -> +1
        if (*s.label == 0)
            max_low = std::max(max_low, v);
        else
            min_high = std::min(min_high, v);
    }
    CHECK(max_low < min_high);
}

TEST_CASE("separability: ceiling on crucial genes, chance elsewhere") {
    GenConfig cfg = small_config();
    cfg.n_genes = 120;
    cfg.n_factors = 12;
    cfg.downstream = {{"d1", 4, 800, 12, 6.0}};
    auto crucial = plant_crucial_genes(cfg);
    auto ds = gen_downstream_labeled(cfg, cfg.downstream[0], crucial["d1"]);

    const double ceiling = separability_check(ds, crucial["d1"], 7);
    CHECK(ceiling >= 0.9);

    // control: non-crucial genes carry no class signal
    std::vector<std::int64_t> others;
    for (std::int64_t g = 0; g < cfg.n_genes; ++g) {
        if (!std::binary_search(crucial["d1"].begin(), crucial["d1"].end(), g)) others.push_back(g);
    }
    const double control = separability_check(ds, others, 7);
    const double sigma = std::sqrt(0.25 * 0.75 / 160.0);  // heldout n = 160
    CHECK(control < 0.25 + 3 * sigma + 0.05);

    // delta = 0 plants nothing
    GenConfig flat = cfg;
    flat.downstream = {{"d1", 4, 800, 12, 1e-9}};
    auto ds0 = gen_downstream_labeled(flat, flat.downstream[0], crucial["d1"]);
    const double chance = separability_check(ds0, crucial["d1"], 7);
    CHECK(chance < 0.25 + 3 * sigma + 0.05);
}

TEST_CASE("planted crucial genes dominate cumulative value and get re-selected") {
    GenConfig cfg = default_gen_config();
    cfg.n_genes = 400;
    cfg.n_samples = 500;
    cfg.n_factors = 20;
    cfg.downstream = {{"d1", 4, 600, 10, 6.0}, {"d2", 4, 600, 10, 6.0}};
    auto planted = plant_crucial_genes(cfg);
    auto d1 = gen_downstream_labeled(cfg, cfg.downstream[0], planted["d1"]);
    auto selected = select_crucial_genes(d1.samples, cfg.n_genes, 10);
    std::size_t recovered = 0;
    for (std::int64_t g : selected)
        if (std::binary_search(planted["d1"].begin(), planted["d1"].end(), g)) ++recovered;
    CHECK(recovered >= 9);  // selection by cumulative value recovers the plant
}

TEST_CASE("plant_crucial_genes produces disjoint sets; vocabulary is well-formed") {
    GenConfig cfg = small_config();
    cfg.downstream = {{"a", 2, 100, 10, 3.0}, {"b", 2, 100, 10, 3.0}, {"c", 2, 100, 10, 3.0}};
    auto sets = plant_crucial_genes(cfg);
    std::set<std::int64_t> all;
    std::size_t total = 0;
    for (const auto& [name, genes] : sets) {
        all.insert(genes.begin(), genes.end());
        total += genes.size();
        CHECK(std::is_sorted(genes.begin(), genes.end()));
    }
    CHECK(all.size() == total);

    auto vocab = make_vocabulary(50);
    CHECK(vocab.size() == 50);
    CHECK(vocab.symbols[7] == "G00007");
    CHECK(vocab.index.at("G00049") == 49);

    GenConfig bad = small_config();
    bad.downstream = {{"x", 4, 100, 1, 3.0}};  // 1 < ceil(log2 4)
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
