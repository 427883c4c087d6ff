#include "gil/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gil/classifier.hpp"
#include "gil/errors.hpp"
#include "gil/rng.hpp"

namespace gil {

namespace {

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

ExpressionSample generate_sample(const GenConfig& cfg, const std::vector<double>& bias,
                                 const std::vector<double>& shift, std::int64_t id, Rng& rng) {
    std::vector<double> z(static_cast<std::size_t>(cfg.n_factors));
    for (double& v : z) v = rng.normal();
    ExpressionSample s;
    s.id = id;
    for (std::int64_t g = 0; g < cfg.n_genes; ++g) {
        const auto gi = static_cast<std::size_t>(g);
        double raw = cfg.loading_w * z[static_cast<std::size_t>(gene_factor(cfg, g))] + bias[gi] +
                     cfg.noise_sigma * rng.normal();
        if (!shift.empty()) raw += shift[gi];
        const double v = softplus(raw);
        if (v >= cfg.dropout_threshold) {
            s.gene_indices.push_back(g);
            s.values.push_back(v);
        }
    }
    return s;
}

}  // namespace

void GenConfig::validate() const {
    if (n_genes < 1 || n_samples < 1) throw ConfigError("datagen: n_genes/n_samples must be >= 1");
    if (n_factors < 1 || n_factors > n_genes)
        throw ConfigError("datagen: n_factors must be in [1, n_genes]");
    if (noise_sigma < 0.0) throw ConfigError("datagen: noise_sigma must be >= 0");
    if (bias_std < 0.0) throw ConfigError("datagen: bias_std must be >= 0");
    std::int64_t crucial_total = 0;
    for (const auto& d : downstream) {
        if (d.name.empty()) throw ConfigError("datagen: downstream dataset without a name");
        if (d.n_classes < 2) throw ConfigError("datagen: " + d.name + " needs >= 2 classes");
        if (d.n_samples < d.n_classes)
            throw ConfigError("datagen: " + d.name + " needs at least one sample per class");
        if (d.n_crucial < 1) throw ConfigError("datagen: " + d.name + " needs crucial genes");
        if (!(d.class_shift > 0.0)) throw ConfigError("datagen: " + d.name + " needs class_shift > 0");
        const auto need = static_cast<std::int64_t>(
            std::ceil(std::log2(static_cast<double>(d.n_classes))));
        if (d.n_crucial < need)
            throw ConfigError("datagen: " + d.name + " needs >= ceil(log2 C) crucial genes");
        crucial_total += d.n_crucial;
    }
    if (crucial_total > n_genes) throw ConfigError("datagen: more crucial genes than genes");
}

GenConfig default_gen_config() {
    GenConfig cfg;
    cfg.downstream = {
        {"d1", 4, 1000, 20, 6.0},
        {"d2", 4, 1000, 20, 6.0},
    };
    return cfg;
}

int gene_factor(const GenConfig& config, std::int64_t gene) {
    return static_cast<int>((gene * config.n_factors) / config.n_genes);
}

std::vector<double> gene_biases(const GenConfig& config) {
    Rng rng = stream_rng(config.seed, "datagen.bias");
    std::vector<double> bias(static_cast<std::size_t>(config.n_genes));
    for (double& b : bias) b = config.bias_mean + config.bias_std * rng.normal();
    return bias;
}

std::map<std::string, std::vector<std::int64_t>> plant_crucial_genes(const GenConfig& config) {
    config.validate();
    std::vector<std::int64_t> genes(static_cast<std::size_t>(config.n_genes));
    for (std::int64_t g = 0; g < config.n_genes; ++g) genes[static_cast<std::size_t>(g)] = g;
    Rng rng = stream_rng(config.seed, "datagen.crucial");
    rng.shuffle(genes);
    std::map<std::string, std::vector<std::int64_t>> out;
    std::size_t cursor = 0;
    for (const auto& d : config.downstream) {
        std::vector<std::int64_t> set(genes.begin() + static_cast<std::ptrdiff_t>(cursor),
                                      genes.begin() + static_cast<std::ptrdiff_t>(cursor) +
                                          static_cast<std::ptrdiff_t>(d.n_crucial));
        cursor += static_cast<std::size_t>(d.n_crucial);
        std::sort(set.begin(), set.end());
        out[d.name] = std::move(set);
    }
    return out;
}

std::vector<std::vector<std::int8_t>> class_sign_patterns(int n_classes, std::int64_t n_crucial) {
    if (n_classes < 2) throw ConfigError("sign patterns: need >= 2 classes");
    if (n_crucial < 1) throw ConfigError("sign patterns: need >= 1 crucial gene");
    std::vector<std::vector<std::int8_t>> patterns(
        static_cast<std::size_t>(n_classes),
        std::vector<std::int8_t>(static_cast<std::size_t>(n_crucial), -1));
    if (n_crucial >= n_classes) {
        // cyclic half-window over n_classes near-equal blocks: every class
        // flips the same number of genes positive
        const int window = std::max(1, n_classes / 2);
        for (int c = 0; c < n_classes; ++c) {
            for (std::int64_t j = 0; j < n_crucial; ++j) {
                const int blk = static_cast<int>((j * n_classes) / n_crucial);
                for (int wdx = 0; wdx < window; ++wdx) {
                    if (blk == (c + wdx) % n_classes) {
                        patterns[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] = 1;
                    }
                }
            }
        }
    } else {
        for (int c = 0; c < n_classes; ++c) {
            for (std::int64_t j = 0; j < n_crucial; ++j) {
                patterns[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)] =
                    ((c >> j) & 1) ? 1 : -1;
            }
        }
    }
    for (int a = 0; a < n_classes; ++a) {
        for (int b = a + 1; b < n_classes; ++b) {
            if (patterns[static_cast<std::size_t>(a)] == patterns[static_cast<std::size_t>(b)])
                throw ConfigError("sign patterns: classes " + std::to_string(a) + " and " +
                                  std::to_string(b) + " are indistinct; add crucial genes");
        }
    }
    return patterns;
}

std::vector<ExpressionSample> gen_pretrain_corpus(const GenConfig& config) {
    config.validate();
    const auto bias = gene_biases(config);
    std::vector<ExpressionSample> corpus;
    corpus.reserve(static_cast<std::size_t>(config.n_samples));
    const std::vector<double> no_shift;
    for (std::int64_t i = 0; i < config.n_samples; ++i) {
        Rng rng = stream_rng(config.seed, "datagen.sample", {static_cast<std::uint64_t>(i)});
        corpus.push_back(generate_sample(config, bias, no_shift, i, rng));
    }
    return corpus;
}

LabeledDataset gen_downstream_labeled(const GenConfig& config, const DownstreamSpec& spec,
                                      std::span<const std::int64_t> crucial_genes) {
    config.validate();
    if (static_cast<std::int64_t>(crucial_genes.size()) != spec.n_crucial)
        throw ConfigError("datagen: crucial set size mismatch for " + spec.name);
    const auto bias = gene_biases(config);
    const auto patterns = class_sign_patterns(spec.n_classes, spec.n_crucial);
    const std::uint64_t name_hash = fnv1a64(spec.name);

    // balanced labels (within +-1), order shuffled
    std::vector<int> labels(static_cast<std::size_t>(spec.n_samples));
    for (std::size_t i = 0; i < labels.size(); ++i)
        labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.n_classes));
    stream_rng(config.seed, "datagen.down.labels", {name_hash}).shuffle(labels);

    LabeledDataset out;
    out.name = spec.name;
    out.n_classes = spec.n_classes;
    out.samples.reserve(labels.size());
    std::vector<double> shift(static_cast<std::size_t>(config.n_genes), 0.0);
    for (std::int64_t i = 0; i < spec.n_samples; ++i) {
        const int label = labels[static_cast<std::size_t>(i)];
        std::fill(shift.begin(), shift.end(), 0.0);
        for (std::size_t j = 0; j < crucial_genes.size(); ++j) {
            shift[static_cast<std::size_t>(crucial_genes[j])] =
                spec.class_shift *
                static_cast<double>(patterns[static_cast<std::size_t>(label)][j]);
        }
        Rng rng = stream_rng(config.seed, "datagen.down.sample",
                             {name_hash, static_cast<std::uint64_t>(i)});
        ExpressionSample s = generate_sample(config, bias, shift, i, rng);
        s.label = label;
        out.samples.push_back(std::move(s));
    }
    return out;
}

double separability_check(const LabeledDataset& dataset, std::span<const std::int64_t> genes,
                          std::uint64_t seed) {
    if (dataset.samples.empty()) throw ConfigError("separability_check: empty dataset");
    Tensor features(static_cast<std::int64_t>(dataset.samples.size()),
                    static_cast<std::int64_t>(genes.size()));
    std::vector<int> labels;
    labels.reserve(dataset.samples.size());
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        for (std::size_t j = 0; j < genes.size(); ++j) {
            auto it = std::lower_bound(s.gene_indices.begin(), s.gene_indices.end(), genes[j]);
            if (it != s.gene_indices.end() && *it == genes[j]) {
                features.at(static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)) =
                    s.values[static_cast<std::size_t>(it - s.gene_indices.begin())];
            }
        }
        labels.push_back(s.label.value_or(-1));
    }
    SoftmaxClassifierConfig cfg;
    cfg.epochs = 100;
    cfg.lr = 0.05;
    cfg.batch_size = 128;
    cfg.seed = seed;
    cfg.site = "sep";
    return train_softmax_classifier(features, labels, dataset.n_classes, cfg).heldout_accuracy;
}

GeneVocabulary make_vocabulary(std::int64_t n_genes) {
    std::vector<std::string> symbols;
    symbols.reserve(static_cast<std::size_t>(n_genes));
    char buf[16];
    for (std::int64_t g = 0; g < n_genes; ++g) {
        std::snprintf(buf, sizeof(buf), "G%05lld", static_cast<long long>(g));
        symbols.emplace_back(buf);
    }
    return GeneVocabulary::from_symbols(std::move(symbols));
}

}  // namespace gil
