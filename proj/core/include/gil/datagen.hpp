#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gil/expression.hpp"

namespace gil {

struct DownstreamSpec {
    std::string name;
    int n_classes = 4;
    std::int64_t n_samples = 1000;
    std::int64_t n_crucial = 20;
    double class_shift = 6.0;  // delta applied to crucial-gene raw values
};

/// Latent-factor expression generator. Each sample draws z ~ N(0, I_m);
/// gene g gets raw = w * z[factor(g)] + bias[g] + sigma * eps and value
/// softplus(raw); values under the dropout threshold are omitted, which
/// makes profiles sparse and variable-length. Downstream datasets
/// additionally shift crucial-gene raws by +-class_shift in per-class sign
/// patterns, planting a class signal only crucial genes carry.
struct GenConfig {
    std::int64_t n_genes = 2000;
    std::int64_t n_samples = 10000;
    int n_factors = 50;
    double loading_w = 1.0;
    double bias_mean = -5.2;
    double bias_std = 1.0;
    double noise_sigma = 0.25;
    double dropout_threshold = 0.05;
    std::vector<DownstreamSpec> downstream;
    std::uint64_t seed = 12345;

    void validate() const;
};

/// Desk defaults (two downstream datasets d1/d2, 4 classes, 20 crucial
/// genes each).
GenConfig default_gen_config();

/// Contiguous-block module assignment gene -> factor.
int gene_factor(const GenConfig& config, std::int64_t gene);

/// Per-gene biases, drawn once from the "datagen.bias" stream.
std::vector<double> gene_biases(const GenConfig& config);

/// Disjoint random crucial-gene sets, one per downstream spec (sorted).
std::map<std::string, std::vector<std::int64_t>> plant_crucial_genes(const GenConfig& config);

/// Distinct per-class sign patterns over n_crucial genes. When n_crucial
/// >= n_classes the patterns are cyclic half-windows with equal +1 counts
/// per class (so the summed shift carries no class information); otherwise
/// a binary code. Raises ConfigError if patterns cannot be distinct.
std::vector<std::vector<std::int8_t>> class_sign_patterns(int n_classes, std::int64_t n_crucial);

std::vector<ExpressionSample> gen_pretrain_corpus(const GenConfig& config);

LabeledDataset gen_downstream_labeled(const GenConfig& config, const DownstreamSpec& spec,
                                      std::span<const std::int64_t> crucial_genes);

/// Accuracy ceiling: a multinomial linear classifier on the raw values of
/// the given genes (no transformer). Chance-level when the genes carry no
/// planted signal.
double separability_check(const LabeledDataset& dataset, std::span<const std::int64_t> genes,
                          std::uint64_t seed);

/// Synthetic vocabulary: symbols G00000, G00001, ...
GeneVocabulary make_vocabulary(std::int64_t n_genes);

}  // namespace gil
