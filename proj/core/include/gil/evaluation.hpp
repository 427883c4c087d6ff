#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gil/classifier.hpp"
#include "gil/io.hpp"
#include "gil/model.hpp"
#include "gil/plan.hpp"

namespace gil {

struct EvalOptions {
    MaskSpec mask;
    std::uint64_t eval_seed = 1;
    /// false: pooled mean over all qualifying (sample, position) pairs;
    /// true: per-gene means first, then the mean over genes.
    bool per_gene_mean = false;
    std::int64_t batch_size = 256;
};

struct RegressionResult {
    double loss = 0.0;
    std::int64_t positions = 0;  // qualifying (sample, position) pairs
};

/// Masked squared error of a checkpoint on held-out stage-j views, counted
/// only at masked positions whose gene is stage-j specific (base genes
/// excluded). Masking and truncation both derive from eval_seed, so every
/// checkpoint scores on identical inputs.
RegressionResult eval_gene_regression(const ModelParams& params, const StagePlan& plan,
                                      std::span<const ExpressionSample> heldout_samples,
                                      int gene_stage, const EvalOptions& options);

struct ProbeConfig {
    int epochs = 20;
    double lr = 0.01;
    std::int64_t batch_size = 64;
    double heldout_fraction = 0.2;
    std::uint64_t seed = 1;
    std::int64_t feature_batch = 256;
};

struct ProbeOutcome {
    double accuracy = 0.0;
    std::vector<double> losses;  // probe training CE per epoch
};

/// Frozen-backbone linear probe: pooled features from the checkpoint (no
/// masking), 80/20 seeded split, single linear layer + bias by
/// cross-entropy. Downstream views derive from the probe seed alone so
/// every checkpoint sees identical inputs.
ProbeOutcome train_linear_probe(const ModelParams& params, const LabeledDataset& dataset,
                                const ProbeConfig& config);

/// Forgetting rows: for each strategy/seed and each target seen before the
/// final stage, delta = value(final) - value(learning stage) for losses and
/// value(learning stage) - value(final) for accuracies, so positive always
/// means forgetting. Downstream targets need the plan's crucial-stage map.
std::vector<ResultRow> compute_delta_rows(std::span<const ResultRow> rows,
                                          const std::map<std::string, int>& downstream_stage);

struct AggregateCell {
    double mean = 0.0;
    double median = 0.0;
    int n = 0;
    std::vector<double> per_seed;  // in ascending seed order
};

/// Key "strategy|model_stage|target_kind|target_id|metric" -> aggregate
/// over seeds. Mean is the headline number; medians and per-seed values
/// back the directional checks.
std::map<std::string, AggregateCell> aggregate_rows(std::span<const ResultRow> rows);

}  // namespace gil
