#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gil/expression.hpp"
#include "gil/rng.hpp"

namespace gil {

/// Stage layout of an incremental run: base genes B present in every stage,
/// pairwise-disjoint stage-specific gene sets, a disjoint covering sample
/// partition, and the deduplicated crucial-gene registry.
struct StagePlan {
    std::vector<std::int64_t> base_genes;                   // sorted
    std::vector<std::vector<std::int64_t>> stage_genes;     // sorted, disjoint
    std::vector<std::vector<std::int64_t>> stage_sample_ids;  // sorted, disjoint, covering
    std::map<std::string, std::vector<std::int64_t>> crucial_registry;
    int n_stages = 0;

    /// Stage (1-based) whose gene set contains a dataset's crucial genes.
    std::map<std::string, int> crucial_stage_of() const;

    /// Raises PlanError on any invariant violation. corpus_ids must be the
    /// sorted id list of the training corpus when coverage should be
    /// checked; pass empty to skip the coverage check.
    void validate(std::int64_t vocab_size, std::span<const std::int64_t> corpus_ids = {}) const;
};

/// Samples restricted to base plus stage-k genes, truncated to max_len.
struct StageView {
    int stage = 0;
    std::vector<ExpressionSample> samples;
    std::size_t skipped = 0;  // samples whose restriction was empty
};

/// The k genes with the largest expression totals over all samples; ties
/// go to the smaller gene index.
std::vector<std::int64_t> select_crucial_genes(std::span<const ExpressionSample> samples,
                                               std::int64_t vocab_size, std::int64_t k);

/// A gene appearing in several sets stays only in the earliest-priority
/// one; the result is pairwise disjoint.
std::map<std::string, std::vector<std::int64_t>> dedup_crucial_sets(
    const std::map<std::string, std::vector<std::int64_t>>& registry,
    std::span<const std::string> priority);

struct GenePartitionConfig {
    int n_stages = 2;
    double base_fraction = 0.5;
    /// dataset name -> stage (1-based) whose gene set receives its crucial set
    std::map<std::string, int> stage_assignment;
    /// genes kept out of base and every stage (probe-control plans)
    std::vector<std::int64_t> excluded_genes;
};

/// Fills base_genes/stage_genes/crucial_registry of a StagePlan. Crucial
/// sets land wholly inside their assigned stage; the rest of the vocabulary
/// splits uniformly at random (base first, remainder dealt near-equally).
StagePlan partition_genes(std::int64_t vocab_size,
                          const std::map<std::string, std::vector<std::int64_t>>& crucial_registry,
                          const GenePartitionConfig& config, Rng& rng);

/// Uniform random partition of sample ids into n_stages disjoint covering
/// blocks whose sizes differ by at most one.
std::vector<std::vector<std::int64_t>> partition_dataset(std::span<const std::int64_t> sample_ids,
                                                         int n_stages, Rng& rng);

/// Restrict a sample to base + stage-k genes; over-length restrictions keep
/// max_len genes chosen uniformly without replacement, re-sorted by gene.
/// Returns nullopt when the restriction is empty (callers count skips).
std::optional<ExpressionSample> stage_view(const ExpressionSample& sample, const StagePlan& plan,
                                           int stage, std::int64_t max_len, Rng& rng);

/// Bulk stage_view with per-sample derived rng streams
/// (site "view.truncate", indices {stage, sample_id}).
StageView build_stage_view(std::span<const ExpressionSample> samples, const StagePlan& plan,
                           int stage, std::int64_t max_len, std::uint64_t seed);

/// Length-bounded view of a full-profile downstream sample; deterministic
/// under the probe-wide seed so every checkpoint sees identical inputs.
ExpressionSample build_downstream_view(const ExpressionSample& sample, std::int64_t max_len,
                                       Rng& rng);

/// Per-stage deterministic train/held-out split (held-out fraction of each
/// stage block is reserved before training and never trained on).
struct HeldoutSplit {
    std::vector<std::vector<std::int64_t>> train_ids;    // per stage, sorted
    std::vector<std::vector<std::int64_t>> heldout_ids;  // per stage, sorted
};
HeldoutSplit split_heldout(const StagePlan& plan, double heldout_fraction, std::uint64_t seed);

}  // namespace gil
