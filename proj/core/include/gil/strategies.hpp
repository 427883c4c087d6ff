#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gil/io.hpp"
#include "gil/model.hpp"
#include "gil/plan.hpp"

namespace gil {

struct TrainConfig {
    std::int64_t batch_size = 128;
    int epochs_per_stage = 5;
    double base_lr = 0.0005;
    /// Warm-up length; when it exceeds a stage's total step count it is
    /// scaled down to ceil(steps/2).
    std::int64_t warmup_steps = 5000;
    MaskSpec mask;
    double heldout_fraction = 0.2;

    void validate() const;
};

enum class StrategyKind { Baseline, Oracle, Replay, Distill };

struct StrategyConfig {
    StrategyKind kind = StrategyKind::Baseline;
    std::int64_t replay_buffer_per_stage = 256;  // replay only
    double lambda = 1.0;                         // distill only

    void validate() const;
};

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& name);

/// Retained previous-stage samples, stored as exact stage-i views.
struct ReplayBuffer {
    std::vector<std::vector<ExpressionSample>> per_stage;  // index 0 = stage 1
};

struct StageCheckpoint {
    int stage = 0;
    ModelParams params;
};

/// Per-stage training telemetry: the loss trajectory (one entry per
/// optimizer step) and which sample ids were read how often.
struct StageStats {
    int stage = 0;
    std::vector<double> step_losses;
    std::vector<std::pair<std::int64_t, std::int64_t>> sample_reads;  // (id, count), sorted
};

/// Minimizes the masked loss on the current stage data only, fresh Adam
/// state, epoch-level shuffling from derived streams. init must be the
/// previous stage's optimal parameters (stage 1: fresh init).
StageCheckpoint train_stage_baseline(const StageView& stage_data, ModelParams init,
                                     const TrainConfig& cfg, std::uint64_t seed,
                                     StageStats* stats = nullptr);

/// Joint training over the concatenation of all stage views (each sample
/// keeps its stage-restricted gene set); one stage-sized epoch budget.
ModelParams train_oracle(std::span<const StageView> all_stage_views, const ModelConfig& model,
                         const TrainConfig& cfg, std::uint64_t seed, StageStats* stats = nullptr);

/// Uniform subset without replacement, capped at the stage size.
std::vector<ExpressionSample> build_replay_buffer(const StageView& stage_data, std::int64_t size,
                                                  Rng& rng);

/// Optimizes the masked loss over current data plus all buffered samples,
/// shuffled together each epoch.
StageCheckpoint train_stage_replay(const StageView& stage_data, const ReplayBuffer& buffer,
                                   ModelParams init, const TrainConfig& cfg, std::uint64_t seed,
                                   StageStats* stats = nullptr);

/// Masked loss plus lambda times the squared prediction gap to the frozen
/// teacher at base-gene positions (masked and unmasked alike); student and
/// teacher see the identical masked input. lambda = 0 reduces exactly to
/// the baseline.
StageCheckpoint train_stage_distill(const StageView& stage_data, const ModelParams& teacher,
                                    double lambda, ModelParams init, const TrainConfig& cfg,
                                    std::uint64_t seed, const std::vector<std::int64_t>& base_genes,
                                    StageStats* stats = nullptr);

struct GilRunResult {
    std::vector<StageCheckpoint> checkpoints;         // empty for oracle runs
    std::optional<ModelParams> oracle_params;
    std::vector<StageStats> stats;                    // stages trained in this invocation
    std::vector<int> resumed_stages;                  // loaded from existing checkpoints
    std::size_t skipped_view_samples = 0;
};

/// The stage loop: stage 1 always trains as baseline; each later stage
/// initializes from the previous checkpoint and applies the strategy
/// (distill at stage 1 silently runs baseline). Parameters pass through the
/// 32-bit checkpoint representation at every stage boundary, so a resumed
/// run is bit-identical to an uninterrupted one. Checkpoints land in
/// run_dir/stage_<k>.ckpt (oracle: run_dir/oracle.ckpt) and the manifest in
/// run_dir/manifest.json; existing matching checkpoints are resumed from,
/// a manifest that disagrees with the requested run is an error.
GilRunResult run_gil(const StagePlan& plan, std::span<const ExpressionSample> corpus,
                     const ModelConfig& model, const TrainConfig& cfg,
                     const StrategyConfig& strategy, std::uint64_t seed,
                     const std::filesystem::path& run_dir, const RunManifest& manifest);

/// Checkpoint path naming shared by run_gil and the eval/probe commands.
std::filesystem::path stage_checkpoint_path(const std::filesystem::path& run_dir, int stage);
std::filesystem::path oracle_checkpoint_path(const std::filesystem::path& run_dir);

}  // namespace gil
