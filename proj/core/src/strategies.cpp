#include "gil/strategies.hpp"

#include <algorithm>
#include <unordered_map>

#include "gil/errors.hpp"
#include "gil/optim.hpp"
#include "gil/rng.hpp"

namespace gil {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs_per_stage < 1) throw ConfigError("train: epochs_per_stage must be >= 1");
    if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be > 0");
    if (warmup_steps < 0) throw ConfigError("train: warmup_steps must be >= 0");
    if (!(mask.mask_ratio > 0.0 && mask.mask_ratio < 1.0))
        throw ConfigError("train: mask_ratio must be in (0, 1)");
    if (!(mask.sentinel < 0.0)) throw ConfigError("train: mask sentinel must be negative");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
        throw ConfigError("train: heldout_fraction must be in [0, 1)");
}

void StrategyConfig::validate() const {
    if (replay_buffer_per_stage < 0) throw ConfigError("strategy: replay buffer size must be >= 0");
    if (lambda < 0.0) throw ConfigError("strategy: lambda must be >= 0");
}

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Baseline: return "baseline";
        case StrategyKind::Oracle: return "oracle";
        case StrategyKind::Replay: return "replay";
        case StrategyKind::Distill: return "distill";
    }
    throw UsageError("unknown strategy kind");
}

StrategyKind strategy_kind_from_string(const std::string& name) {
    if (name == "baseline") return StrategyKind::Baseline;
    if (name == "oracle") return StrategyKind::Oracle;
    if (name == "replay") return StrategyKind::Replay;
    if (name == "distill") return StrategyKind::Distill;
    throw ConfigError("unknown strategy '" + name + "' (baseline|oracle|replay|distill)");
}

namespace {

struct TrainJob {
    std::vector<const ExpressionSample*> data;
    int stream_stage = 1;  // stage index folded into shuffle/mask streams
    const ModelParams* teacher = nullptr;
    double lambda = 0.0;
    const std::vector<std::int64_t>* base_genes = nullptr;
};

std::vector<const ExpressionSample*> pointers_of(const StageView& view) {
    std::vector<const ExpressionSample*> out;
    out.reserve(view.samples.size());
    for (const auto& s : view.samples) out.push_back(&s);
    return out;
}

ModelParams run_training(const TrainJob& job, ModelParams params, const TrainConfig& cfg,
                         std::uint64_t seed, StageStats* stats) {
    cfg.validate();
    if (job.data.empty()) throw ConfigError("training: empty stage data");

    const auto n = static_cast<std::int64_t>(job.data.size());
    const std::int64_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = batches_per_epoch * cfg.epochs_per_stage;
    const std::int64_t warmup =
        cfg.warmup_steps > total_steps ? (total_steps + 1) / 2 : cfg.warmup_steps;
    const LrSchedule schedule{cfg.base_lr, warmup};

    std::vector<std::int8_t> base_lookup;
    if (job.teacher != nullptr && job.lambda != 0.0) {
        std::int64_t top = 0;
        for (std::int64_t g : *job.base_genes) top = std::max(top, g + 1);
        base_lookup.assign(static_cast<std::size_t>(top), 0);
        for (std::int64_t g : *job.base_genes) base_lookup[static_cast<std::size_t>(g)] = 1;
    }

    auto named = params.named();
    std::vector<Tensor*> param_ptrs;
    std::vector<const Tensor*> param_views;
    for (auto& [name, tensor] : named) {
        (void)name;
        param_ptrs.push_back(tensor);
        param_views.push_back(tensor);
    }
    AdamState adam = make_adam_state(param_views, cfg.base_lr);

    std::unordered_map<std::int64_t, std::int64_t> reads;
    std::vector<std::size_t> order(job.data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const auto stage_u = static_cast<std::uint64_t>(job.stream_stage);
    for (int epoch = 0; epoch < cfg.epochs_per_stage; ++epoch) {
        stream_rng(seed, "train.shuffle", {stage_u, static_cast<std::uint64_t>(epoch)})
            .shuffle(order);
        std::int64_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const ExpressionSample*> chunk;
            chunk.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                chunk.push_back(job.data[order[i]]);
                if (stats) ++reads[job.data[order[i]]->id];
            }
            Batch batch = make_batch(std::span<const ExpressionSample* const>(chunk));
            Rng mask_rng = stream_rng(seed, "train.mask",
                                      {stage_u, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(batch_index)});
            apply_mask(batch, cfg.mask, mask_rng);

            GradTape tape;
            ModelGraph graph(tape, params, true);
            auto preds = graph.predict_values(graph.encode(graph.embed(batch), batch));
            auto loss = graph.masked_mse(preds, batch);
            if (job.teacher != nullptr && job.lambda != 0.0) {
                // base-token regression against the frozen teacher on the
                // identical masked input; lambda = 0 skips the branch, which
                // is the exact algebraic reduction to the baseline loss
                const Tensor teacher_preds = eval_predictions(*job.teacher, batch);
                std::vector<double> base_col(batch.gene_indices.size(), 0.0);
                for (std::size_t i = 0; i < base_col.size(); ++i) {
                    const std::int64_t g = batch.gene_indices[i];
                    if (batch.pad_mask[i] && g < static_cast<std::int64_t>(base_lookup.size()) &&
                        base_lookup[static_cast<std::size_t>(g)]) {
                        base_col[i] = 1.0;
                    }
                }
                auto gap = tape.sub(preds, tape.leaf(Tensor::column(
                                               std::vector<double>(teacher_preds.values))));
                auto base_mask = tape.leaf(Tensor::column(std::move(base_col)));
                auto masked_gap = tape.mul(gap, base_mask);
                auto sq = tape.mul(masked_gap, masked_gap);
                auto term = tape.scale(tape.sum_all(sq),
                                       job.lambda / static_cast<double>(batch.batch_size));
                loss = tape.add(loss, term);
            }
            tape.backward(loss);
            std::vector<const Tensor*> grads;
            grads.reserve(graph.param_ids().size());
            for (auto id : graph.param_ids()) grads.push_back(&tape.grad(id));
            adam_step(param_ptrs, grads, adam, lr_at(schedule, adam.t + 1));
            if (stats) stats->step_losses.push_back(tape.value(loss).values[0]);
        }
    }
    if (stats) {
        stats->sample_reads.assign(reads.begin(), reads.end());
        std::sort(stats->sample_reads.begin(), stats->sample_reads.end());
    }
    return params;
}

}  // namespace

StageCheckpoint train_stage_baseline(const StageView& stage_data, ModelParams init,
                                     const TrainConfig& cfg, std::uint64_t seed,
                                     StageStats* stats) {
    TrainJob job;
    job.data = pointers_of(stage_data);
    job.stream_stage = stage_data.stage;
    if (stats) stats->stage = stage_data.stage;
    return {stage_data.stage, run_training(job, std::move(init), cfg, seed, stats)};
}

ModelParams train_oracle(std::span<const StageView> all_stage_views, const ModelConfig& model,
                         const TrainConfig& cfg, std::uint64_t seed, StageStats* stats) {
    TrainJob job;
    for (const auto& view : all_stage_views) {
        for (const auto& s : view.samples) job.data.push_back(&s);
    }
    job.stream_stage = 1;  // oracle shares stage-1 streams: n_stages=1 equals the baseline bit-for-bit
    if (stats) stats->stage = 1;
    ModelParams init = init_params(model, seed);
    return run_training(job, std::move(init), cfg, seed, stats);
}

std::vector<ExpressionSample> build_replay_buffer(const StageView& stage_data, std::int64_t size,
                                                  Rng& rng) {
    if (size < 0) throw ConfigError("replay buffer size must be >= 0");
    const auto n = static_cast<std::int64_t>(stage_data.samples.size());
    const auto keep = static_cast<std::size_t>(std::min(size, n));
    std::vector<ExpressionSample> out;
    out.reserve(keep);
    for (std::size_t pick : rng.sample_without_replacement(static_cast<std::size_t>(n), keep)) {
        out.push_back(stage_data.samples[pick]);
    }
    std::sort(out.begin(), out.end(),
              [](const ExpressionSample& a, const ExpressionSample& b) { return a.id < b.id; });
    return out;
}

StageCheckpoint train_stage_replay(const StageView& stage_data, const ReplayBuffer& buffer,
                                   ModelParams init, const TrainConfig& cfg, std::uint64_t seed,
                                   StageStats* stats) {
    TrainJob job;
    job.data = pointers_of(stage_data);
    for (const auto& stage_buffer : buffer.per_stage) {
        for (const auto& s : stage_buffer) job.data.push_back(&s);
    }
    job.stream_stage = stage_data.stage;
    if (stats) stats->stage = stage_data.stage;
    return {stage_data.stage, run_training(job, std::move(init), cfg, seed, stats)};
}

StageCheckpoint train_stage_distill(const StageView& stage_data, const ModelParams& teacher,
                                    double lambda, ModelParams init, const TrainConfig& cfg,
                                    std::uint64_t seed, const std::vector<std::int64_t>& base_genes,
                                    StageStats* stats) {
    if (lambda < 0.0) throw ConfigError("distill: lambda must be >= 0");
    TrainJob job;
    job.data = pointers_of(stage_data);
    job.stream_stage = stage_data.stage;
    job.teacher = &teacher;
    job.lambda = lambda;
    job.base_genes = &base_genes;
    if (stats) stats->stage = stage_data.stage;
    return {stage_data.stage, run_training(job, std::move(init), cfg, seed, stats)};
}

fs::path stage_checkpoint_path(const fs::path& run_dir, int stage) {
    return run_dir / ("stage_" + std::to_string(stage) + ".ckpt");
}

fs::path oracle_checkpoint_path(const fs::path& run_dir) { return run_dir / "oracle.ckpt"; }

GilRunResult run_gil(const StagePlan& plan, std::span<const ExpressionSample> corpus,
                     const ModelConfig& model, const TrainConfig& cfg,
                     const StrategyConfig& strategy, std::uint64_t seed,
                     const fs::path& run_dir, const RunManifest& manifest) {
    cfg.validate();
    strategy.validate();
    model.validate();

    fs::create_directories(run_dir);
    const fs::path manifest_path = run_dir / "manifest.json";

    std::unordered_map<std::int64_t, const ExpressionSample*> by_id;
    by_id.reserve(corpus.size());
    for (const auto& s : corpus) by_id.emplace(s.id, &s);

    const HeldoutSplit split = split_heldout(plan, cfg.heldout_fraction, seed);

    RunManifest resolved = manifest;
    resolved.seed = seed;
    resolved.strategy_kind = to_string(strategy.kind);
    resolved.replay_buffer_per_stage =
        strategy.kind == StrategyKind::Replay ? strategy.replay_buffer_per_stage : 0;
    resolved.lambda = strategy.kind == StrategyKind::Distill ? strategy.lambda : 0.0;
    resolved.n_stages = plan.n_stages;
    resolved.train_id_hashes.clear();
    for (const auto& ids : split.train_ids) resolved.train_id_hashes.push_back(hash_ids(ids));

    if (fs::exists(manifest_path)) {
        const RunManifest existing = load_manifest(manifest_path);
        const bool same = existing.seed == resolved.seed &&
                          existing.strategy_kind == resolved.strategy_kind &&
                          existing.replay_buffer_per_stage == resolved.replay_buffer_per_stage &&
                          existing.lambda == resolved.lambda &&
                          existing.n_stages == resolved.n_stages &&
                          existing.config_json == resolved.config_json &&
                          existing.corpus_hash == resolved.corpus_hash &&
                          existing.plan_hash == resolved.plan_hash &&
                          existing.train_id_hashes == resolved.train_id_hashes;
        if (!same)
            throw ConfigError("run directory " + run_dir.string() +
                              " holds a manifest for a different run; refusing to resume");
    } else {
        save_manifest(manifest_path, resolved);
    }

    GilRunResult result;

    // stage views are derived, not stored: a resumed run rebuilds them
    // bit-identically from the streams
    std::vector<StageView> views;
    views.reserve(static_cast<std::size_t>(plan.n_stages));
    for (int k = 1; k <= plan.n_stages; ++k) {
        std::vector<ExpressionSample> stage_samples;
        for (std::int64_t id : split.train_ids[static_cast<std::size_t>(k - 1)]) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw DataError("plan references sample " + std::to_string(id) +
                                " missing from the corpus");
            stage_samples.push_back(*it->second);
        }
        views.push_back(build_stage_view(stage_samples, plan, k, model.max_len, seed));
        result.skipped_view_samples += views.back().skipped;
    }

    if (strategy.kind == StrategyKind::Oracle) {
        const fs::path path = oracle_checkpoint_path(run_dir);
        if (fs::exists(path)) {
            result.oracle_params = load_checkpoint(path);
            result.resumed_stages.push_back(1);
            return result;
        }
        StageStats stats;
        ModelParams params = train_oracle(views, model, cfg, seed, &stats);
        round_params_to_f32(params);
        save_checkpoint(path, params);
        result.oracle_params = std::move(params);
        result.stats.push_back(std::move(stats));
        return result;
    }

    ModelParams params = init_params(model, seed);
    ReplayBuffer buffer;
    for (int k = 1; k <= plan.n_stages; ++k) {
        const StageView& view = views[static_cast<std::size_t>(k - 1)];
        const fs::path path = stage_checkpoint_path(run_dir, k);
        if (fs::exists(path)) {
            params = load_checkpoint(path);
            result.resumed_stages.push_back(k);
        } else {
            StageStats stats;
            StageCheckpoint ckpt{k, {}};
            if (k == 1 || strategy.kind == StrategyKind::Baseline) {
                // stage one can only take baseline training
                ckpt = train_stage_baseline(view, std::move(params), cfg, seed, &stats);
            } else if (strategy.kind == StrategyKind::Replay) {
                ckpt = train_stage_replay(view, buffer, std::move(params), cfg, seed, &stats);
            } else {
                const ModelParams teacher = params;  // previous-stage optimum, already rounded
                ckpt = train_stage_distill(view, teacher, strategy.lambda, std::move(params), cfg,
                                           seed, plan.base_genes, &stats);
            }
            params = std::move(ckpt.params);
            round_params_to_f32(params);
            save_checkpoint(path, params);
            result.stats.push_back(std::move(stats));
        }
        result.checkpoints.push_back(StageCheckpoint{k, params});
        if (strategy.kind == StrategyKind::Replay && k < plan.n_stages) {
            Rng rng = stream_rng(seed, "replay.select", {static_cast<std::uint64_t>(k)});
            buffer.per_stage.push_back(
                build_replay_buffer(view, strategy.replay_buffer_per_stage, rng));
        }
    }
    return result;
}

}  // namespace gil
