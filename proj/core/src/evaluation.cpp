#include "gil/evaluation.hpp"

#include <algorithm>
#include <unordered_map>

#include "gil/errors.hpp"
#include "gil/rng.hpp"

namespace gil {

RegressionResult eval_gene_regression(const ModelParams& params, const StagePlan& plan,
                                      std::span<const ExpressionSample> heldout_samples,
                                      int gene_stage, const EvalOptions& options) {
    if (gene_stage < 1 || gene_stage > plan.n_stages)
        throw UsageError("eval_gene_regression: gene_stage out of range");
    const auto& stage_set = plan.stage_genes[static_cast<std::size_t>(gene_stage - 1)];

    // stage views + masks derive from eval_seed only: identical inputs for
    // every checkpoint under comparison
    std::vector<ExpressionSample> views;
    views.reserve(heldout_samples.size());
    for (const auto& s : heldout_samples) {
        Rng trunc_rng = stream_rng(options.eval_seed, "eval.truncate",
                                   {static_cast<std::uint64_t>(gene_stage),
                                    static_cast<std::uint64_t>(s.id)});
        if (auto view = stage_view(s, plan, gene_stage, params.config.max_len, trunc_rng)) {
            views.push_back(std::move(*view));
        }
    }
    if (views.empty())
        throw EvalError("eval_gene_regression: no usable held-out samples for stage " +
                        std::to_string(gene_stage));

    double pooled_sum = 0.0;
    std::int64_t pooled_count = 0;
    std::unordered_map<std::int64_t, std::pair<double, std::int64_t>> per_gene;

    for (std::size_t begin = 0; begin < views.size();
         begin += static_cast<std::size_t>(options.batch_size)) {
        const std::size_t end =
            std::min(views.size(), begin + static_cast<std::size_t>(options.batch_size));
        Batch batch = make_batch(
            std::span<const ExpressionSample>(views.data() + begin, end - begin));
        for (std::size_t r = 0; r < end - begin; ++r) {
            Rng mask_rng = stream_rng(options.eval_seed, "eval.mask",
                                      {static_cast<std::uint64_t>(views[begin + r].id)});
            const auto len = batch.lengths[r];
            std::vector<double> row_values(
                batch.values.begin() + static_cast<std::ptrdiff_t>(r * batch.max_len),
                batch.values.begin() + static_cast<std::ptrdiff_t>(r * batch.max_len + len));
            std::vector<std::uint8_t> row_pad(static_cast<std::size_t>(len), 1);
            MaskResult m = apply_mask(row_values, row_pad, 1, len, options.mask, mask_rng);
            for (std::int64_t i = 0; i < len; ++i) {
                const auto flat = static_cast<std::size_t>(r * batch.max_len + i);
                if (m.masked_positions[static_cast<std::size_t>(i)]) {
                    batch.masked_positions[flat] = 1;
                    batch.masked_values[flat] = m.masked_values[static_cast<std::size_t>(i)];
                }
            }
        }
        const Tensor preds = eval_predictions(params, batch);
        for (std::int64_t r = 0; r < batch.batch_size; ++r) {
            for (std::int64_t i = 0; i < batch.lengths[static_cast<std::size_t>(r)]; ++i) {
                const auto flat = static_cast<std::size_t>(r * batch.max_len + i);
                if (!batch.masked_positions[flat]) continue;
                const std::int64_t gene = batch.gene_indices[flat];
                if (!std::binary_search(stage_set.begin(), stage_set.end(), gene)) continue;
                const double err = batch.values[flat] - preds.values[flat];
                pooled_sum += err * err;
                ++pooled_count;
                if (options.per_gene_mean) {
                    auto& cell = per_gene[gene];
                    cell.first += err * err;
                    cell.second += 1;
                }
            }
        }
    }
    if (pooled_count == 0)
        throw EvalError("eval_gene_regression: zero qualifying positions (stage " +
                        std::to_string(gene_stage) + ", " + std::to_string(views.size()) +
                        " views, mask_ratio " + std::to_string(options.mask.mask_ratio) + ")");

    RegressionResult out;
    out.positions = pooled_count;
    if (options.per_gene_mean) {
        double acc = 0.0;
        for (const auto& [gene, cell] : per_gene) {
            (void)gene;
            acc += cell.first / static_cast<double>(cell.second);
        }
        out.loss = acc / static_cast<double>(per_gene.size());
    } else {
        out.loss = pooled_sum / static_cast<double>(pooled_count);
    }
    return out;
}

ProbeOutcome train_linear_probe(const ModelParams& params, const LabeledDataset& dataset,
                                const ProbeConfig& config) {
    dataset.validate(params.config.vocab_size);
    if (dataset.n_classes < 2) throw ConfigError("probe: dataset has a single class");

    const std::uint64_t name_hash = fnv1a64(dataset.name);
    std::vector<ExpressionSample> views;
    views.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) {
        Rng rng = stream_rng(config.seed, "probe.view",
                             {name_hash, static_cast<std::uint64_t>(s.id)});
        views.push_back(build_downstream_view(s, params.config.max_len, rng));
    }

    Tensor features(static_cast<std::int64_t>(views.size()), params.config.d_model);
    std::vector<int> labels(views.size());
    for (std::size_t begin = 0; begin < views.size();
         begin += static_cast<std::size_t>(config.feature_batch)) {
        const std::size_t end =
            std::min(views.size(), begin + static_cast<std::size_t>(config.feature_batch));
        Batch batch =
            make_batch(std::span<const ExpressionSample>(views.data() + begin, end - begin));
        const Tensor pooled = extract_features(params, batch);
        for (std::size_t r = 0; r < end - begin; ++r) {
            std::copy(pooled.values.begin() + static_cast<std::ptrdiff_t>(r) * pooled.cols,
                      pooled.values.begin() + static_cast<std::ptrdiff_t>(r + 1) * pooled.cols,
                      features.values.begin() +
                          static_cast<std::ptrdiff_t>(begin + r) * features.cols);
            labels[begin + r] = *views[begin + r].label;
        }
    }

    SoftmaxClassifierConfig cls;
    cls.epochs = config.epochs;
    cls.lr = config.lr;
    cls.batch_size = config.batch_size;
    cls.heldout_fraction = config.heldout_fraction;
    cls.seed = derive_stream(config.seed, "probe.stream", {name_hash});
    cls.site = "probe";
    ClassifierResult res = train_softmax_classifier(features, labels, dataset.n_classes, cls);
    return {res.heldout_accuracy, std::move(res.epoch_losses)};
}

namespace {

struct RowKey {
    std::string run;
    std::string target;
};

}  // namespace

std::vector<ResultRow> compute_delta_rows(std::span<const ResultRow> rows,
                                          const std::map<std::string, int>& downstream_stage) {
    // group by run (one run = one seed of one strategy)
    std::map<std::string, std::vector<const ResultRow*>> by_run;
    for (const auto& r : rows) {
        if (r.metric == "mse" || r.metric == "accuracy") {
            by_run[r.run_id + "\x1f" + std::to_string(r.seed) + "\x1f" + r.strategy].push_back(&r);
        }
    }
    std::vector<ResultRow> out;
    for (const auto& [key, group] : by_run) {
        (void)key;
        int final_stage = 0;
        for (const ResultRow* r : group) final_stage = std::max(final_stage, r->model_stage);
        auto find_value = [&](int model_stage, const std::string& kind, const std::string& id,
                              const std::string& metric) -> const ResultRow* {
            for (const ResultRow* r : group) {
                if (r->model_stage == model_stage && r->target_kind == kind && r->target_id == id &&
                    r->metric == metric)
                    return r;
            }
            return nullptr;
        };
        std::map<std::pair<std::string, std::string>, int> targets;  // (kind,id) -> learning stage
        for (const ResultRow* r : group) {
            if (r->target_kind == "gene_stage") {
                targets[{r->target_kind, r->target_id}] = std::stoi(r->target_id);
            } else if (r->target_kind == "downstream") {
                auto it = downstream_stage.find(r->target_id);
                if (it == downstream_stage.end()) continue;  // no crucial-stage mapping: no delta
                targets[{r->target_kind, r->target_id}] = it->second;
            }
        }
        for (const auto& [target, learning_stage] : targets) {
            const auto& [kind, id] = target;
            if (learning_stage >= final_stage) continue;  // last-stage targets have no delta
            const std::string metric = kind == "gene_stage" ? "mse" : "accuracy";
            const ResultRow* learn = find_value(learning_stage, kind, id, metric);
            const ResultRow* final_row = find_value(final_stage, kind, id, metric);
            if (learn == nullptr || final_row == nullptr)
                throw ReportError("delta: missing " + metric + " for " + kind + " " + id +
                                  " at stage " + std::to_string(learn ? final_stage : learning_stage));
            ResultRow d = *final_row;
            d.metric = "delta";
            // positive delta always means forgetting
            d.value = metric == "mse" ? final_row->value - learn->value
                                      : learn->value - final_row->value;
            out.push_back(std::move(d));
        }
    }
    return out;
}

std::map<std::string, AggregateCell> aggregate_rows(std::span<const ResultRow> rows) {
    std::map<std::string, std::vector<std::pair<std::uint64_t, double>>> groups;
    for (const auto& r : rows) {
        const std::string key = r.strategy + "|" + std::to_string(r.model_stage) + "|" +
                                r.target_kind + "|" + r.target_id + "|" + r.metric;
        groups[key].emplace_back(r.seed, r.value);
    }
    std::map<std::string, AggregateCell> out;
    for (auto& [key, values] : groups) {
        std::sort(values.begin(), values.end());
        AggregateCell cell;
        cell.n = static_cast<int>(values.size());
        for (const auto& [seed, v] : values) {
            (void)seed;
            cell.per_seed.push_back(v);
            cell.mean += v;
        }
        cell.mean /= static_cast<double>(cell.n);
        std::vector<double> sorted = cell.per_seed;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t mid = sorted.size() / 2;
        cell.median = sorted.size() % 2 == 1 ? sorted[mid]
                                             : 0.5 * (sorted[mid - 1] + sorted[mid]);
        out[key] = std::move(cell);
    }
    return out;
}

}  // namespace gil
