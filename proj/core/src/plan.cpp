#include "gil/plan.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gil/errors.hpp"

namespace gil {

namespace {

bool sorted_unique(std::span<const std::int64_t> v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] <= v[i - 1]) return false;
    }
    return true;
}

bool is_subset(std::span<const std::int64_t> sub, std::span<const std::int64_t> sorted_super) {
    for (std::int64_t g : sub) {
        if (!std::binary_search(sorted_super.begin(), sorted_super.end(), g)) return false;
    }
    return true;
}

}  // namespace

std::map<std::string, int> StagePlan::crucial_stage_of() const {
    std::map<std::string, int> out;
    for (const auto& [name, genes] : crucial_registry) {
        int found = 0;
        for (int k = 0; k < n_stages; ++k) {
            if (is_subset(genes, stage_genes[static_cast<std::size_t>(k)])) {
                found = k + 1;
                break;
            }
        }
        if (found == 0)
            throw PlanError("crucial set for " + name + " is not contained in any stage");
        out[name] = found;
    }
    return out;
}

void StagePlan::validate(std::int64_t vocab_size, std::span<const std::int64_t> corpus_ids) const {
    if (n_stages < 1) throw PlanError("plan: n_stages must be >= 1");
    if (stage_genes.size() != static_cast<std::size_t>(n_stages) ||
        stage_sample_ids.size() != static_cast<std::size_t>(n_stages))
        throw PlanError("plan: per-stage lists do not match n_stages");

    std::vector<std::int8_t> owner(static_cast<std::size_t>(vocab_size), 0);
    auto claim = [&](std::span<const std::int64_t> genes, const std::string& who) {
        if (!sorted_unique(genes)) throw PlanError("plan: " + who + " genes not sorted/unique");
        for (std::int64_t g : genes) {
            if (g < 0 || g >= vocab_size)
                throw PlanError("plan: " + who + " gene " + std::to_string(g) +
                                " outside vocabulary");
            if (owner[static_cast<std::size_t>(g)])
                throw PlanError("plan: gene " + std::to_string(g) + " assigned twice (" + who + ")");
            owner[static_cast<std::size_t>(g)] = 1;
        }
    };
    claim(base_genes, "base");
    for (int k = 0; k < n_stages; ++k)
        claim(stage_genes[static_cast<std::size_t>(k)], "stage " + std::to_string(k + 1));

    // crucial sets: pairwise disjoint and each inside exactly one stage set
    std::unordered_set<std::int64_t> crucial_seen;
    for (const auto& [name, genes] : crucial_registry) {
        for (std::int64_t g : genes) {
            if (!crucial_seen.insert(g).second)
                throw PlanError("plan: crucial gene " + std::to_string(g) +
                                " appears in several registries");
        }
    }
    crucial_stage_of();

    std::unordered_set<std::int64_t> ids_seen;
    for (int k = 0; k < n_stages; ++k) {
        for (std::int64_t sid : stage_sample_ids[static_cast<std::size_t>(k)]) {
            if (!ids_seen.insert(sid).second)
                throw PlanError("plan: sample id " + std::to_string(sid) +
                                " assigned to several stages");
        }
    }
    if (!corpus_ids.empty()) {
        if (ids_seen.size() != corpus_ids.size())
            throw PlanError("plan: stage blocks do not cover the corpus");
        for (std::int64_t sid : corpus_ids) {
            if (!ids_seen.count(sid))
                throw PlanError("plan: corpus sample " + std::to_string(sid) + " unassigned");
        }
    }
}

std::vector<std::int64_t> select_crucial_genes(std::span<const ExpressionSample> samples,
                                               std::int64_t vocab_size, std::int64_t k) {
    if (k < 1) throw ConfigError("select_crucial_genes: k must be >= 1");
    if (samples.empty()) throw ConfigError("select_crucial_genes: empty dataset");
    std::vector<double> totals(static_cast<std::size_t>(vocab_size), 0.0);
    std::vector<std::uint8_t> expressed(static_cast<std::size_t>(vocab_size), 0);
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.gene_indices.size(); ++i) {
            const auto g = static_cast<std::size_t>(s.gene_indices[i]);
            totals[g] += s.values[i];
            expressed[g] = 1;
        }
    }
    std::vector<std::int64_t> candidates;
    for (std::int64_t g = 0; g < vocab_size; ++g) {
        if (expressed[static_cast<std::size_t>(g)]) candidates.push_back(g);
    }
    if (k > static_cast<std::int64_t>(candidates.size()))
        throw ConfigError("select_crucial_genes: k exceeds the " +
                          std::to_string(candidates.size()) + " expressed genes");
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end(),
                      [&](std::int64_t a, std::int64_t b) {
                          const double ta = totals[static_cast<std::size_t>(a)];
                          const double tb = totals[static_cast<std::size_t>(b)];
                          if (ta != tb) return ta > tb;
                          return a < b;  // tie: smaller index wins
                      });
    candidates.resize(static_cast<std::size_t>(k));
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

std::map<std::string, std::vector<std::int64_t>> dedup_crucial_sets(
    const std::map<std::string, std::vector<std::int64_t>>& registry,
    std::span<const std::string> priority) {
    for (const auto& [name, genes] : registry) {
        (void)genes;
        if (std::find(priority.begin(), priority.end(), name) == priority.end())
            throw ConfigError("dedup_crucial_sets: no priority given for dataset " + name);
    }
    std::map<std::string, std::vector<std::int64_t>> out;
    std::unordered_set<std::int64_t> taken;
    for (const std::string& name : priority) {
        auto it = registry.find(name);
        if (it == registry.end()) continue;
        std::vector<std::int64_t> kept;
        for (std::int64_t g : it->second) {
            if (taken.insert(g).second) kept.push_back(g);
        }
        std::sort(kept.begin(), kept.end());
        out[name] = std::move(kept);
    }
    return out;
}

StagePlan partition_genes(std::int64_t vocab_size,
                          const std::map<std::string, std::vector<std::int64_t>>& crucial_registry,
                          const GenePartitionConfig& config, Rng& rng) {
    if (config.n_stages < 1) throw ConfigError("partition_genes: n_stages must be >= 1");
    if (!(config.base_fraction > 0.0 && config.base_fraction < 1.0))
        throw ConfigError("partition_genes: base_fraction must be in (0, 1)");

    std::vector<std::int8_t> reserved(static_cast<std::size_t>(vocab_size), 0);
    std::int64_t crucial_count = 0;
    for (const auto& [name, genes] : crucial_registry) {
        auto it = config.stage_assignment.find(name);
        if (it == config.stage_assignment.end() || it->second < 1 || it->second > config.n_stages)
            throw ConfigError("partition_genes: dataset " + name + " lacks a valid stage assignment");
        for (std::int64_t g : genes) {
            if (g < 0 || g >= vocab_size)
                throw ConfigError("partition_genes: crucial gene outside vocabulary");
            if (reserved[static_cast<std::size_t>(g)])
                throw UsageError("partition_genes: crucial sets overlap (gene " + std::to_string(g) +
                                 "); dedup first");
            reserved[static_cast<std::size_t>(g)] = 1;
            ++crucial_count;
        }
    }
    for (std::int64_t g : config.excluded_genes) {
        if (g < 0 || g >= vocab_size)
            throw ConfigError("partition_genes: excluded gene outside vocabulary");
        if (reserved[static_cast<std::size_t>(g)])
            throw ConfigError("partition_genes: excluded gene " + std::to_string(g) +
                              " is also crucial");
        reserved[static_cast<std::size_t>(g)] = 2;
    }

    const auto base_size =
        static_cast<std::int64_t>(std::llround(config.base_fraction * static_cast<double>(vocab_size)));
    if (static_cast<double>(crucial_count) >
        (1.0 - config.base_fraction) * static_cast<double>(vocab_size))
        throw ConfigError("partition_genes: crucial genes exceed the non-base capacity");

    std::vector<std::int64_t> pool;
    pool.reserve(static_cast<std::size_t>(vocab_size));
    for (std::int64_t g = 0; g < vocab_size; ++g) {
        if (!reserved[static_cast<std::size_t>(g)]) pool.push_back(g);
    }
    if (base_size > static_cast<std::int64_t>(pool.size()))
        throw ConfigError("partition_genes: not enough free genes for the base set");

    rng.shuffle(pool);
    StagePlan plan;
    plan.n_stages = config.n_stages;
    plan.base_genes.assign(pool.begin(), pool.begin() + base_size);
    std::sort(plan.base_genes.begin(), plan.base_genes.end());

    plan.stage_genes.assign(static_cast<std::size_t>(config.n_stages), {});
    plan.crucial_registry = crucial_registry;
    for (const auto& [name, genes] : crucial_registry) {
        const int stage = config.stage_assignment.at(name);
        auto& dst = plan.stage_genes[static_cast<std::size_t>(stage - 1)];
        dst.insert(dst.end(), genes.begin(), genes.end());
    }

    // deal the shuffled remainder into near-equal chunks
    const std::int64_t rest = static_cast<std::int64_t>(pool.size()) - base_size;
    const std::int64_t per = rest / config.n_stages;
    const std::int64_t extra = rest % config.n_stages;
    std::int64_t cursor = base_size;
    for (int k = 0; k < config.n_stages; ++k) {
        const std::int64_t take = per + (k < extra ? 1 : 0);
        auto& dst = plan.stage_genes[static_cast<std::size_t>(k)];
        dst.insert(dst.end(), pool.begin() + cursor, pool.begin() + cursor + take);
        cursor += take;
        std::sort(dst.begin(), dst.end());
    }
    plan.stage_sample_ids.assign(static_cast<std::size_t>(config.n_stages), {});
    return plan;
}

std::vector<std::vector<std::int64_t>> partition_dataset(std::span<const std::int64_t> sample_ids,
                                                         int n_stages, Rng& rng) {
    if (n_stages < 1) throw ConfigError("partition_dataset: n_stages must be >= 1");
    if (static_cast<int>(sample_ids.size()) < n_stages)
        throw ConfigError("partition_dataset: fewer samples than stages");
    std::vector<std::int64_t> ids(sample_ids.begin(), sample_ids.end());
    rng.shuffle(ids);
    const std::int64_t n = static_cast<std::int64_t>(ids.size());
    const std::int64_t per = n / n_stages;
    const std::int64_t extra = n % n_stages;
    std::vector<std::vector<std::int64_t>> blocks(static_cast<std::size_t>(n_stages));
    std::int64_t cursor = 0;
    for (int k = 0; k < n_stages; ++k) {
        const std::int64_t take = per + (k < extra ? 1 : 0);
        auto& blk = blocks[static_cast<std::size_t>(k)];
        blk.assign(ids.begin() + cursor, ids.begin() + cursor + take);
        cursor += take;
        std::sort(blk.begin(), blk.end());
    }
    return blocks;
}

namespace {

std::optional<ExpressionSample> restrict_sample(const ExpressionSample& sample,
                                                const std::vector<std::int8_t>& allowed,
                                                std::int64_t max_len, Rng& rng) {
    ExpressionSample out;
    out.id = sample.id;
    out.label = sample.label;
    for (std::size_t i = 0; i < sample.gene_indices.size(); ++i) {
        const std::int64_t g = sample.gene_indices[i];
        if (g < static_cast<std::int64_t>(allowed.size()) && allowed[static_cast<std::size_t>(g)]) {
            out.gene_indices.push_back(g);
            out.values.push_back(sample.values[i]);
        }
    }
    if (out.gene_indices.empty()) return std::nullopt;
    if (static_cast<std::int64_t>(out.gene_indices.size()) > max_len) {
        auto picks = rng.sample_without_replacement(out.gene_indices.size(),
                                                    static_cast<std::size_t>(max_len));
        std::sort(picks.begin(), picks.end());  // source is sorted, so this re-sorts by gene
        ExpressionSample trimmed;
        trimmed.id = out.id;
        trimmed.label = out.label;
        trimmed.gene_indices.reserve(picks.size());
        trimmed.values.reserve(picks.size());
        for (std::size_t p : picks) {
            trimmed.gene_indices.push_back(out.gene_indices[p]);
            trimmed.values.push_back(out.values[p]);
        }
        return trimmed;
    }
    return out;
}

std::vector<std::int8_t> stage_lookup(const StagePlan& plan, int stage) {
    if (stage < 1 || stage > plan.n_stages)
        throw UsageError("stage_view: stage " + std::to_string(stage) + " out of range");
    std::int64_t max_gene = -1;
    for (std::int64_t g : plan.base_genes) max_gene = std::max(max_gene, g);
    for (std::int64_t g : plan.stage_genes[static_cast<std::size_t>(stage - 1)])
        max_gene = std::max(max_gene, g);
    std::vector<std::int8_t> allowed(static_cast<std::size_t>(max_gene + 1), 0);
    for (std::int64_t g : plan.base_genes) allowed[static_cast<std::size_t>(g)] = 1;
    for (std::int64_t g : plan.stage_genes[static_cast<std::size_t>(stage - 1)])
        allowed[static_cast<std::size_t>(g)] = 1;
    return allowed;
}

}  // namespace

std::optional<ExpressionSample> stage_view(const ExpressionSample& sample, const StagePlan& plan,
                                           int stage, std::int64_t max_len, Rng& rng) {
    return restrict_sample(sample, stage_lookup(plan, stage), max_len, rng);
}

StageView build_stage_view(std::span<const ExpressionSample> samples, const StagePlan& plan,
                           int stage, std::int64_t max_len, std::uint64_t seed) {
    const auto allowed = stage_lookup(plan, stage);
    StageView view;
    view.stage = stage;
    view.samples.reserve(samples.size());
    for (const auto& s : samples) {
        Rng rng = stream_rng(seed, "view.truncate",
                             {static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(s.id)});
        if (auto restricted = restrict_sample(s, allowed, max_len, rng)) {
            view.samples.push_back(std::move(*restricted));
        } else {
            ++view.skipped;
        }
    }
    return view;
}

ExpressionSample build_downstream_view(const ExpressionSample& sample, std::int64_t max_len,
                                       Rng& rng) {
    if (static_cast<std::int64_t>(sample.size()) <= max_len) return sample;
    auto picks = rng.sample_without_replacement(sample.size(), static_cast<std::size_t>(max_len));
    std::sort(picks.begin(), picks.end());
    ExpressionSample out;
    out.id = sample.id;
    out.label = sample.label;
    out.gene_indices.reserve(picks.size());
    out.values.reserve(picks.size());
    for (std::size_t p : picks) {
        out.gene_indices.push_back(sample.gene_indices[p]);
        out.values.push_back(sample.values[p]);
    }
    return out;
}

HeldoutSplit split_heldout(const StagePlan& plan, double heldout_fraction, std::uint64_t seed) {
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0))
        throw ConfigError("split_heldout: heldout_fraction must be in [0, 1)");
    HeldoutSplit split;
    split.train_ids.resize(static_cast<std::size_t>(plan.n_stages));
    split.heldout_ids.resize(static_cast<std::size_t>(plan.n_stages));
    for (int k = 0; k < plan.n_stages; ++k) {
        std::vector<std::int64_t> ids = plan.stage_sample_ids[static_cast<std::size_t>(k)];
        Rng rng = stream_rng(seed, "split.heldout", {static_cast<std::uint64_t>(k + 1)});
        rng.shuffle(ids);
        auto held = static_cast<std::size_t>(
            std::llround(heldout_fraction * static_cast<double>(ids.size())));
        held = std::min(held, ids.size());
        auto& hv = split.heldout_ids[static_cast<std::size_t>(k)];
        auto& tv = split.train_ids[static_cast<std::size_t>(k)];
        hv.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(held));
        tv.assign(ids.begin() + static_cast<std::ptrdiff_t>(held), ids.end());
        std::sort(hv.begin(), hv.end());
        std::sort(tv.begin(), tv.end());
    }
    return split;
}

}  // namespace gil
