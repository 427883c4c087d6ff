#include "gil/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gil/errors.hpp"

namespace gil {

using nlohmann::json;

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok)
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where +
                              " (strict parsing)");
    }
}

template <typename T>
void read_to(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
}

}  // namespace

void ExperimentConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
    train.validate();
    strategy.validate();
    datagen.validate();
    if (plan.n_stages < 1) throw ConfigError("config: plan.n_stages must be >= 1");
    if (!(plan.base_fraction > 0.0 && plan.base_fraction < 1.0))
        throw ConfigError("config: plan.base_fraction must be in (0, 1)");
    if (plan.crucial_genes_per_dataset < 1)
        throw ConfigError("config: plan.crucial_genes_per_dataset must be >= 1");
    if (model.d_model < 1 || model.d_model % model.n_heads != 0)
        throw ConfigError("config: model.d_model must be a positive multiple of n_heads");
    if (probe.epochs < 1 || probe.batch_size < 1 || !(probe.lr > 0.0))
        throw ConfigError("config: probe parameters must be positive");
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig c;
    c.datagen = default_gen_config();
    c.datagen.seed = c.seed;
    return c;
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: malformed JSON");
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    require_keys(j,
                 {"seed", "seeds", "model", "train", "strategy", "plan", "datagen", "probe",
                  "paths"},
                 "top level");

    ExperimentConfig c = default_experiment_config();
    read_to(j, "seed", c.seed);
    read_to(j, "seeds", c.seeds);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        require_keys(m, {"d_model", "n_layers", "n_heads", "d_ff", "max_len"}, "model");
        read_to(m, "d_model", c.model.d_model);
        read_to(m, "n_layers", c.model.n_layers);
        read_to(m, "n_heads", c.model.n_heads);
        read_to(m, "d_ff", c.model.d_ff);
        read_to(m, "max_len", c.model.max_len);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        require_keys(t,
                     {"batch_size", "epochs_per_stage", "base_lr", "warmup_steps", "mask_ratio",
                      "mask_sentinel", "heldout_fraction"},
                     "train");
        read_to(t, "batch_size", c.train.batch_size);
        read_to(t, "epochs_per_stage", c.train.epochs_per_stage);
        read_to(t, "base_lr", c.train.base_lr);
        read_to(t, "warmup_steps", c.train.warmup_steps);
        read_to(t, "mask_ratio", c.train.mask.mask_ratio);
        read_to(t, "mask_sentinel", c.train.mask.sentinel);
        read_to(t, "heldout_fraction", c.train.heldout_fraction);
    }
    if (j.contains("strategy")) {
        const auto& s = j.at("strategy");
        require_keys(s, {"kind", "replay_buffer_per_stage", "lambda"}, "strategy");
        if (s.contains("kind"))
            c.strategy.kind = strategy_kind_from_string(s.at("kind").get<std::string>());
        read_to(s, "replay_buffer_per_stage", c.strategy.replay_buffer_per_stage);
        read_to(s, "lambda", c.strategy.lambda);
    }
    if (j.contains("plan")) {
        const auto& p = j.at("plan");
        require_keys(p,
                     {"n_stages", "base_fraction", "crucial_genes_per_dataset", "stage_assignment",
                      "exclude_crucial"},
                     "plan");
        read_to(p, "n_stages", c.plan.n_stages);
        read_to(p, "base_fraction", c.plan.base_fraction);
        read_to(p, "crucial_genes_per_dataset", c.plan.crucial_genes_per_dataset);
        if (p.contains("stage_assignment")) {
            c.plan.stage_assignment.clear();
            for (auto it = p.at("stage_assignment").begin(); it != p.at("stage_assignment").end();
                 ++it) {
                c.plan.stage_assignment[it.key()] = it.value().get<int>();
            }
        }
        read_to(p, "exclude_crucial", c.plan.exclude_crucial);
    }
    if (j.contains("datagen")) {
        const auto& d = j.at("datagen");
        require_keys(d,
                     {"n_genes", "n_samples", "n_factors", "loading_w", "bias_mean", "bias_std",
                      "noise_sigma", "dropout_threshold", "downstream"},
                     "datagen");
        read_to(d, "n_genes", c.datagen.n_genes);
        read_to(d, "n_samples", c.datagen.n_samples);
        read_to(d, "n_factors", c.datagen.n_factors);
        read_to(d, "loading_w", c.datagen.loading_w);
        read_to(d, "bias_mean", c.datagen.bias_mean);
        read_to(d, "bias_std", c.datagen.bias_std);
        read_to(d, "noise_sigma", c.datagen.noise_sigma);
        read_to(d, "dropout_threshold", c.datagen.dropout_threshold);
        if (d.contains("downstream")) {
            c.datagen.downstream.clear();
            for (const auto& ds : d.at("downstream")) {
                require_keys(ds, {"name", "n_classes", "n_samples", "n_crucial", "class_shift"},
                             "datagen.downstream[]");
                DownstreamSpec spec;
                read_to(ds, "name", spec.name);
                read_to(ds, "n_classes", spec.n_classes);
                read_to(ds, "n_samples", spec.n_samples);
                read_to(ds, "n_crucial", spec.n_crucial);
                read_to(ds, "class_shift", spec.class_shift);
                c.datagen.downstream.push_back(std::move(spec));
            }
        }
    }
    if (j.contains("probe")) {
        const auto& p = j.at("probe");
        require_keys(p, {"epochs", "lr", "batch_size", "heldout_fraction"}, "probe");
        read_to(p, "epochs", c.probe.epochs);
        read_to(p, "lr", c.probe.lr);
        read_to(p, "batch_size", c.probe.batch_size);
        read_to(p, "heldout_fraction", c.probe.heldout_fraction);
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        require_keys(p, {"data", "out"}, "paths");
        read_to(p, "data", c.paths.data);
        read_to(p, "out", c.paths.out);
    }

    c.datagen.seed = c.seed;  // one experiment seed drives every stream
    c.validate();
    return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

std::string dump_experiment_config(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["model"] = {{"d_model", c.model.d_model},
                  {"n_layers", c.model.n_layers},
                  {"n_heads", c.model.n_heads},
                  {"d_ff", c.model.d_ff},
                  {"max_len", c.model.max_len}};
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs_per_stage", c.train.epochs_per_stage},
                  {"base_lr", c.train.base_lr},
                  {"warmup_steps", c.train.warmup_steps},
                  {"mask_ratio", c.train.mask.mask_ratio},
                  {"mask_sentinel", c.train.mask.sentinel},
                  {"heldout_fraction", c.train.heldout_fraction}};
    j["strategy"] = {{"kind", to_string(c.strategy.kind)},
                     {"replay_buffer_per_stage", c.strategy.replay_buffer_per_stage},
                     {"lambda", c.strategy.lambda}};
    json assignment = json::object();
    for (const auto& [name, stage] : c.plan.stage_assignment) assignment[name] = stage;
    j["plan"] = {{"n_stages", c.plan.n_stages},
                 {"base_fraction", c.plan.base_fraction},
                 {"crucial_genes_per_dataset", c.plan.crucial_genes_per_dataset},
                 {"stage_assignment", assignment},
                 {"exclude_crucial", c.plan.exclude_crucial}};
    json downstream = json::array();
    for (const auto& d : c.datagen.downstream) {
        downstream.push_back({{"name", d.name},
                              {"n_classes", d.n_classes},
                              {"n_samples", d.n_samples},
                              {"n_crucial", d.n_crucial},
                              {"class_shift", d.class_shift}});
    }
    j["datagen"] = {{"n_genes", c.datagen.n_genes},
                    {"n_samples", c.datagen.n_samples},
                    {"n_factors", c.datagen.n_factors},
                    {"loading_w", c.datagen.loading_w},
                    {"bias_mean", c.datagen.bias_mean},
                    {"bias_std", c.datagen.bias_std},
                    {"noise_sigma", c.datagen.noise_sigma},
                    {"dropout_threshold", c.datagen.dropout_threshold},
                    {"downstream", downstream}};
    j["probe"] = {{"epochs", c.probe.epochs},
                  {"lr", c.probe.lr},
                  {"batch_size", c.probe.batch_size},
                  {"heldout_fraction", c.probe.heldout_fraction}};
    j["paths"] = {{"data", c.paths.data}, {"out", c.paths.out}};
    return j.dump();  // compact and key-sorted: the canonical byte form
}

}  // namespace gil
