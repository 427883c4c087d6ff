#include "gil/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "gil/config.hpp"
#include "gil/datagen.hpp"
#include "gil/errors.hpp"
#include "gil/evaluation.hpp"
#include "gil/io.hpp"
#include "gil/strategies.hpp"

namespace gil {

namespace fs = std::filesystem;

namespace {

int env_threads() {
    if (const char* raw = std::getenv("GIL_THREADS")) {
        const int n = std::atoi(raw);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::max(1u, std::min(hw, 4u)));
}

ExperimentConfig config_from(const std::string& config_path) {
    if (config_path.empty()) return default_experiment_config();
    return load_experiment_config(config_path);
}

/// sweep/report identify runs by strategy plus its swept parameter
std::string strategy_label(const std::string& kind, std::int64_t buffer, double lambda) {
    if (kind == "replay") return "replay_" + std::to_string(buffer);
    if (kind == "distill") return "distill_" + format_double(lambda);
    return kind;
}

struct LoadedData {
    GeneVocabulary vocab;
    std::vector<ExpressionSample> corpus;
    fs::path corpus_path, vocab_path;
};

LoadedData load_corpus_dir(const fs::path& data_dir) {
    LoadedData d;
    d.vocab_path = data_dir / "vocab.txt";
    d.corpus_path = data_dir / "corpus.jsonl";
    d.vocab = load_vocabulary(d.vocab_path);
    d.corpus = load_expression_jsonl(d.corpus_path, d.vocab.size());
    return d;
}

RunManifest make_manifest(const std::string& run_id, const ExperimentConfig& resolved,
                          const LoadedData& data, const fs::path& plan_path) {
    RunManifest m;
    m.run_id = run_id;
    m.seed = resolved.seed;
    m.config_json = dump_experiment_config(resolved);
    m.corpus_hash = hash_file(data.corpus_path);
    m.vocab_hash = hash_file(data.vocab_path);
    m.plan_hash = hash_file(plan_path);
    return m;
}

int run_training_job(ExperimentConfig cfg, const StrategyConfig& strategy, std::uint64_t seed,
                     const fs::path& plan_path, const LoadedData& data, const fs::path& run_dir) {
    cfg.strategy = strategy;
    cfg.seed = seed;
    StagePlan plan = load_plan_json(plan_path, data.vocab.size());
    ModelConfig model = cfg.model;
    model.vocab_size = data.vocab.size();
    RunManifest manifest =
        make_manifest(run_dir.filename().string(), cfg, data, plan_path);
    GilRunResult result =
        run_gil(plan, data.corpus, model, cfg.train, strategy, seed, run_dir, manifest);
    for (const auto& stats : result.stats) {
        std::cout << run_dir.filename().string() << " stage " << stats.stage << ": "
                  << stats.step_losses.size() << " steps, final loss "
                  << (stats.step_losses.empty() ? 0.0 : stats.step_losses.back()) << "\n";
    }
    for (int k : result.resumed_stages) {
        std::cout << run_dir.filename().string() << " stage " << k
                  << ": resumed from checkpoint\n";
    }
    if (result.skipped_view_samples > 0) {
        std::cout << run_dir.filename().string() << ": skipped " << result.skipped_view_samples
                  << " samples with empty stage restrictions\n";
    }
    return 0;
}

int cmd_datagen(const std::string& config_path, const fs::path& out_dir) {
    ExperimentConfig cfg = config_from(config_path);
    fs::create_directories(out_dir);
    const GeneVocabulary vocab = make_vocabulary(cfg.datagen.n_genes);
    save_vocabulary(out_dir / "vocab.txt", vocab);
    const auto corpus = gen_pretrain_corpus(cfg.datagen);
    save_expression_jsonl(out_dir / "corpus.jsonl", corpus);
    std::cout << "corpus: " << corpus.size() << " samples over " << cfg.datagen.n_genes
              << " genes\n";
    const auto planted = plant_crucial_genes(cfg.datagen);
    for (const auto& spec : cfg.datagen.downstream) {
        const LabeledDataset ds = gen_downstream_labeled(cfg.datagen, spec, planted.at(spec.name));
        save_expression_jsonl(out_dir / (spec.name + ".jsonl"), ds.samples);
        std::cout << "downstream " << spec.name << ": " << ds.samples.size() << " samples, "
                  << spec.n_classes << " classes\n";
    }
    return 0;
}

int cmd_plan(const std::string& config_path, const fs::path& data_dir, const fs::path& out_path) {
    ExperimentConfig cfg = config_from(config_path);
    LoadedData data = load_corpus_dir(data_dir);

    std::map<std::string, std::vector<std::int64_t>> registry;
    std::vector<std::string> priority;
    for (const auto& spec : cfg.datagen.downstream) {
        const LabeledDataset ds =
            load_labeled_jsonl(data_dir / (spec.name + ".jsonl"), data.vocab.size());
        registry[spec.name] =
            select_crucial_genes(ds.samples, data.vocab.size(), cfg.plan.crucial_genes_per_dataset);
        priority.push_back(spec.name);
    }
    auto deduped = dedup_crucial_sets(registry, priority);

    GenePartitionConfig pcfg;
    pcfg.n_stages = cfg.plan.n_stages;
    pcfg.base_fraction = cfg.plan.base_fraction;
    pcfg.stage_assignment = cfg.plan.stage_assignment;
    for (const std::string& name : cfg.plan.exclude_crucial) {
        auto it = deduped.find(name);
        if (it == deduped.end())
            throw ConfigError("plan: exclude_crucial names unknown dataset " + name);
        pcfg.excluded_genes.insert(pcfg.excluded_genes.end(), it->second.begin(),
                                   it->second.end());
        deduped.erase(it);
    }
    std::sort(pcfg.excluded_genes.begin(), pcfg.excluded_genes.end());

    Rng gene_rng = stream_rng(cfg.seed, "plan.partition_genes");
    StagePlan plan = partition_genes(data.vocab.size(), deduped, pcfg, gene_rng);

    std::vector<std::int64_t> ids;
    ids.reserve(data.corpus.size());
    for (const auto& s : data.corpus) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    Rng sample_rng = stream_rng(cfg.seed, "plan.partition_dataset");
    plan.stage_sample_ids = partition_dataset(ids, cfg.plan.n_stages, sample_rng);

    plan.validate(data.vocab.size(), ids);
    save_plan_json(out_path, plan);
    std::cout << "plan: " << plan.n_stages << " stages, " << plan.base_genes.size()
              << " base genes";
    for (int k = 0; k < plan.n_stages; ++k)
        std::cout << ", |T" << (k + 1) << "|=" << plan.stage_genes[static_cast<std::size_t>(k)].size();
    std::cout << "\n";
    return 0;
}

int cmd_eval(const fs::path& run_dir, const fs::path& plan_path, const fs::path& data_dir,
             const fs::path& out_path, std::int64_t eval_seed_flag, bool per_gene) {
    const RunManifest manifest = load_manifest(run_dir / "manifest.json");
    const ExperimentConfig cfg = parse_experiment_config(manifest.config_json);
    LoadedData data = load_corpus_dir(data_dir);
    if (hash_file(data.corpus_path) != manifest.corpus_hash)
        throw DataError("eval: corpus does not match the run manifest");
    if (hash_file(plan_path) != manifest.plan_hash)
        throw DataError("eval: plan does not match the run manifest");
    StagePlan plan = load_plan_json(plan_path, data.vocab.size());

    // hash-verified disjointness: the training split is recomputed and must
    // match the manifest before its complement is used for evaluation
    const HeldoutSplit split = split_heldout(plan, cfg.train.heldout_fraction, manifest.seed);
    for (int k = 0; k < plan.n_stages; ++k) {
        if (hash_ids(split.train_ids[static_cast<std::size_t>(k)]) !=
            manifest.train_id_hashes[static_cast<std::size_t>(k)])
            throw DataError("eval: training split hash mismatch at stage " + std::to_string(k + 1));
    }

    std::unordered_map<std::int64_t, const ExpressionSample*> by_id;
    for (const auto& s : data.corpus) by_id.emplace(s.id, &s);
    auto heldout_of = [&](int stage) {
        std::vector<ExpressionSample> out;
        for (std::int64_t id : split.heldout_ids[static_cast<std::size_t>(stage - 1)]) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw DataError("eval: held-out sample " + std::to_string(id) + " missing");
            out.push_back(*it->second);
        }
        return out;
    };

    EvalOptions options;
    options.mask = cfg.train.mask;  // evaluation mask ratio matches training
    options.eval_seed = eval_seed_flag >= 0 ? static_cast<std::uint64_t>(eval_seed_flag)
                                            : manifest.seed;
    options.per_gene_mean = per_gene;

    const std::string label =
        strategy_label(manifest.strategy_kind, manifest.replay_buffer_per_stage, manifest.lambda);
    std::vector<ResultRow> rows;
    auto eval_checkpoint = [&](const ModelParams& params, int model_stage) {
        for (int j = 1; j <= model_stage; ++j) {
            const auto heldout = heldout_of(j);
            const RegressionResult res = eval_gene_regression(params, plan, heldout, j, options);
            rows.push_back({manifest.run_id, manifest.seed, label, model_stage, "gene_stage",
                            std::to_string(j), "mse", res.loss});
        }
    };
    bool any = false;
    for (int k = 1; k <= plan.n_stages; ++k) {
        const fs::path ckpt = stage_checkpoint_path(run_dir, k);
        if (!fs::exists(ckpt)) continue;
        eval_checkpoint(load_checkpoint(ckpt), k);
        any = true;
    }
    const fs::path oracle = oracle_checkpoint_path(run_dir);
    if (fs::exists(oracle)) {
        eval_checkpoint(load_checkpoint(oracle), plan.n_stages);
        any = true;
    }
    if (!any) throw DataError("eval: no checkpoints found in " + run_dir.string());
    write_results_csv(out_path, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out_path.string() << "\n";
    return 0;
}

int cmd_probe(const fs::path& run_dir, const fs::path& downstream_path, const fs::path& out_path) {
    const RunManifest manifest = load_manifest(run_dir / "manifest.json");
    const ExperimentConfig cfg = parse_experiment_config(manifest.config_json);
    const std::string label =
        strategy_label(manifest.strategy_kind, manifest.replay_buffer_per_stage, manifest.lambda);

    ProbeConfig probe = cfg.probe;
    probe.seed = manifest.seed;

    std::vector<ResultRow> rows;
    auto probe_checkpoint = [&](const fs::path& ckpt_path, int model_stage) {
        const ModelParams params = load_checkpoint(ckpt_path);
        const LabeledDataset ds = load_labeled_jsonl(downstream_path, params.config.vocab_size);
        const ProbeOutcome outcome = train_linear_probe(params, ds, probe);
        rows.push_back({manifest.run_id, manifest.seed, label, model_stage, "downstream", ds.name,
                        "accuracy", outcome.accuracy});
    };
    bool any = false;
    for (int k = 1; k <= manifest.n_stages; ++k) {
        const fs::path ckpt = stage_checkpoint_path(run_dir, k);
        if (!fs::exists(ckpt)) continue;
        probe_checkpoint(ckpt, k);
        any = true;
    }
    const fs::path oracle = oracle_checkpoint_path(run_dir);
    if (fs::exists(oracle)) {
        probe_checkpoint(oracle, manifest.n_stages);
        any = true;
    }
    if (!any) throw DataError("probe: no checkpoints found in " + run_dir.string());
    write_results_csv(out_path, rows);
    std::cout << "wrote " << rows.size() << " rows to " << out_path.string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const fs::path& plan_path, const fs::path& data_dir,
              const fs::path& out_dir, const std::string& param, const std::string& values_csv,
              const std::vector<std::uint64_t>& seeds_flag) {
    if (param != "replay_size" && param != "lambda")
        throw UsageError("sweep: --param must be replay_size or lambda");
    ExperimentConfig cfg = config_from(config_path);
    std::vector<std::string> values;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= values_csv.size(); ++i) {
        if (i == values_csv.size() || values_csv[i] == ',') {
            if (i > start) values.push_back(values_csv.substr(start, i - start));
            start = i + 1;
        }
    }
    if (values.empty()) throw UsageError("sweep: --values must list at least one value");
    const std::vector<std::uint64_t> seeds =
        seeds_flag.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds_flag;

    LoadedData data = load_corpus_dir(data_dir);

    struct Job {
        StrategyConfig strategy;
        std::uint64_t seed;
        fs::path dir;
    };
    std::vector<Job> jobs;
    for (const std::string& value : values) {
        for (std::uint64_t seed : seeds) {
            StrategyConfig strategy = cfg.strategy;
            if (param == "replay_size") {
                strategy.kind = StrategyKind::Replay;
                strategy.replay_buffer_per_stage = std::stoll(value);
            } else {
                strategy.kind = StrategyKind::Distill;
                strategy.lambda = std::stod(value);
            }
            const fs::path dir =
                out_dir / (param + "_" + value + "_seed" + std::to_string(seed));
            jobs.push_back({strategy, seed, dir});
        }
    }

    const int workers = std::min<int>(env_threads(), static_cast<int>(jobs.size()));
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::string> failures;
    auto worker = [&]() {
        for (;;) {
            std::size_t mine;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= jobs.size()) return;
                mine = next++;
            }
            const Job& job = jobs[mine];
            try {
                run_training_job(cfg, job.strategy, job.seed, plan_path, data, job.dir);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures.push_back(job.dir.string() + ": " + e.what());
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& f : failures) std::cerr << "sweep failure: " << f << "\n";
    if (!failures.empty()) return 2;
    std::cout << "sweep: " << jobs.size() << " runs in " << out_dir.string() << "\n";
    return 0;
}

int cmd_report(const std::string& runs_glob, const fs::path& out_path,
               const std::string& plan_path, const std::string& data_dir) {
    const auto files = glob_paths(runs_glob);
    if (files.empty()) throw DataError("report: no files match " + runs_glob);
    std::vector<ResultRow> rows;
    for (const auto& f : files) {
        const auto part = read_results_csv(f);
        rows.insert(rows.end(), part.begin(), part.end());
    }

    std::map<std::string, int> downstream_stage;
    if (!plan_path.empty()) {
        if (data_dir.empty()) throw UsageError("report: --plan requires --data for the vocabulary");
        const GeneVocabulary vocab = load_vocabulary(fs::path(data_dir) / "vocab.txt");
        const StagePlan plan = load_plan_json(plan_path, vocab.size());
        downstream_stage = plan.crucial_stage_of();
    }

    const auto deltas = compute_delta_rows(rows, downstream_stage);
    rows.insert(rows.end(), deltas.begin(), deltas.end());
    const auto cells = aggregate_rows(rows);

    std::string out = "strategy,model_stage,target_kind,target_id,metric,mean,median,seeds\n";
    for (const auto& [key, cell] : cells) {
        std::string flat = key;
        std::replace(flat.begin(), flat.end(), '|', ',');
        out += flat;
        out += ',';
        out += format_double(cell.mean);
        out += ',';
        out += format_double(cell.median);
        out += ',';
        out += std::to_string(cell.n);
        out += '\n';
    }
    atomic_write_file(out_path, out);
    std::cout << "wrote " << cells.size() << " aggregate cells to " << out_path.string() << "\n";
    return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"gil: deterministic gene-incremental-learning benchmark"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, plan_path, run_dir, strategy_name;
    std::string sweep_param, sweep_values, downstream_path, runs_glob;
    std::int64_t seed_flag = -1, eval_seed_flag = -1;
    std::int64_t replay_buffer_flag = -1;
    double lambda_flag = -1.0;
    bool per_gene = false;
    std::vector<std::uint64_t> seeds_flag;

    auto* dg = app.add_subcommand("datagen", "generate the synthetic corpus and downstream sets");
    dg->add_option("--config", config_path, "experiment config JSON");
    dg->add_option("--out", out_path, "output directory")->required();

    auto* pl = app.add_subcommand("plan", "select crucial genes and partition genes/samples");
    pl->add_option("--config", config_path, "experiment config JSON");
    pl->add_option("--data", data_dir, "data directory from datagen")->required();
    pl->add_option("--out", out_path, "plan JSON path")->required();

    auto* tr = app.add_subcommand("train", "run the stage loop for one strategy and seed");
    tr->add_option("--config", config_path, "experiment config JSON");
    tr->add_option("--plan", plan_path, "plan JSON")->required();
    tr->add_option("--data", data_dir, "data directory")->required();
    tr->add_option("--strategy", strategy_name, "baseline|oracle|replay|distill");
    tr->add_option("--seed", seed_flag, "training seed (overrides config)");
    tr->add_option("--replay-buffer", replay_buffer_flag, "replay buffer size per stage");
    tr->add_option("--lambda", lambda_flag, "distillation coefficient");
    tr->add_option("--out", run_dir, "run directory")->required();

    auto* ev = app.add_subcommand("eval", "gene-wise regression of a run's checkpoints");
    ev->add_option("--run", run_dir, "run directory")->required();
    ev->add_option("--plan", plan_path, "plan JSON")->required();
    ev->add_option("--data", data_dir, "data directory")->required();
    ev->add_option("--eval-seed", eval_seed_flag, "evaluation mask seed (default: run seed)");
    ev->add_flag("--per-gene", per_gene, "per-gene means instead of pooled positions");
    ev->add_option("--out", out_path, "results CSV path")->required();

    auto* pr = app.add_subcommand("probe", "linear-probe accuracy of a run's checkpoints");
    pr->add_option("--run", run_dir, "run directory")->required();
    pr->add_option("--downstream", downstream_path, "labeled dataset JSONL")->required();
    pr->add_option("--out", out_path, "results CSV path")->required();

    auto* sw = app.add_subcommand("sweep", "train a grid of replay sizes or lambdas");
    sw->add_option("--config", config_path, "experiment config JSON");
    sw->add_option("--param", sweep_param, "replay_size|lambda")->required();
    sw->add_option("--values", sweep_values, "comma-separated values")->required();
    sw->add_option("--plan", plan_path, "plan JSON")->required();
    sw->add_option("--data", data_dir, "data directory")->required();
    sw->add_option("--seeds", seeds_flag, "training seeds (default: config seed)");
    sw->add_option("--out", out_path, "parent directory for run directories")->required();

    auto* rp = app.add_subcommand("report", "aggregate result CSVs into a pivot table");
    rp->add_option("--runs", runs_glob, "glob over results CSV files")->required();
    rp->add_option("--plan", plan_path, "plan JSON (enables downstream deltas)");
    rp->add_option("--data", data_dir, "data directory (vocabulary for --plan)");
    rp->add_option("--out", out_path, "output table CSV")->required();

    std::vector<const char*> argv;
    argv.push_back("gil");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (dg->parsed()) return cmd_datagen(config_path, out_path);
        if (pl->parsed()) return cmd_plan(config_path, data_dir, out_path);
        if (tr->parsed()) {
            ExperimentConfig cfg = config_from(config_path);
            StrategyConfig strategy = cfg.strategy;
            if (!strategy_name.empty()) strategy.kind = strategy_kind_from_string(strategy_name);
            if (replay_buffer_flag >= 0) strategy.replay_buffer_per_stage = replay_buffer_flag;
            if (lambda_flag >= 0.0) strategy.lambda = lambda_flag;
            const std::uint64_t seed =
                seed_flag >= 0 ? static_cast<std::uint64_t>(seed_flag) : cfg.seed;
            LoadedData data = load_corpus_dir(data_dir);
            return run_training_job(cfg, strategy, seed, plan_path, data, run_dir);
        }
        if (ev->parsed())
            return cmd_eval(run_dir, plan_path, data_dir, out_path, eval_seed_flag, per_gene);
        if (pr->parsed()) return cmd_probe(run_dir, downstream_path, out_path);
        if (sw->parsed())
            return cmd_sweep(config_path, plan_path, data_dir, out_path, sweep_param, sweep_values,
                             seeds_flag);
        if (rp->parsed()) return cmd_report(runs_glob, out_path, plan_path, data_dir);
        std::cerr << "usage error: no subcommand\n" << app.help();
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace gil
