#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gil/expression.hpp"
#include "gil/model.hpp"
#include "gil/plan.hpp"

namespace gil {

// ---------------------------------------------------------------------------
// expression data: one JSON object per line
//   {"genes":[...],"id":N,"label":C,"values":[...]}   (label optional)
// gene indices strictly increasing; loaders validate every invariant and
// reject rather than repair.
// ---------------------------------------------------------------------------

void save_expression_jsonl(const std::filesystem::path& path,
                           std::span<const ExpressionSample> samples);
std::vector<ExpressionSample> load_expression_jsonl(const std::filesystem::path& path,
                                                    std::int64_t vocab_size);

/// Labeled variant: every line must carry a label; class count is the
/// largest label + 1 and every class must be represented. The dataset name
/// is the file stem.
LabeledDataset load_labeled_jsonl(const std::filesystem::path& path, std::int64_t vocab_size);

/// One gene symbol per line; index = 0-based line number.
void save_vocabulary(const std::filesystem::path& path, const GeneVocabulary& vocab);
GeneVocabulary load_vocabulary(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// stage plan: a single JSON document
//   {"base":[...],"crucial":{name:[...]},"n_stages":n,
//    "stages":[{"genes":[...],"sample_ids":[...]}]}
// ---------------------------------------------------------------------------

void save_plan_json(const std::filesystem::path& path, const StagePlan& plan);
StagePlan load_plan_json(const std::filesystem::path& path, std::int64_t vocab_size);

// ---------------------------------------------------------------------------
// checkpoint: 4-byte little-endian header length, UTF-8 JSON header
// {format_version, model config, tensor manifest name -> {shape, offset,
// dtype}, payload checksum}, then concatenated little-endian IEEE-754
// binary32 payloads in manifest (sorted-name) order. save->load->save is
// byte-identical; one flipped payload byte fails the checksum.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// result rows (CSV schema shared by eval/probe/report)
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string strategy;
    int model_stage = 0;
    std::string target_kind;  // gene_stage | downstream
    std::string target_id;
    std::string metric;  // mse | accuracy | delta
    double value = 0.0;
};

std::string results_csv_text(std::span<const ResultRow> rows);
void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// run manifest: everything needed to reproduce a run
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string strategy_kind;
    std::int64_t replay_buffer_per_stage = 0;
    double lambda = 0.0;
    int n_stages = 0;
    std::string config_json;  // resolved experiment config, canonical form
    std::string corpus_hash;
    std::string vocab_hash;
    std::string plan_hash;
    std::vector<std::string> train_id_hashes;  // per stage
};

void save_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest load_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// hashing and atomic writes
// ---------------------------------------------------------------------------

std::string hex64(std::uint64_t value);
std::string hash_file(const std::filesystem::path& path);
std::string hash_ids(std::span<const std::int64_t> ids);

/// Write-temp-then-rename; concurrent writers never interleave.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

/// Shortest round-trip decimal form of a double (CSV/JSON value formatting).
std::string format_double(double v);

/// Minimal glob over absolute/relative paths: '*' matches within one path
/// segment, "**" spans segments. Results are sorted.
std::vector<std::filesystem::path> glob_paths(const std::string& pattern);

}  // namespace gil
