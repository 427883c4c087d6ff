#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gil/datagen.hpp"
#include "gil/evaluation.hpp"
#include "gil/model.hpp"
#include "gil/strategies.hpp"

namespace gil {

struct PlanParams {
    int n_stages = 2;
    double base_fraction = 0.5;
    std::int64_t crucial_genes_per_dataset = 20;
    std::map<std::string, int> stage_assignment = {{"d1", 1}, {"d2", 2}};
    /// Datasets whose selected crucial genes are kept out of every stage
    /// (control plans for the probe evaluation).
    std::vector<std::string> exclude_crucial;
};

struct PathsConfig {
    std::string data;
    std::string out;
};

/// The whole experiment in one strictly-parsed document: unknown keys are
/// fatal anywhere, and the canonical dump round-trips bit-identically.
struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    ModelConfig model;  // vocab_size is resolved from the vocabulary file
    TrainConfig train;
    StrategyConfig strategy;
    PlanParams plan;
    GenConfig datagen;
    ProbeConfig probe;
    PathsConfig paths;

    void validate() const;
};

ExperimentConfig default_experiment_config();
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Canonical full-form serialization; parse(dump(c)) == c and dump is
/// byte-stable, so it doubles as the manifest's embedded config.
std::string dump_experiment_config(const ExperimentConfig& config);

}  // namespace gil
