#pragma once

#include "primes/benchmark.hpp"
#include "primes/core.hpp"
#include "primes/ingestion.hpp"
#include "primes/llm_client.hpp"
#include "primes/pilot.hpp"
#include "primes/validation.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace primes::pipeline {

inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr std::size_t kDefaultPilotSampleSize = 30;
inline constexpr std::size_t kDefaultConcurrency = 4;

struct PilotSettings {
    std::size_t sample_size = kDefaultPilotSampleSize;
    double threshold = pilot::kDefaultGateThreshold;
    std::size_t min_n = pilot::kDefaultMinItems;
    pilot::GateComparison comparison = pilot::GateComparison::at_least;
    std::optional<std::string> stratify_by;
    bool reuse_sample = false;
    /// Model that plays the second annotator; the first model when empty.
    std::string model_id;
    std::optional<std::filesystem::path> human_annotations;
};

struct BenchmarkSettings {
    std::optional<std::filesystem::path> oracle;
    std::optional<std::filesystem::path> ratings;
    double confidence = 0.95;
    double margin = 0.05;
    double p = 0.5;
    std::optional<std::int64_t> population;
    std::optional<benchmark::Weights> weights;
};

struct ValidationSettings {
    int shingle_width = validation::kDefaultShingleWidth;
    double duplicate_threshold = validation::kDefaultDuplicateThreshold;
    std::size_t min_term_length = 2;
    std::vector<std::string> allowed_vocabulary;
    std::optional<std::filesystem::path> rules;
};

/// Everything a run needs. Relative paths in a config file resolve against
/// the file's directory. Precedence: flags > file > defaults; `sources`
/// records where each top-level setting came from.
struct PipelineConfig {
    std::optional<std::filesystem::path> dataset;
    std::optional<ingest::IngestSpec> ingest;
    std::filesystem::path schema;
    std::filesystem::path prompt_template;
    std::vector<llm::ModelSpec> models;
    PilotSettings pilot;
    BenchmarkSettings benchmark;
    ValidationSettings validation;
    llm::RetryPolicy retry;
    std::filesystem::path cache_dir = "cache";
    std::filesystem::path out_dir = "out";
    std::string run_id = "run";
    std::uint64_t seed = kDefaultSeed;
    std::size_t concurrency = kDefaultConcurrency;

    std::map<std::string, std::string> sources;

    const llm::ModelSpec& model(const std::string& model_id) const;

    /// Every setting that can change an output, with the value in effect.
    /// Paths are replaced by digests of the files they name.
    Json parameters() const;
};

/// Starts from defaults and applies a JSON config file on top.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base_dir);

ingest::IngestSpec ingest_spec_from_json(const Json& j, const std::filesystem::path& base_dir);

/// One line of the enhanced dataset.
struct EnhancedRecord {
    std::string item_id;
    std::string locator;
    std::string project;
    std::string model_id;
    std::string prompt_version_id;
    /// "ok", "invalid" (error findings) or "unparsed".
    std::string status;
    LabelMap labels;
    std::optional<std::string> rationale;
    FieldMap fields;
    std::vector<std::string> finding_codes;

    Json to_json() const;
};

/// Flattens records into the table the expectations engine reads: item_id,
/// locator, project, model_id, prompt_version_id, status, label.<task>,
/// rationale, field.<name>.
validation::DataTable to_table(const std::vector<EnhancedRecord>& records, const LabelSchema& schema);

struct PipelineResult {
    /// "complete", "refine" (pilot gate failed) or "incomplete".
    std::string status;
    pilot::GateDecision gate;
    int pilot_round = 0;
    std::string prompt_version_id;
    std::string selected_model;
    std::size_t items = 0;
    std::size_t findings = 0;
    std::string enhanced_dataset_digest;
    std::string manifest_digest;
    std::filesystem::path manifest_path;
    std::vector<std::filesystem::path> project_csvs;
};

/// Runs prompt -> pilot -> benchmark -> labelling + validation and writes
/// every artifact under config.out_dir. Throws ConfigError when the run id
/// is already present in the out dir's provenance ledger.
PipelineResult run_pipeline(const PipelineConfig& config, const llm::ClientOptions& base_options = {});

/// Sha-256 of a file's bytes.
std::string file_digest(const std::filesystem::path& path);

} // namespace primes::pipeline
