#pragma once

#include "primes/core.hpp"
#include "primes/csv.hpp"
#include "primes/money.hpp"
#include "primes/prompt.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace primes::llm {
class LlmClient;
}

namespace primes::benchmark {

// ---------------------------------------------------------------------------
// Oracle

struct OracleEntry {
    std::string item_id;
    LabelMap gold;
    std::string annotator;
    std::string basis;

    bool operator==(const OracleEntry&) const = default;
};

/// Expert gold labels, one entry per item, every task labelled. Stored as a
/// long CSV with one row per (item, task): item_id,task,gold_label,annotator,basis.
class Oracle {
public:
    /// Throws ValidationError on duplicate items, missing tasks or labels the
    /// schema does not allow.
    Oracle(LabelSchema schema, std::vector<OracleEntry> entries);

    static Oracle from_csv(const csv::Table& table, const LabelSchema& schema);
    static Oracle load(const std::filesystem::path& path, const LabelSchema& schema);
    std::string to_csv() const;

    const LabelSchema& schema() const { return schema_; }
    /// Sorted by item id.
    const std::vector<OracleEntry>& entries() const { return entries_; }
    const OracleEntry* find(const std::string& item_id) const;
    std::size_t size() const { return entries_.size(); }
    /// Digest of the canonical CSV form; independent of input order.
    std::string digest() const;

private:
    LabelSchema schema_;
    std::vector<OracleEntry> entries_;
};

// ---------------------------------------------------------------------------
// Sample size

/// z for the supported confidence levels (0.90, 0.95, 0.99).
double z_for_confidence(double confidence);

/// n0 = z^2 p (1-p) / e^2, optionally corrected for a finite population N:
/// n = n0 / (1 + (n0 - 1) / N). Returns the ceiling. Throws ConfigError on
/// out-of-range arguments.
std::int64_t required_sample_size(std::optional<std::int64_t> population, double confidence, double margin,
                                  double p = 0.5);

/// The estimate plus its inputs, as written by `primes bench size`.
Json sample_size_document(std::optional<std::int64_t> population, double confidence, double margin, double p = 0.5);

// ---------------------------------------------------------------------------
// Metrics

struct CategoryStats {
    std::string category;
    std::int64_t gold = 0;
    std::int64_t predicted = 0;
    std::int64_t true_positive = 0;
    /// Unset when the denominator is zero.
    std::optional<double> precision;
    std::optional<double> recall;
};

inline constexpr std::string_view kUnparsedColumn = "(unparsed)";

struct TaskMetrics {
    std::string task;
    std::vector<std::string> categories;
    /// Rows: gold category. Columns: predicted category, then one extra column
    /// counting parse failures. Row sums equal the gold counts.
    std::vector<std::vector<std::int64_t>> confusion;
    std::int64_t correct = 0;
    std::int64_t total = 0;
    double accuracy = 0.0;
    std::vector<CategoryStats> per_category;
};

struct ModelRunMetrics {
    std::string model_id;
    std::string prompt_version_id;
    std::string oracle_digest;
    std::int64_t n_items = 0;
    std::vector<TaskMetrics> tasks;
    /// Mean of the per-task accuracies.
    double mean_accuracy = 0.0;
    Money cost;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    double latency_median_ms = 0.0;
    std::int64_t latency_p95_ms = 0;
    std::optional<double> interpretability;
    std::int64_t interpretability_count = 0;
    std::int64_t parse_failure_count = 0;
    bool incomplete = false;
    std::string incomplete_reason;

    Json to_json() const;
    static ModelRunMetrics from_json(const Json& j);
};

/// Per-item outcome fed to the aggregator; exposed so metrics can be checked
/// against hand-built cases.
struct ItemOutcome {
    std::string item_id;
    /// Unset on a parse failure.
    std::optional<LabelMap> predicted;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t latency_ms = 0;
    Money cost;
};

/// Builds metrics from outcomes over the oracle. Items missing from
/// `outcomes` are not counted (the run is then marked incomplete by the caller).
ModelRunMetrics aggregate_metrics(const Oracle& oracle, const std::vector<ItemOutcome>& outcomes);

/// Interpretability ratings: CSV item_id,model_id,rating with ratings 1..5.
std::map<std::string, std::vector<int>> read_ratings_csv(const std::filesystem::path& path);
void apply_ratings(ModelRunMetrics& metrics, const std::map<std::string, std::vector<int>>& ratings_by_model);

struct EvaluateOptions {
    std::size_t concurrency = 4;
};

/// Renders, completes (cached) and parses every oracle item with one model.
/// Unparseable responses count as parse failures and as wrong. A hard
/// provider failure stops the run; metrics over the items finished so far
/// are returned with incomplete = true.
ModelRunMetrics evaluate_model(llm::LlmClient& client, const prompt::PromptVersion& version, const Oracle& oracle,
                               const std::map<std::string, DataItem>& items, const EvaluateOptions& options = {});

// ---------------------------------------------------------------------------
// Comparison

struct Weights {
    double accuracy = 1.0;
    double cost = 0.0;
    double interpretability = 0.0;

    Json to_json() const;
};

struct RankedRun {
    int rank = 0;
    ModelRunMetrics metrics;
    std::optional<double> score;
};

struct ComparisonReport {
    std::vector<RankedRun> ranking;
    std::optional<Weights> weights;

    std::string to_text() const;
    Json to_json() const;
};

/// Default order: mean accuracy desc, cost asc, model id asc. With weights the
/// score is w_acc*norm(acc) + w_cost*(1 - norm(cost)) + w_int*norm(interp),
/// each min-max normalised over the runs, and ties fall back to the default
/// order. Throws ValidationError when runs disagree on oracle or prompt version.
ComparisonReport compare_models(std::vector<ModelRunMetrics> runs, const std::optional<Weights>& weights = std::nullopt);

// ---------------------------------------------------------------------------
// Benchmark suites

inline constexpr std::string_view kDefaultNegativeLabel = "none";

struct BenchmarkSuite {
    Oracle oracle;
    /// Seeded shuffle of positive and negative item ids.
    std::vector<std::string> order;
    std::size_t positives = 0;
    std::size_t negatives = 0;

    Json composition() const;
};

/// Merges oracle positives with negative distractors labelled `negative_label`
/// on every task. Throws ConfigError when a task lacks that category.
BenchmarkSuite build_benchmark_suite(const Oracle& oracle, const std::vector<DataItem>& negatives, std::uint64_t seed,
                                     const std::string& negative_label = std::string(kDefaultNegativeLabel));

} // namespace primes::benchmark
