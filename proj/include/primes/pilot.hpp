#pragma once

#include "primes/core.hpp"
#include "primes/csv.hpp"
#include "primes/prompt.hpp"
#include "primes/validation.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace primes::llm {
class LlmClient;
}

namespace primes::pilot {

inline constexpr double kDefaultGateThreshold = 0.9;
inline constexpr std::size_t kDefaultMinItems = 30;

// ---------------------------------------------------------------------------
// Sampling

/// Deterministic uniform integer in [0, bound) from a 64-bit engine, by
/// rejection. Unlike std::uniform_int_distribution the output sequence is the
/// same on every standard library.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound);

/// Largest-remainder proportional allocation of n over strata sizes. Ties on
/// the remainder go to the lexicographically smaller stratum name.
std::map<std::string, std::size_t> allocate_proportional(const std::map<std::string, std::size_t>& strata,
                                                         std::size_t n);

/// Draws n item ids without replacement. Items are ordered by id before
/// shuffling so the result depends only on the dataset contents and the seed.
/// With stratify_by, items are grouped by that metadata key (missing values
/// form the "" stratum) and each stratum gets its proportional share.
/// Throws ConfigError unless 1 <= n <= dataset size.
std::vector<std::string> draw_sample(const std::vector<DataItem>& dataset, std::size_t n, std::uint64_t seed,
                                     const std::optional<std::string>& stratify_by = std::nullopt);

// ---------------------------------------------------------------------------
// Agreement

enum class AgreementStatus { defined, degenerate };
std::string to_string(AgreementStatus status);

struct AgreementResult {
    std::string task;
    std::vector<std::string> categories;
    /// contingency[i][j]: items annotator A put in categories[i] and B in categories[j].
    std::vector<std::vector<std::int64_t>> contingency;
    std::int64_t n_items = 0;
    double p_o = 0.0;
    double p_e = 0.0;
    std::optional<double> kappa;
    AgreementStatus status = AgreementStatus::defined;

    Json to_json() const;
    static AgreementResult from_json(const Json& j);
};

/// Kappa over two aligned label sequences. Counts are kept as integers and the
/// coefficient is formed as (D*n - S) / (n^2 - S) with D the diagonal sum and
/// S the sum of marginal products, so exact rational inputs stay exact where
/// a double can represent them.
AgreementResult kappa_from_labels(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                  const std::vector<std::string>& categories, const std::string& task = {});

/// Throws ValidationError listing the symmetric difference when the item sets
/// differ, and when an item lacks a label for the task.
AgreementResult cohens_kappa(const std::vector<Annotation>& a, const std::vector<Annotation>& b, const Task& task);

std::vector<AgreementResult> agreement_for_schema(const std::vector<Annotation>& a, const std::vector<Annotation>& b,
                                                  const LabelSchema& schema);

/// {"tasks": [...]} as written by `primes pilot kappa`.
Json agreement_document(const std::vector<AgreementResult>& results);
std::vector<AgreementResult> agreement_from_document(const Json& doc);

// ---------------------------------------------------------------------------
// Gate

enum class GateComparison { at_least, greater_than };
GateComparison parse_gate_comparison(const std::string& text);
std::string to_string(GateComparison comparison);

enum class GateOutcome { pass, refine };
std::string to_string(GateOutcome outcome);

struct GateDecision {
    GateOutcome outcome = GateOutcome::refine;
    std::vector<std::string> reasons;

    bool passed() const { return outcome == GateOutcome::pass; }
    Json to_json() const;
    static GateDecision from_json(const Json& j);
};

/// Pass iff every task is defined, has n_items >= min_n and kappa meets the
/// threshold (>= by default). One reason per failing condition otherwise.
GateDecision evaluate_gate(const std::vector<AgreementResult>& results, double threshold = kDefaultGateThreshold,
                           std::size_t min_n = kDefaultMinItems, GateComparison comparison = GateComparison::at_least);

// ---------------------------------------------------------------------------
// Disagreements

struct Disagreement {
    std::string item_id;
    std::string task;
    std::string label_a;
    std::string label_b;
    std::string rationale_a;
    std::string rationale_b;

    Json to_json() const;
};

/// One row per (item, task) whose labels differ, sorted by item id then task.
std::vector<Disagreement> list_disagreements(const std::vector<Annotation>& a, const std::vector<Annotation>& b,
                                             const LabelSchema& schema);
std::string disagreements_csv(const std::vector<Disagreement>& rows);

// ---------------------------------------------------------------------------
// Annotation CSV interchange
//
// Columns: item_id, optional annotator, then per task "<task>" and
// "<task>_rationale". Rationale columns may be absent.

std::vector<Annotation> annotations_from_csv(const csv::Table& table, const LabelSchema& schema,
                                             const Annotator& default_annotator);
std::vector<Annotation> read_annotations_csv(const std::filesystem::path& path, const LabelSchema& schema,
                                             const Annotator& default_annotator);
std::string annotations_csv(const std::vector<Annotation>& annotations, const LabelSchema& schema);

/// Schema implied by annotation CSVs: every column other than item_id,
/// annotator and *_rationale is a task; categories are the sorted union of
/// the values seen.
LabelSchema infer_schema(const std::vector<csv::Table>& tables);

// ---------------------------------------------------------------------------
// LLM side of the dual annotation

struct ModelAnnotations {
    std::vector<Annotation> annotations;
    /// Items whose responses failed format validation, with the findings.
    std::vector<validation::ValidationFinding> failures;
    std::vector<std::string> failed_item_ids;
};

/// Renders, completes (through the cache when the client has one) and parses
/// every item. Up to `concurrency` calls run at once; output order follows
/// the input order.
ModelAnnotations annotate_with_model(llm::LlmClient& client, const prompt::PromptVersion& version,
                                     const std::vector<DataItem>& items, std::size_t concurrency = 4);

/// Keeps only annotations whose item id is in `ids`.
std::vector<Annotation> restrict_to(const std::vector<Annotation>& annotations, const std::vector<std::string>& ids);

// ---------------------------------------------------------------------------
// Round ledger

struct PilotRound {
    int round_number = 0;
    std::string prompt_version_id;
    std::vector<std::string> sample_item_ids;
    /// False when the previous round's sample was reused.
    bool fresh_sample = true;
    std::vector<AgreementResult> agreement;
    double threshold = kDefaultGateThreshold;
    std::size_t min_n = kDefaultMinItems;
    GateComparison comparison = GateComparison::at_least;
    GateDecision gate;
    std::size_t parse_failures = 0;
    std::string notes;
    std::string created_at;

    Json to_json() const;
    static PilotRound from_json(const Json& j);
};

/// Append-only newline-delimited ledger of pilot rounds.
class RoundLedger {
public:
    explicit RoundLedger(std::filesystem::path path);

    /// Throws ValidationError unless the round number exceeds every stored
    /// one and the gate decision matches re-evaluating the stored agreement.
    void append(const PilotRound& round);
    const std::vector<PilotRound>& rounds() const { return rounds_; }
    std::optional<PilotRound> last() const;

private:
    std::filesystem::path path_;
    std::vector<PilotRound> rounds_;
};

} // namespace primes::pilot
