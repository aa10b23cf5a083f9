#pragma once

#include "primes/core.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace primes::validation {

enum class FindingKind { format, duplicate, hallucination, expectation };
std::string to_string(FindingKind kind);

struct ValidationFinding {
    std::string item_id;
    FindingKind kind = FindingKind::format;
    Severity severity = Severity::error;
    /// Machine-readable subtype, e.g. "missing-key", "near-duplicate".
    std::string code;
    std::string detail;
    /// Offending keys, values, terms or pair ids. Never empty.
    std::vector<std::string> evidence;
    std::optional<double> score;

    Json to_json() const;
};

/// Sorts by (item_id, kind, code, evidence); the report order everywhere.
void sort_findings(std::vector<ValidationFinding>& findings);
std::string findings_csv(const std::vector<ValidationFinding>& findings);
std::string findings_summary(const std::vector<ValidationFinding>& findings);

// ---------------------------------------------------------------------------
// Format conformance

struct OutputSchema {
    struct TaskKey {
        std::string key;
        std::vector<std::string> allowed;
    };
    std::vector<TaskKey> tasks;
    bool forbid_extra_keys = true;
    std::optional<std::string> rationale_key = "rationale";
    /// Optional keys whose string (or string list) values are treated as quoted evidence.
    std::vector<std::string> evidence_keys = {"evidence"};

    static OutputSchema from_label_schema(const LabelSchema& schema);
};

struct ParsedOutput {
    LabelMap labels;
    std::optional<std::string> rationale;
    std::vector<std::string> evidence;
};

/// Exactly one of `parsed` / error findings is populated.
struct FormatResult {
    std::optional<ParsedOutput> parsed;
    std::vector<ValidationFinding> findings;

    bool ok() const { return parsed.has_value(); }
};

/// Contents of the last `<answer>...</answer>` block, or the whole response if
/// it is a bare JSON object; nullopt otherwise.
std::optional<std::string> extract_answer_block(std::string_view raw);

/// Codes: unparseable, not-an-object, missing-key, unknown-key,
/// illegal-category, bad-rationale.
FormatResult validate_format(std::string_view raw, const OutputSchema& schema, const std::string& item_id = {});

// ---------------------------------------------------------------------------
// Duplication

struct OutputText {
    std::string item_id;
    std::string text;
};

/// Lower-case, strip ASCII punctuation, collapse whitespace.
std::string normalize_for_shingles(std::string_view text);

/// Contiguous `width`-word windows of the normalised text. Texts shorter than
/// the width yield a single shingle of all their words; empty text yields none.
std::set<std::string> shingles(std::string_view text, int width);

/// |A ∩ B| / |A ∪ B|; 0 when both are empty.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

inline constexpr int kDefaultShingleWidth = 3;
inline constexpr double kDefaultDuplicateThreshold = 0.8;

/// Exact duplicates (equal digests) are errors; pairs with Jaccard >= threshold
/// are warnings. Each pair is reported once, under the smaller item id.
std::vector<ValidationFinding> detect_duplicates(std::span<const OutputText> outputs,
                                                 double threshold = kDefaultDuplicateThreshold,
                                                 int shingle_width = kDefaultShingleWidth);

// ---------------------------------------------------------------------------
// Hallucination grounding (lexical)

struct GroundingConfig {
    std::set<std::string> allowed_vocabulary;
    std::set<std::string> stop_words = default_stop_words();
    /// Task and category names are never flagged.
    std::optional<LabelSchema> schema;
    std::size_t min_term_length = 2;

    static std::set<std::string> default_stop_words();
};

/// Whitespace tokens with surrounding punctuation stripped and lower-cased.
/// Path-like tokens ("src/train.py") stay whole.
std::vector<std::string> tokenize_terms(std::string_view text);

/// Terms that must be grounded: not stop words, not schema names, not allowed
/// vocabulary, not shorter than the minimum. Order of first appearance.
std::vector<std::string> content_terms(std::string_view text, const GroundingConfig& config);

/// One warning per content term of the rationale/evidence that occurs in no
/// field of the source item (case-insensitive substring search).
std::vector<ValidationFinding> flag_hallucinations(const ParsedOutput& output, const DataItem& source,
                                                   const GroundingConfig& config);

// ---------------------------------------------------------------------------
// Expectations engine

/// Flat rows keyed by column name; a missing optional is a null cell.
struct DataTable {
    std::vector<std::string> columns;
    std::vector<std::map<std::string, std::optional<std::string>>> rows;

    bool has_column(const std::string& name) const;
};

enum class RuleKind { value_in_set, matches_regex, non_null, unique, numeric_range, row_count_between };
std::string to_string(RuleKind kind);

struct Rule {
    RuleKind kind = RuleKind::non_null;
    std::string field;
    std::vector<std::string> values;
    std::string pattern;
    double min = 0;
    double max = 0;
    std::size_t line = 0;

    std::string describe() const;
};

/// One rule per line: `<kind> <field> <params...>`; `#` starts a comment.
///   value-in-set <field> a,b,c
///   matches-regex <field> <ECMAScript regex, whole value must match>
///   non-null <field>
///   unique-across-dataset <field>        (alias: unique)
///   numeric-range <field> <min> <max>    (inclusive)
///   row-count-between <min> <max>
/// Throws ConfigError on syntax errors.
std::vector<Rule> parse_rules(std::string_view text);

struct RuleFailure {
    std::size_t row_index = 0;
    std::string item_id;
    std::string value;
};

struct RuleResult {
    Rule rule;
    bool passed = true;
    std::vector<RuleFailure> failures;
    std::string message;
};

struct ExpectationReport {
    std::vector<RuleResult> results;
    bool passed = true;

    Json to_json() const;
    std::string to_text() const;
    /// One expectation finding per failing row, for the combined findings report.
    std::vector<ValidationFinding> to_findings() const;
};

/// Throws ConfigError before evaluating anything if a rule names an unknown column.
ExpectationReport run_expectations(const DataTable& table, const std::vector<Rule>& rules);

} // namespace primes::validation
