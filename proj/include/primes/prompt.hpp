#pragma once

#include "primes/core.hpp"

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace primes::prompt {

/// Delimiters around the final structured answer in a model response. Any
/// reasoning must come before the opening tag.
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

/// Placeholder names that are always resolvable.
inline constexpr std::string_view kBuiltinSchema = "schema";
inline constexpr std::string_view kBuiltinExamples = "examples";

struct ShotExample {
    std::string input;
    LabelMap answer;
    std::optional<std::string> rationale;

    bool operator==(const ShotExample&) const = default;
};

struct Strategy {
    int shots = 0;
    std::vector<ShotExample> examples;
    bool chain_of_thought = false;
    bool structured_output = true;

    bool operator==(const Strategy&) const = default;
};

struct PromptTemplate {
    std::string name;
    std::string task_description;
    std::string context;
    std::string output_format_spec;
    LabelSchema schema;
    /// DataItem fields the body may reference.
    std::vector<std::string> input_fields;
    Strategy strategy;
    std::string body;

    /// Reads a template file: a `---` front-matter block (name, schema,
    /// fields, shots, chain_of_thought, structured_output) followed by
    /// `## task`, `## context`, `## output_format`, `## example` (repeatable)
    /// and `## body` sections. The schema path is relative to the file.
    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate parse(std::string_view text, const std::filesystem::path& base_dir);

    Json to_json() const;
    static PromptTemplate from_json(const Json& j);
};

struct LintFinding {
    Severity severity = Severity::error;
    std::string code;
    std::string message;
};

/// Placeholder names in order of appearance (duplicates kept). Unterminated
/// `{{` is reported through `malformed`.
std::vector<std::string> placeholders(std::string_view body, bool* malformed = nullptr);

/// Checks the three required prompt parts and strategy consistency.
/// Codes: missing-task-description, missing-output-format,
/// example-count-mismatch, example-label-invalid, unresolved-placeholder,
/// malformed-placeholder, cot-with-bare-answer (warning).
std::vector<LintFinding> lint_template(const PromptTemplate& tmpl);
bool has_errors(const std::vector<LintFinding>& findings);

/// Trailing whitespace and line endings normalised in every text part.
PromptTemplate canonicalize(const PromptTemplate& tmpl);
std::string canonical_text(const PromptTemplate& tmpl);
std::string template_digest(const PromptTemplate& tmpl);

struct PromptVersion {
    std::string version_id;
    std::optional<std::string> parent_version;
    std::string changelog;
    std::string created_at;
    /// Canonical template content.
    PromptTemplate content;

    Json to_json() const;
    static PromptVersion from_json(const Json& j);
};

struct RenderedPrompt {
    std::string text;
    std::string version_id;
    std::string item_id;
};

/// Renders a version for one item. Pure in (version, item). Throws
/// ValidationError naming the placeholder and item when a field is missing.
RenderedPrompt compose_prompt(const PromptVersion& version, const DataItem& item);

/// The schema section as it appears in rendered prompts.
std::string render_schema_section(const LabelSchema& schema);

/// Append-only store of prompt versions (newline-delimited JSON).
class PromptLedger {
public:
    /// Loads existing versions if the file exists.
    explicit PromptLedger(std::filesystem::path path);

    /// Idempotent: identical canonical content returns the stored version and
    /// writes nothing. Throws ValidationError if lint reports errors or the
    /// parent is unknown.
    PromptVersion register_version(const PromptTemplate& tmpl, std::optional<std::string> parent = std::nullopt,
                                   std::string changelog = {});

    std::optional<PromptVersion> find(const std::string& version_id) const;
    std::vector<PromptVersion> versions() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::vector<PromptVersion> versions_;
};

/// Version without persistence, for callers that only need an id.
PromptVersion make_version(const PromptTemplate& tmpl, std::optional<std::string> parent = std::nullopt,
                           std::string changelog = {});

} // namespace primes::prompt
