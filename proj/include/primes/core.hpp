#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace primes {

using Json = nlohmann::json;
using FieldMap = std::map<std::string, std::string>;
using LabelMap = std::map<std::string, std::string>;

enum class Severity { error, warning };
std::string to_string(Severity severity);

/// Where a data item came from: a repository plus an optional commit and file.
struct SourceLocator {
    std::string repo;
    std::optional<std::string> commit;
    std::optional<std::string> path;

    /// Lexically normalised form used for identity: generic separators, no
    /// trailing slash, "." segments removed, commit hash lower-cased.
    SourceLocator normalized() const;

    /// Short human-facing locator: the path, else the commit, else the repo.
    std::string display() const;

    bool operator==(const SourceLocator&) const = default;
};

/// Digest of (normalised locator, canonicalised fields). Field names are
/// sorted, trailing whitespace is stripped from each value, and every part is
/// framed by unit/record separators. Throws ValidationError on empty fields.
std::string compute_item_id(const SourceLocator& source, const FieldMap& fields);

/// One unit to classify. Immutable; the id is derived at construction.
class DataItem {
public:
    DataItem(SourceLocator source, FieldMap fields, FieldMap metadata = {});

    const std::string& id() const { return id_; }
    const SourceLocator& source() const { return source_; }
    const FieldMap& fields() const { return fields_; }
    const FieldMap& metadata() const { return metadata_; }

    /// Returns nullptr when the field is absent.
    const std::string* field(const std::string& name) const;

private:
    std::string id_;
    SourceLocator source_;
    FieldMap fields_;
    FieldMap metadata_;
};

struct Task {
    std::string name;
    std::vector<std::string> categories;

    bool has_category(const std::string& category) const;
    bool operator==(const Task&) const = default;
};

/// Ordered classification tasks, each with its own closed category set.
class LabelSchema {
public:
    /// Throws ValidationError when there are no tasks, a task has no
    /// categories, or names repeat.
    explicit LabelSchema(std::vector<Task> tasks);

    const std::vector<Task>& tasks() const { return tasks_; }
    const Task* find(const std::string& task_name) const;
    const Task& task(const std::string& task_name) const;
    bool is_legal(const std::string& task_name, const std::string& category) const;

    Json to_json() const;
    static LabelSchema from_json(const Json& j);
    static LabelSchema load(const std::filesystem::path& path);

    bool operator==(const LabelSchema&) const = default;

private:
    std::vector<Task> tasks_;
};

struct Annotator {
    enum class Kind { human, model };
    Kind kind = Kind::human;
    std::string id;

    std::string to_string() const;
    static Annotator parse(const std::string& text);
    bool operator==(const Annotator&) const = default;
};

/// A set of labels for one item from one annotator. Only constructible with a
/// schema that accepts every task and category it carries.
class Annotation {
public:
    Annotation(const LabelSchema& schema, std::string item_id, Annotator annotator, LabelMap labels,
               std::optional<std::string> rationale = std::nullopt, std::string created_at = {});

    const std::string& item_id() const { return item_id_; }
    const Annotator& annotator() const { return annotator_; }
    const LabelMap& labels() const { return labels_; }
    const std::optional<std::string>& rationale() const { return rationale_; }
    const std::string& created_at() const { return created_at_; }

    /// nullptr when the task was not labelled.
    const std::string* label(const std::string& task) const;

    Json to_json() const;
    static Annotation from_json(const LabelSchema& schema, const Json& j);

private:
    std::string item_id_;
    Annotator annotator_;
    LabelMap labels_;
    std::optional<std::string> rationale_;
    std::string created_at_;
};

struct TokenUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    bool operator==(const TokenUsage&) const = default;
};

struct ProvenanceRecord {
    std::string run_id;
    std::string model_id;
    std::string prompt_version_id;
    std::string item_id;
    std::string request_digest;
    std::string raw_response;
    TokenUsage token_usage;
    std::int64_t latency_ms = 0;
    std::string finish_reason;
    std::string created_at;

    /// Throws ValidationError if a key field is empty or a count is negative.
    void check() const;

    Json to_json() const;
    static ProvenanceRecord from_json(const Json& j);
};

/// ISO-8601 UTC timestamp for informational fields. Never part of a digest.
std::string now_iso8601();

Json to_json(const SourceLocator& source);
SourceLocator source_from_json(const Json& j);
Json to_json(const DataItem& item);
/// Recomputes the id and throws ValidationError if a stored id disagrees.
DataItem item_from_json(const Json& j);

/// Newline-delimited dataset interchange (one JSON object per line).
void write_dataset(const std::filesystem::path& path, const std::vector<DataItem>& items);
std::vector<DataItem> read_dataset(const std::filesystem::path& path);

/// Digest over the sorted item ids; identifies a dataset independent of order.
std::string dataset_digest(const std::vector<DataItem>& items);

} // namespace primes
