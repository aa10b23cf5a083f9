#pragma once

#include "primes/core.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace primes::ingest {

enum class Mode { files, commits, tabular };

Mode parse_mode(const std::string& text);
std::string to_string(Mode mode);

struct IngestSpec {
    Mode mode = Mode::files;
    std::filesystem::path root_or_path;
    std::vector<std::string> include_globs;
    std::vector<std::string> exclude_globs;
    /// Revision range understood by `git log`, e.g. "v1.0..HEAD". Whole history when unset.
    std::optional<std::string> commit_range;
    /// Tabular mode: (column, field) pairs in declaration order.
    std::vector<std::pair<std::string, std::string>> field_mapping;
    /// Commits mode: also store full patch text in a "patch" field.
    bool include_patch = false;

    /// Throws ConfigError when the mode-specific invariant does not hold.
    void check() const;
};

struct SkipEntry {
    std::string locator;
    std::string reason;
};

struct IngestReport {
    std::string mode;
    std::size_t candidates = 0;
    std::size_t ingested = 0;
    std::vector<SkipEntry> skipped;

    Json to_json() const;
    /// Human-readable log followed by a `--- machine-readable ---` JSON section.
    std::string to_text() const;
};

struct IngestResult {
    std::vector<DataItem> items;
    IngestReport report;
};

/// Glob match on a '/'-separated relative path. `*` and `?` stay within one
/// segment, `**` spans segments. A pattern without '/' matches the basename.
bool glob_match(std::string_view pattern, std::string_view path);

/// One item per matched UTF-8 file with fields {path, content}, sorted by path.
IngestResult scan_repository(const IngestSpec& spec);

/// One item per commit in range, oldest first, with fields {title, body,
/// edited_files, insertions, deletions, commit_hash}. Merge commits carry
/// metadata merge=true and their combined-diff file list.
IngestResult extract_commits(const IngestSpec& spec);

/// One item per CSV row with columns mapped to fields.
IngestResult import_tabular(const IngestSpec& spec);

IngestResult run(const IngestSpec& spec);

} // namespace primes::ingest
