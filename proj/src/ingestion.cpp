#include "primes/ingestion.hpp"

#include "primes/csv.hpp"
#include "primes/error.hpp"
#include "primes/process.hpp"
#include "primes/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace primes::ingest {

Mode parse_mode(const std::string& text) {
    if (text == "files") {
        return Mode::files;
    }
    if (text == "commits") {
        return Mode::commits;
    }
    if (text == "tabular") {
        return Mode::tabular;
    }
    throw ConfigError("unknown ingest mode '" + text + "' (expected files, commits or tabular)");
}

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::files:
        return "files";
    case Mode::commits:
        return "commits";
    case Mode::tabular:
        return "tabular";
    }
    return "?";
}

void IngestSpec::check() const {
    if (root_or_path.empty()) {
        throw ConfigError("ingest: root_or_path is required");
    }
    if (mode == Mode::files && include_globs.empty()) {
        throw ConfigError("ingest: files mode needs at least one include glob");
    }
    if (mode == Mode::tabular && field_mapping.empty()) {
        throw ConfigError("ingest: tabular mode needs a non-empty field mapping");
    }
}

Json IngestReport::to_json() const {
    Json skipped_json = Json::array();
    for (const auto& s : skipped) {
        skipped_json.push_back({{"locator", s.locator}, {"reason", s.reason}});
    }
    return {{"mode", mode}, {"candidates", candidates}, {"ingested", ingested}, {"skipped", skipped_json}};
}

std::string IngestReport::to_text() const {
    std::ostringstream out;
    out << "ingest mode: " << mode << '\n';
    out << "candidates: " << candidates << '\n';
    out << "ingested:   " << ingested << '\n';
    out << "skipped:    " << skipped.size() << '\n';
    for (const auto& s : skipped) {
        out << "  skip " << s.locator << ": " << s.reason << '\n';
    }
    out << "--- machine-readable ---\n" << to_json().dump(2) << '\n';
    return out.str();
}

namespace {

bool match_segment_glob(std::string_view pat, std::string_view s) {
    // iterative wildcard match within one path segment
    std::size_t p = 0;
    std::size_t i = 0;
    std::size_t star = std::string_view::npos;
    std::size_t mark = 0;
    while (i < s.size()) {
        if (p < pat.size() && (pat[p] == '?' || pat[p] == s[i])) {
            ++p;
            ++i;
        } else if (p < pat.size() && pat[p] == '*') {
            star = p++;
            mark = i;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            i = ++mark;
        } else {
            return false;
        }
    }
    while (p < pat.size() && pat[p] == '*') {
        ++p;
    }
    return p == pat.size();
}

bool match_segments(const std::vector<std::string>& pat, std::size_t pi, const std::vector<std::string>& path,
                    std::size_t si) {
    if (pi == pat.size()) {
        return si == path.size();
    }
    if (pat[pi] == "**") {
        for (std::size_t k = si; k <= path.size(); ++k) {
            if (match_segments(pat, pi + 1, path, k)) {
                return true;
            }
        }
        return false;
    }
    if (si == path.size()) {
        return false;
    }
    return match_segment_glob(pat[pi], path[si]) && match_segments(pat, pi + 1, path, si + 1);
}

} // namespace

bool glob_match(std::string_view pattern, std::string_view path) {
    if (pattern.find('/') == std::string_view::npos) {
        const auto slash = path.rfind('/');
        const auto base = slash == std::string_view::npos ? path : path.substr(slash + 1);
        return match_segment_glob(pattern, base);
    }
    return match_segments(text::split(pattern, '/'), 0, text::split(path, '/'), 0);
}

namespace {

bool matches_any(const std::vector<std::string>& globs, const std::string& rel) {
    return std::any_of(globs.begin(), globs.end(), [&](const auto& g) { return glob_match(g, rel); });
}

std::string git_or_throw(const std::filesystem::path& repo, std::vector<std::string> args) {
    std::vector<std::string> argv = {"git", "-C", repo.string(), "-c", "core.quotepath=off"};
    argv.insert(argv.end(), args.begin(), args.end());
    auto result = run_process(argv);
    if (result.exit_code != 0) {
        throw Error("git " + args.front() + " failed: " + std::string(text::trim(result.stderr_text)));
    }
    return result.stdout_text;
}

struct FileStat {
    std::string path;
    long long insertions = 0;
    long long deletions = 0;
};

// Parses `--numstat -z` output with rename detection disabled.
std::vector<FileStat> parse_numstat_z(const std::string& out) {
    std::vector<FileStat> stats;
    for (const auto& entry : text::split(out, '\0')) {
        if (entry.empty()) {
            continue;
        }
        const auto parts = text::split(entry, '\t');
        if (parts.size() < 3) {
            continue;
        }
        FileStat fs;
        // binary files report "-"
        fs.insertions = parts[0] == "-" ? 0 : std::stoll(parts[0]);
        fs.deletions = parts[1] == "-" ? 0 : std::stoll(parts[1]);
        fs.path = parts[2];
        stats.push_back(std::move(fs));
    }
    return stats;
}

} // namespace

IngestResult scan_repository(const IngestSpec& spec) {
    spec.check();
    const auto& root = spec.root_or_path;
    std::error_code ec;
    if (!std::filesystem::is_directory(root, ec)) {
        throw IoError("repository root does not exist or is not a directory: " + root.string());
    }

    std::vector<std::string> candidates;
    auto it = std::filesystem::recursive_directory_iterator(
        root, std::filesystem::directory_options::skip_permission_denied, ec);
    if (ec) {
        throw IoError("cannot read repository root " + root.string() + ": " + ec.message());
    }
    for (; it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) {
            break;
        }
        if (it->is_directory() && it->path().filename() == ".git") {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file()) {
            continue;
        }
        const auto rel = it->path().lexically_relative(root).generic_string();
        if (matches_any(spec.include_globs, rel) && !matches_any(spec.exclude_globs, rel)) {
            candidates.push_back(rel);
        }
    }
    std::sort(candidates.begin(), candidates.end());

    IngestResult result;
    result.report.mode = to_string(spec.mode);
    result.report.candidates = candidates.size();
    for (const auto& rel : candidates) {
        std::string content;
        try {
            content = fs::read_file(root / rel);
        } catch (const IoError& e) {
            result.report.skipped.push_back({rel, std::string("unreadable: ") + e.what()});
            continue;
        }
        if (!text::is_valid_utf8(content)) {
            result.report.skipped.push_back({rel, "not valid UTF-8"});
            continue;
        }
        SourceLocator source{root.generic_string(), std::nullopt, rel};
        result.items.emplace_back(std::move(source), FieldMap{{"path", rel}, {"content", std::move(content)}});
    }
    result.report.ingested = result.items.size();
    return result;
}

IngestResult extract_commits(const IngestSpec& spec) {
    spec.check();
    const auto& repo = spec.root_or_path;
    {
        auto probe = run_process({"git", "-C", repo.string(), "rev-parse", "--git-dir"});
        if (probe.exit_code != 0) {
            throw Error("not a git repository: " + repo.string());
        }
    }

    IngestResult result;
    result.report.mode = to_string(spec.mode);

    std::vector<std::string> log_args = {"log", "--topo-order", "--reverse", "--format=%H%x1f%P%x1f%s%x1f%b%x1e"};
    if (spec.commit_range) {
        log_args.push_back(*spec.commit_range);
    } else {
        auto head = run_process({"git", "-C", repo.string(), "rev-parse", "--verify", "-q", "HEAD"});
        if (head.exit_code != 0) {
            return result; // no commits yet
        }
    }
    log_args.push_back("--");
    const auto log = git_or_throw(repo, log_args);

    for (const auto& raw : text::split(log, '\x1e')) {
        const auto record = std::string(text::trim(raw));
        if (record.empty()) {
            continue;
        }
        ++result.report.candidates;
        const auto parts = text::split(record, '\x1f');
        if (parts.size() < 4) {
            result.report.skipped.push_back({record.substr(0, 40), "malformed log record"});
            continue;
        }
        const std::string& hash = parts[0];
        const auto parents = text::split_whitespace(parts[1]);
        const bool is_merge = parents.size() > 1;
        const std::string title = parts[2];
        const std::string body(text::rtrim(parts[3]));
        if (!text::is_valid_utf8(title) || !text::is_valid_utf8(body)) {
            result.report.skipped.push_back({hash, "commit message is not valid UTF-8"});
            continue;
        }

        std::vector<std::string> files;
        long long insertions = 0;
        long long deletions = 0;
        if (is_merge) {
            const auto combined =
                git_or_throw(repo, {"diff-tree", "-r", "--cc", "--no-commit-id", "--name-only", "-z", hash});
            std::set<std::string> combined_set;
            for (const auto& f : text::split(combined, '\0')) {
                if (!f.empty()) {
                    combined_set.insert(f);
                }
            }
            files.assign(combined_set.begin(), combined_set.end());
            const auto stats = parse_numstat_z(git_or_throw(
                repo, {"diff-tree", "-r", "--no-commit-id", "--numstat", "--no-renames", "-z", parents[0], hash}));
            for (const auto& s : stats) {
                if (combined_set.count(s.path) != 0) {
                    insertions += s.insertions;
                    deletions += s.deletions;
                }
            }
        } else {
            const auto stats = parse_numstat_z(
                git_or_throw(repo, {"diff-tree", "-r", "--root", "--no-commit-id", "--numstat", "--no-renames", "-z", hash}));
            for (const auto& s : stats) {
                files.push_back(s.path);
                insertions += s.insertions;
                deletions += s.deletions;
            }
            std::sort(files.begin(), files.end());
        }

        FieldMap fields{{"title", title},
                        {"body", body},
                        {"edited_files", text::join(files, "\n")},
                        {"insertions", std::to_string(insertions)},
                        {"deletions", std::to_string(deletions)},
                        {"commit_hash", hash}};
        if (spec.include_patch) {
            auto patch = git_or_throw(repo, {"show", "--format=", "--no-color", "--no-renames", hash});
            if (!text::is_valid_utf8(patch)) {
                result.report.skipped.push_back({hash, "patch is not valid UTF-8"});
                continue;
            }
            fields.emplace("patch", std::move(patch));
        }
        FieldMap metadata{{"merge", is_merge ? "true" : "false"}, {"parents", text::join(parents, " ")}};
        SourceLocator source{repo.generic_string(), hash, std::nullopt};
        result.items.emplace_back(std::move(source), std::move(fields), std::move(metadata));
    }
    result.report.ingested = result.items.size();
    return result;
}

IngestResult import_tabular(const IngestSpec& spec) {
    spec.check();
    const auto table = csv::parse(fs::read_file(spec.root_or_path));

    std::vector<std::pair<std::size_t, std::string>> mapped;
    std::set<std::size_t> mapped_columns;
    for (const auto& [column, field] : spec.field_mapping) {
        const auto it = std::find(table.header.begin(), table.header.end(), column);
        if (it == table.header.end()) {
            throw ConfigError("column not found: " + column);
        }
        const auto idx = static_cast<std::size_t>(it - table.header.begin());
        mapped.emplace_back(idx, field);
        mapped_columns.insert(idx);
    }

    IngestResult result;
    result.report.mode = to_string(spec.mode);
    result.report.candidates = table.rows.size();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto locator = "row-" + std::to_string(table.record_numbers[r]);
        if (row.size() != table.header.size()) {
            result.report.skipped.push_back({locator, "ragged row: " + std::to_string(row.size()) + " cells, header has " +
                                                          std::to_string(table.header.size())});
            continue;
        }
        if (!std::all_of(row.begin(), row.end(), [](const auto& c) { return text::is_valid_utf8(c); })) {
            result.report.skipped.push_back({locator, "not valid UTF-8"});
            continue;
        }
        FieldMap fields;
        for (const auto& [idx, field] : mapped) {
            fields[field] = row[idx];
        }
        FieldMap metadata;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (mapped_columns.count(c) == 0) {
                metadata[table.header[c]] = row[c];
            }
        }
        SourceLocator source{spec.root_or_path.generic_string(), std::nullopt, locator};
        result.items.emplace_back(std::move(source), std::move(fields), std::move(metadata));
    }
    result.report.ingested = result.items.size();
    return result;
}

IngestResult run(const IngestSpec& spec) {
    switch (spec.mode) {
    case Mode::files:
        return scan_repository(spec);
    case Mode::commits:
        return extract_commits(spec);
    case Mode::tabular:
        return import_tabular(spec);
    }
    throw ConfigError("unknown ingest mode");
}

} // namespace primes::ingest
