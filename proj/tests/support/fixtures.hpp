#pragma once

// Shared fixtures for the unit and acceptance suites.

#include "primes/benchmark.hpp"
#include "primes/core.hpp"
#include "primes/csv.hpp"
#include "primes/error.hpp"
#include "primes/ingestion.hpp"
#include "primes/llm_client.hpp"
#include "primes/pipeline.hpp"
#include "primes/process.hpp"
#include "primes/text.hpp"

#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace primes::testing {

namespace fsys = std::filesystem;

class TempDir {
public:
    TempDir() {
        std::string pattern = (fsys::temp_directory_path() / "primes-test-XXXXXX").string();
        if (::mkdtemp(pattern.data()) == nullptr) {
            throw IoError("mkdtemp failed");
        }
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        fsys::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fsys::path& path() const { return path_; }
    fsys::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fsys::path path_;
};

inline void write_text(const fsys::path& path, const std::string& contents) {
    if (path.has_parent_path()) {
        fsys::create_directories(path.parent_path());
    }
    fs::write_file_atomic(path, contents);
}

inline std::string git(const fsys::path& repo, std::vector<std::string> args) {
    std::vector<std::string> argv = {"git", "-C", repo.string()};
    argv.insert(argv.end(), args.begin(), args.end());
    const auto r = run_process(argv);
    if (r.exit_code != 0) {
        throw IoError("git " + text::join(args, " ") + " failed: " + r.stderr_text);
    }
    return r.stdout_text;
}

/// Fixed identity and dates so commit hashes do not depend on the clock.
inline void pin_git_environment() {
    ::setenv("GIT_AUTHOR_NAME", "Fixture", 1);
    ::setenv("GIT_AUTHOR_EMAIL", "fixture@example.org", 1);
    ::setenv("GIT_COMMITTER_NAME", "Fixture", 1);
    ::setenv("GIT_COMMITTER_EMAIL", "fixture@example.org", 1);
    ::setenv("GIT_AUTHOR_DATE", "2024-01-01T00:00:00Z", 1);
    ::setenv("GIT_COMMITTER_DATE", "2024-01-01T00:00:00Z", 1);
    ::setenv("GIT_CONFIG_NOSYSTEM", "1", 1);
    ::setenv("GIT_CONFIG_GLOBAL", "/dev/null", 1);
}

inline void init_repo(const fsys::path& repo) {
    pin_git_environment();
    fsys::create_directories(repo);
    git(repo, {"init", "-q", "-b", "main"});
}

inline void commit_all(const fsys::path& repo, const std::string& message) {
    git(repo, {"add", "-A"});
    git(repo, {"commit", "-q", "--allow-empty", "-m", message});
}

/// Commit titles alternate between bug fixes and features so both labels occur.
inline std::string fixture_title(int i) {
    static const std::vector<std::string> fixes = {"Fix crash in parser", "Fix off by one in loader",
                                                   "Fix race in cache", "Fix typo in docs",
                                                   "Fix leak in reader"};
    static const std::vector<std::string> features = {"Add retry option", "Add export command",
                                                      "Add config loader", "Add progress bar",
                                                      "Add json output"};
    const auto& pool = i % 2 == 0 ? fixes : features;
    return pool[static_cast<std::size_t>(i / 2) % pool.size()] + " step " + std::to_string(i);
}

inline std::string fixture_label(const std::string& title) {
    return text::to_lower(title).find("fix") != std::string::npos ? "bugfix" : "feature";
}

/// Linear history of n commits, each touching src/file<i>.txt.
inline void make_commit_repo(const fsys::path& repo, int n) {
    init_repo(repo);
    for (int i = 0; i < n; ++i) {
        write_text(repo / "src" / ("file" + std::to_string(i % 4) + ".txt"),
                   "revision " + std::to_string(i) + "\n");
        commit_all(repo, fixture_title(i));
    }
}

inline const char* kSchemaJson = R"({"tasks": [{"name": "kind", "categories": ["bugfix", "feature", "none"]}]})";

inline const char* kTemplateText = R"(---
name: commit-kind
schema: schema.json
fields: title, edited_files
shots: 0
chain_of_thought: false
structured_output: true
---
## task
Classify the intent of a commit from its title.

## context
Commits come from open-source software repositories.

## output_format
Reply with a JSON object inside <answer></answer> holding "kind" and a short "rationale".

## body
Commit title: {{title}}
Edited files: {{edited_files}}
)";

/// Rules mock: titles mentioning "fix" are bug fixes, everything else a feature.
/// The rationale quotes the title, so it is grounded and distinct per item.
inline Json rules_mock(const std::string& fix_label = "bugfix") {
    return {{"mode", "rules"},
            {"scope_start", "Commit title: "},
            {"scope_end", "\n"},
            {"rules", Json::array({{{"contains", "fix"},
                                    {"answer", {{"kind", fix_label}}},
                                    {"rationale", "{{match}}"}}})},
            {"default", {{"answer", {{"kind", "feature"}}}, {"rationale", "{{match}}"}}}};
}

struct PipelineFixture {
    fsys::path root;
    fsys::path config_path;
    std::vector<DataItem> items;
};

/// Writes repo, schema, template, human annotations, oracle and config under
/// root. Annotations and oracle are derived from the ingested ids, labelled by
/// title the same way the first mock model labels them.
inline PipelineFixture make_pipeline_fixture(const fsys::path& root, int commits = 20) {
    PipelineFixture f;
    f.root = root;
    make_commit_repo(root / "repo", commits);
    write_text(root / "schema.json", kSchemaJson);
    write_text(root / "template.md", kTemplateText);

    ingest::IngestSpec spec;
    spec.mode = ingest::Mode::commits;
    spec.root_or_path = root / "repo";
    f.items = ingest::run(spec).items;

    std::vector<csv::Row> human;
    std::vector<csv::Row> oracle;
    for (const auto& item : f.items) {
        const auto label = fixture_label(*item.field("title"));
        human.push_back({item.id(), label});
        oracle.push_back({item.id(), "kind", label, "expert", "title"});
    }
    write_text(root / "human.csv", csv::format({"item_id", "kind"}, human));
    write_text(root / "oracle.csv", csv::format({"item_id", "task", "gold_label", "annotator", "basis"}, oracle));

    Json config = {
        {"ingest", {{"mode", "commits"}, {"path", "repo"}}},
        {"schema", "schema.json"},
        {"template", "template.md"},
        {"models",
         Json::array({{{"model_id", "mock-title"},
                       {"provider", "mock"},
                       {"price_in_per_million", "5.00"},
                       {"price_out_per_million", "15.00"},
                       {"mock", rules_mock()}},
                      {{"model_id", "mock-confused"},
                       {"provider", "mock"},
                       {"price_in_per_million", "0.25"},
                       {"price_out_per_million", "1.25"},
                       {"mock", rules_mock("feature")}}})},
        {"pilot", {{"sample_size", 10}, {"min_n", 10}, {"human_annotations", "human.csv"}}},
        {"benchmark", {{"oracle", "oracle.csv"}}},
        {"cache_dir", "cache"},
        {"out_dir", "out"},
        {"run_id", "fixture"},
        {"seed", 7},
        {"concurrency", 4},
    };
    f.config_path = root / "config.json";
    write_text(f.config_path, config.dump(2) + "\n");
    return f;
}

struct SyntheticBenchmark {
    prompt::PromptVersion version;
    std::map<std::string, DataItem> items;
    benchmark::Oracle oracle;
};

/// n commit-like items whose gold label alternates bugfix / feature.
inline SyntheticBenchmark make_synthetic_benchmark(const fsys::path& dir, int n) {
    write_text(dir / "schema.json", kSchemaJson);
    write_text(dir / "template.md", kTemplateText);
    auto version = prompt::make_version(prompt::PromptTemplate::load(dir / "template.md"));
    std::map<std::string, DataItem> items;
    std::vector<benchmark::OracleEntry> entries;
    for (int i = 0; i < n; ++i) {
        DataItem item(SourceLocator{"synthetic", "c" + std::to_string(i), std::nullopt},
                      FieldMap{{"title", "change " + std::to_string(i)}, {"edited_files", "f.txt"}});
        entries.push_back({item.id(), {{"kind", i % 2 == 0 ? "bugfix" : "feature"}}, "expert", "synthetic"});
        items.emplace(item.id(), item);
    }
    benchmark::Oracle oracle(version.content.schema, entries);
    return {std::move(version), std::move(items), std::move(oracle)};
}

/// Mock responder answering gold for every item except those in `wrong`.
inline llm::MockResponder planted_error_responder(const benchmark::Oracle& oracle, std::set<std::string> wrong) {
    return [&oracle, wrong = std::move(wrong)](const prompt::RenderedPrompt& p) {
        auto label = oracle.find(p.item_id)->gold.at("kind");
        if (wrong.count(p.item_id) != 0) {
            label = label == "bugfix" ? "feature" : "bugfix";
        }
        return "<answer>" + Json{{"kind", label}, {"rationale", "change"}}.dump() + "</answer>";
    };
}

/// Deterministic generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}
    std::uint64_t next() { return rng_(); }
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    bool coin() { return (rng_() & 1U) != 0; }
    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[rng_() % v.size()];
    }
    std::string word() {
        static const std::vector<std::string> syllables = {"ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze"};
        std::string w;
        const auto n = range(1, 3);
        for (std::int64_t i = 0; i < n; ++i) {
            w += pick(syllables);
        }
        return w;
    }

private:
    std::mt19937_64 rng_;
};

} // namespace primes::testing
