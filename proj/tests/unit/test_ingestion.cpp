#include "doctest.h"

#include "primes/ingestion.hpp"

#include "../support/fixtures.hpp"

using namespace primes;
using namespace primes::testing;

TEST_CASE("glob matching") {
    CHECK(ingest::glob_match("*.py", "src/train.py"));
    CHECK(ingest::glob_match("src/*.py", "src/train.py"));
    CHECK_FALSE(ingest::glob_match("src/*.py", "src/deep/train.py"));
    CHECK(ingest::glob_match("src/**/*.py", "src/deep/er/train.py"));
    CHECK(ingest::glob_match("**/*.py", "train.py"));
    CHECK(ingest::glob_match("data?.csv", "data1.csv"));
    CHECK_FALSE(ingest::glob_match("data?.csv", "data10.csv"));
    CHECK_FALSE(ingest::glob_match("*.py", "train.pyc"));
}

TEST_CASE("file scan: include/exclude, sorted, non-UTF-8 skipped with a reason") {
    TempDir dir;
    const auto root = dir / "repo";
    write_text(root / "src/b.py", "print('b')\n");
    write_text(root / "src/a.py", "print('a')\n");
    write_text(root / "src/gen/c.py", "# generated\n");
    write_text(root / "README.md", "readme\n");
    write_text(root / "src/latin1.py", std::string("caf\xe9\n"));
    write_text(root / ".git/config", "[core]\n");

    ingest::IngestSpec spec;
    spec.mode = ingest::Mode::files;
    spec.root_or_path = root;
    spec.include_globs = {"**/*.py"};
    spec.exclude_globs = {"src/gen/**"};
    const auto r = ingest::run(spec);
    REQUIRE(r.items.size() == 2);
    CHECK(*r.items[0].field("path") == "src/a.py");
    CHECK(*r.items[1].field("path") == "src/b.py");
    CHECK(r.report.candidates == 3);
    CHECK(r.report.ingested == 2);
    REQUIRE(r.report.skipped.size() == 1);
    CHECK(r.report.skipped[0].locator == "src/latin1.py");
    CHECK(r.report.skipped[0].reason == "not valid UTF-8");
    CHECK(r.report.to_text().find("--- machine-readable ---") != std::string::npos);

    // Same content, same ids.
    CHECK(ingest::run(spec).items[0].id() == r.items[0].id());
}

TEST_CASE("file scan of a missing root is an error") {
    ingest::IngestSpec spec;
    spec.root_or_path = "/nonexistent/primes/root";
    spec.include_globs = {"**/*"};
    CHECK_THROWS_AS(ingest::run(spec), IoError);
}

TEST_CASE("commit extraction: oldest first, stats, merges, ranges") {
    TempDir dir;
    const auto repo = dir / "repo";
    init_repo(repo);
    write_text(repo / "a.txt", "one\ntwo\n");
    commit_all(repo, "Initial import");
    git(repo, {"tag", "v1"});
    git(repo, {"checkout", "-q", "-b", "topic"});
    write_text(repo / "b.txt", "topic\n");
    commit_all(repo, "Add b on topic");
    git(repo, {"checkout", "-q", "main"});
    write_text(repo / "a.txt", "one\nthree\n");
    commit_all(repo, "Fix a on main");
    git(repo, {"merge", "-q", "--no-ff", "-m", "Merge topic", "topic"});

    ingest::IngestSpec spec;
    spec.mode = ingest::Mode::commits;
    spec.root_or_path = repo;
    const auto r = ingest::run(spec);
    REQUIRE(r.items.size() == 4);
    CHECK(*r.items.front().field("title") == "Initial import");
    CHECK(*r.items.front().field("insertions") == "2");
    CHECK(r.items.front().metadata().at("merge") == "false");
    const auto& merge = r.items.back();
    CHECK(*merge.field("title") == "Merge topic");
    CHECK(merge.metadata().at("merge") == "true");
    CHECK(merge.source().commit.has_value());

    const auto fix = std::find_if(r.items.begin(), r.items.end(),
                                  [](const DataItem& i) { return *i.field("title") == "Fix a on main"; });
    REQUIRE(fix != r.items.end());
    CHECK(*fix->field("edited_files") == "a.txt");
    CHECK(*fix->field("insertions") == "1");
    CHECK(*fix->field("deletions") == "1");

    spec.commit_range = "v1..HEAD";
    CHECK(ingest::run(spec).items.size() == 3);

    spec.include_patch = true;
    const auto with_patch = ingest::run(spec);
    CHECK(with_patch.items.front().field("patch") != nullptr);
}

TEST_CASE("commit extraction outside a repository fails") {
    TempDir dir;
    ingest::IngestSpec spec;
    spec.mode = ingest::Mode::commits;
    spec.root_or_path = dir.path();
    CHECK_THROWS_AS(ingest::run(spec), Error);
}

TEST_CASE("tabular import maps columns, keeps the rest as metadata, skips ragged rows") {
    TempDir dir;
    write_text(dir / "t.csv", "id,msg,lang\n1,hello,en\n2,\"multi\nline\",de\n3,short\n");
    ingest::IngestSpec spec;
    spec.mode = ingest::Mode::tabular;
    spec.root_or_path = dir / "t.csv";
    spec.field_mapping = {{"msg", "text"}};
    const auto r = ingest::run(spec);
    REQUIRE(r.items.size() == 2);
    CHECK(*r.items[0].field("text") == "hello");
    CHECK(r.items[0].metadata().at("lang") == "en");
    CHECK(*r.items[0].source().path == "row-2");
    CHECK(*r.items[1].field("text") == "multi\nline");
    REQUIRE(r.report.skipped.size() == 1);
    CHECK(r.report.skipped[0].reason.find("ragged") != std::string::npos);

    spec.field_mapping = {{"nope", "text"}};
    CHECK_THROWS_AS(ingest::run(spec), ConfigError);
    spec.field_mapping.clear();
    CHECK_THROWS_AS(ingest::run(spec), ConfigError);
}
