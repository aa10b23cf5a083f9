#include "doctest.h"

#include "primes/benchmark.hpp"
#include "primes/pilot.hpp"

#include "../support/fixtures.hpp"

using namespace primes;
using namespace primes::testing;

#ifdef PRIMES_CLI_PATH

namespace {

ProcessResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), PRIMES_CLI_PATH);
    return run_process(args);
}

const char* kAnnotatorA = "item_id,kind\ni1,bugfix\ni2,bugfix\ni3,feature\ni4,feature\ni5,bugfix\ni6,feature\n";
const char* kAnnotatorB = "item_id,kind\ni1,bugfix\ni2,feature\ni3,feature\ni4,feature\ni5,bugfix\ni6,bugfix\n";

} // namespace

TEST_CASE("cli: usage errors exit 2") {
    CHECK(cli({}).exit_code == 2);
    CHECK(cli({"frobnicate"}).exit_code == 2);
    CHECK(cli({"bench", "size", "--margin"}).exit_code == 2);
    CHECK(cli({"pilot", "kappa", "--a", "x.csv"}).exit_code == 2);
    CHECK(cli({"--help"}).exit_code == 0);
}

TEST_CASE("cli: domain errors exit 1 with a message") {
    TempDir dir;
    const auto r = cli({"pilot", "kappa", "--a", (dir / "missing.csv").string(), "--b", (dir / "b.csv").string()});
    CHECK(r.exit_code == 1);
    CHECK(r.stderr_text.find("error: ") != std::string::npos);
    CHECK(cli({"bench", "size", "--confidence", "0.8", "--out-dir", dir.path().string()}).exit_code == 1);
    write_text(dir / "bad.json", R"({"unknown_key": 1})");
    CHECK(cli({"run", "--config", (dir / "bad.json").string()}).exit_code == 1);
}

TEST_CASE("cli: bench size matches the library document") {
    TempDir dir;
    const auto r = cli({"bench", "size", "--population", "1000", "--out-dir", dir.path().string()});
    REQUIRE(r.exit_code == 0);
    CHECK(r.stdout_text.find("278") != std::string::npos);
    CHECK(fs::read_file(dir / "sample_size.json") ==
          benchmark::sample_size_document(1000, 0.95, 0.05).dump(2) + "\n");
}

TEST_CASE("cli: pilot kappa, disagreements and gate") {
    TempDir dir;
    write_text(dir / "a.csv", kAnnotatorA);
    write_text(dir / "b.csv", kAnnotatorB);
    const auto out = dir.path().string();
    const auto k = cli({"pilot", "kappa", "--a", (dir / "a.csv").string(), "--b", (dir / "b.csv").string(),
                        "--out-dir", out});
    REQUIRE(k.exit_code == 0);
    CHECK(k.stdout_text.find("kind: kappa 0.333333") == 0);

    const auto schema = pilot::infer_schema({csv::parse(kAnnotatorA), csv::parse(kAnnotatorB)});
    const auto a = pilot::annotations_from_csv(csv::parse(kAnnotatorA), schema, Annotator{Annotator::Kind::human, "a"});
    const auto b = pilot::annotations_from_csv(csv::parse(kAnnotatorB), schema, Annotator{Annotator::Kind::human, "b"});
    CHECK(fs::read_file(dir / "agreement.json") ==
          pilot::agreement_document(pilot::agreement_for_schema(a, b, schema)).dump(2) + "\n");

    const auto d = cli({"pilot", "disagreements", "--a", (dir / "a.csv").string(), "--b", (dir / "b.csv").string(),
                        "--out-dir", out});
    CHECK(d.exit_code == 0);
    CHECK(csv::parse(fs::read_file(dir / "disagreements.csv")).rows.size() == 2);

    const auto g = cli({"pilot", "gate", "--agreement", (dir / "agreement.json").string(), "--out-dir", out});
    CHECK(g.exit_code == 0);
    CHECK(g.stdout_text.find("refine") != std::string::npos);
    CHECK(g.stdout_text.find("sample too small (n=6 < min_n=30)") != std::string::npos);
    CHECK(Json::parse(fs::read_file(dir / "gate.json")).at("outcome") == "refine");
}

TEST_CASE("cli: prompt lint and register") {
    TempDir dir;
    write_text(dir / "schema.json", kSchemaJson);
    write_text(dir / "template.md", kTemplateText);
    CHECK(cli({"prompt", "lint", (dir / "template.md").string()}).exit_code == 0);
    std::string broken = kTemplateText;
    broken += "{{author}}\n";
    write_text(dir / "broken.md", broken);
    const auto lint = cli({"prompt", "lint", (dir / "broken.md").string()});
    CHECK(lint.exit_code == 1);
    CHECK(lint.stdout_text.find("unresolved-placeholder") != std::string::npos);
    const auto reg = cli({"prompt", "register", (dir / "template.md").string(), "--out-dir", dir.path().string()});
    CHECK(reg.exit_code == 0);
    CHECK(text::trim(reg.stdout_text) ==
          prompt::make_version(prompt::PromptTemplate::load(dir / "template.md")).version_id);
}

TEST_CASE("cli: validate format is advisory unless strict") {
    TempDir dir;
    write_text(dir / "schema.json", kSchemaJson);
    write_text(dir / "responses.jsonl",
               "{\"item_id\": \"a\", \"text\": \"<answer>{\\\"kind\\\": \\\"bugfix\\\"}</answer>\"}\n"
               "{\"item_id\": \"b\", \"text\": \"no idea\"}\n");
    const std::vector<std::string> base = {"validate", "format", "--responses", (dir / "responses.jsonl").string(),
                                           "--schema", (dir / "schema.json").string(), "--out-dir",
                                           dir.path().string()};
    CHECK(cli(base).exit_code == 0);
    auto strict = base;
    strict.emplace_back("--strict");
    CHECK(cli(strict).exit_code == 1);
    const auto findings = csv::parse(fs::read_file(dir / "findings.csv"));
    REQUIRE(findings.rows.size() == 1);
    CHECK(findings.rows[0][3] == "unparseable");
}

TEST_CASE("cli: run executes the pipeline from a config") {
    TempDir dir;
    const auto f = make_pipeline_fixture(dir.path());
    const auto r = cli({"run", "--config", f.config_path.string(), "--run-id", "cli"});
    CHECK(r.exit_code == 0);
    CHECK(fsys::exists(dir / "out" / "enhanced.jsonl"));
    CHECK(fsys::exists(dir / "out" / "manifest.json"));
    const auto manifest = Json::parse(fs::read_file(dir / "out" / "manifest.json"));
    CHECK(manifest.at("run_id") == "cli");
    CHECK(manifest.at("parameters").at("sources").at("run_id") == "flag");
    CHECK(cli({"run", "--config", f.config_path.string(), "--run-id", "cli"}).exit_code == 1);
}

#endif
