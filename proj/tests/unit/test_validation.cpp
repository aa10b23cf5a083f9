#include "doctest.h"

#include "primes/validation.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace primes;
using namespace primes::testing;
using namespace primes::validation;

namespace {

OutputSchema commit_schema() {
    return OutputSchema::from_label_schema(LabelSchema::from_json(Json::parse(kSchemaJson)));
}

std::string only_code(const FormatResult& r) {
    REQUIRE(r.findings.size() == 1);
    return r.findings[0].code;
}

DataItem source_item(const std::string& title) {
    return DataItem(SourceLocator{"repo", std::string("c1"), std::nullopt},
                    FieldMap{{"title", title}, {"edited_files", "src/parser.cc"}});
}

} // namespace

TEST_CASE("format: conforming outputs parse") {
    const auto schema = commit_schema();
    const auto r = validate_format(R"(Reasoning first. <answer>{"kind": "bugfix", "rationale": "fix"}</answer>)", schema);
    REQUIRE(r.ok());
    CHECK(r.parsed->labels.at("kind") == "bugfix");
    CHECK(*r.parsed->rationale == "fix");
    CHECK(validate_format(R"({"kind": "feature"})", schema).ok());
    CHECK(validate_format("<answer>\n```json\n{\"kind\": \"none\"}\n```\n</answer>", schema).ok());
    CHECK(validate_format("<answer>kind: bugfix</answer>", schema).ok());
    const auto ev = validate_format(R"(<answer>{"kind": "bugfix", "evidence": ["a", "b"]}</answer>)", schema);
    REQUIRE(ev.ok());
    CHECK(ev.parsed->evidence == std::vector<std::string>{"a", "b"});
}

TEST_CASE("format: each violation has its own code") {
    const auto schema = commit_schema();
    CHECK(only_code(validate_format("I think it is a bug fix.", schema, "i")) == "unparseable");
    CHECK(only_code(validate_format("<answer>{\"kind\": </answer>", schema)) == "unparseable");
    CHECK(only_code(validate_format("<answer>[\"bugfix\"]</answer>", schema)) == "not-an-object");
    CHECK(only_code(validate_format("<answer>{\"rationale\": \"x\"}</answer>", schema)) == "missing-key");
    CHECK(only_code(validate_format("<answer>{\"kind\": \"refactor\"}</answer>", schema)) == "illegal-category");
    CHECK(only_code(validate_format("<answer>{\"kind\": 3}</answer>", schema)) == "illegal-category");
    CHECK(only_code(validate_format("<answer>{\"kind\": \"bugfix\", \"extra\": 1}</answer>", schema)) ==
          "unknown-key");
    CHECK(only_code(validate_format("<answer>{\"kind\": \"bugfix\", \"rationale\": 5}</answer>", schema)) ==
          "bad-rationale");
    const auto r = validate_format("<answer>{\"kind\": \"refactor\"}</answer>", schema, "item-9");
    CHECK(r.findings[0].item_id == "item-9");
    CHECK(r.findings[0].evidence == std::vector<std::string>{"refactor"});
    CHECK(r.findings[0].severity == Severity::error);
    CHECK_FALSE(r.ok());

    auto lenient = schema;
    lenient.forbid_extra_keys = false;
    CHECK(validate_format("<answer>{\"kind\": \"bugfix\", \"extra\": 1}</answer>", lenient).ok());
}

TEST_CASE("answer block extraction uses the last block") {
    CHECK(*extract_answer_block("<answer>a</answer> then <answer> b </answer>") == "b");
    CHECK_FALSE(extract_answer_block("<answer>open only"));
    CHECK_FALSE(extract_answer_block("plain text"));
}

TEST_CASE("shingles and jaccard") {
    CHECK(normalize_for_shingles("Hello,   World!") == "hello world");
    CHECK(shingles("", 3).empty());
    CHECK(shingles("one two", 3) == std::set<std::string>{"one two"});
    CHECK(shingles("a b c d", 3) == std::set<std::string>{"a b c", "b c d"});
    CHECK(jaccard({}, {}) == 0.0);
    CHECK(jaccard({"x"}, {"x"}) == 1.0);
}

TEST_CASE("property: jaccard matches a direct set computation") {
    Gen g(11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> a;
        std::vector<std::string> b;
        for (auto n = g.range(0, 12); n > 0; --n) {
            a.push_back(g.word());
        }
        b = a;
        for (auto edits = g.range(0, 4); edits > 0 && !b.empty(); --edits) {
            b[static_cast<std::size_t>(g.range(0, static_cast<std::int64_t>(b.size()) - 1))] = g.word();
        }
        const auto width = static_cast<int>(g.range(1, 4));
        const auto sa = shingles(text::join(a, " "), width);
        const auto sb = shingles(text::join(b, " "), width);
        CHECK(sa == word_windows(a, static_cast<std::size_t>(width)));
        const double j = jaccard(sa, sb);
        CHECK(j == set_jaccard(word_windows(a, static_cast<std::size_t>(width)),
                               word_windows(b, static_cast<std::size_t>(width))));
        CHECK(j == jaccard(sb, sa));
        CHECK(j >= 0.0);
        CHECK(j <= 1.0);
    }
}

TEST_CASE("duplicates: exact, near and distinct outputs") {
    const std::vector<OutputText> outputs = {
        {"b", "The parser crashes on empty input files and must be fixed"},
        {"a", "The parser crashes on empty input files and must be fixed"},
        {"c", "The parser crashes on empty input files and must be patched"},
        {"d", "Adds a progress bar to the export command"},
    };
    const auto f = detect_duplicates(outputs);
    std::map<std::string, int> codes;
    for (const auto& x : f) {
        ++codes[x.code];
    }
    CHECK(codes["exact-duplicate"] == 1);
    CHECK(codes["near-duplicate"] == 2);
    const auto exact = std::find_if(f.begin(), f.end(), [](const auto& x) { return x.code == "exact-duplicate"; });
    CHECK(exact->item_id == "a");
    CHECK(exact->evidence == std::vector<std::string>{"a", "b"});
    CHECK(exact->severity == Severity::error);
    for (const auto& x : f) {
        CHECK(x.evidence.size() == 2);
        CHECK(x.evidence[0] != "d");
    }
    // exact duplicates survive any threshold
    CHECK(detect_duplicates(outputs, 1.0).size() == 1);
    CHECK_THROWS_AS(detect_duplicates(outputs, 0.0), ConfigError);
    CHECK_THROWS_AS(detect_duplicates(outputs, 0.8, 0), ConfigError);
}

TEST_CASE("property: detect_duplicates flags exactly the pairs at or above threshold") {
    Gen g(5);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<OutputText> outputs;
        for (auto n = g.range(2, 8); n > 0; --n) {
            std::string t;
            for (auto w = g.range(1, 8); w > 0; --w) {
                t += g.word() + " ";
            }
            outputs.push_back({"id" + std::to_string(outputs.size()), t});
        }
        const double threshold = static_cast<double>(g.range(1, 10)) / 10.0;
        std::size_t expected = 0;
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            for (std::size_t j = i + 1; j < outputs.size(); ++j) {
                const auto a = text::split_whitespace(outputs[i].text);
                const auto b = text::split_whitespace(outputs[j].text);
                const bool same = outputs[i].text == outputs[j].text;
                if (same || set_jaccard(word_windows(a, 3), word_windows(b, 3)) >= threshold) {
                    ++expected;
                }
            }
        }
        CHECK(detect_duplicates(outputs, threshold).size() == expected);
    }
}

TEST_CASE("hallucination: ungrounded terms are flagged") {
    const auto item = source_item("Fix crash in parser");
    GroundingConfig cfg;
    cfg.schema = LabelSchema::from_json(Json::parse(kSchemaJson));
    ParsedOutput grounded{{{"kind", "bugfix"}}, std::string("The crash in the parser is a bugfix"), {}};
    CHECK(flag_hallucinations(grounded, item, cfg).empty());

    ParsedOutput invented{{{"kind", "bugfix"}}, std::string("Crash caused by src/lexer.cc, see Tokenizer."), {}};
    const auto f = flag_hallucinations(invented, item, cfg);
    std::vector<std::string> terms;
    for (const auto& x : f) {
        terms.push_back(x.evidence.at(0));
        CHECK(x.code == "ungrounded-term");
        CHECK(x.severity == Severity::warning);
        CHECK(x.item_id == item.id());
    }
    CHECK(terms == std::vector<std::string>{"caused", "see", "src/lexer.cc", "tokenizer"});

    ParsedOutput path{{{"kind", "bugfix"}}, std::string("touches src/parser.cc"), {}};
    CHECK(flag_hallucinations(path, item, cfg).size() == 1);

    cfg.allowed_vocabulary = {"see", "caused"};
    CHECK(flag_hallucinations(invented, item, cfg).size() == 2);

    ParsedOutput evidence{{{"kind", "bugfix"}}, std::nullopt, {"Refactor"}};
    CHECK(flag_hallucinations(evidence, item, cfg).size() == 1);
}

TEST_CASE("tokenize terms keeps paths whole") {
    CHECK(tokenize_terms("(src/train.py), Foo!") == std::vector<std::string>{"src/train.py", "foo"});
    GroundingConfig cfg;
    cfg.min_term_length = 3;
    CHECK(content_terms("an ox ate the yak yak", cfg) == std::vector<std::string>{"ate", "yak"});
}

TEST_CASE("expectation rules parse") {
    const auto rules = parse_rules(R"(# comment
value-in-set label.kind bugfix, feature
matches-regex item_id [0-9a-f]{64}
non-null rationale
unique item_id
numeric-range score 0 1
row-count-between 1 10
)");
    REQUIRE(rules.size() == 6);
    CHECK(rules[0].values == std::vector<std::string>{"bugfix", "feature"});
    CHECK(rules[0].line == 2);
    CHECK(rules[1].pattern == "[0-9a-f]{64}");
    CHECK(rules[3].kind == RuleKind::unique);
    CHECK(rules[4].max == 1.0);
    CHECK_THROWS_AS(parse_rules("frobnicate x"), ConfigError);
    CHECK_THROWS_AS(parse_rules("numeric-range x 2 1"), ConfigError);
    CHECK_THROWS_AS(parse_rules("numeric-range x a 1"), ConfigError);
    CHECK_THROWS_AS(parse_rules("matches-regex x ("), ConfigError);
    CHECK_THROWS_AS(parse_rules("non-null"), ConfigError);
}

TEST_CASE("expectations report failing rows") {
    DataTable table;
    table.columns = {"item_id", "label.kind", "score"};
    table.rows = {
        {{"item_id", "a"}, {"label.kind", "bugfix"}, {"score", "0.5"}},
        {{"item_id", "b"}, {"label.kind", "refactor"}, {"score", "2"}},
        {{"item_id", "b"}, {"label.kind", std::nullopt}, {"score", "x"}},
    };
    const auto report = run_expectations(table, parse_rules("value-in-set label.kind bugfix,feature\n"
                                                            "non-null label.kind\n"
                                                            "unique item_id\n"
                                                            "numeric-range score 0 1\n"
                                                            "row-count-between 1 3\n"));
    CHECK_FALSE(report.passed);
    REQUIRE(report.results.size() == 5);
    CHECK_FALSE(report.results[0].passed);
    CHECK_FALSE(report.results[1].passed);
    CHECK(report.results[1].failures.size() == 1);
    CHECK_FALSE(report.results[2].passed);
    CHECK(report.results[3].failures.size() == 2);
    CHECK(report.results[4].passed);
    CHECK(report.to_text().find("overall: FAIL") != std::string::npos);
    CHECK(report.to_json().at("passed") == false);
    for (const auto& f : report.to_findings()) {
        CHECK(f.kind == FindingKind::expectation);
        CHECK_FALSE(f.evidence.empty());
    }
    CHECK(run_expectations(table, parse_rules("row-count-between 1 3")).passed);
    CHECK_THROWS_AS(run_expectations(table, parse_rules("non-null missing")), ConfigError);
}

TEST_CASE("findings csv and summary") {
    std::vector<ValidationFinding> f = {
        {"b", FindingKind::format, Severity::error, "missing-key", "d", {"kind"}, std::nullopt},
        {"a", FindingKind::duplicate, Severity::warning, "near-duplicate", "d", {"a", "b"}, 0.9},
    };
    sort_findings(f);
    CHECK(f[0].item_id == "a");
    const auto table = csv::parse(findings_csv(f));
    CHECK(table.header == csv::Row{"item_id", "kind", "severity", "code", "detail", "evidence", "score"});
    CHECK(table.rows.size() == 2);
    CHECK_FALSE(findings_summary(f).empty());
}
