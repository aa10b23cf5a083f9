#include "doctest.h"

#include "primes/core.hpp"
#include "primes/csv.hpp"
#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/llm_client.hpp"
#include "primes/money.hpp"
#include "primes/text.hpp"

#include "../support/fixtures.hpp"

using namespace primes;
using primes::testing::Gen;
using primes::testing::TempDir;

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("money parsing and formatting") {
    CHECK(Money::parse("5").to_string() == "5.0");
    CHECK(Money::parse("5.00").to_string() == "5.0");
    CHECK(Money::parse("0.0175").to_string() == "0.0175");
    CHECK(Money::parse("-1.5").to_string() == "-1.5");
    CHECK(Money::parse("0.000000000001").units() == 1);
    CHECK_THROWS_AS(Money::parse("0.0000000000001"), ValidationError);
    CHECK_THROWS_AS(Money::parse("1.2.3"), ValidationError);
    CHECK_THROWS_AS(Money::parse(""), ValidationError);
    CHECK(Money::parse("0.125").to_string(2) == "0.12");
    CHECK(Money::parse("0.135").to_string(2) == "0.14");
    CHECK(Money::parse("2.5").to_string(0) == "2");
}

TEST_CASE("call cost is exact: 2000 in / 500 out at 5.00 / 15.00 per million") {
    llm::ModelSpec m;
    m.model_id = "m";
    m.price_in_per_million = Money::parse("5.00");
    m.price_out_per_million = Money::parse("15.00");
    llm::ModelResponse r;
    r.input_tokens = 2000;
    r.output_tokens = 500;
    const auto cost = llm::call_cost(r, m);
    CHECK(cost == Money::parse("0.0175"));
    CHECK(cost.to_string() == "0.0175");
}

TEST_CASE("property: summed call costs equal the integer oracle") {
    // With prices as integer micro-units, tokens * micro is the cost in 1e-12 units.
    Gen g(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto in_micro = g.range(0, 100'000'000);
        const auto out_micro = g.range(0, 100'000'000);
        llm::ModelSpec m;
        m.model_id = "m";
        m.price_in_per_million = Money::from_units(static_cast<int128_t>(in_micro) * 1'000'000);
        m.price_out_per_million = Money::from_units(static_cast<int128_t>(out_micro) * 1'000'000);
        Money total;
        int128_t oracle = 0;
        for (int i = 0; i < 100; ++i) {
            llm::ModelResponse r;
            r.input_tokens = g.range(0, 200'000);
            r.output_tokens = g.range(0, 50'000);
            total += llm::call_cost(r, m);
            oracle += static_cast<int128_t>(r.input_tokens) * in_micro + static_cast<int128_t>(r.output_tokens) * out_micro;
        }
        CHECK(total.units() == oracle);
    }
}

TEST_CASE("text helpers") {
    CHECK(text::trim("  a b \n") == "a b");
    CHECK(text::split("a,b,,c", ',') == std::vector<std::string>{"a", "b", "", "c"});
    CHECK(text::word_count("  one two\tthree\n") == 3);
    CHECK(text::normalize_lines("a  \r\nb\rc \n\n") == "a\nb\nc");
    CHECK(text::format_double(0.0) == "0.0");
    CHECK(text::format_double(0.5) == "0.5");
    CHECK(text::format_double(385) == "385.0");
    CHECK(text::is_valid_utf8("héllo"));
    CHECK_FALSE(text::is_valid_utf8(std::string("\xff\xfe", 2)));
    CHECK_FALSE(text::is_valid_utf8(std::string("\xc3", 1)));
}

TEST_CASE("csv round trip with quoting") {
    const csv::Row header = {"a", "b"};
    const std::vector<csv::Row> rows = {{"plain", "with,comma"}, {"quote\"d", "multi\nline"}, {" pad ", ""}};
    const auto text = csv::format(header, rows);
    const auto t = csv::parse(text);
    CHECK(t.header == header);
    CHECK(t.rows == rows);
    CHECK_THROWS_AS(csv::parse("a,b\n\"open,1\n"), ValidationError);
}

TEST_CASE("property: csv format/parse round trip on generated cells") {
    Gen g(3);
    const std::vector<std::string> alphabet = {"a", "b", ",", "\"", "\n", " ", "x", "\r\n", "é"};
    for (int trial = 0; trial < 200; ++trial) {
        const auto cols = static_cast<std::size_t>(g.range(1, 4));
        csv::Row header;
        for (std::size_t c = 0; c < cols; ++c) {
            header.push_back("c" + std::to_string(c));
        }
        std::vector<csv::Row> rows;
        for (std::int64_t r = 0; r < g.range(0, 5); ++r) {
            csv::Row row;
            for (std::size_t c = 0; c < cols; ++c) {
                std::string cell;
                for (std::int64_t k = 0; k < g.range(0, 6); ++k) {
                    cell += g.pick(alphabet);
                }
                row.push_back(cell);
            }
            rows.push_back(row);
        }
        const auto parsed = csv::parse(csv::format(header, rows));
        CHECK(parsed.rows == rows);
    }
}

TEST_CASE("item ids are content derived and canonical") {
    const SourceLocator a{"repo/x/", std::string("ABCDEF"), std::string("./src/a.py")};
    const SourceLocator b{"repo/x", std::string("abcdef"), std::string("src/a.py")};
    CHECK(compute_item_id(a, {{"content", "x  "}}) == compute_item_id(b, {{"content", "x"}}));
    CHECK(compute_item_id(b, {{"content", "x"}}) != compute_item_id(b, {{"content", "y"}}));
    CHECK(compute_item_id(b, {{"a", "1"}, {"b", "2"}}) != compute_item_id(b, {{"a", "12"}, {"b", ""}}));
    CHECK_THROWS_AS(compute_item_id(b, {}), ValidationError);

    DataItem item(b, {{"content", "x"}}, {{"k", "v"}});
    CHECK(item.id().size() == 64);
    CHECK(item.field("missing") == nullptr);
    const auto back = item_from_json(to_json(item));
    CHECK(back.id() == item.id());
    auto tampered = to_json(item);
    tampered["item_id"] = std::string(64, '0');
    CHECK_THROWS_AS(item_from_json(tampered), ValidationError);
}

TEST_CASE("dataset round trip and order-independent digest") {
    TempDir dir;
    std::vector<DataItem> items;
    for (int i = 0; i < 5; ++i) {
        items.emplace_back(SourceLocator{"r", std::nullopt, "f" + std::to_string(i)},
                           FieldMap{{"content", std::to_string(i)}});
    }
    write_dataset(dir / "d.jsonl", items);
    const auto back = read_dataset(dir / "d.jsonl");
    REQUIRE(back.size() == items.size());
    auto reversed = items;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(dataset_digest(back) == dataset_digest(reversed));
}

TEST_CASE("label schema and annotations") {
    CHECK_THROWS_AS(LabelSchema(std::vector<Task>{}), ValidationError);
    CHECK_THROWS_AS(LabelSchema(std::vector<Task>{{"t", {}}}), ValidationError);
    CHECK_THROWS_AS(LabelSchema(std::vector<Task>{{"t", {"a"}}, {"t", {"b"}}}), ValidationError);
    CHECK_THROWS_AS(LabelSchema(std::vector<Task>{{"t", {"a", "a"}}}), ValidationError);
    const LabelSchema schema(std::vector<Task>{{"kind", {"bug", "feature"}}, {"area", {"ui", "core"}}});
    CHECK(schema.is_legal("kind", "bug"));
    CHECK_FALSE(schema.is_legal("kind", "ui"));
    CHECK(LabelSchema::from_json(schema.to_json()) == schema);

    const Annotation a(schema, "i1", Annotator::parse("human:ann"), {{"kind", "bug"}}, "because");
    CHECK(*a.label("kind") == "bug");
    CHECK(a.label("area") == nullptr);
    CHECK(a.annotator().to_string() == "human:ann");
    CHECK_THROWS_AS(Annotation(schema, "i1", {}, {{"kind", "nope"}}), ValidationError);
    CHECK_THROWS_AS(Annotation(schema, "i1", {}, {{"other", "bug"}}), ValidationError);
    const auto back = Annotation::from_json(schema, a.to_json());
    CHECK(back.labels() == a.labels());
    CHECK(back.rationale() == a.rationale());
}

TEST_CASE("provenance record check") {
    ProvenanceRecord r;
    CHECK_THROWS_AS(r.check(), ValidationError);
    r.run_id = "run";
    r.model_id = "m";
    r.prompt_version_id = "p";
    r.item_id = "i";
    r.request_digest = "d";
    CHECK_NOTHROW(r.check());
    r.latency_ms = -1;
    CHECK_THROWS_AS(r.check(), ValidationError);
}
