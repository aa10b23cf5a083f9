// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any fails.

#include "primes/benchmark.hpp"
#include "primes/digest.hpp"
#include "primes/llm_client.hpp"
#include "primes/log.hpp"
#include "primes/pilot.hpp"
#include "primes/pipeline.hpp"
#include "primes/provenance.hpp"
#include "primes/validation.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <cmath>
#include <functional>
#include <iostream>

using namespace primes;
using namespace primes::testing;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void expect(bool condition, const std::string& what) {
        if (!condition && ok) {
            ok = false;
            detail = what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

Outcome kappa_oracle_equivalence() {
    Outcome o;
    const auto start = Clock::now();
    const std::vector<std::string> all_cats = {"x", "y", "z"};
    double worst = 0;
    long pairs = 0;
    for (int k = 1; k <= 3; ++k) {
        const std::vector<std::string> cats(all_cats.begin(), all_cats.begin() + k);
        for (int len = 1; len <= 5; ++len) {
            const long total = static_cast<long>(std::lround(std::pow(k, len)));
            std::vector<std::vector<std::string>> named;
            std::vector<std::vector<int>> raw;
            for (long code = 0; code < total; ++code) {
                raw.push_back(decode_labels(code, len, k));
                std::vector<std::string> n;
                for (int c : raw.back()) {
                    n.push_back(cats[static_cast<std::size_t>(c)]);
                }
                named.push_back(std::move(n));
            }
            for (long ia = 0; ia < total; ++ia) {
                for (long ib = 0; ib < total; ++ib) {
                    ++pairs;
                    const auto& a = raw[static_cast<std::size_t>(ia)];
                    const auto& b = raw[static_cast<std::size_t>(ib)];
                    const auto ref = direct_kappa(a, b, k);
                    const auto got = pilot::kappa_from_labels(named[static_cast<std::size_t>(ia)],
                                                              named[static_cast<std::size_t>(ib)], cats);
                    const bool degenerate = got.status == pilot::AgreementStatus::degenerate;
                    if (degenerate != ref.degenerate || degenerate == got.kappa.has_value()) {
                        o.expect(false, "degeneracy mismatch at length " + std::to_string(len));
                        return o;
                    }
                    worst = std::max({worst, std::abs(got.p_o - ref.p_o), std::abs(got.p_e - ref.p_e)});
                    if (!degenerate) {
                        worst = std::max(worst, std::abs(*got.kappa - ref.kappa));
                    }
                }
            }
        }
    }
    const double elapsed = seconds_since(start);
    o.expect(worst <= 1e-12, "max deviation " + fmt(worst));
    o.expect(elapsed < 10.0, "took " + fmt(elapsed) + " s");
    if (o.ok) {
        o.detail = std::to_string(pairs) + " pairs, max deviation " + fmt(worst) + ", " + fmt(elapsed) + " s";
    }
    return o;
}

Outcome worked_kappa_example() {
    Outcome o;
    const auto r = pilot::kappa_from_labels({"x", "x", "y", "y"}, {"x", "y", "x", "y"}, {"x", "y"});
    o.expect(r.contingency == std::vector<std::vector<std::int64_t>>{{1, 1}, {1, 1}}, "contingency table");
    o.expect(r.p_o == 0.5, "p_o " + fmt(r.p_o));
    o.expect(r.p_e == 0.5, "p_e " + fmt(r.p_e));
    o.expect(r.kappa && *r.kappa == 0.0, "kappa not exactly 0");
    if (o.ok) {
        o.detail = "p_o=0.5 p_e=0.5 kappa=0";
    }
    return o;
}

Outcome gate_semantics() {
    Outcome o;
    auto result = [](std::optional<double> kappa) {
        pilot::AgreementResult r;
        r.task = "kind";
        r.n_items = 100;
        r.kappa = kappa;
        r.status = kappa ? pilot::AgreementStatus::defined : pilot::AgreementStatus::degenerate;
        return r;
    };
    o.expect(pilot::evaluate_gate({result(0.89)}, 0.9).outcome == pilot::GateOutcome::refine, "0.89 should refine");
    o.expect(pilot::evaluate_gate({result(0.90)}, 0.9).outcome == pilot::GateOutcome::pass, "0.90 should pass");
    o.expect(pilot::evaluate_gate({result(std::nullopt)}, 0.9).outcome == pilot::GateOutcome::refine,
             "degenerate should refine");
    o.expect(pilot::evaluate_gate({result(0.90)}, 0.9, 30, pilot::GateComparison::greater_than).outcome ==
                 pilot::GateOutcome::refine,
             "strict comparison at 0.90 should refine");
    if (o.ok) {
        o.detail = "0.89 refine, 0.90 pass (>=), degenerate refine";
    }
    return o;
}

Outcome sample_size() {
    Outcome o;
    const auto start = Clock::now();
    o.expect(benchmark::required_sample_size(std::nullopt, 0.95, 0.05, 0.5) == 385, "infinite population");
    o.expect(benchmark::required_sample_size(1000, 0.95, 0.05, 0.5) == 278, "N=1000");
    const std::vector<std::pair<double, double>> levels = {{0.90, 1.645}, {0.95, 1.960}, {0.99, 2.576}};
    for (const auto& [conf, z] : levels) {
        std::int64_t previous = std::numeric_limits<std::int64_t>::max();
        for (int m = 1; m <= 30; ++m) {
            const double e = m / 100.0;
            for (const std::int64_t pop : {0L, 100L, 1000L, 1000000L}) {
                const auto n = benchmark::required_sample_size(pop > 0 ? std::optional(pop) : std::nullopt, conf, e);
                const auto expected = static_cast<std::int64_t>(std::ceil(sample_size_formula(z, e, 0.5, pop) - 1e-9));
                o.expect(n == expected, "formula mismatch at e=" + fmt(e) + " N=" + std::to_string(pop));
            }
            const auto n = benchmark::required_sample_size(std::nullopt, conf, e);
            o.expect(n <= previous, "not monotone at e=" + fmt(e));
            previous = n;
        }
    }
    const double elapsed = seconds_since(start);
    o.expect(elapsed < 1.0, "took " + fmt(elapsed) + " s");
    if (o.ok) {
        o.detail = "385, 278, monotone over 90 margins, formula oracle agrees";
    }
    return o;
}

Outcome cost_arithmetic() {
    Outcome o;
    llm::ModelSpec spec;
    spec.model_id = "priced";
    spec.price_in_per_million = Money::parse("5.00");
    spec.price_out_per_million = Money::parse("15.00");
    llm::ModelResponse r;
    r.input_tokens = 2000;
    r.output_tokens = 500;
    const auto cost = llm::call_cost(r, spec);
    o.expect(cost == Money::parse("0.0175") && cost.to_string() == "0.0175", "got " + cost.to_string());

    // Integer oracle: a price of P per million is P micro-units per token, i.e. tokens * P * 1e6 in 1e-12 units.
    Gen g(2024);
    Money total;
    int128_t oracle = 0;
    std::int64_t in_sum = 0;
    std::int64_t out_sum = 0;
    for (int i = 0; i < 100; ++i) {
        llm::ModelResponse x;
        x.input_tokens = g.range(0, 100'000);
        x.output_tokens = g.range(0, 20'000);
        total += llm::call_cost(x, spec);
        oracle += static_cast<int128_t>(x.input_tokens) * 5'000'000 + static_cast<int128_t>(x.output_tokens) * 15'000'000;
        in_sum += x.input_tokens;
        out_sum += x.output_tokens;
    }
    llm::ModelResponse combined;
    combined.input_tokens = in_sum;
    combined.output_tokens = out_sum;
    o.expect(total.units() == oracle, "sum differs from integer oracle");
    o.expect(llm::call_cost(combined, spec) == total, "cost of summed tokens differs from summed costs");

    // The benchmark aggregate equals the per-call costs recorded in the ledger.
    TempDir dir;
    const auto bench = make_synthetic_benchmark(dir.path(), 100);
    provenance::ProvenanceLedger ledger(dir / "p.jsonl");
    llm::ClientOptions options;
    options.ledger = &ledger;
    options.run_id = "cost";
    auto hash_spec = spec;
    hash_spec.mock = Json{{"mode", "hash"}, {"schema", Json::parse(kSchemaJson)}};
    llm::LlmClient client(hash_spec, options);
    const auto metrics = benchmark::evaluate_model(client, bench.version, bench.oracle, bench.items);
    Money ledger_total;
    for (const auto& rec : ledger.records()) {
        llm::ModelResponse x;
        x.input_tokens = rec.token_usage.input_tokens;
        x.output_tokens = rec.token_usage.output_tokens;
        ledger_total += llm::call_cost(x, spec);
    }
    o.expect(ledger.size() == 100, "ledger has " + std::to_string(ledger.size()) + " records");
    o.expect(metrics.cost == ledger_total, "benchmark cost " + metrics.cost.to_string() + " vs ledger " +
                                               ledger_total.to_string());
    if (o.ok) {
        o.detail = "0.0175 exact; 100 random calls sum to " + total.to_string() + " exactly";
    }
    return o;
}

Outcome model_ranking() {
    Outcome o;
    auto recorded = [](const std::string& id, double accuracy) {
        benchmark::ModelRunMetrics m;
        m.model_id = id;
        m.mean_accuracy = accuracy;
        return m;
    };
    const auto report = benchmark::compare_models({recorded("model-a", 0.9558), recorded("model-b", 0.9791)});
    o.expect(report.ranking.front().metrics.model_id == "model-b", "0.9791 model not ranked first");
    const auto reversed = benchmark::compare_models({recorded("model-b", 0.9791), recorded("model-a", 0.9558)});
    o.expect(reversed.ranking.front().metrics.model_id == "model-b", "order dependent");
    if (o.ok) {
        o.detail = "0.9791 ranked above 0.9558";
    }
    return o;
}

Outcome accuracy_fidelity() {
    Outcome o;
    TempDir dir;
    const auto bench = make_synthetic_benchmark(dir.path(), 100);
    std::set<std::string> wrong;
    for (std::size_t i = 3; i < 100; i += 10) {
        wrong.insert(bench.oracle.entries()[i].item_id);
    }
    llm::ModelSpec spec;
    spec.model_id = "planted";
    llm::ClientOptions options;
    options.mock_responder = planted_error_responder(bench.oracle, wrong);
    llm::LlmClient planted(spec, options);
    const auto m = benchmark::evaluate_model(planted, bench.version, bench.oracle, bench.items);
    o.expect(m.mean_accuracy == 0.9, "planted accuracy " + fmt(m.mean_accuracy));
    char formatted[16];
    std::snprintf(formatted, sizeof formatted, "%.4f", m.mean_accuracy);
    o.expect(std::string(formatted) == "0.9000", std::string("formatted ") + formatted);

    spec.model_id = "garbage";
    options.mock_responder = [](const prompt::RenderedPrompt&) { return std::string("unstructured reply"); };
    llm::LlmClient garbage(spec, options);
    const auto g = benchmark::evaluate_model(garbage, bench.version, bench.oracle, bench.items);
    o.expect(g.mean_accuracy == 0.0, "parse-failure accuracy " + fmt(g.mean_accuracy));
    o.expect(g.parse_failure_count == 100, "parse failures " + std::to_string(g.parse_failure_count));
    if (o.ok) {
        o.detail = "accuracy 0.9000 with 10 planted errors; 0 with 100 parse failures";
    }
    return o;
}

Outcome duplication_detection() {
    Outcome o;
    auto sentence = [](const std::string& stem, int words) {
        std::vector<std::string> w;
        for (int j = 0; j < words; ++j) {
            w.push_back(stem + "w" + std::to_string(j));
        }
        return w;
    };
    std::vector<validation::OutputText> outputs;
    std::vector<std::pair<std::string, std::string>> near;
    std::vector<std::pair<std::string, std::string>> low;
    auto add = [&](const std::string& id, const std::vector<std::string>& words) {
        outputs.push_back({id, text::join(words, " ")});
    };
    for (int p = 0; p < 5; ++p) {
        // 20 words, last one replaced: 17 shared of 19 distinct shingles.
        auto a = sentence("near" + std::to_string(p), 20);
        auto b = a;
        b.back() = "near" + std::to_string(p) + "changed";
        o.expect(set_jaccard(word_windows(a, 3), word_windows(b, 3)) >= 0.8, "near pair below 0.8");
        add("near-" + std::to_string(p) + "a", a);
        add("near-" + std::to_string(p) + "b", b);
        near.emplace_back("near-" + std::to_string(p) + "a", "near-" + std::to_string(p) + "b");
    }
    for (int p = 0; p < 10; ++p) {
        // 10 words sharing only the first three: 1 shared of 15 distinct shingles.
        auto a = sentence("low" + std::to_string(p), 10);
        auto b = a;
        for (std::size_t j = 3; j < b.size(); ++j) {
            b[j] = "low" + std::to_string(p) + "v" + std::to_string(j);
        }
        o.expect(set_jaccard(word_windows(a, 3), word_windows(b, 3)) <= 0.3, "low pair above 0.3");
        add("low-" + std::to_string(p) + "a", a);
        add("low-" + std::to_string(p) + "b", b);
        low.emplace_back("low-" + std::to_string(p) + "a", "low-" + std::to_string(p) + "b");
    }
    for (int i = 0; static_cast<int>(outputs.size()) < 50; ++i) {
        add("filler-" + std::to_string(i), sentence("fill" + std::to_string(i), 12));
    }
    o.expect(outputs.size() == 50, "corpus size");

    const auto findings = validation::detect_duplicates(outputs);
    std::set<std::pair<std::string, std::string>> flagged;
    for (const auto& f : findings) {
        flagged.emplace(f.evidence.at(0), f.evidence.at(1));
    }
    for (const auto& p : near) {
        o.expect(flagged.count(p) == 1, "near pair " + p.first + " not flagged");
    }
    for (const auto& p : low) {
        o.expect(flagged.count(p) == 0, "low pair " + p.first + " flagged");
    }
    o.expect(flagged.size() == near.size(), std::to_string(flagged.size()) + " pairs flagged");

    auto with_exact = outputs;
    with_exact.push_back({"exact-copy", outputs[20].text});
    with_exact.push_back({"exact-copy-2", outputs[45].text});
    for (int t = 1; t <= 100; ++t) {
        const double threshold = t / 100.0;
        std::size_t exact = 0;
        for (const auto& f : validation::detect_duplicates(with_exact, threshold)) {
            exact += f.code == "exact-duplicate" ? 1U : 0U;
        }
        o.expect(exact == 2, "exact duplicates missed at threshold " + fmt(threshold));
    }
    if (o.ok) {
        o.detail = "5/5 near pairs flagged, 0/10 low pairs, exact copies flagged at 100 thresholds";
    }
    return o;
}

Outcome format_partition() {
    Outcome o;
    const auto schema =
        validation::OutputSchema::from_label_schema(LabelSchema::from_json(Json::parse(kSchemaJson)));
    struct Case {
        std::string raw;
        std::string expected;  // empty: valid
    };
    const std::vector<Case> cases = {
        {R"(<answer>{"kind": "bugfix", "rationale": "fixes a crash"}</answer>)", ""},
        {R"(<answer>{"kind": "feature"}</answer>)", ""},
        {R"(Thinking it through. <answer>{"kind": "none", "rationale": "docs only"}</answer>)", ""},
        {R"({"kind": "bugfix"})", ""},
        {"<answer>\n```json\n{\"kind\": \"feature\"}\n```\n</answer>", ""},
        {"<answer>kind: bugfix</answer>", ""},
        {R"(<answer>{"kind": "bugfix", "evidence": ["crash"]}</answer>)", ""},
        {R"(<answer>{"rationale": "no label"}</answer>)", "missing-key"},
        {R"(<answer>{}</answer>)", "missing-key"},
        {R"(<answer>{"Kind": "bugfix"}</answer>)", "missing-key"},
        {R"(<answer>{"kind": "refactor"}</answer>)", "illegal-category"},
        {R"(<answer>{"kind": "Bugfix"}</answer>)", "illegal-category"},
        {R"(<answer>{"kind": ["bugfix"]}</answer>)", "illegal-category"},
        {"The commit fixes a bug.", "unparseable"},
        {R"(<answer>{"kind": "bugfix"</answer>)", "unparseable"},
        {"<answer>bugfix</answer>", "unparseable"},
        {"", "unparseable"},
        {R"(<answer>{"kind": "bugfix", "confidence": 0.9}</answer>)", "unknown-key"},
        {R"(<answer>{"kind": "feature", "extra": "x"}</answer>)", "unknown-key"},
        {R"(<answer>{"kind": "none", "notes": null}</answer>)", "unknown-key"},
    };
    o.expect(cases.size() == 20, "corpus size");
    std::size_t valid = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto r = validation::validate_format(cases[i].raw, schema, "case-" + std::to_string(i));
        const bool has_labels = r.parsed.has_value() && !r.parsed->labels.empty();
        bool has_errors = false;
        bool expected_found = false;
        for (const auto& f : r.findings) {
            has_errors = has_errors || f.severity == Severity::error;
            expected_found = expected_found || (f.code == cases[i].expected && f.kind == validation::FindingKind::format);
        }
        o.expect(has_labels != has_errors, "case " + std::to_string(i) + " is not labels XOR errors");
        if (cases[i].expected.empty()) {
            o.expect(has_labels, "case " + std::to_string(i) + " should be valid");
            ++valid;
        } else {
            o.expect(expected_found, "case " + std::to_string(i) + " lacks " + cases[i].expected);
        }
    }
    if (o.ok) {
        o.detail = std::to_string(valid) + " valid, " + std::to_string(cases.size() - valid) +
                   " invalid, each with the expected finding";
    }
    return o;
}

Outcome hallucination_grounding() {
    Outcome o;
    validation::GroundingConfig cfg;
    cfg.schema = LabelSchema::from_json(Json::parse(kSchemaJson));
    struct Fixture {
        FieldMap fields;
        std::string rationale;
        bool grounded;
    };
    const std::vector<Fixture> fixtures = {
        {{{"title", "Fix null pointer in parser"}}, "null pointer in the parser", true},
        {{{"title", "Add retry option"}, {"edited_files", "src/net/client.cc"}}, "retry option in src/net/client.cc",
         true},
        {{{"content", "def train(model): return model.fit()"}}, "train will return model.fit", true},
        {{{"title", "Update README"}}, "Update README", true},
        {{{"title", "Fix null pointer in parser"}}, "race condition in the scheduler", false},
        {{{"title", "Add retry option"}, {"edited_files", "src/net/client.cc"}}, "touches src/net/server.cc", false},
        {{{"content", "def train(model): return model.fit()"}}, "train uses tensorflow", false},
        {{{"title", "Update README"}}, "bumps the version", false},
    };
    for (std::size_t i = 0; i < fixtures.size(); ++i) {
        const auto& f = fixtures[i];
        const DataItem item(SourceLocator{"repo", "c" + std::to_string(i), std::nullopt}, f.fields);
        const validation::ParsedOutput out{{{"kind", "bugfix"}}, f.rationale, {}};
        const auto findings = validation::flag_hallucinations(out, item, cfg);
        if (f.grounded) {
            o.expect(findings.empty(), "fixture " + std::to_string(i) + " flagged a grounded term");
        } else {
            o.expect(!findings.empty(), "fixture " + std::to_string(i) + " missed an ungrounded term");
        }
        // terms copied verbatim from the source are never flagged
        std::string haystack;
        for (const auto& [name, value] : f.fields) {
            haystack += value + " ";
        }
        const validation::ParsedOutput verbatim{{{"kind", "bugfix"}}, haystack, {}};
        o.expect(validation::flag_hallucinations(verbatim, item, cfg).empty(),
                 "fixture " + std::to_string(i) + " flagged verbatim source text");
    }
    if (o.ok) {
        o.detail = "4 grounded fixtures clean, 4 ungrounded flagged, verbatim text never flagged";
    }
    return o;
}

Outcome replay_determinism() {
    Outcome o;
    const auto start = Clock::now();
    TempDir dir;
    const auto f = make_pipeline_fixture(dir.path(), 20);
    auto first = pipeline::load_config(f.config_path);
    const auto a = pipeline::run_pipeline(first);
    auto second = first;
    second.out_dir = dir / "out-replay";
    const auto b = pipeline::run_pipeline(second);
    const double elapsed = seconds_since(start);

    o.expect(a.status == "complete" && b.status == "complete", "runs did not complete: " + a.status + "/" + b.status);
    o.expect(fs::read_file(first.out_dir / "enhanced.jsonl") == fs::read_file(second.out_dir / "enhanced.jsonl"),
             "enhanced datasets differ");
    o.expect(a.project_csvs.size() == b.project_csvs.size() && !a.project_csvs.empty(), "project CSV sets differ");
    for (std::size_t i = 0; i < std::min(a.project_csvs.size(), b.project_csvs.size()); ++i) {
        o.expect(a.project_csvs[i].filename() == b.project_csvs[i].filename() &&
                     fs::read_file(a.project_csvs[i]) == fs::read_file(b.project_csvs[i]),
                 "project CSV " + a.project_csvs[i].filename().string() + " differs");
    }
    o.expect(a.manifest_digest == b.manifest_digest, "manifest digests differ");
    o.expect(provenance::read_manifest(a.manifest_path).digest == provenance::read_manifest(b.manifest_path).digest,
             "manifest files differ");
    o.expect(elapsed < 30.0, "took " + fmt(elapsed) + " s");
    if (o.ok) {
        o.detail = "20 commits, manifest " + a.manifest_digest.substr(0, 12) + ", " + fmt(elapsed) + " s";
    }
    return o;
}

Outcome cli_parity() {
    Outcome o;
#ifdef PRIMES_CLI_PATH
    TempDir dir;
    const std::string a_csv = "item_id,kind\ni1,x\ni2,x\ni3,y\ni4,y\n";
    const std::string b_csv = "item_id,kind\ni1,x\ni2,y\ni3,x\ni4,y\n";
    write_text(dir / "a.csv", a_csv);
    write_text(dir / "b.csv", b_csv);
    const auto k = run_process({PRIMES_CLI_PATH, "pilot", "kappa", "--a", (dir / "a.csv").string(), "--b",
                                (dir / "b.csv").string(), "--out-dir", dir.path().string()});
    o.expect(k.exit_code == 0, "pilot kappa exited " + std::to_string(k.exit_code));
    const auto schema = pilot::infer_schema({csv::parse(a_csv), csv::parse(b_csv)});
    const auto a = pilot::annotations_from_csv(csv::parse(a_csv), schema, Annotator{Annotator::Kind::human, "a"});
    const auto b = pilot::annotations_from_csv(csv::parse(b_csv), schema, Annotator{Annotator::Kind::human, "b"});
    const auto library = pilot::agreement_document(pilot::agreement_for_schema(a, b, schema)).dump(2) + "\n";
    o.expect(sha256_hex(fs::read_file(dir / "agreement.json")) == sha256_hex(library), "agreement digest differs");

    const auto s = run_process({PRIMES_CLI_PATH, "bench", "size", "--population", "1000", "--out-dir",
                                dir.path().string()});
    o.expect(s.exit_code == 0, "bench size exited " + std::to_string(s.exit_code));
    const auto expected = benchmark::sample_size_document(1000, 0.95, 0.05).dump(2) + "\n";
    o.expect(sha256_hex(fs::read_file(dir / "sample_size.json")) == sha256_hex(expected), "sample size digest differs");
    if (o.ok) {
        o.detail = "agreement.json and sample_size.json digests match the library";
    }
#else
    o.expect(false, "built without the command-line tool");
#endif
    return o;
}

} // namespace

int main() {
    log::set_sink([](log::Level level, std::string_view message) {
        if (level == log::Level::error) {
            std::cerr << message << "\n";
        }
    });
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"kappa oracle equivalence", kappa_oracle_equivalence},
        {"worked kappa example", worked_kappa_example},
        {"gate semantics", gate_semantics},
        {"sample size", sample_size},
        {"cost arithmetic", cost_arithmetic},
        {"model ranking", model_ranking},
        {"benchmark accuracy fidelity", accuracy_fidelity},
        {"duplication detection", duplication_detection},
        {"format validation partition", format_partition},
        {"hallucination grounding", hallucination_grounding},
        {"end-to-end replay determinism", replay_determinism},
        {"cli/library parity", cli_parity},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = std::string("threw: ") + e.what();
        }
        std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
        failures += o.ok ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
