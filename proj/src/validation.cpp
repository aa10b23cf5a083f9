#include "primes/validation.hpp"

#include "primes/csv.hpp"
#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/prompt.hpp"
#include "primes/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>
#include <sstream>
#include <tuple>

namespace primes::validation {

std::string to_string(FindingKind kind) {
    switch (kind) {
    case FindingKind::format:
        return "format";
    case FindingKind::duplicate:
        return "duplicate";
    case FindingKind::hallucination:
        return "hallucination";
    case FindingKind::expectation:
        return "expectation";
    }
    return "?";
}

Json ValidationFinding::to_json() const {
    Json j = {{"item_id", item_id},
              {"kind", to_string(kind)},
              {"severity", primes::to_string(severity)},
              {"code", code},
              {"detail", detail},
              {"evidence", evidence}};
    j["score"] = score ? Json(*score) : Json(nullptr);
    return j;
}

void sort_findings(std::vector<ValidationFinding>& findings) {
    std::stable_sort(findings.begin(), findings.end(), [](const auto& a, const auto& b) {
        return std::tie(a.item_id, a.kind, a.code, a.evidence) < std::tie(b.item_id, b.kind, b.code, b.evidence);
    });
}

std::string findings_csv(const std::vector<ValidationFinding>& findings) {
    std::vector<csv::Row> rows;
    rows.reserve(findings.size());
    for (const auto& f : findings) {
        rows.push_back({f.item_id, to_string(f.kind), primes::to_string(f.severity), f.code, f.detail,
                        text::join(f.evidence, ";"), f.score ? text::format_double(*f.score) : std::string{}});
    }
    return csv::format({"item_id", "kind", "severity", "code", "detail", "evidence", "score"}, rows);
}

std::string findings_summary(const std::vector<ValidationFinding>& findings) {
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    std::size_t errors = 0;
    for (const auto& f : findings) {
        ++counts[{to_string(f.kind), f.code}];
        if (f.severity == Severity::error) {
            ++errors;
        }
    }
    std::ostringstream out;
    out << findings.size() << " finding(s), " << errors << " error(s), " << findings.size() - errors
        << " warning(s)\n";
    for (const auto& [key, n] : counts) {
        out << "  " << key.first << "/" << key.second << ": " << n << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------

OutputSchema OutputSchema::from_label_schema(const LabelSchema& schema) {
    OutputSchema out;
    for (const auto& t : schema.tasks()) {
        out.tasks.push_back({t.name, t.categories});
    }
    return out;
}

std::optional<std::string> extract_answer_block(std::string_view raw) {
    const auto open = raw.rfind(prompt::kAnswerOpen);
    if (open != std::string_view::npos) {
        const auto start = open + prompt::kAnswerOpen.size();
        const auto close = raw.find(prompt::kAnswerClose, start);
        if (close == std::string_view::npos) {
            return std::nullopt;
        }
        auto block = text::trim(raw.substr(start, close - start));
        // tolerate a fenced code block inside the answer tags
        if (text::starts_with(block, "```")) {
            const auto nl = block.find('\n');
            const auto fence_end = block.rfind("```");
            if (nl != std::string_view::npos && fence_end > nl) {
                block = text::trim(block.substr(nl + 1, fence_end - nl - 1));
            }
        }
        return std::string(block);
    }
    const auto whole = text::trim(raw);
    if (!whole.empty() && whole.front() == '{' && whole.back() == '}' && Json::accept(whole)) {
        return std::string(whole);
    }
    return std::nullopt;
}

namespace {

ValidationFinding format_error(const std::string& item_id, std::string code, std::string detail,
                               std::vector<std::string> evidence) {
    return ValidationFinding{item_id, FindingKind::format, Severity::error, std::move(code), std::move(detail),
                             std::move(evidence), std::nullopt};
}

// "task: category" lines, used when structured output is off.
std::optional<Json> parse_key_value_lines(std::string_view block) {
    Json obj = Json::object();
    bool any = false;
    for (const auto& line : text::split(block, '\n')) {
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) {
            continue;
        }
        const auto colon = trimmed.find(':');
        if (colon == std::string_view::npos || colon == 0) {
            return std::nullopt;
        }
        const auto key = text::trim(trimmed.substr(0, colon));
        const bool identifier = std::all_of(key.begin(), key.end(), [](char ch) {
            const auto u = static_cast<unsigned char>(ch);
            return std::isalnum(u) != 0 || ch == '_' || ch == '-' || ch == '.';
        });
        if (key.empty() || !identifier) {
            return std::nullopt;
        }
        obj[std::string(key)] = std::string(text::trim(trimmed.substr(colon + 1)));
        any = true;
    }
    if (!any) {
        return std::nullopt;
    }
    return obj;
}

} // namespace

FormatResult validate_format(std::string_view raw, const OutputSchema& schema, const std::string& item_id) {
    FormatResult result;
    const auto block = extract_answer_block(raw);
    if (!block) {
        result.findings.push_back(format_error(item_id, "unparseable", "no delimited answer block found",
                                               {std::string(prompt::kAnswerOpen) + "..." +
                                                std::string(prompt::kAnswerClose) + " missing"}));
        return result;
    }

    Json obj;
    const auto parsed = Json::parse(*block, nullptr, false);
    if (!parsed.is_discarded()) {
        obj = parsed;
    } else if (auto kv = parse_key_value_lines(*block)) {
        obj = std::move(*kv);
    } else {
        result.findings.push_back(
            format_error(item_id, "unparseable", "answer block is not a structured object", {block->substr(0, 80)}));
        return result;
    }
    if (!obj.is_object()) {
        result.findings.push_back(format_error(item_id, "not-an-object", "answer is not a single structured object",
                                               {obj.dump().substr(0, 80)}));
        return result;
    }

    ParsedOutput out;
    for (const auto& task : schema.tasks) {
        if (!obj.contains(task.key)) {
            result.findings.push_back(format_error(item_id, "missing-key", "missing key '" + task.key + "'", {task.key}));
            continue;
        }
        const auto& value = obj[task.key];
        if (!value.is_string()) {
            result.findings.push_back(format_error(item_id, "illegal-category",
                                                   "value for '" + task.key + "' is not a category name",
                                                   {task.key + "=" + value.dump()}));
            continue;
        }
        const auto category = value.get<std::string>();
        if (std::find(task.allowed.begin(), task.allowed.end(), category) == task.allowed.end()) {
            result.findings.push_back(format_error(item_id, "illegal-category",
                                                   "category '" + category + "' is not allowed for '" + task.key + "'",
                                                   {category}));
            continue;
        }
        out.labels[task.key] = category;
    }

    for (const auto& [key, value] : obj.items()) {
        const bool is_task = std::any_of(schema.tasks.begin(), schema.tasks.end(),
                                         [&](const auto& t) { return t.key == key; });
        if (is_task) {
            continue;
        }
        if (schema.rationale_key && key == *schema.rationale_key) {
            if (value.is_string()) {
                out.rationale = value.get<std::string>();
            } else if (!value.is_null()) {
                result.findings.push_back(
                    format_error(item_id, "bad-rationale", "rationale must be text", {key + "=" + value.dump()}));
            }
            continue;
        }
        if (std::find(schema.evidence_keys.begin(), schema.evidence_keys.end(), key) != schema.evidence_keys.end()) {
            if (value.is_string()) {
                out.evidence.push_back(value.get<std::string>());
            } else if (value.is_array()) {
                for (const auto& e : value) {
                    if (e.is_string()) {
                        out.evidence.push_back(e.get<std::string>());
                    }
                }
            }
            continue;
        }
        if (schema.forbid_extra_keys) {
            result.findings.push_back(format_error(item_id, "unknown-key", "unexpected key '" + key + "'", {key}));
        }
    }

    if (result.findings.empty()) {
        result.parsed = std::move(out);
    }
    return result;
}

// ---------------------------------------------------------------------------

std::string normalize_for_shingles(std::string_view input) {
    std::string out;
    out.reserve(input.size());
    bool pending_space = false;
    for (const char ch : input) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) != 0) {
            pending_space = !out.empty();
            continue;
        }
        if (c < 0x80 && std::ispunct(c) != 0) {
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::set<std::string> shingles(std::string_view input, int width) {
    if (width < 1) {
        throw ConfigError("shingle width must be >= 1");
    }
    const auto words = text::split_whitespace(normalize_for_shingles(input));
    std::set<std::string> out;
    if (words.empty()) {
        return out;
    }
    const auto w = static_cast<std::size_t>(width);
    if (words.size() <= w) {
        out.insert(text::join(words, " "));
        return out;
    }
    for (std::size_t i = 0; i + w <= words.size(); ++i) {
        std::string s = words[i];
        for (std::size_t k = 1; k < w; ++k) {
            s += ' ';
            s += words[i + k];
        }
        out.insert(std::move(s));
    }
    return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) {
        return 0.0;
    }
    std::size_t inter = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++inter;
            ++ia;
            ++ib;
        }
    }
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<ValidationFinding> detect_duplicates(std::span<const OutputText> outputs, double threshold,
                                                 int shingle_width) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw ConfigError("duplicate threshold must be in (0, 1]");
    }
    if (shingle_width < 1) {
        throw ConfigError("shingle width must be >= 1");
    }
    std::vector<std::string> digests;
    std::vector<std::set<std::string>> sets;
    digests.reserve(outputs.size());
    sets.reserve(outputs.size());
    for (const auto& o : outputs) {
        digests.push_back(sha256_hex(o.text));
        sets.push_back(shingles(o.text, shingle_width));
    }

    std::vector<ValidationFinding> findings;
    // TODO: switch to a MinHash banding index above ~1e4 outputs.
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        for (std::size_t j = i + 1; j < outputs.size(); ++j) {
            auto first = outputs[i].item_id;
            auto second = outputs[j].item_id;
            if (second < first) {
                std::swap(first, second);
            }
            if (digests[i] == digests[j]) {
                findings.push_back({first, FindingKind::duplicate, Severity::error, "exact-duplicate",
                                    "identical output text (digest " + digests[i].substr(0, 12) + ")",
                                    {first, second}, 1.0});
                continue;
            }
            const double sim = jaccard(sets[i], sets[j]);
            if (sim >= threshold) {
                findings.push_back({first, FindingKind::duplicate, Severity::warning, "near-duplicate",
                                    "shingle Jaccard similarity " + text::format_double(sim), {first, second}, sim});
            }
        }
    }
    sort_findings(findings);
    return findings;
}

// ---------------------------------------------------------------------------

std::set<std::string> GroundingConfig::default_stop_words() {
    return {"a",       "about",  "above",   "after",  "again",   "against", "all",    "also",   "am",
            "an",      "and",    "any",     "are",    "as",      "at",      "be",     "because", "been",
            "before",  "being",  "below",   "between", "both",   "but",     "by",     "can",    "could",
            "did",     "do",     "does",    "doing",  "down",    "during",  "each",   "few",    "for",
            "from",    "further", "had",    "has",    "have",    "having",  "he",     "her",    "here",
            "hers",    "him",    "his",     "how",    "i",       "if",      "in",     "into",   "is",
            "it",      "its",    "itself",  "just",   "may",     "me",      "might",  "more",   "most",
            "must",    "my",     "no",      "nor",    "not",     "now",     "of",     "off",    "on",
            "once",    "only",   "or",      "other",  "our",     "ours",    "out",    "over",   "own",
            "same",    "she",    "should",  "so",     "some",    "such",    "than",   "that",   "the",
            "their",   "theirs", "them",    "then",   "there",   "these",   "they",   "this",   "those",
            "through", "to",     "too",     "under",  "until",   "up",      "upon",   "very",   "was",
            "we",      "were",   "what",    "when",   "where",   "which",   "while",  "who",    "whom",
            "why",     "will",   "with",    "would",  "you",     "your",    "yours",  "it's",   "its"};
}

namespace {

bool is_term_char(unsigned char c) {
    return std::isalnum(c) != 0 || c >= 0x80;
}

} // namespace

std::vector<std::string> tokenize_terms(std::string_view input) {
    std::vector<std::string> out;
    for (const auto& raw : text::split_whitespace(input)) {
        std::size_t b = 0;
        std::size_t e = raw.size();
        while (b < e && !is_term_char(static_cast<unsigned char>(raw[b]))) {
            ++b;
        }
        while (e > b && !is_term_char(static_cast<unsigned char>(raw[e - 1]))) {
            --e;
        }
        if (e > b) {
            out.push_back(text::to_lower(std::string_view(raw).substr(b, e - b)));
        }
    }
    return out;
}

std::vector<std::string> content_terms(std::string_view input, const GroundingConfig& config) {
    std::set<std::string> excluded;
    for (const auto& w : config.stop_words) {
        excluded.insert(text::to_lower(w));
    }
    for (const auto& w : config.allowed_vocabulary) {
        excluded.insert(text::to_lower(w));
    }
    if (config.schema) {
        for (const auto& t : config.schema->tasks()) {
            excluded.insert(text::to_lower(t.name));
            for (const auto& c : t.categories) {
                excluded.insert(text::to_lower(c));
            }
        }
    }
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& term : tokenize_terms(input)) {
        if (term.size() < config.min_term_length || excluded.count(term) != 0) {
            continue;
        }
        if (seen.insert(term).second) {
            out.push_back(std::move(term));
        }
    }
    return out;
}

std::vector<ValidationFinding> flag_hallucinations(const ParsedOutput& output, const DataItem& source,
                                                   const GroundingConfig& config) {
    std::string haystack;
    for (const auto& [name, value] : source.fields()) {
        haystack += text::to_lower(value);
        haystack += '\n';
    }

    std::string claims = output.rationale.value_or("");
    for (const auto& e : output.evidence) {
        claims += '\n';
        claims += e;
    }

    std::set<std::string> labels;
    for (const auto& [task, category] : output.labels) {
        labels.insert(text::to_lower(category));
    }

    std::vector<ValidationFinding> findings;
    for (const auto& term : content_terms(claims, config)) {
        if (labels.count(term) != 0 || haystack.find(term) != std::string::npos) {
            continue;
        }
        findings.push_back({source.id(), FindingKind::hallucination, Severity::warning, "ungrounded-term",
                            "term '" + term + "' does not occur in the source item", {term}, std::nullopt});
    }
    sort_findings(findings);
    return findings;
}

// ---------------------------------------------------------------------------

bool DataTable::has_column(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

std::string to_string(RuleKind kind) {
    switch (kind) {
    case RuleKind::value_in_set:
        return "value-in-set";
    case RuleKind::matches_regex:
        return "matches-regex";
    case RuleKind::non_null:
        return "non-null";
    case RuleKind::unique:
        return "unique-across-dataset";
    case RuleKind::numeric_range:
        return "numeric-range";
    case RuleKind::row_count_between:
        return "row-count-between";
    }
    return "?";
}

std::string Rule::describe() const {
    std::string out = to_string(kind);
    switch (kind) {
    case RuleKind::value_in_set:
        out += " " + field + " " + text::join(values, ",");
        break;
    case RuleKind::matches_regex:
        out += " " + field + " " + pattern;
        break;
    case RuleKind::non_null:
    case RuleKind::unique:
        out += " " + field;
        break;
    case RuleKind::numeric_range:
        out += " " + field + " " + text::format_double(min) + " " + text::format_double(max);
        break;
    case RuleKind::row_count_between:
        out += " " + text::format_double(min) + " " + text::format_double(max);
        break;
    }
    return out;
}

namespace {

std::optional<double> parse_number(std::string_view s) {
    s = text::trim(s);
    if (s.empty()) {
        return std::nullopt;
    }
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

double require_number(const std::string& token, std::size_t line) {
    const auto v = parse_number(token);
    if (!v) {
        throw ConfigError("rules line " + std::to_string(line) + ": '" + token + "' is not a number");
    }
    return *v;
}

} // namespace

std::vector<Rule> parse_rules(std::string_view input) {
    std::vector<Rule> rules;
    std::size_t lineno = 0;
    for (const auto& raw_line : text::split(input, '\n')) {
        ++lineno;
        const auto line = std::string(text::trim(raw_line));
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto tokens = text::split_whitespace(line);
        const auto& kind = tokens[0];
        auto need = [&](std::size_t n) {
            if (tokens.size() < n) {
                throw ConfigError("rules line " + std::to_string(lineno) + ": '" + kind + "' expects " +
                                  std::to_string(n - 1) + " argument(s)");
            }
        };
        Rule rule;
        rule.line = lineno;
        if (kind == "value-in-set") {
            need(3);
            rule.kind = RuleKind::value_in_set;
            rule.field = tokens[1];
            // the set may contain spaces after commas
            const auto rest = line.substr(line.find(tokens[1], kind.size()) + tokens[1].size());
            for (const auto& v : text::split(rest, ',')) {
                rule.values.emplace_back(text::trim(v));
            }
        } else if (kind == "matches-regex") {
            need(3);
            rule.kind = RuleKind::matches_regex;
            rule.field = tokens[1];
            rule.pattern = std::string(text::trim(line.substr(line.find(tokens[1], kind.size()) + tokens[1].size())));
            try {
                std::regex check(rule.pattern);
            } catch (const std::regex_error& e) {
                throw ConfigError("rules line " + std::to_string(lineno) + ": bad regex: " + e.what());
            }
        } else if (kind == "non-null") {
            need(2);
            rule.kind = RuleKind::non_null;
            rule.field = tokens[1];
        } else if (kind == "unique-across-dataset" || kind == "unique") {
            need(2);
            rule.kind = RuleKind::unique;
            rule.field = tokens[1];
        } else if (kind == "numeric-range") {
            need(4);
            rule.kind = RuleKind::numeric_range;
            rule.field = tokens[1];
            rule.min = require_number(tokens[2], lineno);
            rule.max = require_number(tokens[3], lineno);
        } else if (kind == "row-count-between") {
            need(3);
            rule.kind = RuleKind::row_count_between;
            rule.min = require_number(tokens[1], lineno);
            rule.max = require_number(tokens[2], lineno);
        } else {
            throw ConfigError("rules line " + std::to_string(lineno) + ": unknown rule kind '" + kind + "'");
        }
        if ((rule.kind == RuleKind::numeric_range || rule.kind == RuleKind::row_count_between) && rule.min > rule.max) {
            throw ConfigError("rules line " + std::to_string(lineno) + ": min exceeds max");
        }
        rules.push_back(std::move(rule));
    }
    return rules;
}

Json ExpectationReport::to_json() const {
    Json arr = Json::array();
    for (const auto& r : results) {
        Json failures = Json::array();
        for (const auto& f : r.failures) {
            failures.push_back({{"row", f.row_index}, {"item_id", f.item_id}, {"value", f.value}});
        }
        arr.push_back({{"rule", r.rule.describe()}, {"passed", r.passed}, {"message", r.message}, {"failures", failures}});
    }
    return {{"passed", passed}, {"rules", arr}};
}

std::string ExpectationReport::to_text() const {
    std::ostringstream out;
    for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.rule.describe();
        if (!r.message.empty()) {
            out << " (" << r.message << ")";
        }
        out << '\n';
        for (const auto& f : r.failures) {
            out << "    row " << f.row_index << " item " << f.item_id << " value '" << f.value << "'\n";
        }
    }
    out << (passed ? "overall: PASS" : "overall: FAIL") << '\n';
    return out.str();
}

std::vector<ValidationFinding> ExpectationReport::to_findings() const {
    std::vector<ValidationFinding> out;
    for (const auto& r : results) {
        if (r.passed) {
            continue;
        }
        if (r.failures.empty()) {
            out.push_back({"", FindingKind::expectation, Severity::error, to_string(r.rule.kind),
                           r.rule.describe() + ": " + r.message, {r.rule.describe()}, std::nullopt});
        }
        for (const auto& f : r.failures) {
            out.push_back({f.item_id, FindingKind::expectation, Severity::error, to_string(r.rule.kind),
                           r.rule.describe() + ": value '" + f.value + "'", {r.rule.field, f.value}, std::nullopt});
        }
    }
    sort_findings(out);
    return out;
}

ExpectationReport run_expectations(const DataTable& table, const std::vector<Rule>& rules) {
    for (const auto& rule : rules) {
        if (rule.kind != RuleKind::row_count_between && !table.has_column(rule.field)) {
            throw ConfigError("rule on line " + std::to_string(rule.line) + " references unknown field '" + rule.field +
                              "'");
        }
    }

    auto cell = [&](std::size_t row, const std::string& field) -> std::optional<std::string> {
        const auto& r = table.rows[row];
        const auto it = r.find(field);
        return it == r.end() ? std::nullopt : it->second;
    };
    auto item_of = [&](std::size_t row) { return cell(row, "item_id").value_or(""); };

    ExpectationReport report;
    for (const auto& rule : rules) {
        RuleResult res;
        res.rule = rule;
        switch (rule.kind) {
        case RuleKind::value_in_set:
        case RuleKind::matches_regex:
        case RuleKind::non_null:
        case RuleKind::numeric_range: {
            std::optional<std::regex> re;
            if (rule.kind == RuleKind::matches_regex) {
                re.emplace(rule.pattern);
            }
            for (std::size_t i = 0; i < table.rows.size(); ++i) {
                const auto value = cell(i, rule.field);
                bool ok = value.has_value();
                if (ok && rule.kind == RuleKind::value_in_set) {
                    ok = std::find(rule.values.begin(), rule.values.end(), *value) != rule.values.end();
                } else if (ok && rule.kind == RuleKind::matches_regex) {
                    ok = std::regex_match(*value, *re);
                } else if (ok && rule.kind == RuleKind::numeric_range) {
                    const auto n = parse_number(*value);
                    ok = n && *n >= rule.min && *n <= rule.max;
                }
                if (!ok) {
                    res.failures.push_back({i, item_of(i), value.value_or("<null>")});
                }
            }
            break;
        }
        case RuleKind::unique: {
            std::map<std::string, std::vector<std::size_t>> seen;
            for (std::size_t i = 0; i < table.rows.size(); ++i) {
                if (const auto value = cell(i, rule.field)) {
                    seen[*value].push_back(i);
                }
            }
            for (const auto& [value, rows] : seen) {
                if (rows.size() > 1) {
                    for (const auto i : rows) {
                        res.failures.push_back({i, item_of(i), value});
                    }
                }
            }
            std::sort(res.failures.begin(), res.failures.end(),
                      [](const auto& a, const auto& b) { return a.row_index < b.row_index; });
            break;
        }
        case RuleKind::row_count_between: {
            const auto n = static_cast<double>(table.rows.size());
            if (n < rule.min || n > rule.max) {
                res.passed = false;
                res.message = "row count " + std::to_string(table.rows.size()) + " outside range";
            }
            break;
        }
        }
        if (!res.failures.empty()) {
            res.passed = false;
            res.message = std::to_string(res.failures.size()) + " failing row(s)";
        }
        report.passed = report.passed && res.passed;
        report.results.push_back(std::move(res));
    }
    return report;
}

} // namespace primes::validation
