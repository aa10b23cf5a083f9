#include "primes/pilot.hpp"

#include "primes/error.hpp"
#include "primes/llm_client.hpp"
#include "primes/log.hpp"
#include "primes/money.hpp"
#include "primes/text.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

namespace primes::pilot {

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
    if (bound == 0) {
        throw Error("bounded_draw: bound must be positive");
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t x = rng();
        if (x < limit) {
            return x % bound;
        }
    }
}

std::map<std::string, std::size_t> allocate_proportional(const std::map<std::string, std::size_t>& strata,
                                                         std::size_t n) {
    std::size_t total = 0;
    for (const auto& [name, size] : strata) {
        total += size;
    }
    if (n > total) {
        throw ConfigError("cannot allocate " + std::to_string(n) + " items over " + std::to_string(total));
    }
    std::map<std::string, std::size_t> out;
    std::vector<std::pair<std::size_t, std::string>> remainders;
    std::size_t assigned = 0;
    for (const auto& [name, size] : strata) {
        const auto scaled = static_cast<uint128_t>(n) * size;
        out[name] = static_cast<std::size_t>(scaled / total);
        assigned += out[name];
        remainders.emplace_back(static_cast<std::size_t>(scaled % total), name);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) {
            return x.first > y.first;
        }
        return x.second < y.second;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
        ++out[remainders[i].second];
    }
    return out;
}

namespace {

void partial_shuffle(std::vector<std::string>& ids, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(bounded_draw(rng, ids.size() - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(k);
}

} // namespace

std::vector<std::string> draw_sample(const std::vector<DataItem>& dataset, std::size_t n, std::uint64_t seed,
                                     const std::optional<std::string>& stratify_by) {
    if (n < 1 || n > dataset.size()) {
        throw ConfigError("sample size must be within [1, " + std::to_string(dataset.size()) + "], got " +
                          std::to_string(n));
    }
    std::mt19937_64 rng(seed);
    if (!stratify_by) {
        std::vector<std::string> ids;
        ids.reserve(dataset.size());
        for (const auto& item : dataset) {
            ids.push_back(item.id());
        }
        std::sort(ids.begin(), ids.end());
        partial_shuffle(ids, n, rng);
        return ids;
    }

    std::map<std::string, std::vector<std::string>> strata;
    for (const auto& item : dataset) {
        const auto it = item.metadata().find(*stratify_by);
        strata[it == item.metadata().end() ? std::string{} : it->second].push_back(item.id());
    }
    std::map<std::string, std::size_t> sizes;
    for (auto& [name, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        sizes[name] = ids.size();
    }
    const auto quota = allocate_proportional(sizes, n);
    std::vector<std::string> out;
    for (auto& [name, ids] : strata) {
        partial_shuffle(ids, quota.at(name), rng);
        out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
}

// ---------------------------------------------------------------------------

std::string to_string(AgreementStatus status) {
    return status == AgreementStatus::defined ? "defined" : "degenerate";
}

Json AgreementResult::to_json() const {
    Json j = {{"task", task},
              {"categories", categories},
              {"contingency", contingency},
              {"n_items", n_items},
              {"p_o", p_o},
              {"p_e", p_e},
              {"status", to_string(status)}};
    j["kappa"] = kappa ? Json(*kappa) : Json(nullptr);
    return j;
}

AgreementResult AgreementResult::from_json(const Json& j) {
    AgreementResult r;
    r.task = j.at("task").get<std::string>();
    r.categories = j.at("categories").get<std::vector<std::string>>();
    r.contingency = j.at("contingency").get<std::vector<std::vector<std::int64_t>>>();
    r.n_items = j.at("n_items").get<std::int64_t>();
    r.p_o = j.at("p_o").get<double>();
    r.p_e = j.at("p_e").get<double>();
    if (!j.at("kappa").is_null()) {
        r.kappa = j["kappa"].get<double>();
    }
    r.status = j.at("status").get<std::string>() == "degenerate" ? AgreementStatus::degenerate
                                                                 : AgreementStatus::defined;
    return r;
}

AgreementResult kappa_from_labels(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                  const std::vector<std::string>& categories, const std::string& task) {
    if (a.size() != b.size()) {
        throw ValidationError("label sequences differ in length (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    if (a.empty()) {
        throw ValidationError("agreement needs at least one item");
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < categories.size(); ++i) {
        index.emplace(categories[i], i);
    }
    const auto k = categories.size();
    AgreementResult r;
    r.task = task;
    r.categories = categories;
    r.contingency.assign(k, std::vector<std::int64_t>(k, 0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto ia = index.find(a[i]);
        const auto ib = index.find(b[i]);
        if (ia == index.end() || ib == index.end()) {
            throw ValidationError("label outside the category set for task '" + task + "'");
        }
        ++r.contingency[ia->second][ib->second];
    }
    const auto n = static_cast<std::int64_t>(a.size());
    std::int64_t diagonal = 0;
    std::int64_t marginal_products = 0;
    for (std::size_t c = 0; c < k; ++c) {
        diagonal += r.contingency[c][c];
        std::int64_t row = 0;
        std::int64_t col = 0;
        for (std::size_t o = 0; o < k; ++o) {
            row += r.contingency[c][o];
            col += r.contingency[o][c];
        }
        marginal_products += row * col;
    }
    const auto n2 = n * n;
    r.n_items = n;
    r.p_o = static_cast<double>(diagonal) / static_cast<double>(n);
    r.p_e = static_cast<double>(marginal_products) / static_cast<double>(n2);
    if (marginal_products == n2) {
        r.status = AgreementStatus::degenerate;
    } else {
        r.status = AgreementStatus::defined;
        r.kappa = static_cast<double>(diagonal * n - marginal_products) / static_cast<double>(n2 - marginal_products);
    }
    return r;
}

namespace {

std::map<std::string, const Annotation*> index_by_item(const std::vector<Annotation>& annotations, const char* side) {
    std::map<std::string, const Annotation*> out;
    for (const auto& a : annotations) {
        if (!out.emplace(a.item_id(), &a).second) {
            throw ValidationError(std::string("annotator ") + side + " has more than one annotation for item " +
                                  a.item_id());
        }
    }
    return out;
}

void require_same_items(const std::map<std::string, const Annotation*>& a,
                        const std::map<std::string, const Annotation*>& b) {
    std::vector<std::string> only_a;
    std::vector<std::string> only_b;
    for (const auto& [id, _] : a) {
        if (b.count(id) == 0) {
            only_a.push_back(id);
        }
    }
    for (const auto& [id, _] : b) {
        if (a.count(id) == 0) {
            only_b.push_back(id);
        }
    }
    if (!only_a.empty() || !only_b.empty()) {
        throw ValidationError("annotation item sets differ; only in A: [" + text::join(only_a, ", ") +
                              "]; only in B: [" + text::join(only_b, ", ") + "]");
    }
}

} // namespace

AgreementResult cohens_kappa(const std::vector<Annotation>& a, const std::vector<Annotation>& b, const Task& task) {
    const auto ia = index_by_item(a, "A");
    const auto ib = index_by_item(b, "B");
    require_same_items(ia, ib);
    std::vector<std::string> la;
    std::vector<std::string> lb;
    for (const auto& [id, ann] : ia) {
        const auto* x = ann->label(task.name);
        const auto* y = ib.at(id)->label(task.name);
        if (x == nullptr || y == nullptr) {
            throw ValidationError("item " + id + " is missing a label for task '" + task.name + "' from annotator " +
                                  (x == nullptr ? "A" : "B"));
        }
        la.push_back(*x);
        lb.push_back(*y);
    }
    return kappa_from_labels(la, lb, task.categories, task.name);
}

std::vector<AgreementResult> agreement_for_schema(const std::vector<Annotation>& a, const std::vector<Annotation>& b,
                                                  const LabelSchema& schema) {
    std::vector<AgreementResult> out;
    for (const auto& task : schema.tasks()) {
        out.push_back(cohens_kappa(a, b, task));
    }
    return out;
}

Json agreement_document(const std::vector<AgreementResult>& results) {
    Json tasks = Json::array();
    for (const auto& r : results) {
        tasks.push_back(r.to_json());
    }
    return {{"tasks", tasks}};
}

std::vector<AgreementResult> agreement_from_document(const Json& doc) {
    std::vector<AgreementResult> out;
    for (const auto& t : doc.at("tasks")) {
        out.push_back(AgreementResult::from_json(t));
    }
    return out;
}

// ---------------------------------------------------------------------------

GateComparison parse_gate_comparison(const std::string& text) {
    if (text == ">=" || text == "at_least") {
        return GateComparison::at_least;
    }
    if (text == ">" || text == "greater_than") {
        return GateComparison::greater_than;
    }
    throw ConfigError("gate comparison must be '>=' or '>', got '" + text + "'");
}

std::string to_string(GateComparison comparison) {
    return comparison == GateComparison::at_least ? ">=" : ">";
}

std::string to_string(GateOutcome outcome) {
    return outcome == GateOutcome::pass ? "pass" : "refine";
}

Json GateDecision::to_json() const {
    return {{"outcome", to_string(outcome)}, {"reasons", reasons}};
}

GateDecision GateDecision::from_json(const Json& j) {
    GateDecision d;
    d.outcome = j.at("outcome").get<std::string>() == "pass" ? GateOutcome::pass : GateOutcome::refine;
    d.reasons = j.at("reasons").get<std::vector<std::string>>();
    return d;
}

GateDecision evaluate_gate(const std::vector<AgreementResult>& results, double threshold, std::size_t min_n,
                           GateComparison comparison) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw ConfigError("gate threshold must be within (0, 1]");
    }
    if (min_n < 1) {
        throw ConfigError("gate min_n must be >= 1");
    }
    GateDecision d;
    if (results.empty()) {
        d.reasons.emplace_back("no agreement results");
    }
    for (const auto& r : results) {
        const auto prefix = r.task.empty() ? std::string{} : "task " + r.task + ": ";
        if (static_cast<std::size_t>(r.n_items) < min_n) {
            d.reasons.push_back(prefix + "sample too small (n=" + std::to_string(r.n_items) + " < min_n=" +
                                std::to_string(min_n) + ")");
        }
        if (r.status == AgreementStatus::degenerate || !r.kappa) {
            d.reasons.push_back(prefix + "degenerate sample");
            continue;
        }
        const bool meets = comparison == GateComparison::at_least ? *r.kappa >= threshold : *r.kappa > threshold;
        if (!meets) {
            d.reasons.push_back(prefix + "kappa " + text::format_double(*r.kappa) + " below threshold " +
                                to_string(comparison) + " " + text::format_double(threshold));
        }
    }
    d.outcome = d.reasons.empty() ? GateOutcome::pass : GateOutcome::refine;
    return d;
}

// ---------------------------------------------------------------------------

Json Disagreement::to_json() const {
    return {{"item_id", item_id},     {"task", task},           {"label_a", label_a},
            {"label_b", label_b},     {"rationale_a", rationale_a}, {"rationale_b", rationale_b}};
}

std::vector<Disagreement> list_disagreements(const std::vector<Annotation>& a, const std::vector<Annotation>& b,
                                             const LabelSchema& schema) {
    const auto ia = index_by_item(a, "A");
    const auto ib = index_by_item(b, "B");
    std::vector<Disagreement> rows;
    for (const auto& [id, x] : ia) {
        const auto it = ib.find(id);
        if (it == ib.end()) {
            continue;
        }
        const auto* y = it->second;
        for (const auto& task : schema.tasks()) {
            const auto* la = x->label(task.name);
            const auto* lb = y->label(task.name);
            if (la == nullptr || lb == nullptr || *la == *lb) {
                continue;
            }
            rows.push_back({id, task.name, *la, *lb, x->rationale().value_or(""), y->rationale().value_or("")});
        }
    }
    return rows;
}

std::string disagreements_csv(const std::vector<Disagreement>& rows) {
    std::vector<csv::Row> out;
    for (const auto& r : rows) {
        out.push_back({r.item_id, r.task, r.label_a, r.label_b, r.rationale_a, r.rationale_b});
    }
    return csv::format({"item_id", "task", "label_a", "label_b", "rationale_a", "rationale_b"}, out);
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kRationaleSuffix = "_rationale";

bool is_rationale_column(const std::string& name) {
    return name.size() > kRationaleSuffix.size() &&
           name.compare(name.size() - kRationaleSuffix.size(), kRationaleSuffix.size(), kRationaleSuffix) == 0;
}

std::optional<std::size_t> column_of(const csv::Row& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - header.begin());
}

} // namespace

std::vector<Annotation> annotations_from_csv(const csv::Table& table, const LabelSchema& schema,
                                             const Annotator& default_annotator) {
    const auto id_col = column_of(table.header, "item_id");
    if (!id_col) {
        throw ValidationError("annotation CSV needs an item_id column");
    }
    const auto annotator_col = column_of(table.header, "annotator");
    std::vector<std::pair<const Task*, std::pair<std::size_t, std::optional<std::size_t>>>> task_cols;
    for (const auto& task : schema.tasks()) {
        const auto c = column_of(table.header, task.name);
        if (!c) {
            throw ValidationError("annotation CSV has no column for task '" + task.name + "'");
        }
        task_cols.push_back({&task, {*c, column_of(table.header, task.name + std::string(kRationaleSuffix))}});
    }
    std::vector<Annotation> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto where = "annotation CSV record " + std::to_string(table.record_numbers[r]);
        if (row.size() != table.header.size()) {
            throw ValidationError(where + ": expected " + std::to_string(table.header.size()) + " cells, got " +
                                  std::to_string(row.size()));
        }
        LabelMap labels;
        std::vector<std::string> rationales;
        for (const auto& [task, cols] : task_cols) {
            const auto value = text::trim(row[cols.first]);
            if (value.empty()) {
                throw ValidationError(where + ": empty label for task '" + task->name + "'");
            }
            labels[task->name] = std::string(value);
            if (cols.second && !text::trim(row[*cols.second]).empty()) {
                rationales.push_back(task_cols.size() == 1 ? row[*cols.second]
                                                           : task->name + ": " + row[*cols.second]);
            }
        }
        const auto annotator = annotator_col && !row[*annotator_col].empty() ? Annotator::parse(row[*annotator_col])
                                                                             : default_annotator;
        std::optional<std::string> rationale;
        if (rationales.size() == 1 && task_cols.size() > 1) {
            rationale = rationales[0].substr(rationales[0].find(": ") + 2);
        } else if (!rationales.empty()) {
            rationale = text::join(rationales, "\n");
        }
        try {
            out.emplace_back(schema, std::string(text::trim(row[*id_col])), annotator, std::move(labels),
                             std::move(rationale));
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<Annotation> read_annotations_csv(const std::filesystem::path& path, const LabelSchema& schema,
                                             const Annotator& default_annotator) {
    try {
        return annotations_from_csv(csv::parse(fs::read_file(path)), schema, default_annotator);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

namespace {

/// Inverse of the reader: "task: text" lines go to their task's column when at
/// least two tasks have one, otherwise the whole rationale goes to the first.
std::vector<std::string> split_task_rationale(const std::optional<std::string>& rationale,
                                              const LabelSchema& schema) {
    std::vector<std::string> out(schema.tasks().size());
    if (!rationale || rationale->empty()) {
        return out;
    }
    if (schema.tasks().size() > 1) {
        std::size_t filled = 0;
        bool all_prefixed = true;
        for (const auto& line : text::split(*rationale, '\n')) {
            bool matched = false;
            for (std::size_t t = 0; t < schema.tasks().size(); ++t) {
                const auto prefix = schema.tasks()[t].name + ": ";
                if (line.rfind(prefix, 0) == 0 && out[t].empty()) {
                    out[t] = line.substr(prefix.size());
                    matched = !out[t].empty();
                    ++filled;
                    break;
                }
            }
            all_prefixed = all_prefixed && matched;
        }
        if (all_prefixed && filled >= 2) {
            return out;
        }
        std::fill(out.begin(), out.end(), std::string{});
    }
    out[0] = *rationale;
    return out;
}

} // namespace

std::string annotations_csv(const std::vector<Annotation>& annotations, const LabelSchema& schema) {
    csv::Row header = {"item_id", "annotator"};
    for (const auto& task : schema.tasks()) {
        header.push_back(task.name);
        header.push_back(task.name + std::string(kRationaleSuffix));
    }
    std::vector<csv::Row> rows;
    for (const auto& a : annotations) {
        const auto per_task = split_task_rationale(a.rationale(), schema);
        csv::Row row = {a.item_id(), a.annotator().to_string()};
        for (std::size_t t = 0; t < schema.tasks().size(); ++t) {
            const auto* l = a.label(schema.tasks()[t].name);
            row.push_back(l == nullptr ? std::string{} : *l);
            row.push_back(per_task[t]);
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end());
    return csv::format(header, rows);
}

LabelSchema infer_schema(const std::vector<csv::Table>& tables) {
    std::vector<std::string> order;
    std::map<std::string, std::set<std::string>> categories;
    for (const auto& table : tables) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            const auto& name = table.header[c];
            if (name == "item_id" || name == "annotator" || is_rationale_column(name)) {
                continue;
            }
            if (categories.count(name) == 0) {
                order.push_back(name);
            }
            auto& set = categories[name];
            for (const auto& row : table.rows) {
                if (c < row.size() && !text::trim(row[c]).empty()) {
                    set.emplace(text::trim(row[c]));
                }
            }
        }
    }
    std::vector<Task> tasks;
    for (const auto& name : order) {
        tasks.push_back({name, {categories[name].begin(), categories[name].end()}});
    }
    return LabelSchema(std::move(tasks));
}

// ---------------------------------------------------------------------------

ModelAnnotations annotate_with_model(llm::LlmClient& client, const prompt::PromptVersion& version,
                                     const std::vector<DataItem>& items, std::size_t concurrency) {
    const auto& schema = version.content.schema;
    const auto out_schema = validation::OutputSchema::from_label_schema(schema);
    const Annotator annotator{Annotator::Kind::model, client.model().model_id};

    std::vector<std::optional<llm::ModelResponse>> responses(items.size());
    concurrency = std::max<std::size_t>(1, concurrency);
    for (std::size_t start = 0; start < items.size(); start += concurrency) {
        const auto end = std::min(items.size(), start + concurrency);
        std::vector<std::future<llm::ModelResponse>> batch;
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(std::async(std::launch::async, [&, i] {
                return client.cached_complete(prompt::compose_prompt(version, items[i]));
            }));
        }
        for (std::size_t i = start; i < end; ++i) {
            responses[i] = batch[i - start].get();
        }
    }

    ModelAnnotations out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto result = validation::validate_format(responses[i]->text, out_schema, items[i].id());
        if (!result.ok()) {
            out.failed_item_ids.push_back(items[i].id());
            out.failures.insert(out.failures.end(), result.findings.begin(), result.findings.end());
            continue;
        }
        out.annotations.emplace_back(schema, items[i].id(), annotator, result.parsed->labels, result.parsed->rationale);
    }
    return out;
}

std::vector<Annotation> restrict_to(const std::vector<Annotation>& annotations, const std::vector<std::string>& ids) {
    const std::set<std::string> keep(ids.begin(), ids.end());
    std::vector<Annotation> out;
    for (const auto& a : annotations) {
        if (keep.count(a.item_id()) != 0) {
            out.push_back(a);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Json PilotRound::to_json() const {
    Json agreement_json = Json::array();
    for (const auto& a : agreement) {
        agreement_json.push_back(a.to_json());
    }
    return {{"round_number", round_number},
            {"prompt_version_id", prompt_version_id},
            {"sample_item_ids", sample_item_ids},
            {"fresh_sample", fresh_sample},
            {"agreement", agreement_json},
            {"threshold", threshold},
            {"min_n", min_n},
            {"comparison", to_string(comparison)},
            {"gate", gate.to_json()},
            {"parse_failures", parse_failures},
            {"notes", notes},
            {"created_at", created_at}};
}

PilotRound PilotRound::from_json(const Json& j) {
    PilotRound r;
    r.round_number = j.at("round_number").get<int>();
    r.prompt_version_id = j.at("prompt_version_id").get<std::string>();
    r.sample_item_ids = j.at("sample_item_ids").get<std::vector<std::string>>();
    r.fresh_sample = j.value("fresh_sample", true);
    for (const auto& a : j.at("agreement")) {
        r.agreement.push_back(AgreementResult::from_json(a));
    }
    r.threshold = j.at("threshold").get<double>();
    r.min_n = j.at("min_n").get<std::size_t>();
    r.comparison = parse_gate_comparison(j.value("comparison", std::string(">=")));
    r.gate = GateDecision::from_json(j.at("gate"));
    r.parse_failures = j.value("parse_failures", std::size_t{0});
    r.notes = j.value("notes", std::string{});
    r.created_at = j.value("created_at", std::string{});
    return r;
}

RoundLedger::RoundLedger(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) {
        return;
    }
    std::istringstream in(fs::read_file(path_));
    std::string line;
    while (std::getline(in, line)) {
        if (!text::trim(line).empty()) {
            rounds_.push_back(PilotRound::from_json(Json::parse(line)));
        }
    }
}

void RoundLedger::append(const PilotRound& round) {
    if (!rounds_.empty() && round.round_number <= rounds_.back().round_number) {
        throw ValidationError("round " + std::to_string(round.round_number) + " does not follow round " +
                              std::to_string(rounds_.back().round_number));
    }
    if (round.prompt_version_id.empty()) {
        throw ValidationError("round " + std::to_string(round.round_number) + " has no prompt version");
    }
    const auto expected = evaluate_gate(round.agreement, round.threshold, round.min_n, round.comparison);
    if (expected.outcome != round.gate.outcome) {
        throw ValidationError("round " + std::to_string(round.round_number) + " records gate '" +
                              to_string(round.gate.outcome) + "' but its agreement gives '" +
                              to_string(expected.outcome) + "'");
    }
    fs::append_line(path_, round.to_json().dump());
    rounds_.push_back(round);
}

std::optional<PilotRound> RoundLedger::last() const {
    if (rounds_.empty()) {
        return std::nullopt;
    }
    return rounds_.back();
}

} // namespace primes::pilot
