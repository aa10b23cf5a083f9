#include "primes/benchmark.hpp"

#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/llm_client.hpp"
#include "primes/log.hpp"
#include "primes/pilot.hpp"
#include "primes/text.hpp"
#include "primes/validation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <set>
#include <sstream>

namespace primes::benchmark {

Oracle::Oracle(LabelSchema schema, std::vector<OracleEntry> entries)
    : schema_(std::move(schema)), entries_(std::move(entries)) {
    std::sort(entries_.begin(), entries_.end(),
              [](const OracleEntry& a, const OracleEntry& b) { return a.item_id < b.item_id; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.item_id.empty()) {
            throw ValidationError("oracle entry without item id");
        }
        if (i > 0 && entries_[i - 1].item_id == e.item_id) {
            throw ValidationError("oracle has more than one entry for item " + e.item_id);
        }
        for (const auto& task : schema_.tasks()) {
            const auto it = e.gold.find(task.name);
            if (it == e.gold.end()) {
                throw ValidationError("oracle item " + e.item_id + " has no gold label for task '" + task.name + "'");
            }
            if (!task.has_category(it->second)) {
                throw ValidationError("oracle item " + e.item_id + ": '" + it->second +
                                      "' is not a category of task '" + task.name + "'");
            }
        }
        for (const auto& [task, _] : e.gold) {
            if (schema_.find(task) == nullptr) {
                throw ValidationError("oracle item " + e.item_id + " labels unknown task '" + task + "'");
            }
        }
    }
}

Oracle Oracle::from_csv(const csv::Table& table, const LabelSchema& schema) {
    const csv::Row expected = {"item_id", "task", "gold_label", "annotator", "basis"};
    if (table.header != expected) {
        throw ValidationError("oracle CSV header must be: " + text::join(expected, ","));
    }
    std::map<std::string, OracleEntry> by_item;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != expected.size()) {
            throw ValidationError("oracle CSV record " + std::to_string(table.record_numbers[r]) + ": expected 5 cells");
        }
        auto& e = by_item[row[0]];
        e.item_id = row[0];
        if (!e.gold.emplace(row[1], row[2]).second) {
            throw ValidationError("oracle CSV record " + std::to_string(table.record_numbers[r]) +
                                  ": duplicate task '" + row[1] + "' for item " + row[0]);
        }
        if (e.annotator.empty()) {
            e.annotator = row[3];
        }
        if (e.basis.empty()) {
            e.basis = row[4];
        } else if (!row[4].empty() && row[4] != e.basis) {
            e.basis += "; " + row[4];
        }
    }
    std::vector<OracleEntry> entries;
    for (auto& [_, e] : by_item) {
        entries.push_back(std::move(e));
    }
    return Oracle(schema, std::move(entries));
}

Oracle Oracle::load(const std::filesystem::path& path, const LabelSchema& schema) {
    try {
        return from_csv(csv::parse(fs::read_file(path)), schema);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

std::string Oracle::to_csv() const {
    std::vector<csv::Row> rows;
    for (const auto& e : entries_) {
        for (const auto& task : schema_.tasks()) {
            rows.push_back({e.item_id, task.name, e.gold.at(task.name), e.annotator, e.basis});
        }
    }
    return csv::format({"item_id", "task", "gold_label", "annotator", "basis"}, rows);
}

const OracleEntry* Oracle::find(const std::string& item_id) const {
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), item_id,
                                     [](const OracleEntry& e, const std::string& id) { return e.item_id < id; });
    if (it == entries_.end() || it->item_id != item_id) {
        return nullptr;
    }
    return &*it;
}

std::string Oracle::digest() const {
    return sha256_hex(schema_.to_json().dump() + "\n" + to_csv());
}

// ---------------------------------------------------------------------------

double z_for_confidence(double confidence) {
    struct Level {
        double confidence;
        double z;
    };
    static constexpr Level kLevels[] = {{0.90, 1.645}, {0.95, 1.960}, {0.99, 2.576}};
    for (const auto& level : kLevels) {
        if (std::abs(level.confidence - confidence) < 1e-9) {
            return level.z;
        }
    }
    throw ConfigError("confidence level must be one of 0.90, 0.95, 0.99; got " + text::format_double(confidence));
}

std::int64_t required_sample_size(std::optional<std::int64_t> population, double confidence, double margin, double p) {
    const double z = z_for_confidence(confidence);
    if (!(margin > 0.0 && margin < 1.0)) {
        throw ConfigError("margin of error must be within (0, 1)");
    }
    if (!(p > 0.0 && p < 1.0)) {
        throw ConfigError("expected proportion p must be within (0, 1)");
    }
    if (population && *population < 1) {
        throw ConfigError("population size must be >= 1");
    }
    double n = z * z * p * (1.0 - p) / (margin * margin);
    if (population) {
        n = n / (1.0 + (n - 1.0) / static_cast<double>(*population));
    }
    // guard against 385.0000000001-style float noise pushing the ceiling up
    return static_cast<std::int64_t>(std::ceil(n - 1e-9));
}

Json sample_size_document(std::optional<std::int64_t> population, double confidence, double margin, double p) {
    Json doc = {{"n", required_sample_size(population, confidence, margin, p)},
                {"confidence", confidence},
                {"z", z_for_confidence(confidence)},
                {"margin", margin},
                {"p", p}};
    doc["population"] = population ? Json(*population) : Json(nullptr);
    return doc;
}

// ---------------------------------------------------------------------------

namespace {

Json optional_json(const std::optional<double>& v) {
    return v ? Json(*v) : Json(nullptr);
}

std::optional<double> optional_from(const Json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    return j[key].get<double>();
}

} // namespace

Json ModelRunMetrics::to_json() const {
    Json tasks_json = Json::array();
    for (const auto& t : tasks) {
        Json cats = Json::array();
        for (const auto& c : t.per_category) {
            cats.push_back({{"category", c.category},
                            {"gold", c.gold},
                            {"predicted", c.predicted},
                            {"true_positive", c.true_positive},
                            {"precision", optional_json(c.precision)},
                            {"recall", optional_json(c.recall)}});
        }
        tasks_json.push_back({{"task", t.task},
                              {"categories", t.categories},
                              {"confusion", t.confusion},
                              {"correct", t.correct},
                              {"total", t.total},
                              {"accuracy", t.accuracy},
                              {"per_category", cats}});
    }
    return {{"model_id", model_id},
            {"prompt_version_id", prompt_version_id},
            {"oracle_digest", oracle_digest},
            {"n_items", n_items},
            {"tasks", tasks_json},
            {"mean_accuracy", mean_accuracy},
            {"cost", cost.to_string()},
            {"input_tokens", input_tokens},
            {"output_tokens", output_tokens},
            {"latency_median_ms", latency_median_ms},
            {"latency_p95_ms", latency_p95_ms},
            {"interpretability", optional_json(interpretability)},
            {"interpretability_count", interpretability_count},
            {"parse_failure_count", parse_failure_count},
            {"incomplete", incomplete},
            {"incomplete_reason", incomplete_reason}};
}

ModelRunMetrics ModelRunMetrics::from_json(const Json& j) {
    ModelRunMetrics m;
    m.model_id = j.at("model_id").get<std::string>();
    m.prompt_version_id = j.value("prompt_version_id", std::string{});
    m.oracle_digest = j.value("oracle_digest", std::string{});
    m.n_items = j.value("n_items", std::int64_t{0});
    for (const auto& t : j.value("tasks", Json::array())) {
        TaskMetrics tm;
        tm.task = t.at("task").get<std::string>();
        tm.categories = t.at("categories").get<std::vector<std::string>>();
        tm.confusion = t.at("confusion").get<std::vector<std::vector<std::int64_t>>>();
        tm.correct = t.at("correct").get<std::int64_t>();
        tm.total = t.at("total").get<std::int64_t>();
        tm.accuracy = t.at("accuracy").get<double>();
        for (const auto& c : t.value("per_category", Json::array())) {
            tm.per_category.push_back({c.at("category").get<std::string>(), c.at("gold").get<std::int64_t>(),
                                       c.at("predicted").get<std::int64_t>(), c.at("true_positive").get<std::int64_t>(),
                                       optional_from(c, "precision"), optional_from(c, "recall")});
        }
        m.tasks.push_back(std::move(tm));
    }
    m.mean_accuracy = j.at("mean_accuracy").get<double>();
    const auto& cost = j.value("cost", Json("0"));
    m.cost = cost.is_string() ? Money::parse(cost.get<std::string>()) : Money::parse(text::format_double(cost.get<double>()));
    m.input_tokens = j.value("input_tokens", std::int64_t{0});
    m.output_tokens = j.value("output_tokens", std::int64_t{0});
    m.latency_median_ms = j.value("latency_median_ms", 0.0);
    m.latency_p95_ms = j.value("latency_p95_ms", std::int64_t{0});
    m.interpretability = optional_from(j, "interpretability");
    m.interpretability_count = j.value("interpretability_count", std::int64_t{0});
    m.parse_failure_count = j.value("parse_failure_count", std::int64_t{0});
    m.incomplete = j.value("incomplete", false);
    m.incomplete_reason = j.value("incomplete_reason", std::string{});
    return m;
}

ModelRunMetrics aggregate_metrics(const Oracle& oracle, const std::vector<ItemOutcome>& outcomes) {
    ModelRunMetrics m;
    m.oracle_digest = oracle.digest();
    std::vector<const ItemOutcome*> counted;
    std::set<std::string> seen;
    for (const auto& o : outcomes) {
        if (oracle.find(o.item_id) == nullptr) {
            throw ValidationError("outcome for item " + o.item_id + " which is not in the oracle");
        }
        if (!seen.insert(o.item_id).second) {
            throw ValidationError("more than one outcome for item " + o.item_id);
        }
        counted.push_back(&o);
    }
    m.n_items = static_cast<std::int64_t>(counted.size());

    std::vector<std::int64_t> latencies;
    for (const auto* o : counted) {
        m.cost += o->cost;
        m.input_tokens += o->input_tokens;
        m.output_tokens += o->output_tokens;
        latencies.push_back(o->latency_ms);
        if (!o->predicted) {
            ++m.parse_failure_count;
        }
    }
    if (!latencies.empty()) {
        std::sort(latencies.begin(), latencies.end());
        const auto n = latencies.size();
        m.latency_median_ms = n % 2 == 1 ? static_cast<double>(latencies[n / 2])
                                         : (static_cast<double>(latencies[n / 2 - 1]) + static_cast<double>(latencies[n / 2])) / 2.0;
        // nearest-rank percentile
        const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
        m.latency_p95_ms = latencies[std::max<std::size_t>(rank, 1) - 1];
    }

    double accuracy_sum = 0.0;
    for (const auto& task : oracle.schema().tasks()) {
        TaskMetrics tm;
        tm.task = task.name;
        tm.categories = task.categories;
        const auto k = task.categories.size();
        tm.confusion.assign(k, std::vector<std::int64_t>(k + 1, 0));
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < k; ++i) {
            index.emplace(task.categories[i], i);
        }
        for (const auto* o : counted) {
            const auto gold = index.at(oracle.find(o->item_id)->gold.at(task.name));
            std::size_t col = k;
            if (o->predicted) {
                const auto it = o->predicted->find(task.name);
                if (it != o->predicted->end()) {
                    const auto p = index.find(it->second);
                    if (p != index.end()) {
                        col = p->second;
                    }
                }
            }
            ++tm.confusion[gold][col];
            ++tm.total;
            if (col == gold) {
                ++tm.correct;
            }
        }
        tm.accuracy = tm.total == 0 ? 0.0 : static_cast<double>(tm.correct) / static_cast<double>(tm.total);
        for (std::size_t c = 0; c < k; ++c) {
            CategoryStats cs;
            cs.category = task.categories[c];
            cs.true_positive = tm.confusion[c][c];
            for (std::size_t o = 0; o <= k; ++o) {
                cs.gold += tm.confusion[c][o];
            }
            for (std::size_t g = 0; g < k; ++g) {
                cs.predicted += tm.confusion[g][c];
            }
            if (cs.predicted > 0) {
                cs.precision = static_cast<double>(cs.true_positive) / static_cast<double>(cs.predicted);
            }
            if (cs.gold > 0) {
                cs.recall = static_cast<double>(cs.true_positive) / static_cast<double>(cs.gold);
            }
            tm.per_category.push_back(std::move(cs));
        }
        accuracy_sum += tm.accuracy;
        m.tasks.push_back(std::move(tm));
    }
    m.mean_accuracy = m.tasks.empty() ? 0.0 : accuracy_sum / static_cast<double>(m.tasks.size());
    return m;
}

std::map<std::string, std::vector<int>> read_ratings_csv(const std::filesystem::path& path) {
    const auto table = csv::parse(fs::read_file(path));
    const csv::Row expected = {"item_id", "model_id", "rating"};
    if (table.header != expected) {
        throw ValidationError(path.string() + ": ratings header must be item_id,model_id,rating");
    }
    std::map<std::string, std::vector<int>> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        int rating = 0;
        try {
            rating = row.size() == 3 ? std::stoi(row[2]) : 0;
        } catch (const std::exception&) {
            rating = 0;
        }
        if (rating < 1 || rating > 5) {
            throw ValidationError(path.string() + ": record " + std::to_string(table.record_numbers[r]) +
                                  ": rating must be an integer 1..5");
        }
        out[row[1]].push_back(rating);
    }
    return out;
}

void apply_ratings(ModelRunMetrics& metrics, const std::map<std::string, std::vector<int>>& ratings_by_model) {
    const auto it = ratings_by_model.find(metrics.model_id);
    if (it == ratings_by_model.end() || it->second.empty()) {
        metrics.interpretability.reset();
        metrics.interpretability_count = 0;
        return;
    }
    double sum = 0.0;
    for (const int r : it->second) {
        sum += r;
    }
    metrics.interpretability_count = static_cast<std::int64_t>(it->second.size());
    metrics.interpretability = sum / static_cast<double>(it->second.size());
}

ModelRunMetrics evaluate_model(llm::LlmClient& client, const prompt::PromptVersion& version, const Oracle& oracle,
                               const std::map<std::string, DataItem>& items, const EvaluateOptions& options) {
    if (oracle.size() == 0) {
        throw ValidationError("oracle is empty");
    }
    const auto out_schema = validation::OutputSchema::from_label_schema(version.content.schema);
    std::vector<const DataItem*> ordered;
    for (const auto& e : oracle.entries()) {
        const auto it = items.find(e.item_id);
        if (it == items.end()) {
            throw ValidationError("oracle item " + e.item_id + " is not in the dataset");
        }
        ordered.push_back(&it->second);
    }

    std::vector<ItemOutcome> outcomes;
    std::string failure;
    const auto width = std::max<std::size_t>(1, options.concurrency);
    for (std::size_t start = 0; start < ordered.size() && failure.empty(); start += width) {
        const auto end = std::min(ordered.size(), start + width);
        std::vector<std::future<llm::ModelResponse>> batch;
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(std::async(std::launch::async, [&, i] {
                return client.cached_complete(prompt::compose_prompt(version, *ordered[i]));
            }));
        }
        for (std::size_t i = start; i < end; ++i) {
            try {
                const auto response = batch[i - start].get();
                ItemOutcome o;
                o.item_id = ordered[i]->id();
                const auto parsed = validation::validate_format(response.text, out_schema, o.item_id);
                if (parsed.ok()) {
                    o.predicted = parsed.parsed->labels;
                }
                o.input_tokens = response.input_tokens;
                o.output_tokens = response.output_tokens;
                o.latency_ms = response.latency_ms;
                o.cost = llm::call_cost(response, client.model());
                outcomes.push_back(std::move(o));
            } catch (const Error& e) {
                if (failure.empty()) {
                    failure = e.what();
                }
            }
        }
    }

    auto metrics = aggregate_metrics(oracle, outcomes);
    metrics.model_id = client.model().model_id;
    metrics.prompt_version_id = version.version_id;
    if (!failure.empty()) {
        metrics.incomplete = true;
        metrics.incomplete_reason = failure;
        log::error("benchmark run for " + metrics.model_id + " aborted after " + std::to_string(outcomes.size()) +
                   " of " + std::to_string(ordered.size()) + " items: " + failure);
    }
    return metrics;
}

// ---------------------------------------------------------------------------

Json Weights::to_json() const {
    return {{"accuracy", accuracy}, {"cost", cost}, {"interpretability", interpretability}};
}

namespace {

bool default_before(const ModelRunMetrics& a, const ModelRunMetrics& b) {
    if (a.mean_accuracy != b.mean_accuracy) {
        return a.mean_accuracy > b.mean_accuracy;
    }
    if (a.cost != b.cost) {
        return a.cost < b.cost;
    }
    return a.model_id < b.model_id;
}

std::vector<double> min_max(const std::vector<double>& values) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    std::vector<double> out;
    for (const double v : values) {
        out.push_back(*hi == *lo ? 1.0 : (v - *lo) / (*hi - *lo));
    }
    return out;
}

std::string fixed(double v, int places) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(places) << v;
    return out.str();
}

} // namespace

ComparisonReport compare_models(std::vector<ModelRunMetrics> runs, const std::optional<Weights>& weights) {
    if (runs.empty()) {
        throw ValidationError("nothing to compare");
    }
    for (const auto& r : runs) {
        if (r.oracle_digest != runs.front().oracle_digest) {
            throw ValidationError("runs use different oracles (" + runs.front().model_id + " vs " + r.model_id + ")");
        }
        if (r.prompt_version_id != runs.front().prompt_version_id) {
            throw ValidationError("runs use different prompt versions (" + runs.front().model_id + " vs " +
                                  r.model_id + ")");
        }
    }
    ComparisonReport report;
    report.weights = weights;
    std::vector<std::optional<double>> scores(runs.size());
    if (weights) {
        std::vector<double> acc;
        std::vector<double> cost;
        std::vector<double> interp;
        for (const auto& r : runs) {
            acc.push_back(r.mean_accuracy);
            cost.push_back(r.cost.to_double());
            interp.push_back(r.interpretability.value_or(0.0));
        }
        const auto na = min_max(acc);
        const auto nc = min_max(cost);
        const auto ni = min_max(interp);
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const double cost_term = runs.size() == 1 || cost.front() == cost.back() ? 1.0 : 1.0 - nc[i];
            scores[i] = weights->accuracy * na[i] + weights->cost * cost_term + weights->interpretability * ni[i];
        }
    }
    std::vector<std::size_t> order(runs.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] && scores[b] && *scores[a] != *scores[b]) {
            return *scores[a] > *scores[b];
        }
        return default_before(runs[a], runs[b]);
    });
    int rank = 0;
    for (const auto i : order) {
        report.ranking.push_back({++rank, runs[i], scores[i]});
    }
    return report;
}

std::string ComparisonReport::to_text() const {
    std::ostringstream out;
    out << "rank  model_id                          accuracy  interpretability  cost          in_tokens  out_tokens  "
           "p50_ms  p95_ms  parse_failures";
    if (weights) {
        out << "  score";
    }
    out << "\n";
    for (const auto& r : ranking) {
        const auto& m = r.metrics;
        out << std::left << std::setw(6) << r.rank << std::setw(34) << m.model_id << std::setw(10)
            << fixed(m.mean_accuracy, 4) << std::setw(18)
            << (m.interpretability ? fixed(*m.interpretability, 2) + " (n=" + std::to_string(m.interpretability_count) + ")"
                                   : std::string("-"))
            << std::setw(14) << m.cost.to_string(6) << std::setw(11) << m.input_tokens << std::setw(12)
            << m.output_tokens << std::setw(8) << fixed(m.latency_median_ms, 1) << std::setw(8) << m.latency_p95_ms
            << m.parse_failure_count;
        if (r.score) {
            out << "  " << fixed(*r.score, 4);
        }
        if (m.incomplete) {
            out << "  [incomplete]";
        }
        out << "\n";
    }
    for (const auto& r : ranking) {
        for (const auto& t : r.metrics.tasks) {
            out << "\n" << r.metrics.model_id << " / " << t.task << ": accuracy " << fixed(t.accuracy, 4) << " ("
                << t.correct << "/" << t.total << ")\n";
            out << "  category                          precision  recall  gold  predicted\n";
            for (const auto& c : t.per_category) {
                out << "  " << std::left << std::setw(34) << c.category << std::setw(11)
                    << (c.precision ? fixed(*c.precision, 4) : std::string("-")) << std::setw(8)
                    << (c.recall ? fixed(*c.recall, 4) : std::string("-")) << std::setw(6) << c.gold << c.predicted
                    << "\n";
            }
        }
    }
    return out.str();
}

Json ComparisonReport::to_json() const {
    Json ranked = Json::array();
    for (const auto& r : ranking) {
        Json entry = {{"rank", r.rank}, {"metrics", r.metrics.to_json()}};
        entry["score"] = r.score ? Json(*r.score) : Json(nullptr);
        ranked.push_back(std::move(entry));
    }
    Json j = {{"ranking", ranked},
              {"order", "mean_accuracy desc, cost asc, model_id asc"},
              {"axes", {"accuracy", "interpretability", "cost"}}};
    j["weights"] = weights ? weights->to_json() : Json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------

Json BenchmarkSuite::composition() const {
    return {{"positives", positives}, {"negatives", negatives}, {"total", positives + negatives}};
}

BenchmarkSuite build_benchmark_suite(const Oracle& oracle, const std::vector<DataItem>& negatives, std::uint64_t seed,
                                     const std::string& negative_label) {
    for (const auto& task : oracle.schema().tasks()) {
        if (!task.has_category(negative_label)) {
            throw ConfigError("task '" + task.name + "' has no '" + negative_label +
                              "' category; extend the schema with a none-of-the-above category before adding "
                              "negative distractors");
        }
    }
    std::vector<OracleEntry> entries = oracle.entries();
    for (const auto& item : negatives) {
        OracleEntry e;
        e.item_id = item.id();
        for (const auto& task : oracle.schema().tasks()) {
            e.gold[task.name] = negative_label;
        }
        e.annotator = "suite";
        e.basis = "negative distractor";
        entries.push_back(std::move(e));
    }
    BenchmarkSuite suite{Oracle(oracle.schema(), std::move(entries)), {}, oracle.size(), negatives.size()};
    for (const auto& e : suite.oracle.entries()) {
        suite.order.push_back(e.item_id);
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = suite.order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(pilot::bounded_draw(rng, i));
        std::swap(suite.order[i - 1], suite.order[j]);
    }
    return suite;
}

} // namespace primes::benchmark
