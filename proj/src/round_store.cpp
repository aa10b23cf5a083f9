#include "primes/round_store.hpp"

#include "primes/text.hpp"

#include <algorithm>
#include <set>

namespace primes::pilot {

namespace {

constexpr const char* kStateFile = "state.json";
constexpr const char* kPoolFile = "pool.jsonl";
constexpr const char* kLedgerFile = "pilot_rounds.jsonl";

Json read_state(const std::filesystem::path& dir) {
    const auto path = dir / kStateFile;
    if (!std::filesystem::exists(path)) {
        throw ConfigError("no pilot round in " + dir.string() + "; initialise one first");
    }
    return Json::parse(fs::read_file(path));
}

const Annotator kHumanAnnotator{Annotator::Kind::human, "ui"};

} // namespace

Json RoundStore::state_to_json(const State& s, const LabelSchema& schema) {
    Json model = Json::array();
    for (const auto& a : s.model_annotations) {
        model.push_back(a.to_json());
    }
    return {{"format", "primes-round-state/1"},
            {"schema", schema.to_json()},
            {"round_number", s.round_number},
            {"status", s.status},
            {"prompt_version_id", s.prompt_version_id},
            {"threshold", s.threshold},
            {"min_n", s.min_n},
            {"comparison", to_string(s.comparison)},
            {"fresh_sample", s.fresh_sample},
            {"sample_item_ids", s.sample_item_ids},
            {"model_annotations", model},
            {"human_labels", s.human_labels}};
}

RoundStore::State RoundStore::state_from_json(const Json& j) const {
    State s;
    s.round_number = j.at("round_number").get<int>();
    s.status = j.at("status").get<std::string>();
    s.prompt_version_id = j.at("prompt_version_id").get<std::string>();
    s.threshold = j.at("threshold").get<double>();
    s.min_n = j.at("min_n").get<std::size_t>();
    s.comparison = parse_gate_comparison(j.at("comparison").get<std::string>());
    s.fresh_sample = j.value("fresh_sample", true);
    s.sample_item_ids = j.at("sample_item_ids").get<std::vector<std::string>>();
    for (const auto& a : j.at("model_annotations")) {
        s.model_annotations.push_back(Annotation::from_json(schema_, a));
    }
    s.human_labels = j.at("human_labels").get<std::map<std::string, LabelMap>>();
    return s;
}

void RoundStore::initialize(const std::filesystem::path& dir, const RoundSetup& setup) {
    if (std::filesystem::exists(dir / kStateFile)) {
        throw ConfigError("a pilot round already exists in " + dir.string());
    }
    if (setup.prompt_version_id.empty()) {
        throw ConfigError("a round needs a prompt version id");
    }
    std::set<std::string> pool_ids;
    for (const auto& item : setup.pool) {
        pool_ids.insert(item.id());
    }
    if (setup.sample_item_ids.empty()) {
        throw ConfigError("a round needs at least one sampled item");
    }
    for (const auto& id : setup.sample_item_ids) {
        if (pool_ids.count(id) == 0) {
            throw ConfigError("sampled item " + id + " is not in the item pool");
        }
    }
    evaluate_gate({}, setup.threshold, setup.min_n, setup.comparison);
    std::filesystem::create_directories(dir);
    write_dataset(dir / kPoolFile, setup.pool);
    State s;
    s.round_number = setup.round_number;
    s.prompt_version_id = setup.prompt_version_id;
    s.threshold = setup.threshold;
    s.min_n = setup.min_n;
    s.comparison = setup.comparison;
    s.sample_item_ids = setup.sample_item_ids;
    std::sort(s.sample_item_ids.begin(), s.sample_item_ids.end());
    s.model_annotations = setup.model_annotations;
    fs::write_file_atomic(dir / kStateFile, state_to_json(s, setup.schema).dump(2) + "\n");
}

RoundStore::RoundStore(std::filesystem::path dir)
    : dir_(std::move(dir)), schema_(LabelSchema::from_json(read_state(dir_).at("schema"))) {
    pool_ = read_dataset(dir_ / kPoolFile);
    for (std::size_t i = 0; i < pool_.size(); ++i) {
        pool_index_.emplace(pool_[i].id(), i);
    }
    state_ = state_from_json(read_state(dir_));
}

void RoundStore::persist() const {
    fs::write_file_atomic(dir_ / kStateFile, state_to_json(state_, schema_).dump(2) + "\n");
}

const DataItem& RoundStore::pool_item(const std::string& id) const {
    const auto it = pool_index_.find(id);
    if (it == pool_index_.end()) {
        throw ApiError(404, "unknown_item", "no item " + id);
    }
    return pool_[it->second];
}

bool RoundStore::in_sample(const std::string& id) const {
    return std::binary_search(state_.sample_item_ids.begin(), state_.sample_item_ids.end(), id);
}

bool RoundStore::complete() const {
    for (const auto& id : state_.sample_item_ids) {
        const auto it = state_.human_labels.find(id);
        if (it == state_.human_labels.end() || it->second.size() != schema_.tasks().size()) {
            return false;
        }
    }
    return true;
}

std::vector<Annotation> RoundStore::human_annotations() const {
    std::vector<Annotation> out;
    for (const auto& [id, labels] : state_.human_labels) {
        if (in_sample(id) && labels.size() == schema_.tasks().size()) {
            out.emplace_back(schema_, id, kHumanAnnotator, labels);
        }
    }
    return out;
}

Json RoundStore::round_info() const {
    std::lock_guard lock(mutex_);
    std::size_t labeled = 0;
    for (const auto& id : state_.sample_item_ids) {
        const auto it = state_.human_labels.find(id);
        if (it != state_.human_labels.end() && it->second.size() == schema_.tasks().size()) {
            ++labeled;
        }
    }
    return {{"round_number", state_.round_number},
            {"status", state_.status},
            {"prompt_version_id", state_.prompt_version_id},
            {"schema", schema_.to_json()},
            {"threshold", state_.threshold},
            {"min_n", state_.min_n},
            {"comparison", to_string(state_.comparison)},
            {"fresh_sample", state_.fresh_sample},
            {"progress", {{"labeled", labeled}, {"total", state_.sample_item_ids.size()}}},
            {"model_annotations", state_.model_annotations.size()}};
}

Json RoundStore::list_items(const std::string& status) const {
    if (status != "pending" && status != "labeled" && status != "all") {
        throw ApiError(422, "bad_status_filter", "status must be pending, labeled or all");
    }
    std::lock_guard lock(mutex_);
    Json items = Json::array();
    for (const auto& id : state_.sample_item_ids) {
        const auto it = state_.human_labels.find(id);
        const bool done = it != state_.human_labels.end() && it->second.size() == schema_.tasks().size();
        if ((status == "pending" && done) || (status == "labeled" && !done)) {
            continue;
        }
        const auto& item = pool_item(id);
        items.push_back({{"item_id", id},
                         {"locator", item.source().normalized().display()},
                         {"status", done ? "labeled" : "pending"},
                         {"labels", it == state_.human_labels.end() ? Json::object() : Json(it->second)}});
    }
    return {{"round_number", state_.round_number}, {"items", items}};
}

Json RoundStore::item(const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    const auto& item = pool_item(item_id);
    if (!in_sample(item_id)) {
        throw ApiError(404, "not_in_sample", "item " + item_id + " is not part of round " +
                                                 std::to_string(state_.round_number));
    }
    Json tasks = Json::array();
    for (const auto& t : schema_.tasks()) {
        tasks.push_back({{"name", t.name}, {"categories", t.categories}});
    }
    const auto it = state_.human_labels.find(item_id);
    return {{"item_id", item_id},
            {"locator", item.source().normalized().display()},
            {"source", to_json(item.source())},
            {"fields", item.fields()},
            {"tasks", tasks},
            {"labels", it == state_.human_labels.end() ? Json::object() : Json(it->second)}};
}

Json RoundStore::submit(const std::string& item_id, const Json& body) {
    if (!body.is_object()) {
        throw ApiError(400, "bad_request", "body must be a JSON object");
    }
    LabelMap incoming;
    try {
        if (body.contains("labels")) {
            incoming = body["labels"].get<LabelMap>();
        } else {
            incoming[body.at("task").get<std::string>()] = body.at("label").get<std::string>();
        }
    } catch (const Json::exception&) {
        throw ApiError(400, "bad_request", "expected {\"task\", \"label\"} or {\"labels\": {...}}");
    }
    std::lock_guard lock(mutex_);
    if (body.contains("round") && body["round"] != state_.round_number) {
        throw ApiError(409, "round_closed", "round " + body["round"].dump() + " is no longer open");
    }
    if (state_.status != "open") {
        throw ApiError(409, "round_closed", "round " + std::to_string(state_.round_number) + " is closed");
    }
    pool_item(item_id);
    if (!in_sample(item_id)) {
        throw ApiError(404, "not_in_sample", "item " + item_id + " is not part of this round");
    }
    for (const auto& [task, label] : incoming) {
        const auto* t = schema_.find(task);
        if (t == nullptr) {
            throw ApiError(422, "unknown_task", "unknown task '" + task + "'");
        }
        if (!t->has_category(label)) {
            throw ApiError(422, "illegal_category", "'" + label + "' is not a category of task '" + task + "'");
        }
    }
    auto& current = state_.human_labels[item_id];
    bool changed = false;
    for (const auto& [task, label] : incoming) {
        auto [it, inserted] = current.try_emplace(task, label);
        if (inserted || it->second != label) {
            it->second = label;
            changed = true;
        }
    }
    if (changed) {
        persist();
    }
    return {{"item_id", item_id}, {"labels", current}, {"changed", changed}};
}

Json RoundStore::set_model_annotations(const Json& body) {
    std::lock_guard lock(mutex_);
    if (state_.status != "open") {
        throw ApiError(409, "round_closed", "round is closed");
    }
    std::vector<Annotation> annotations;
    try {
        for (const auto& a : body.at("annotations")) {
            const auto id = a.at("item_id").get<std::string>();
            if (!in_sample(id)) {
                throw ApiError(422, "not_in_sample", "item " + id + " is not part of this round");
            }
            std::optional<std::string> rationale;
            if (a.contains("rationale") && a["rationale"].is_string()) {
                rationale = a["rationale"].get<std::string>();
            }
            const auto annotator = a.contains("annotator") ? Annotator::parse(a["annotator"].get<std::string>())
                                                           : Annotator{Annotator::Kind::model, "model"};
            annotations.emplace_back(schema_, id, annotator, a.at("labels").get<LabelMap>(), rationale);
        }
    } catch (const Json::exception& e) {
        throw ApiError(400, "bad_request", e.what());
    } catch (const ValidationError& e) {
        throw ApiError(422, "invalid_annotation", e.what());
    }
    state_.model_annotations = std::move(annotations);
    persist();
    return {{"model_annotations", state_.model_annotations.size()}};
}

Json RoundStore::agreement_locked() const {
    std::size_t labeled = human_annotations().size();
    if (!complete()) {
        return {{"status", "incomplete"},
                {"round_number", state_.round_number},
                {"labeled", labeled},
                {"total", state_.sample_item_ids.size()}};
    }
    if (state_.model_annotations.empty()) {
        return {{"status", "awaiting_model"}, {"round_number", state_.round_number}};
    }
    std::vector<std::string> model_ids;
    for (const auto& a : state_.model_annotations) {
        model_ids.push_back(a.item_id());
    }
    const auto human = restrict_to(human_annotations(), model_ids);
    const auto results = agreement_for_schema(human, state_.model_annotations, schema_);
    const auto gate = evaluate_gate(results, state_.threshold, state_.min_n, state_.comparison);
    Json tasks = Json::array();
    for (const auto& r : results) {
        tasks.push_back(r.to_json());
    }
    return {{"status", "computed"},
            {"round_number", state_.round_number},
            {"labeled", labeled},
            {"total", state_.sample_item_ids.size()},
            {"missing_model_annotations", state_.sample_item_ids.size() - state_.model_annotations.size()},
            {"tasks", tasks},
            {"gate", gate.to_json()}};
}

Json RoundStore::agreement() const {
    std::lock_guard lock(mutex_);
    return agreement_locked();
}

Json RoundStore::disagreements() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> model_ids;
    for (const auto& a : state_.model_annotations) {
        model_ids.push_back(a.item_id());
    }
    const auto human = restrict_to(human_annotations(), model_ids);
    std::vector<std::string> human_ids;
    for (const auto& a : human) {
        human_ids.push_back(a.item_id());
    }
    const auto model = restrict_to(state_.model_annotations, human_ids);
    Json rows = Json::array();
    for (const auto& d : list_disagreements(human, model, schema_)) {
        rows.push_back({{"item_id", d.item_id},
                        {"task", d.task},
                        {"human_label", d.label_a},
                        {"model_label", d.label_b},
                        {"model_rationale", d.rationale_b}});
    }
    return {{"round_number", state_.round_number}, {"rows", rows}};
}

Json RoundStore::advance(const Json& body) {
    if (!body.is_object() || !body.contains("prompt_version_id") || !body["prompt_version_id"].is_string()) {
        throw ApiError(400, "bad_request", "prompt_version_id is required");
    }
    std::lock_guard lock(mutex_);
    if (!complete()) {
        throw ApiError(409, "round_incomplete", "every sampled item needs a human label before advancing");
    }
    const auto current = agreement_locked();
    if (current.at("status") != "computed") {
        throw ApiError(409, "awaiting_model", "model annotations are missing for this round");
    }
    const auto gate = GateDecision::from_json(current.at("gate"));
    const auto notes = body.value("notes", std::string{});
    if (!gate.passed() && text::trim(notes).empty()) {
        throw ApiError(422, "notes_required", "the gate says refine; record refinement notes before advancing");
    }

    PilotRound round;
    round.round_number = state_.round_number;
    round.prompt_version_id = state_.prompt_version_id;
    round.sample_item_ids = state_.sample_item_ids;
    round.fresh_sample = state_.fresh_sample;
    for (const auto& t : current.at("tasks")) {
        round.agreement.push_back(AgreementResult::from_json(t));
    }
    round.threshold = state_.threshold;
    round.min_n = state_.min_n;
    round.comparison = state_.comparison;
    round.gate = gate;
    round.parse_failures = current.at("missing_model_annotations").get<std::size_t>();
    round.notes = notes;
    round.created_at = now_iso8601();
    RoundLedger ledger(dir_ / kLedgerFile);
    ledger.append(round);

    State next;
    next.round_number = state_.round_number + 1;
    next.prompt_version_id = body["prompt_version_id"].get<std::string>();
    next.threshold = state_.threshold;
    next.min_n = state_.min_n;
    next.comparison = state_.comparison;
    if (body.contains("sample_item_ids")) {
        next.sample_item_ids = body["sample_item_ids"].get<std::vector<std::string>>();
        for (const auto& id : next.sample_item_ids) {
            pool_item(id);
        }
        next.fresh_sample = true;
    } else if (body.contains("sample_size")) {
        next.sample_item_ids = draw_sample(pool_, body["sample_size"].get<std::size_t>(),
                                           body.value("seed", std::uint64_t{0}));
        next.fresh_sample = true;
    } else {
        next.sample_item_ids = state_.sample_item_ids;
        next.fresh_sample = false;
    }
    std::sort(next.sample_item_ids.begin(), next.sample_item_ids.end());
    state_ = std::move(next);
    persist();
    return {{"closed", round.to_json()}, {"round_number", state_.round_number}};
}

Json RoundStore::history() const {
    std::lock_guard lock(mutex_);
    RoundLedger ledger(dir_ / kLedgerFile);
    Json rounds = Json::array();
    for (const auto& r : ledger.rounds()) {
        rounds.push_back(r.to_json());
    }
    return {{"rounds", rounds}};
}

} // namespace primes::pilot
