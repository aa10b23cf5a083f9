#include "primes/core.hpp"

#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/text.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <set>
#include <sstream>

namespace primes {

namespace {

constexpr char kUnit = '\x1f';
constexpr char kRecord = '\x1e';

std::string normalize_path(const std::string& p) {
    if (p.empty()) {
        return p;
    }
    std::string out = std::filesystem::path(p).lexically_normal().generic_string();
    while (out.size() > 1 && out.back() == '/') {
        out.pop_back();
    }
    return out;
}

} // namespace

std::string to_string(Severity severity) {
    return severity == Severity::error ? "error" : "warning";
}

SourceLocator SourceLocator::normalized() const {
    SourceLocator out;
    out.repo = normalize_path(repo);
    if (commit) {
        out.commit = text::to_lower(text::trim(*commit));
    }
    if (path) {
        out.path = normalize_path(*path);
    }
    return out;
}

std::string SourceLocator::display() const {
    if (path) {
        return *path;
    }
    if (commit) {
        return *commit;
    }
    return repo;
}

std::string compute_item_id(const SourceLocator& source, const FieldMap& fields) {
    if (fields.empty()) {
        throw ValidationError("data item requires at least one field");
    }
    const auto norm = source.normalized();
    std::string canonical = "source";
    canonical += kUnit;
    canonical += norm.repo;
    canonical += kUnit;
    canonical += norm.commit.value_or("");
    canonical += kUnit;
    canonical += norm.path.value_or("");
    canonical += kRecord;
    // std::map iterates in sorted key order
    for (const auto& [name, value] : fields) {
        canonical += name;
        canonical += kUnit;
        canonical += text::rtrim(value);
        canonical += kRecord;
    }
    return sha256_hex(canonical);
}

DataItem::DataItem(SourceLocator source, FieldMap fields, FieldMap metadata)
    : id_(compute_item_id(source, fields)), source_(std::move(source)), fields_(std::move(fields)),
      metadata_(std::move(metadata)) {}

const std::string* DataItem::field(const std::string& name) const {
    const auto it = fields_.find(name);
    return it == fields_.end() ? nullptr : &it->second;
}

bool Task::has_category(const std::string& category) const {
    return std::find(categories.begin(), categories.end(), category) != categories.end();
}

LabelSchema::LabelSchema(std::vector<Task> tasks) : tasks_(std::move(tasks)) {
    if (tasks_.empty()) {
        throw ValidationError("label schema needs at least one task");
    }
    std::set<std::string> task_names;
    for (const auto& task : tasks_) {
        if (task.name.empty()) {
            throw ValidationError("label schema: empty task name");
        }
        if (!task_names.insert(task.name).second) {
            throw ValidationError("label schema: duplicate task '" + task.name + "'");
        }
        if (task.categories.empty()) {
            throw ValidationError("label schema: task '" + task.name + "' has no categories");
        }
        std::set<std::string> cats;
        for (const auto& c : task.categories) {
            if (c.empty()) {
                throw ValidationError("label schema: empty category in task '" + task.name + "'");
            }
            if (!cats.insert(c).second) {
                throw ValidationError("label schema: duplicate category '" + c + "' in task '" + task.name + "'");
            }
        }
    }
}

const Task* LabelSchema::find(const std::string& task_name) const {
    for (const auto& t : tasks_) {
        if (t.name == task_name) {
            return &t;
        }
    }
    return nullptr;
}

const Task& LabelSchema::task(const std::string& task_name) const {
    const auto* t = find(task_name);
    if (t == nullptr) {
        throw ValidationError("unknown task '" + task_name + "'");
    }
    return *t;
}

bool LabelSchema::is_legal(const std::string& task_name, const std::string& category) const {
    const auto* t = find(task_name);
    return t != nullptr && t->has_category(category);
}

Json LabelSchema::to_json() const {
    Json tasks = Json::array();
    for (const auto& t : tasks_) {
        tasks.push_back({{"name", t.name}, {"categories", t.categories}});
    }
    return {{"tasks", tasks}};
}

LabelSchema LabelSchema::from_json(const Json& j) {
    std::vector<Task> tasks;
    try {
        for (const auto& t : j.at("tasks")) {
            tasks.push_back(Task{t.at("name").get<std::string>(), t.at("categories").get<std::vector<std::string>>()});
        }
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("label schema: ") + e.what());
    }
    return LabelSchema(std::move(tasks));
}

LabelSchema LabelSchema::load(const std::filesystem::path& path) {
    try {
        return from_json(Json::parse(fs::read_file(path)));
    } catch (const Json::parse_error& e) {
        throw ValidationError("label schema " + path.string() + ": " + e.what());
    }
}

std::string Annotator::to_string() const {
    return (kind == Kind::human ? "human:" : "model:") + id;
}

Annotator Annotator::parse(const std::string& text) {
    if (text::starts_with(text, "model:")) {
        return {Kind::model, text.substr(6)};
    }
    if (text::starts_with(text, "human:")) {
        return {Kind::human, text.substr(6)};
    }
    return {Kind::human, text};
}

Annotation::Annotation(const LabelSchema& schema, std::string item_id, Annotator annotator, LabelMap labels,
                       std::optional<std::string> rationale, std::string created_at)
    : item_id_(std::move(item_id)), annotator_(std::move(annotator)), labels_(std::move(labels)),
      rationale_(std::move(rationale)), created_at_(std::move(created_at)) {
    if (item_id_.empty()) {
        throw ValidationError("annotation without item id");
    }
    for (const auto& [task, category] : labels_) {
        const auto* t = schema.find(task);
        if (t == nullptr) {
            throw ValidationError("annotation for " + item_id_ + ": unknown task '" + task + "'");
        }
        if (!t->has_category(category)) {
            throw ValidationError("annotation for " + item_id_ + ": category '" + category +
                                  "' is not legal for task '" + task + "'");
        }
    }
}

const std::string* Annotation::label(const std::string& task) const {
    const auto it = labels_.find(task);
    return it == labels_.end() ? nullptr : &it->second;
}

Json Annotation::to_json() const {
    Json j = {{"item_id", item_id_}, {"annotator", annotator_.to_string()}, {"labels", labels_}};
    j["rationale"] = rationale_ ? Json(*rationale_) : Json(nullptr);
    j["created_at"] = created_at_;
    return j;
}

Annotation Annotation::from_json(const LabelSchema& schema, const Json& j) {
    std::optional<std::string> rationale;
    if (j.contains("rationale") && j["rationale"].is_string()) {
        rationale = j["rationale"].get<std::string>();
    }
    return Annotation(schema, j.at("item_id").get<std::string>(),
                      Annotator::parse(j.at("annotator").get<std::string>()),
                      j.at("labels").get<LabelMap>(), rationale, j.value("created_at", std::string{}));
}

void ProvenanceRecord::check() const {
    if (run_id.empty() || model_id.empty() || item_id.empty()) {
        throw ValidationError("provenance record requires run_id, model_id and item_id");
    }
    if (request_digest.empty()) {
        throw ValidationError("provenance record requires a request digest");
    }
    if (token_usage.input_tokens < 0 || token_usage.output_tokens < 0 || latency_ms < 0) {
        throw ValidationError("provenance record has negative counts");
    }
}

Json ProvenanceRecord::to_json() const {
    return {{"run_id", run_id},
            {"model_id", model_id},
            {"prompt_version_id", prompt_version_id},
            {"item_id", item_id},
            {"request_digest", request_digest},
            {"raw_response", raw_response},
            {"token_usage", {{"input_tokens", token_usage.input_tokens}, {"output_tokens", token_usage.output_tokens}}},
            {"latency_ms", latency_ms},
            {"finish_reason", finish_reason},
            {"created_at", created_at}};
}

ProvenanceRecord ProvenanceRecord::from_json(const Json& j) {
    ProvenanceRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.prompt_version_id = j.at("prompt_version_id").get<std::string>();
    r.item_id = j.at("item_id").get<std::string>();
    r.request_digest = j.at("request_digest").get<std::string>();
    r.raw_response = j.at("raw_response").get<std::string>();
    r.token_usage.input_tokens = j.at("token_usage").at("input_tokens").get<std::int64_t>();
    r.token_usage.output_tokens = j.at("token_usage").at("output_tokens").get<std::int64_t>();
    r.latency_ms = j.at("latency_ms").get<std::int64_t>();
    r.finish_reason = j.value("finish_reason", std::string{});
    r.created_at = j.value("created_at", std::string{});
    return r;
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json to_json(const SourceLocator& source) {
    Json j = {{"repo", source.repo}};
    j["commit"] = source.commit ? Json(*source.commit) : Json(nullptr);
    j["path"] = source.path ? Json(*source.path) : Json(nullptr);
    return j;
}

SourceLocator source_from_json(const Json& j) {
    SourceLocator s;
    s.repo = j.at("repo").get<std::string>();
    if (j.contains("commit") && j["commit"].is_string()) {
        s.commit = j["commit"].get<std::string>();
    }
    if (j.contains("path") && j["path"].is_string()) {
        s.path = j["path"].get<std::string>();
    }
    return s;
}

Json to_json(const DataItem& item) {
    return {{"item_id", item.id()},
            {"source", to_json(item.source())},
            {"fields", item.fields()},
            {"metadata", item.metadata()}};
}

DataItem item_from_json(const Json& j) {
    try {
        DataItem item(source_from_json(j.at("source")), j.at("fields").get<FieldMap>(),
                      j.value("metadata", FieldMap{}));
        if (j.contains("item_id") && j["item_id"].get<std::string>() != item.id()) {
            throw ValidationError("stored item id " + j["item_id"].get<std::string>() +
                                  " does not match recomputed id " + item.id());
        }
        return item;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed data item: ") + e.what());
    }
}

void write_dataset(const std::filesystem::path& path, const std::vector<DataItem>& items) {
    std::string out;
    for (const auto& item : items) {
        out += to_json(item).dump();
        out += '\n';
    }
    fs::write_file_atomic(path, out);
}

std::vector<DataItem> read_dataset(const std::filesystem::path& path) {
    std::vector<DataItem> items;
    std::istringstream in(fs::read_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        try {
            items.push_back(item_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

std::string dataset_digest(const std::vector<DataItem>& items) {
    std::vector<std::string> ids;
    ids.reserve(items.size());
    for (const auto& item : items) {
        ids.push_back(item.id());
    }
    std::sort(ids.begin(), ids.end());
    return sha256_hex(text::join(ids, "\n"));
}

} // namespace primes
