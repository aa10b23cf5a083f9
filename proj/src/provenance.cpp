#include "primes/provenance.hpp"

#include "primes/csv.hpp"
#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/log.hpp"
#include "primes/text.hpp"
#include "primes/validation.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace primes::provenance {

std::string request_digest(const std::string& model_id, const Json& params, const std::string& prompt_version_id,
                           const std::string& item_id, const std::string& prompt_text) {
    const Json doc = {{"model_id", model_id},
                      {"params", params},
                      {"prompt_version_id", prompt_version_id},
                      {"item_id", item_id},
                      {"prompt_text", prompt_text}};
    return sha256_hex(doc.dump());
}

ProvenanceLedger::ProvenanceLedger(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) {
        return;
    }
    std::istringstream in(fs::read_file(path_));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        try {
            auto rec = ProvenanceRecord::from_json(Json::parse(line));
            index_.emplace(Key{rec.run_id, rec.model_id, rec.item_id}, records_.size());
            records_.push_back(std::move(rec));
        } catch (const Json::exception& e) {
            throw ValidationError(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::size_t ProvenanceLedger::record(const ProvenanceRecord& rec) {
    rec.check();
    std::lock_guard lock(mutex_);
    Key key{rec.run_id, rec.model_id, rec.item_id};
    if (index_.count(key) != 0) {
        throw DuplicateRecordError("provenance ledger already has (run_id=" + rec.run_id + ", model_id=" +
                                   rec.model_id + ", item_id=" + rec.item_id + ")");
    }
    fs::append_line(path_, rec.to_json().dump());
    const auto pos = records_.size();
    records_.push_back(rec);
    index_.emplace(std::move(key), pos);
    return pos;
}

bool ProvenanceLedger::contains(const std::string& run_id, const std::string& model_id,
                                const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    return index_.count(Key{run_id, model_id, item_id}) != 0;
}

std::optional<ProvenanceRecord> ProvenanceLedger::find(const std::string& run_id, const std::string& model_id,
                                                       const std::string& item_id) const {
    std::lock_guard lock(mutex_);
    const auto it = index_.find(Key{run_id, model_id, item_id});
    if (it == index_.end()) {
        return std::nullopt;
    }
    return records_[it->second];
}

std::vector<ProvenanceRecord> ProvenanceLedger::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::vector<ProvenanceRecord> ProvenanceLedger::records_for_run(const std::string& run_id) const {
    std::lock_guard lock(mutex_);
    std::vector<ProvenanceRecord> out;
    for (const auto& r : records_) {
        if (r.run_id == run_id) {
            out.push_back(r);
        }
    }
    return out;
}

std::vector<std::string> ProvenanceLedger::run_ids() const {
    std::lock_guard lock(mutex_);
    std::set<std::string> ids;
    for (const auto& r : records_) {
        ids.insert(r.run_id);
    }
    return {ids.begin(), ids.end()};
}

std::size_t ProvenanceLedger::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

GroupBy parse_group_by(const std::string& text) {
    if (text == "project" || text == "source") {
        return GroupBy::project;
    }
    throw ConfigError("unknown grouping '" + text + "' (expected project)");
}

std::string project_of(const DataItem& item) {
    return item.source().normalized().repo;
}

namespace {

std::string file_stem_for(const std::string& project) {
    auto base = std::filesystem::path(project).filename().string();
    if (base.empty() || base == "." || base == "/") {
        base = "project";
    }
    for (auto& c : base) {
        const auto u = static_cast<unsigned char>(c);
        if (!(std::isalnum(u) != 0 || c == '-' || c == '_' || c == '.')) {
            c = '_';
        }
    }
    return base;
}

} // namespace

std::vector<std::filesystem::path> export_project_csv(const ProvenanceLedger& ledger, const std::string& run_id,
                                                      const std::vector<DataItem>& items, const LabelSchema& schema,
                                                      const std::filesystem::path& out_dir, GroupBy /*group_by*/) {
    const auto records = ledger.records_for_run(run_id);
    if (records.empty()) {
        throw Error("unknown run '" + run_id + "' (no ledger records)");
    }
    std::map<std::string, const DataItem*> by_id;
    for (const auto& item : items) {
        by_id.emplace(item.id(), &item);
    }
    const auto out_schema = validation::OutputSchema::from_label_schema(schema);

    std::map<std::string, std::vector<csv::Row>> groups;
    for (const auto& rec : records) {
        const auto it = by_id.find(rec.item_id);
        if (it == by_id.end()) {
            log::warn("export: ledger item " + rec.item_id + " is not in the dataset; skipped");
            continue;
        }
        const auto parsed = validation::validate_format(rec.raw_response, out_schema, rec.item_id);
        csv::Row row = {it->second->source().normalized().display(), rec.prompt_version_id, rec.model_id};
        for (const auto& task : schema.tasks()) {
            if (parsed.parsed) {
                const auto l = parsed.parsed->labels.find(task.name);
                row.push_back(l == parsed.parsed->labels.end() ? std::string{} : l->second);
            } else {
                row.emplace_back();
            }
        }
        row.push_back(rec.request_digest);
        groups[project_of(*it->second)].push_back(std::move(row));
    }

    csv::Row header = {"locator", "prompt_version_id", "model_id"};
    for (const auto& task : schema.tasks()) {
        header.push_back(task.name);
    }
    header.emplace_back("response_ref");

    std::vector<std::filesystem::path> written;
    std::set<std::string> used;
    for (auto& [project, rows] : groups) {
        std::sort(rows.begin(), rows.end());
        auto stem = file_stem_for(project);
        if (!used.insert(stem).second) {
            stem += "-" + sha256_hex(project).substr(0, 8);
            used.insert(stem);
        }
        const auto path = out_dir / (stem + ".csv");
        fs::write_file_atomic(path, csv::format(header, rows));
        written.push_back(path);
    }
    std::sort(written.begin(), written.end());
    return written;
}

Manifest build_manifest(const ManifestInputs& in) {
    Json doc = {{"format", "primes-manifest/1"},
                {"digest_algorithm", std::string(kDigestAlgorithm)},
                {"run_id", in.run_id},
                {"partial", in.partial},
                {"dataset_digest", in.dataset_digest},
                {"enhanced_dataset_digest", in.enhanced_dataset_digest},
                {"prompt_version_ids", in.prompt_version_ids},
                {"model_specs", in.model_specs},
                {"parameters", in.parameters},
                {"cache_digest", in.cache_digest},
                {"metrics_digests", in.metrics_digests},
                {"artifact_digests", in.artifact_digests}};
    return Manifest{doc, sha256_hex(doc.dump())};
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    Json out = manifest.document;
    out["manifest_digest"] = manifest.digest;
    fs::write_file_atomic(path, out.dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
    auto doc = Json::parse(fs::read_file(path));
    const auto stored = doc.value("manifest_digest", std::string{});
    doc.erase("manifest_digest");
    Manifest m{doc, sha256_hex(doc.dump())};
    if (!stored.empty() && stored != m.digest) {
        throw ValidationError("manifest " + path.string() + " digest mismatch");
    }
    return m;
}

} // namespace primes::provenance
