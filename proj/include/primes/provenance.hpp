#pragma once

#include "primes/core.hpp"
#include "primes/error.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace primes::provenance {

class DuplicateRecordError : public Error {
public:
    using Error::Error;
};

/// Digest identifying one model request. Recomputable from the prompt version,
/// item, model id and parameters (the rendered text is a pure function of the
/// first two).
std::string request_digest(const std::string& model_id, const Json& params, const std::string& prompt_version_id,
                           const std::string& item_id, const std::string& prompt_text);

/// Append-only newline-delimited ledger of model interactions. Appends are
/// serialised internally; (run_id, model_id, item_id) is unique.
class ProvenanceLedger {
public:
    explicit ProvenanceLedger(std::filesystem::path path);

    /// Returns the 0-based ledger position. Throws DuplicateRecordError naming
    /// the triple if it is already present.
    std::size_t record(const ProvenanceRecord& rec);

    bool contains(const std::string& run_id, const std::string& model_id, const std::string& item_id) const;
    std::optional<ProvenanceRecord> find(const std::string& run_id, const std::string& model_id,
                                         const std::string& item_id) const;
    std::vector<ProvenanceRecord> records() const;
    std::vector<ProvenanceRecord> records_for_run(const std::string& run_id) const;
    std::vector<std::string> run_ids() const;
    std::size_t size() const;
    const std::filesystem::path& path() const { return path_; }

private:
    using Key = std::tuple<std::string, std::string, std::string>;
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::vector<ProvenanceRecord> records_;
    std::map<Key, std::size_t> index_;
};

enum class GroupBy { project };
GroupBy parse_group_by(const std::string& text);

/// Project grouping key of an item: the normalised source repository.
std::string project_of(const DataItem& item);

/// Writes one CSV per project for the run: locator, prompt_version_id,
/// model_id, one column per task (empty when the response did not parse) and
/// response_ref (the request digest; raw text stays in the ledger). Rows are
/// sorted by locator. Returns the files written, sorted. Throws Error for an
/// unknown run.
std::vector<std::filesystem::path> export_project_csv(const ProvenanceLedger& ledger, const std::string& run_id,
                                                      const std::vector<DataItem>& items, const LabelSchema& schema,
                                                      const std::filesystem::path& out_dir,
                                                      GroupBy group_by = GroupBy::project);

struct ManifestInputs {
    std::string run_id;
    bool partial = false;
    std::string dataset_digest;
    std::string enhanced_dataset_digest;
    std::vector<std::string> prompt_version_ids;
    /// Model specs without credentials.
    Json model_specs = Json::array();
    /// Every configurable default and override in effect.
    Json parameters = Json::object();
    std::string cache_digest;
    std::map<std::string, std::string> metrics_digests;
    std::map<std::string, std::string> artifact_digests;
};

struct Manifest {
    Json document;
    std::string digest;
};

/// Deterministic: no timestamps, keys sorted, digest over the compact dump.
Manifest build_manifest(const ManifestInputs& inputs);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

} // namespace primes::provenance
