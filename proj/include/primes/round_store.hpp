#pragma once

#include "primes/core.hpp"
#include "primes/error.hpp"
#include "primes/pilot.hpp"

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace primes::pilot {

/// Request-level failure with an HTTP status and a machine-readable reason.
class ApiError : public Error {
public:
    ApiError(int status, std::string reason, const std::string& message)
        : Error(message), status_(status), reason_(std::move(reason)) {}
    int status() const { return status_; }
    const std::string& reason() const { return reason_; }

private:
    int status_;
    std::string reason_;
};

struct RoundSetup {
    int round_number = 1;
    std::string prompt_version_id;
    LabelSchema schema{std::vector<Task>{{"label", {"yes", "no"}}}};
    /// Every item the round may draw from; the sample is a subset.
    std::vector<DataItem> pool;
    std::vector<std::string> sample_item_ids;
    std::vector<Annotation> model_annotations;
    double threshold = kDefaultGateThreshold;
    std::size_t min_n = kDefaultMinItems;
    GateComparison comparison = GateComparison::at_least;
};

/// Durable state of the human side of a pilot round. Every mutation is
/// written (temp file + rename) before it is acknowledged, so a restart loses
/// nothing. Closed rounds go to the round ledger in the same directory.
///
/// Files: state.json, pool.jsonl, pilot_rounds.jsonl.
class RoundStore {
public:
    /// Writes a fresh store into `dir`. Throws ConfigError if one exists.
    static void initialize(const std::filesystem::path& dir, const RoundSetup& setup);

    explicit RoundStore(std::filesystem::path dir);

    Json round_info() const;
    /// status: "pending", "labeled" or "all".
    Json list_items(const std::string& status) const;
    /// Fields and the human's labels so far; never model output.
    Json item(const std::string& item_id) const;

    /// Labels for one item: {"task": t, "label": l} or {"labels": {t: l, ...}}.
    /// An optional "round" must match the open round. Replaying an identical
    /// label changes nothing; a different label replaces the previous one.
    Json submit(const std::string& item_id, const Json& body);

    /// Replaces the model annotations for the open round.
    Json set_model_annotations(const Json& body);

    /// {"status": "incomplete", ...} until every sampled item has a human
    /// label for every task, then per-task agreement and the gate decision.
    Json agreement() const;
    Json disagreements() const;

    /// Closes the open round into the ledger and opens the next one with the
    /// given prompt version. Notes are required when the gate says refine.
    /// Body: {"prompt_version_id", "notes", optional "sample_item_ids" or
    /// "sample_size" + "seed"; without either the sample is reused}.
    Json advance(const Json& body);

    Json history() const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    struct State {
        int round_number = 1;
        std::string status = "open";
        std::string prompt_version_id;
        double threshold = kDefaultGateThreshold;
        std::size_t min_n = kDefaultMinItems;
        GateComparison comparison = GateComparison::at_least;
        bool fresh_sample = true;
        std::vector<std::string> sample_item_ids;
        std::vector<Annotation> model_annotations;
        std::map<std::string, LabelMap> human_labels;
    };

    static Json state_to_json(const State& s, const LabelSchema& schema);
    State state_from_json(const Json& j) const;
    void persist() const;
    bool complete() const;
    std::vector<Annotation> human_annotations() const;
    Json agreement_locked() const;
    const DataItem& pool_item(const std::string& id) const;
    bool in_sample(const std::string& id) const;

    std::filesystem::path dir_;
    LabelSchema schema_;
    std::vector<DataItem> pool_;
    std::map<std::string, std::size_t> pool_index_;
    State state_;
    mutable std::mutex mutex_;
};

} // namespace primes::pilot
