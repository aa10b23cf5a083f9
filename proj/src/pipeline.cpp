#include "primes/pipeline.hpp"

#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/log.hpp"
#include "primes/prompt.hpp"
#include "primes/provenance.hpp"
#include "primes/text.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <set>

namespace primes::pipeline {

std::string file_digest(const std::filesystem::path& path) {
    return sha256_hex(fs::read_file(path));
}

const llm::ModelSpec& PipelineConfig::model(const std::string& model_id) const {
    for (const auto& m : models) {
        if (m.model_id == model_id) {
            return m;
        }
    }
    throw ConfigError("no model '" + model_id + "' in the configuration");
}

namespace {

Json optional_digest(const std::optional<std::filesystem::path>& path) {
    return path ? Json(file_digest(*path)) : Json(nullptr);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::optional<std::filesystem::path> optional_path(const Json& j, const char* key, const std::filesystem::path& base) {
    if (!j.contains(key) || j[key].is_null()) {
        return std::nullopt;
    }
    return resolve(base, j[key].get<std::string>());
}

std::string safe_name(std::string s) {
    for (auto& c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (!(std::isalnum(u) != 0 || c == '-' || c == '_' || c == '.')) {
            c = '_';
        }
    }
    return s;
}

} // namespace

Json PipelineConfig::parameters() const {
    Json model_specs = Json::array();
    for (const auto& m : models) {
        model_specs.push_back(m.to_json());
    }
    Json ingest_json = nullptr;
    if (ingest) {
        ingest_json = {{"mode", ingest::to_string(ingest->mode)},
                       {"include", ingest->include_globs},
                       {"exclude", ingest->exclude_globs},
                       {"include_patch", ingest->include_patch}};
        ingest_json["range"] = ingest->commit_range ? Json(*ingest->commit_range) : Json(nullptr);
    }
    Json j = {
        {"seed", seed},
        {"run_id", run_id},
        {"concurrency", concurrency},
        {"schema_digest", file_digest(schema)},
        {"template_digest", file_digest(prompt_template)},
        {"ingest", ingest_json},
        {"models", model_specs},
        {"retry", retry.to_json()},
        {"pilot",
         {{"sample_size", pilot.sample_size},
          {"gate_threshold", pilot.threshold},
          {"gate_comparison", pilot::to_string(pilot.comparison)},
          {"min_n", pilot.min_n},
          {"stratify_by", pilot.stratify_by ? Json(*pilot.stratify_by) : Json(nullptr)},
          {"reuse_sample", pilot.reuse_sample},
          {"model_id", pilot.model_id},
          {"human_annotations_digest", optional_digest(pilot.human_annotations)}}},
        {"benchmark",
         {{"oracle_digest", optional_digest(benchmark.oracle)},
          {"ratings_digest", optional_digest(benchmark.ratings)},
          {"confidence", benchmark.confidence},
          {"margin", benchmark.margin},
          {"p", benchmark.p},
          {"population", benchmark.population ? Json(*benchmark.population) : Json(nullptr)},
          {"weights", benchmark.weights ? benchmark.weights->to_json() : Json(nullptr)},
          {"ranking", "mean_accuracy desc, cost asc, model_id asc"},
          {"negative_label", std::string(benchmark::kDefaultNegativeLabel)}}},
        {"validation",
         {{"shingle_width", validation.shingle_width},
          {"duplicate_threshold", validation.duplicate_threshold},
          {"min_term_length", validation.min_term_length},
          {"allowed_vocabulary", validation.allowed_vocabulary},
          {"rules_digest", optional_digest(validation.rules)}}},
        {"sources", sources},
    };
    return j;
}

ingest::IngestSpec ingest_spec_from_json(const Json& j, const std::filesystem::path& base_dir) {
    ingest::IngestSpec spec;
    spec.mode = ingest::parse_mode(j.value("mode", std::string("files")));
    spec.root_or_path = resolve(base_dir, j.at("path").get<std::string>());
    spec.include_globs = j.value("include", std::vector<std::string>{});
    spec.exclude_globs = j.value("exclude", std::vector<std::string>{});
    if (j.contains("range") && !j["range"].is_null()) {
        spec.commit_range = j["range"].get<std::string>();
    }
    if (j.contains("fields")) {
        const auto& f = j["fields"];
        if (f.is_object()) {
            for (const auto& [column, field] : f.items()) {
                spec.field_mapping.emplace_back(column, field.get<std::string>());
            }
        } else {
            for (const auto& pair : f) {
                spec.field_mapping.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
            }
        }
    }
    spec.include_patch = j.value("include_patch", false);
    spec.check();
    return spec;
}

PipelineConfig config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) {
        throw ConfigError("configuration must be a JSON object");
    }
    static const std::set<std::string> known = {"dataset", "ingest",   "schema",   "template", "models",
                                                "pilot",   "benchmark", "validation", "retry",  "cache_dir",
                                                "out_dir", "run_id",   "seed",     "concurrency"};
    for (const auto& [key, _] : j.items()) {
        if (known.count(key) == 0) {
            throw ConfigError("unknown configuration key '" + key + "'");
        }
    }
    PipelineConfig c;
    for (const auto& key : known) {
        c.sources[key] = j.contains(key) ? "file" : "default";
    }
    try {
        c.dataset = optional_path(j, "dataset", base_dir);
        if (j.contains("ingest")) {
            c.ingest = ingest_spec_from_json(j["ingest"], base_dir);
        }
        if (j.contains("schema")) {
            c.schema = resolve(base_dir, j["schema"].get<std::string>());
        }
        if (j.contains("template")) {
            c.prompt_template = resolve(base_dir, j["template"].get<std::string>());
        }
        for (const auto& m : j.value("models", Json::array())) {
            c.models.push_back(llm::ModelSpec::from_json(m));
        }
        if (j.contains("pilot")) {
            const auto& p = j["pilot"];
            c.pilot.sample_size = p.value("sample_size", c.pilot.sample_size);
            c.pilot.threshold = p.value("threshold", c.pilot.threshold);
            c.pilot.min_n = p.value("min_n", c.pilot.min_n);
            c.pilot.comparison = pilot::parse_gate_comparison(p.value("comparison", std::string(">=")));
            if (p.contains("stratify_by") && !p["stratify_by"].is_null()) {
                c.pilot.stratify_by = p["stratify_by"].get<std::string>();
            }
            c.pilot.reuse_sample = p.value("reuse_sample", false);
            c.pilot.model_id = p.value("model", std::string{});
            c.pilot.human_annotations = optional_path(p, "human_annotations", base_dir);
        }
        if (j.contains("benchmark")) {
            const auto& b = j["benchmark"];
            c.benchmark.oracle = optional_path(b, "oracle", base_dir);
            c.benchmark.ratings = optional_path(b, "ratings", base_dir);
            c.benchmark.confidence = b.value("confidence", c.benchmark.confidence);
            c.benchmark.margin = b.value("margin", c.benchmark.margin);
            c.benchmark.p = b.value("p", c.benchmark.p);
            if (b.contains("population") && !b["population"].is_null()) {
                c.benchmark.population = b["population"].get<std::int64_t>();
            }
            if (b.contains("weights") && !b["weights"].is_null()) {
                const auto& w = b["weights"];
                c.benchmark.weights = benchmark::Weights{w.value("accuracy", 1.0), w.value("cost", 0.0),
                                                         w.value("interpretability", 0.0)};
            }
        }
        if (j.contains("validation")) {
            const auto& v = j["validation"];
            c.validation.shingle_width = v.value("shingle_width", c.validation.shingle_width);
            c.validation.duplicate_threshold = v.value("duplicate_threshold", c.validation.duplicate_threshold);
            c.validation.min_term_length = v.value("min_term_length", c.validation.min_term_length);
            c.validation.allowed_vocabulary = v.value("allowed_vocabulary", std::vector<std::string>{});
            c.validation.rules = optional_path(v, "rules", base_dir);
        }
        if (j.contains("retry")) {
            c.retry = llm::RetryPolicy::from_json(j["retry"]);
        }
        if (j.contains("cache_dir")) {
            c.cache_dir = resolve(base_dir, j["cache_dir"].get<std::string>());
        }
        if (j.contains("out_dir")) {
            c.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());
        }
        c.run_id = j.value("run_id", c.run_id);
        c.seed = j.value("seed", c.seed);
        c.concurrency = j.value("concurrency", c.concurrency);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("configuration: ") + e.what());
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    const auto j = Json::parse(fs::read_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw ConfigError(path.string() + ": not valid JSON");
    }
    return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------

Json EnhancedRecord::to_json() const {
    Json j = {{"item_id", item_id},
              {"locator", locator},
              {"project", project},
              {"model_id", model_id},
              {"prompt_version_id", prompt_version_id},
              {"status", status},
              {"labels", labels},
              {"fields", fields},
              {"finding_codes", finding_codes}};
    j["rationale"] = rationale ? Json(*rationale) : Json(nullptr);
    return j;
}

validation::DataTable to_table(const std::vector<EnhancedRecord>& records, const LabelSchema& schema) {
    validation::DataTable t;
    t.columns = {"item_id", "locator", "project", "model_id", "prompt_version_id", "status"};
    for (const auto& task : schema.tasks()) {
        t.columns.push_back("label." + task.name);
    }
    t.columns.emplace_back("rationale");
    std::set<std::string> field_names;
    for (const auto& r : records) {
        for (const auto& [name, _] : r.fields) {
            field_names.insert(name);
        }
    }
    for (const auto& name : field_names) {
        t.columns.push_back("field." + name);
    }
    for (const auto& r : records) {
        std::map<std::string, std::optional<std::string>> row;
        row["item_id"] = r.item_id;
        row["locator"] = r.locator;
        row["project"] = r.project;
        row["model_id"] = r.model_id;
        row["prompt_version_id"] = r.prompt_version_id;
        row["status"] = r.status;
        for (const auto& task : schema.tasks()) {
            const auto it = r.labels.find(task.name);
            row["label." + task.name] = it == r.labels.end() ? std::nullopt : std::optional<std::string>(it->second);
        }
        row["rationale"] = r.rationale;
        for (const auto& name : field_names) {
            const auto it = r.fields.find(name);
            row["field." + name] = it == r.fields.end() ? std::nullopt : std::optional<std::string>(it->second);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---------------------------------------------------------------------------

namespace {

struct Responses {
    std::vector<std::optional<llm::ModelResponse>> responses;
    std::string failure;
};

Responses complete_all(llm::LlmClient& client, const prompt::PromptVersion& version,
                       const std::vector<const DataItem*>& items, std::size_t concurrency) {
    Responses out;
    out.responses.resize(items.size());
    const auto width = std::max<std::size_t>(1, concurrency);
    for (std::size_t start = 0; start < items.size() && out.failure.empty(); start += width) {
        const auto end = std::min(items.size(), start + width);
        std::vector<std::future<llm::ModelResponse>> batch;
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(std::async(std::launch::async, [&, i] {
                return client.cached_complete(prompt::compose_prompt(version, *items[i]));
            }));
        }
        for (std::size_t i = start; i < end; ++i) {
            try {
                out.responses[i] = batch[i - start].get();
            } catch (const Error& e) {
                if (out.failure.empty()) {
                    out.failure = e.what();
                }
            }
        }
    }
    return out;
}

struct Artifacts {
    std::map<std::string, std::string> digests;
    std::filesystem::path root;

    void write(const std::filesystem::path& relative, const std::string& contents) {
        const auto path = root / relative;
        std::filesystem::create_directories(path.parent_path());
        fs::write_file_atomic(path, contents);
        digests[relative.generic_string()] = sha256_hex(contents);
    }
};

} // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const llm::ClientOptions& base_options) {
    if (config.models.empty()) {
        throw ConfigError("no models configured");
    }
    if (config.schema.empty() || config.prompt_template.empty()) {
        throw ConfigError("schema and template are required");
    }
    std::filesystem::create_directories(config.out_dir);
    std::filesystem::create_directories(config.cache_dir);

    provenance::ProvenanceLedger ledger(config.out_dir / "provenance.jsonl");
    for (const auto& id : ledger.run_ids()) {
        if (id.rfind(config.run_id + "/", 0) == 0) {
            throw ConfigError("run '" + config.run_id + "' is already recorded in " + ledger.path().string() +
                              "; choose another run id or out dir");
        }
    }
    llm::ResponseCache cache(config.cache_dir);
    Artifacts artifacts{{}, config.out_dir};
    PipelineResult result;

    // Dataset
    std::vector<DataItem> items;
    if (config.dataset) {
        items = read_dataset(*config.dataset);
    } else if (config.ingest) {
        auto ingested = ingest::run(*config.ingest);
        log::info(ingested.report.to_text());
        items = std::move(ingested.items);
    } else {
        throw ConfigError("configuration needs either 'dataset' or 'ingest'");
    }
    if (items.empty()) {
        throw ValidationError("dataset is empty");
    }
    std::sort(items.begin(), items.end(), [](const DataItem& a, const DataItem& b) { return a.id() < b.id(); });
    std::map<std::string, DataItem> by_id;
    for (const auto& item : items) {
        by_id.emplace(item.id(), item);
    }
    result.items = items.size();

    // Stage 1: prompt
    const auto schema = LabelSchema::load(config.schema);
    auto tmpl = prompt::PromptTemplate::load(config.prompt_template);
    if (!(tmpl.schema == schema)) {
        throw ConfigError("template schema differs from the configured schema " + config.schema.string());
    }
    for (const auto& f : prompt::lint_template(tmpl)) {
        log::write(f.severity == Severity::error ? log::Level::error : log::Level::warn,
                   "prompt lint " + f.code + ": " + f.message);
    }
    prompt::PromptLedger prompts(config.out_dir / "prompts.jsonl");
    std::optional<std::string> parent;
    if (const auto versions = prompts.versions(); !versions.empty()) {
        parent = versions.back().version_id;
    }
    const auto version = prompts.register_version(tmpl, parent, "pipeline run " + config.run_id);
    result.prompt_version_id = version.version_id;

    auto make_client = [&](const llm::ModelSpec& spec, const std::string& stage) {
        auto options = base_options;
        options.ledger = &ledger;
        options.cache = &cache;
        options.retry = config.retry;
        options.run_id = config.run_id + "/" + stage;
        options.jitter_seed = config.seed;
        return std::make_unique<llm::LlmClient>(spec, options);
    };
    std::vector<std::string> cache_keys;

    provenance::ManifestInputs manifest;
    manifest.run_id = config.run_id;
    manifest.dataset_digest = dataset_digest(items);
    manifest.prompt_version_ids = {version.version_id};
    for (const auto& m : config.models) {
        manifest.model_specs.push_back(m.to_json());
    }
    manifest.parameters = config.parameters();

    auto finish = [&](const std::string& status) {
        result.status = status;
        manifest.partial = status != "complete";
        manifest.cache_digest = cache.digest_of(cache_keys);
        manifest.artifact_digests = artifacts.digests;
        const auto m = provenance::build_manifest(manifest);
        result.manifest_path = config.out_dir / "manifest.json";
        provenance::write_manifest(result.manifest_path, m);
        result.manifest_digest = m.digest;
        return result;
    };

    // Stage 2: pilot
    pilot::RoundLedger rounds(config.out_dir / "pilot_rounds.jsonl");
    const auto previous = rounds.last();
    const int round_number = previous ? previous->round_number + 1 : 1;
    result.pilot_round = round_number;
    std::vector<std::string> sample;
    const bool reuse = config.pilot.reuse_sample && previous.has_value();
    if (reuse) {
        sample = previous->sample_item_ids;
    } else {
        const auto n = std::min(config.pilot.sample_size, items.size());
        sample = pilot::draw_sample(items, n, config.seed + static_cast<std::uint64_t>(round_number - 1),
                                    config.pilot.stratify_by);
    }
    std::sort(sample.begin(), sample.end());
    if (!config.pilot.human_annotations) {
        throw ConfigError("pilot.human_annotations is required to evaluate the gate");
    }
    const auto& pilot_spec = config.model(config.pilot.model_id.empty() ? config.models.front().model_id
                                                                        : config.pilot.model_id);
    std::vector<DataItem> sample_items;
    for (const auto& id : sample) {
        sample_items.push_back(by_id.at(id));
    }
    auto pilot_client = make_client(pilot_spec, "pilot-r" + std::to_string(round_number));
    const auto model_side = pilot::annotate_with_model(*pilot_client, version, sample_items, config.concurrency);
    const auto pilot_keys = pilot_client->cache_keys_used();
    cache_keys.insert(cache_keys.end(), pilot_keys.begin(), pilot_keys.end());

    const auto human_all = pilot::read_annotations_csv(*config.pilot.human_annotations, schema,
                                                       Annotator{Annotator::Kind::human, "human"});
    auto human = pilot::restrict_to(human_all, sample);
    if (human.size() != sample.size()) {
        std::set<std::string> have;
        for (const auto& a : human) {
            have.insert(a.item_id());
        }
        std::vector<std::string> missing;
        for (const auto& id : sample) {
            if (have.count(id) == 0) {
                missing.push_back(id);
            }
        }
        throw ValidationError("human annotations missing for " + std::to_string(missing.size()) +
                              " sampled item(s): " + text::join(missing, ", "));
    }
    std::vector<std::string> parsed_ids;
    for (const auto& a : model_side.annotations) {
        parsed_ids.push_back(a.item_id());
    }
    human = pilot::restrict_to(human, parsed_ids);
    if (!model_side.failed_item_ids.empty()) {
        log::warn("pilot: " + std::to_string(model_side.failed_item_ids.size()) +
                  " model response(s) failed format validation and were left out of the agreement");
    }

    pilot::PilotRound round;
    round.round_number = round_number;
    round.prompt_version_id = version.version_id;
    round.sample_item_ids = sample;
    round.fresh_sample = !reuse;
    round.threshold = config.pilot.threshold;
    round.min_n = config.pilot.min_n;
    round.comparison = config.pilot.comparison;
    round.parse_failures = model_side.failed_item_ids.size();
    round.created_at = now_iso8601();
    if (!human.empty()) {
        round.agreement = pilot::agreement_for_schema(human, model_side.annotations, schema);
    }
    round.gate = pilot::evaluate_gate(round.agreement, round.threshold, round.min_n, round.comparison);
    rounds.append(round);
    result.gate = round.gate;

    const auto round_dir = std::filesystem::path("pilot") / ("round-" + std::to_string(round_number));
    Json agreement_json = Json::array();
    for (const auto& a : round.agreement) {
        agreement_json.push_back(a.to_json());
    }
    artifacts.write(round_dir / "agreement.json",
                    Json{{"agreement", agreement_json}, {"gate", round.gate.to_json()}}.dump(2) + "\n");
    artifacts.write(round_dir / "model_annotations.csv", pilot::annotations_csv(model_side.annotations, schema));
    artifacts.write(round_dir / "disagreements.csv",
                    pilot::disagreements_csv(pilot::list_disagreements(human, model_side.annotations, schema)));
    manifest.metrics_digests["pilot"] = artifacts.digests.at((round_dir / "agreement.json").generic_string());
    if (!round.gate.passed()) {
        log::warn("pilot gate: refine (" + text::join(round.gate.reasons, "; ") + ")");
        return finish("refine");
    }

    // Stage 3: benchmark
    std::string selected = pilot_spec.model_id;
    if (config.benchmark.oracle) {
        const auto oracle = benchmark::Oracle::load(*config.benchmark.oracle, schema);
        const auto required = benchmark::required_sample_size(
            config.benchmark.population ? config.benchmark.population
                                        : std::optional<std::int64_t>(static_cast<std::int64_t>(items.size())),
            config.benchmark.confidence, config.benchmark.margin, config.benchmark.p);
        if (static_cast<std::int64_t>(oracle.size()) < required) {
            log::warn("oracle has " + std::to_string(oracle.size()) + " items; the sample-size estimate asks for " +
                      std::to_string(required));
        }
        std::map<std::string, std::vector<int>> ratings;
        if (config.benchmark.ratings) {
            ratings = benchmark::read_ratings_csv(*config.benchmark.ratings);
        }
        std::vector<benchmark::ModelRunMetrics> runs;
        bool incomplete = false;
        for (const auto& spec : config.models) {
            auto client = make_client(spec, "bench");
            auto metrics = benchmark::evaluate_model(*client, version, oracle, by_id, {config.concurrency});
            const auto keys = client->cache_keys_used();
            cache_keys.insert(cache_keys.end(), keys.begin(), keys.end());
            benchmark::apply_ratings(metrics, ratings);
            incomplete = incomplete || metrics.incomplete;
            const auto rel = std::filesystem::path("benchmark") / ("metrics-" + safe_name(spec.model_id) + ".json");
            artifacts.write(rel, metrics.to_json().dump(2) + "\n");
            manifest.metrics_digests["benchmark/" + spec.model_id] = artifacts.digests.at(rel.generic_string());
            runs.push_back(std::move(metrics));
        }
        const auto report = benchmark::compare_models(runs, config.benchmark.weights);
        Json report_json = report.to_json();
        report_json["required_sample_size"] = required;
        report_json["oracle_size"] = oracle.size();
        artifacts.write("benchmark/comparison.json", report_json.dump(2) + "\n");
        artifacts.write("benchmark/comparison.txt", report.to_text());
        if (incomplete) {
            return finish("incomplete");
        }
        selected = report.ranking.front().metrics.model_id;
    } else {
        log::warn("no oracle configured; benchmark stage skipped, labelling with " + selected);
    }
    result.selected_model = selected;

    // Stage 4: label everything and validate
    auto label_client = make_client(config.model(selected), "label");
    std::vector<const DataItem*> ordered;
    for (const auto& item : items) {
        ordered.push_back(&item);
    }
    const auto responses = complete_all(*label_client, version, ordered, config.concurrency);
    const auto label_keys = label_client->cache_keys_used();
    cache_keys.insert(cache_keys.end(), label_keys.begin(), label_keys.end());
    if (!responses.failure.empty()) {
        log::error("labelling aborted: " + responses.failure);
        return finish("incomplete");
    }

    const auto out_schema = validation::OutputSchema::from_label_schema(schema);
    validation::GroundingConfig grounding;
    grounding.allowed_vocabulary = {config.validation.allowed_vocabulary.begin(),
                                    config.validation.allowed_vocabulary.end()};
    grounding.schema = schema;
    grounding.min_term_length = config.validation.min_term_length;

    std::vector<validation::ValidationFinding> findings;
    std::vector<EnhancedRecord> records;
    std::vector<validation::OutputText> texts;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        const auto& response = *responses.responses[i];
        EnhancedRecord rec;
        rec.item_id = item.id();
        rec.locator = item.source().normalized().display();
        rec.project = provenance::project_of(item);
        rec.model_id = selected;
        rec.prompt_version_id = version.version_id;
        rec.fields = item.fields();
        auto format = validation::validate_format(response.text, out_schema, item.id());
        findings.insert(findings.end(), format.findings.begin(), format.findings.end());
        if (format.ok()) {
            rec.labels = format.parsed->labels;
            rec.rationale = format.parsed->rationale;
            const auto h = validation::flag_hallucinations(*format.parsed, item, grounding);
            findings.insert(findings.end(), h.begin(), h.end());
            texts.push_back({item.id(), format.parsed->rationale.value_or(response.text)});
        }
        records.push_back(std::move(rec));
    }
    const auto dups =
        validation::detect_duplicates(texts, config.validation.duplicate_threshold, config.validation.shingle_width);
    findings.insert(findings.end(), dups.begin(), dups.end());
    if (config.validation.rules) {
        const auto rules = validation::parse_rules(fs::read_file(*config.validation.rules));
        const auto report = validation::run_expectations(to_table(records, schema), rules);
        artifacts.write("validation/expectations.txt", report.to_text());
        const auto f = report.to_findings();
        findings.insert(findings.end(), f.begin(), f.end());
    }
    validation::sort_findings(findings);

    std::map<std::string, std::vector<const validation::ValidationFinding*>> by_item;
    for (const auto& f : findings) {
        by_item[f.item_id].push_back(&f);
    }
    std::string enhanced;
    for (auto& rec : records) {
        bool has_error = false;
        for (const auto* f : by_item[rec.item_id]) {
            rec.finding_codes.push_back(f->code);
            has_error = has_error || f->severity == Severity::error;
        }
        rec.status = rec.labels.empty() ? "unparsed" : has_error ? "invalid" : "ok";
        enhanced += rec.to_json().dump();
        enhanced += '\n';
    }
    artifacts.write("enhanced.jsonl", enhanced);
    artifacts.write("validation/findings.csv", validation::findings_csv(findings));
    artifacts.write("validation/findings.txt", validation::findings_summary(findings));
    result.findings = findings.size();
    result.enhanced_dataset_digest = sha256_hex(enhanced);
    manifest.enhanced_dataset_digest = result.enhanced_dataset_digest;

    const auto project_dir = config.out_dir / "projects";
    std::filesystem::create_directories(project_dir);
    result.project_csvs =
        provenance::export_project_csv(ledger, config.run_id + "/label", items, schema, project_dir);
    for (const auto& path : result.project_csvs) {
        artifacts.digests[std::filesystem::relative(path, config.out_dir).generic_string()] = file_digest(path);
    }
    return finish("complete");
}

} // namespace primes::pipeline
