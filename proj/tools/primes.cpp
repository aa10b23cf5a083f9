// primes: command-line front end. Every subcommand is a thin adapter over the library.

#include "primes/benchmark.hpp"
#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/ingestion.hpp"
#include "primes/llm_client.hpp"
#include "primes/log.hpp"
#include "primes/pilot.hpp"
#include "primes/pipeline.hpp"
#include "primes/prompt.hpp"
#include "primes/provenance.hpp"
#include "primes/round_store.hpp"
#include "primes/server.hpp"
#include "primes/text.hpp"
#include "primes/validation.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <iostream>
#include <set>
#include <sstream>

namespace {

using namespace primes;
namespace fsys = std::filesystem;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config, "JSON configuration file");
    cmd->add_option("--seed", common.seed, "Random seed (overrides the configuration)");
    cmd->add_option("--out-dir", common.out_dir, "Directory for output files");
}

std::optional<pipeline::PipelineConfig> maybe_config(const Common& common) {
    if (common.config.empty()) {
        return std::nullopt;
    }
    return pipeline::load_config(common.config);
}

fsys::path out_dir(const Common& common, const std::optional<pipeline::PipelineConfig>& config) {
    fsys::path dir = !common.out_dir.empty() ? fsys::path(common.out_dir)
                     : config                ? config->out_dir
                                             : fsys::path(".");
    fsys::create_directories(dir);
    return dir;
}

std::uint64_t seed_of(const Common& common, const std::optional<pipeline::PipelineConfig>& config) {
    if (common.seed) {
        return *common.seed;
    }
    return config ? config->seed : pipeline::kDefaultSeed;
}

LabelSchema schema_of(const std::string& flag, const std::optional<pipeline::PipelineConfig>& config) {
    if (!flag.empty()) {
        return LabelSchema::load(flag);
    }
    if (config && !config->schema.empty()) {
        return LabelSchema::load(config->schema);
    }
    throw ConfigError("a label schema is needed (--schema or 'schema' in --config)");
}

fsys::path template_of(const std::string& flag, const std::optional<pipeline::PipelineConfig>& config) {
    if (!flag.empty()) {
        return flag;
    }
    if (config && !config->prompt_template.empty()) {
        return config->prompt_template;
    }
    throw ConfigError("a prompt template is needed (--template or 'template' in --config)");
}

std::vector<DataItem> dataset_of(const std::string& flag, const std::optional<pipeline::PipelineConfig>& config) {
    if (!flag.empty()) {
        return read_dataset(flag);
    }
    if (config && config->dataset) {
        return read_dataset(*config->dataset);
    }
    throw ConfigError("a dataset is needed (--dataset or 'dataset' in --config)");
}

void write_out(const fsys::path& path, const std::string& contents) {
    fs::write_file_atomic(path, contents);
    std::cerr << "wrote " << path.string() << "\n";
}

std::vector<std::string> read_id_list(const fsys::path& path) {
    std::vector<std::string> ids;
    std::istringstream in(fs::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        const auto t = text::trim(line);
        if (!t.empty()) {
            ids.emplace_back(t);
        }
    }
    return ids;
}

prompt::PromptVersion register_template(const fsys::path& template_path, const fsys::path& dir) {
    prompt::PromptLedger ledger(dir / "prompts.jsonl");
    return ledger.register_version(prompt::PromptTemplate::load(template_path));
}

/// Responses file: JSONL lines {"item_id", "text"} or provenance records
/// {"item_id", "raw_response"}.
std::vector<validation::OutputText> read_responses(const fsys::path& path) {
    std::vector<validation::OutputText> out;
    std::istringstream in(fs::read_file(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) {
            continue;
        }
        const auto j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("item_id")) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected a JSON object with item_id");
        }
        const auto text = j.contains("raw_response") ? j["raw_response"] : j.value("text", Json(""));
        out.push_back({j["item_id"].get<std::string>(), text.get<std::string>()});
    }
    return out;
}

int finish_findings(std::vector<validation::ValidationFinding> findings, const fsys::path& dir, bool strict) {
    validation::sort_findings(findings);
    write_out(dir / "findings.csv", validation::findings_csv(findings));
    std::cout << validation::findings_summary(findings);
    if (strict) {
        for (const auto& f : findings) {
            if (f.severity == Severity::error) {
                return 1;
            }
        }
    }
    return 0;
}

std::unique_ptr<llm::LlmClient> client_for(const pipeline::PipelineConfig& config, const std::string& model_id,
                                           provenance::ProvenanceLedger& ledger, llm::ResponseCache& cache,
                                           const std::string& run_id, std::uint64_t seed) {
    llm::ClientOptions options;
    options.ledger = &ledger;
    options.cache = &cache;
    options.retry = config.retry;
    options.run_id = run_id;
    options.jitter_seed = seed;
    return std::make_unique<llm::LlmClient>(config.model(model_id), options);
}

pipeline::PipelineConfig require_config(const std::optional<pipeline::PipelineConfig>& config, const char* what) {
    if (!config) {
        throw ConfigError(std::string(what) + " needs --config (model specifications live there)");
    }
    return *config;
}

std::string format_kappa_line(const pilot::AgreementResult& r) {
    std::ostringstream out;
    out << (r.task.empty() ? std::string("label") : r.task) << ": ";
    if (r.kappa) {
        out << "kappa " << text::format_double(*r.kappa);
    } else {
        out << "kappa undefined";
    }
    out << " (p_o " << text::format_double(r.p_o) << ", p_e " << text::format_double(r.p_e) << ", n " << r.n_items
        << ", " << pilot::to_string(r.status) << ")";
    return out.str();
}

volatile std::sig_atomic_t g_stop = 0;
server::ApiServer* g_server = nullptr;

void on_signal(int) {
    g_stop = 1;
    if (g_server != nullptr) {
        g_server->stop();
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"primes: LLM-assisted repository mining toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    // ingest -------------------------------------------------------------
    Common c_ingest;
    std::string ingest_mode = "files";
    std::string ingest_path;
    std::vector<std::string> ingest_include;
    std::vector<std::string> ingest_exclude;
    std::string ingest_range;
    std::vector<std::string> ingest_fields;
    bool ingest_patch = false;
    auto* ingest_cmd = app.add_subcommand("ingest", "Build a dataset from a repository, its history or a table");
    add_common(ingest_cmd, c_ingest);
    ingest_cmd->add_option("--mode", ingest_mode, "files | commits | tabular")->check(
        CLI::IsMember({"files", "commits", "tabular"}));
    ingest_cmd->add_option("--path", ingest_path, "Repository root or CSV file");
    ingest_cmd->add_option("--include", ingest_include, "Glob of files to include");
    ingest_cmd->add_option("--exclude", ingest_exclude, "Glob of files to exclude");
    ingest_cmd->add_option("--range", ingest_range, "Commit range, e.g. v1.0..HEAD");
    ingest_cmd->add_option("--field", ingest_fields, "Tabular column mapping column=field");
    ingest_cmd->add_flag("--include-patch", ingest_patch, "Store the full patch of each commit");

    // prompt -------------------------------------------------------------
    auto* prompt_cmd = app.add_subcommand("prompt", "Prompt templates");
    prompt_cmd->require_subcommand(1);
    Common c_lint;
    std::string lint_template;
    auto* lint_cmd = prompt_cmd->add_subcommand("lint", "Check a prompt template");
    add_common(lint_cmd, c_lint);
    lint_cmd->add_option("template", lint_template, "Template file")->required();
    Common c_register;
    std::string register_template_path;
    std::string register_parent;
    std::string register_changelog;
    auto* register_cmd = prompt_cmd->add_subcommand("register", "Record a template version");
    add_common(register_cmd, c_register);
    register_cmd->add_option("template", register_template_path, "Template file")->required();
    register_cmd->add_option("--parent", register_parent, "Parent version id");
    register_cmd->add_option("--changelog", register_changelog, "What changed");

    // pilot --------------------------------------------------------------
    auto* pilot_cmd = app.add_subcommand("pilot", "Pilot validation against human annotation");
    pilot_cmd->require_subcommand(1);
    Common c_sample;
    std::string sample_dataset;
    std::size_t sample_n = 0;
    std::string sample_stratify;
    auto* sample_cmd = pilot_cmd->add_subcommand("sample", "Draw the pilot sample");
    add_common(sample_cmd, c_sample);
    sample_cmd->add_option("--dataset", sample_dataset, "Dataset JSONL");
    sample_cmd->add_option("--n", sample_n, "Sample size")->required();
    sample_cmd->add_option("--stratify-by", sample_stratify, "Metadata key to stratify on");

    Common c_annotate;
    std::string annotate_dataset;
    std::string annotate_sample;
    std::string annotate_template;
    std::string annotate_model;
    std::string annotate_run = "pilot";
    auto* annotate_cmd = pilot_cmd->add_subcommand("annotate-llm", "Label the sample with a model");
    add_common(annotate_cmd, c_annotate);
    annotate_cmd->add_option("--dataset", annotate_dataset, "Dataset JSONL");
    annotate_cmd->add_option("--sample", annotate_sample, "Sample id list")->required();
    annotate_cmd->add_option("--template", annotate_template, "Prompt template");
    annotate_cmd->add_option("--model", annotate_model, "Model id from the configuration");
    annotate_cmd->add_option("--run-id", annotate_run, "Provenance run id");

    Common c_import;
    std::string import_csv;
    std::string import_schema;
    std::string import_annotator = "human:annotator";
    auto* import_cmd = pilot_cmd->add_subcommand("import-human", "Validate and normalise a human annotation CSV");
    add_common(import_cmd, c_import);
    import_cmd->add_option("--csv", import_csv, "Annotation CSV")->required();
    import_cmd->add_option("--schema", import_schema, "Label schema JSON");
    import_cmd->add_option("--annotator", import_annotator, "Annotator when the CSV has no annotator column");

    Common c_kappa;
    std::string kappa_a;
    std::string kappa_b;
    std::string kappa_schema;
    auto* kappa_cmd = pilot_cmd->add_subcommand("kappa", "Cohen's kappa between two annotation CSVs");
    add_common(kappa_cmd, c_kappa);
    kappa_cmd->add_option("--a", kappa_a, "First annotator CSV")->required();
    kappa_cmd->add_option("--b", kappa_b, "Second annotator CSV")->required();
    kappa_cmd->add_option("--schema", kappa_schema, "Label schema JSON (inferred from the CSVs when absent)");

    Common c_gate;
    std::string gate_agreement;
    double gate_threshold = pilot::kDefaultGateThreshold;
    std::size_t gate_min_n = pilot::kDefaultMinItems;
    std::string gate_comparison = ">=";
    auto* gate_cmd = pilot_cmd->add_subcommand("gate", "Apply the agreement gate");
    add_common(gate_cmd, c_gate);
    gate_cmd->add_option("--agreement", gate_agreement, "agreement.json from `pilot kappa`")->required();
    gate_cmd->add_option("--threshold", gate_threshold, "Minimum kappa");
    gate_cmd->add_option("--min-n", gate_min_n, "Minimum items per task");
    gate_cmd->add_option("--comparison", gate_comparison, ">= or >");

    Common c_dis;
    std::string dis_a;
    std::string dis_b;
    std::string dis_schema;
    auto* dis_cmd = pilot_cmd->add_subcommand("disagreements", "List items the annotators label differently");
    add_common(dis_cmd, c_dis);
    dis_cmd->add_option("--a", dis_a, "First annotator CSV")->required();
    dis_cmd->add_option("--b", dis_b, "Second annotator CSV")->required();
    dis_cmd->add_option("--schema", dis_schema, "Label schema JSON");

    // bench --------------------------------------------------------------
    auto* bench_cmd = app.add_subcommand("bench", "Multi-model benchmarking");
    bench_cmd->require_subcommand(1);
    Common c_size;
    double size_confidence = 0.95;
    double size_margin = 0.05;
    double size_p = 0.5;
    std::optional<std::int64_t> size_population;
    auto* size_cmd = bench_cmd->add_subcommand("size", "Required oracle sample size");
    add_common(size_cmd, c_size);
    size_cmd->add_option("--confidence", size_confidence, "0.90, 0.95 or 0.99");
    size_cmd->add_option("--margin", size_margin, "Margin of error");
    size_cmd->add_option("--p", size_p, "Expected proportion");
    size_cmd->add_option("--population", size_population, "Finite population size");

    Common c_brun;
    std::string brun_dataset;
    std::string brun_oracle;
    std::string brun_template;
    std::vector<std::string> brun_models;
    std::string brun_ratings;
    std::string brun_run = "bench";
    auto* brun_cmd = bench_cmd->add_subcommand("run", "Evaluate models against the oracle");
    add_common(brun_cmd, c_brun);
    brun_cmd->add_option("--dataset", brun_dataset, "Dataset JSONL");
    brun_cmd->add_option("--oracle", brun_oracle, "Oracle CSV");
    brun_cmd->add_option("--template", brun_template, "Prompt template");
    brun_cmd->add_option("--model", brun_models, "Model ids (all configured models when absent)");
    brun_cmd->add_option("--ratings", brun_ratings, "Interpretability ratings CSV");
    brun_cmd->add_option("--run-id", brun_run, "Provenance run id");

    Common c_cmp;
    std::vector<std::string> cmp_metrics;
    std::vector<double> cmp_weights;
    auto* cmp_cmd = bench_cmd->add_subcommand("compare", "Rank benchmark runs");
    add_common(cmp_cmd, c_cmp);
    cmp_cmd->add_option("metrics", cmp_metrics, "metrics-*.json files")->required();
    cmp_cmd->add_option("--weights", cmp_weights, "accuracy cost interpretability weights")->expected(3);

    // validate -----------------------------------------------------------
    auto* val_cmd = app.add_subcommand("validate", "Output validation");
    val_cmd->require_subcommand(1);
    Common c_fmt;
    std::string fmt_responses;
    std::string fmt_schema;
    bool fmt_strict = false;
    auto* fmt_cmd = val_cmd->add_subcommand("format", "Check responses against the output schema");
    add_common(fmt_cmd, c_fmt);
    fmt_cmd->add_option("--responses", fmt_responses, "Responses JSONL")->required();
    fmt_cmd->add_option("--schema", fmt_schema, "Label schema JSON");
    fmt_cmd->add_flag("--strict", fmt_strict, "Exit 1 when any error finding is reported");

    Common c_dups;
    std::string dups_responses;
    double dups_threshold = validation::kDefaultDuplicateThreshold;
    int dups_width = validation::kDefaultShingleWidth;
    bool dups_strict = false;
    auto* dups_cmd = val_cmd->add_subcommand("dups", "Find exact and near-duplicate outputs");
    add_common(dups_cmd, c_dups);
    dups_cmd->add_option("--responses", dups_responses, "Responses JSONL")->required();
    dups_cmd->add_option("--threshold", dups_threshold, "Jaccard threshold for near duplicates");
    dups_cmd->add_option("--shingle-width", dups_width, "Words per shingle");
    dups_cmd->add_flag("--strict", dups_strict, "Exit 1 when any error finding is reported");

    Common c_hal;
    std::string hal_responses;
    std::string hal_dataset;
    std::string hal_schema;
    std::vector<std::string> hal_allow;
    bool hal_strict = false;
    auto* hal_cmd = val_cmd->add_subcommand("hallucinations", "Flag rationale terms absent from the source item");
    add_common(hal_cmd, c_hal);
    hal_cmd->add_option("--responses", hal_responses, "Responses JSONL")->required();
    hal_cmd->add_option("--dataset", hal_dataset, "Dataset JSONL");
    hal_cmd->add_option("--schema", hal_schema, "Label schema JSON");
    hal_cmd->add_option("--allow", hal_allow, "Extra allowed vocabulary");
    hal_cmd->add_flag("--strict", hal_strict, "Exit 1 when any finding is reported");

    Common c_exp;
    std::string exp_rules;
    std::string exp_table;
    auto* exp_cmd = val_cmd->add_subcommand("expect", "Run declarative expectations over a table");
    add_common(exp_cmd, c_exp);
    exp_cmd->add_option("--rules", exp_rules, "Rules file")->required();
    exp_cmd->add_option("--table", exp_table, "CSV (empty cells are null) or enhanced dataset JSONL")->required();

    // export -------------------------------------------------------------
    auto* export_cmd = app.add_subcommand("export", "Provenance exports");
    export_cmd->require_subcommand(1);
    Common c_csv;
    std::string csv_ledger;
    std::string csv_run;
    std::string csv_dataset;
    std::string csv_schema;
    std::string csv_group = "project";
    auto* csv_cmd = export_cmd->add_subcommand("csv", "One CSV per project for a run");
    add_common(csv_cmd, c_csv);
    csv_cmd->add_option("--ledger", csv_ledger, "Provenance ledger")->required();
    csv_cmd->add_option("--run", csv_run, "Run id")->required();
    csv_cmd->add_option("--dataset", csv_dataset, "Dataset JSONL");
    csv_cmd->add_option("--schema", csv_schema, "Label schema JSON");
    csv_cmd->add_option("--group-by", csv_group, "project (alias: source)");

    Common c_man;
    std::string man_ledger;
    std::string man_run;
    std::string man_dataset;
    std::string man_artifacts;
    bool man_partial = false;
    auto* man_cmd = export_cmd->add_subcommand("manifest", "Write a run manifest");
    add_common(man_cmd, c_man);
    man_cmd->add_option("--ledger", man_ledger, "Provenance ledger")->required();
    man_cmd->add_option("--run", man_run, "Run id (prefix; matches run and run/<stage>)")->required();
    man_cmd->add_option("--dataset", man_dataset, "Dataset JSONL");
    man_cmd->add_option("--artifacts", man_artifacts, "Directory whose files are digested into the manifest");
    man_cmd->add_flag("--partial", man_partial, "Mark the run as partial");

    // serve / run --------------------------------------------------------
    Common c_serve;
    std::string serve_store;
    std::string serve_host = "127.0.0.1";
    int serve_port = 8765;
    std::string serve_dataset;
    std::string serve_sample;
    std::string serve_schema;
    std::string serve_version;
    std::string serve_llm;
    double serve_threshold = pilot::kDefaultGateThreshold;
    std::size_t serve_min_n = pilot::kDefaultMinItems;
    auto* serve_cmd = app.add_subcommand("serve", "Local /v1 HTTP API for the annotation UI");
    add_common(serve_cmd, c_serve);
    serve_cmd->add_option("--store", serve_store, "Round store directory")->required();
    serve_cmd->add_option("--host", serve_host, "Bind address (loopback by default)");
    serve_cmd->add_option("--port", serve_port, "Port (0 picks a free one)");
    serve_cmd->add_option("--dataset", serve_dataset, "Dataset JSONL (initialising a new store)");
    serve_cmd->add_option("--sample", serve_sample, "Sample id list (initialising a new store)");
    serve_cmd->add_option("--schema", serve_schema, "Label schema JSON (initialising a new store)");
    serve_cmd->add_option("--prompt-version", serve_version, "Prompt version id (initialising a new store)");
    serve_cmd->add_option("--llm", serve_llm, "Model annotation CSV for the round");
    serve_cmd->add_option("--threshold", serve_threshold, "Gate threshold");
    serve_cmd->add_option("--min-n", serve_min_n, "Gate minimum items");

    Common c_run;
    std::string run_id;
    auto* run_cmd = app.add_subcommand("run", "Run all four stages from a configuration");
    add_common(run_cmd, c_run);
    run_cmd->add_option("--run-id", run_id, "Run id (overrides the configuration)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*ingest_cmd) {
            const auto config = maybe_config(c_ingest);
            ingest::IngestSpec spec;
            if (ingest_path.empty() && config && config->ingest) {
                spec = *config->ingest;
            } else {
                spec.mode = ingest::parse_mode(ingest_mode);
                spec.root_or_path = ingest_path;
                spec.include_globs = ingest_include;
                spec.exclude_globs = ingest_exclude;
                if (!ingest_range.empty()) {
                    spec.commit_range = ingest_range;
                }
                for (const auto& f : ingest_fields) {
                    const auto eq = f.find('=');
                    if (eq == std::string::npos) {
                        throw ConfigError("--field expects column=field, got '" + f + "'");
                    }
                    spec.field_mapping.emplace_back(f.substr(0, eq), f.substr(eq + 1));
                }
                spec.include_patch = ingest_patch;
            }
            const auto result = ingest::run(spec);
            const auto dir = out_dir(c_ingest, config);
            write_dataset(dir / "dataset.jsonl", result.items);
            write_out(dir / "ingest_report.txt", result.report.to_text());
            std::cout << result.report.to_text();
            return 0;
        }

        if (*lint_cmd) {
            const auto findings = prompt::lint_template(prompt::PromptTemplate::load(lint_template));
            for (const auto& f : findings) {
                std::cout << to_string(f.severity) << " " << f.code << ": " << f.message << "\n";
            }
            if (findings.empty()) {
                std::cout << "ok\n";
            }
            return prompt::has_errors(findings) ? 1 : 0;
        }

        if (*register_cmd) {
            const auto dir = out_dir(c_register, maybe_config(c_register));
            prompt::PromptLedger ledger(dir / "prompts.jsonl");
            const auto v = ledger.register_version(
                prompt::PromptTemplate::load(register_template_path),
                register_parent.empty() ? std::nullopt : std::optional<std::string>(register_parent),
                register_changelog);
            std::cout << v.version_id << "\n";
            return 0;
        }

        if (*sample_cmd) {
            const auto config = maybe_config(c_sample);
            const auto items = dataset_of(sample_dataset, config);
            const auto ids = pilot::draw_sample(items, sample_n, seed_of(c_sample, config),
                                                sample_stratify.empty() ? std::nullopt
                                                                        : std::optional<std::string>(sample_stratify));
            const auto dir = out_dir(c_sample, config);
            write_out(dir / "sample.txt", text::join(ids, "\n") + "\n");
            for (const auto& id : ids) {
                std::cout << id << "\n";
            }
            return 0;
        }

        if (*annotate_cmd) {
            const auto config = require_config(maybe_config(c_annotate), "pilot annotate-llm");
            const auto dir = out_dir(c_annotate, config);
            const auto items = dataset_of(annotate_dataset, config);
            const auto ids = read_id_list(annotate_sample);
            std::map<std::string, const DataItem*> by_id;
            for (const auto& item : items) {
                by_id.emplace(item.id(), &item);
            }
            std::vector<DataItem> sample;
            for (const auto& id : ids) {
                const auto it = by_id.find(id);
                if (it == by_id.end()) {
                    throw ValidationError("sampled item " + id + " is not in the dataset");
                }
                sample.push_back(*it->second);
            }
            const auto version = register_template(template_of(annotate_template, config), dir);
            provenance::ProvenanceLedger ledger(dir / "provenance.jsonl");
            llm::ResponseCache cache(config.cache_dir);
            const auto model_id = annotate_model.empty() ? config.models.at(0).model_id : annotate_model;
            auto client = client_for(config, model_id, ledger, cache, annotate_run, seed_of(c_annotate, config));
            const auto result = pilot::annotate_with_model(*client, version, sample, config.concurrency);
            write_out(dir / "llm.csv", pilot::annotations_csv(result.annotations, version.content.schema));
            std::cout << result.annotations.size() << " labelled, " << result.failed_item_ids.size()
                      << " unparseable\n";
            return 0;
        }

        if (*import_cmd) {
            const auto config = maybe_config(c_import);
            const auto schema = schema_of(import_schema, config);
            const auto annotations =
                pilot::read_annotations_csv(import_csv, schema, Annotator::parse(import_annotator));
            const auto dir = out_dir(c_import, config);
            write_out(dir / "human.csv", pilot::annotations_csv(annotations, schema));
            std::cout << annotations.size() << " annotations imported\n";
            return 0;
        }

        if (*kappa_cmd || *dis_cmd) {
            const bool kappa = kappa_cmd->parsed();
            const auto& common = kappa ? c_kappa : c_dis;
            const auto config = maybe_config(common);
            const auto a_table = csv::parse(fs::read_file(kappa ? kappa_a : dis_a));
            const auto b_table = csv::parse(fs::read_file(kappa ? kappa_b : dis_b));
            const auto& schema_flag = kappa ? kappa_schema : dis_schema;
            const auto schema = !schema_flag.empty() || (config && !config->schema.empty())
                                    ? schema_of(schema_flag, config)
                                    : pilot::infer_schema({a_table, b_table});
            const auto a = pilot::annotations_from_csv(a_table, schema, Annotator{Annotator::Kind::human, "a"});
            const auto b = pilot::annotations_from_csv(b_table, schema, Annotator{Annotator::Kind::human, "b"});
            const auto dir = out_dir(common, config);
            if (kappa) {
                const auto results = pilot::agreement_for_schema(a, b, schema);
                write_out(dir / "agreement.json", pilot::agreement_document(results).dump(2) + "\n");
                for (const auto& r : results) {
                    std::cout << format_kappa_line(r) << "\n";
                }
            } else {
                const auto rows = pilot::list_disagreements(a, b, schema);
                write_out(dir / "disagreements.csv", pilot::disagreements_csv(rows));
                std::cout << rows.size() << " disagreement(s)\n";
            }
            return 0;
        }

        if (*gate_cmd) {
            const auto results = pilot::agreement_from_document(Json::parse(fs::read_file(gate_agreement)));
            const auto decision = pilot::evaluate_gate(results, gate_threshold, gate_min_n,
                                                       pilot::parse_gate_comparison(gate_comparison));
            const auto dir = out_dir(c_gate, maybe_config(c_gate));
            write_out(dir / "gate.json", decision.to_json().dump(2) + "\n");
            std::cout << pilot::to_string(decision.outcome) << "\n";
            for (const auto& r : decision.reasons) {
                std::cout << "  " << r << "\n";
            }
            return 0;
        }

        if (*size_cmd) {
            const auto doc = benchmark::sample_size_document(size_population, size_confidence, size_margin, size_p);
            const auto dir = out_dir(c_size, maybe_config(c_size));
            write_out(dir / "sample_size.json", doc.dump(2) + "\n");
            std::cout << doc.at("n").get<std::int64_t>() << "\n";
            return 0;
        }

        if (*brun_cmd) {
            const auto config = require_config(maybe_config(c_brun), "bench run");
            const auto dir = out_dir(c_brun, config);
            const auto items = dataset_of(brun_dataset, config);
            std::map<std::string, DataItem> by_id;
            for (const auto& item : items) {
                by_id.emplace(item.id(), item);
            }
            const auto version = register_template(template_of(brun_template, config), dir);
            fsys::path oracle_path = brun_oracle;
            if (oracle_path.empty()) {
                if (!config.benchmark.oracle) {
                    throw ConfigError("an oracle is needed (--oracle or benchmark.oracle in --config)");
                }
                oracle_path = *config.benchmark.oracle;
            }
            const auto oracle = benchmark::Oracle::load(oracle_path, version.content.schema);
            std::map<std::string, std::vector<int>> ratings;
            if (!brun_ratings.empty()) {
                ratings = benchmark::read_ratings_csv(brun_ratings);
            } else if (config.benchmark.ratings) {
                ratings = benchmark::read_ratings_csv(*config.benchmark.ratings);
            }
            auto models = brun_models;
            if (models.empty()) {
                for (const auto& m : config.models) {
                    models.push_back(m.model_id);
                }
            }
            provenance::ProvenanceLedger ledger(dir / "provenance.jsonl");
            llm::ResponseCache cache(config.cache_dir);
            bool incomplete = false;
            for (const auto& model_id : models) {
                auto client = client_for(config, model_id, ledger, cache, brun_run, seed_of(c_brun, config));
                auto metrics = benchmark::evaluate_model(*client, version, oracle, by_id, {config.concurrency});
                benchmark::apply_ratings(metrics, ratings);
                incomplete = incomplete || metrics.incomplete;
                std::string name = model_id;
                for (auto& ch : name) {
                    if (!(std::isalnum(static_cast<unsigned char>(ch)) != 0 || ch == '-' || ch == '_' || ch == '.')) {
                        ch = '_';
                    }
                }
                write_out(dir / ("metrics-" + name + ".json"), metrics.to_json().dump(2) + "\n");
                std::cout << model_id << ": accuracy " << text::format_double(metrics.mean_accuracy) << ", cost "
                          << metrics.cost.to_string(6) << ", parse failures " << metrics.parse_failure_count
                          << (metrics.incomplete ? " [incomplete]" : "") << "\n";
            }
            return incomplete ? 1 : 0;
        }

        if (*cmp_cmd) {
            std::vector<benchmark::ModelRunMetrics> runs;
            for (const auto& path : cmp_metrics) {
                runs.push_back(benchmark::ModelRunMetrics::from_json(Json::parse(fs::read_file(path))));
            }
            std::optional<benchmark::Weights> weights;
            if (!cmp_weights.empty()) {
                weights = benchmark::Weights{cmp_weights.at(0), cmp_weights.at(1), cmp_weights.at(2)};
            }
            const auto report = benchmark::compare_models(runs, weights);
            const auto dir = out_dir(c_cmp, maybe_config(c_cmp));
            write_out(dir / "comparison.json", report.to_json().dump(2) + "\n");
            write_out(dir / "comparison.txt", report.to_text());
            std::cout << report.to_text();
            return 0;
        }

        if (*fmt_cmd) {
            const auto config = maybe_config(c_fmt);
            const auto schema = validation::OutputSchema::from_label_schema(schema_of(fmt_schema, config));
            std::vector<validation::ValidationFinding> findings;
            for (const auto& r : read_responses(fmt_responses)) {
                const auto result = validation::validate_format(r.text, schema, r.item_id);
                findings.insert(findings.end(), result.findings.begin(), result.findings.end());
            }
            return finish_findings(findings, out_dir(c_fmt, config), fmt_strict);
        }

        if (*dups_cmd) {
            const auto config = maybe_config(c_dups);
            const auto responses = read_responses(dups_responses);
            return finish_findings(validation::detect_duplicates(responses, dups_threshold, dups_width),
                                   out_dir(c_dups, config), dups_strict);
        }

        if (*hal_cmd) {
            const auto config = maybe_config(c_hal);
            const auto schema = schema_of(hal_schema, config);
            const auto out_schema = validation::OutputSchema::from_label_schema(schema);
            const auto items = dataset_of(hal_dataset, config);
            std::map<std::string, const DataItem*> by_id;
            for (const auto& item : items) {
                by_id.emplace(item.id(), &item);
            }
            validation::GroundingConfig grounding;
            grounding.schema = schema;
            grounding.allowed_vocabulary.insert(hal_allow.begin(), hal_allow.end());
            if (config) {
                grounding.allowed_vocabulary.insert(config->validation.allowed_vocabulary.begin(),
                                                    config->validation.allowed_vocabulary.end());
                grounding.min_term_length = config->validation.min_term_length;
            }
            std::vector<validation::ValidationFinding> findings;
            for (const auto& r : read_responses(hal_responses)) {
                const auto it = by_id.find(r.item_id);
                if (it == by_id.end()) {
                    throw ValidationError("response for unknown item " + r.item_id);
                }
                const auto parsed = validation::validate_format(r.text, out_schema, r.item_id);
                if (!parsed.ok()) {
                    log::warn("skipping unparseable response for " + r.item_id);
                    continue;
                }
                const auto f = validation::flag_hallucinations(*parsed.parsed, *it->second, grounding);
                findings.insert(findings.end(), f.begin(), f.end());
            }
            return finish_findings(findings, out_dir(c_hal, config), hal_strict);
        }

        if (*exp_cmd) {
            const auto config = maybe_config(c_exp);
            validation::DataTable table;
            if (fsys::path(exp_table).extension() == ".jsonl") {
                std::istringstream in(fs::read_file(exp_table));
                std::string line;
                std::set<std::string> columns;
                std::vector<Json> rows;
                while (std::getline(in, line)) {
                    if (!text::trim(line).empty()) {
                        rows.push_back(Json::parse(line));
                    }
                }
                std::vector<std::string> order;
                auto add_column = [&](const std::string& c) {
                    if (columns.insert(c).second) {
                        order.push_back(c);
                    }
                };
                for (const auto& r : rows) {
                    for (const auto& [k, v] : r.items()) {
                        if (v.is_object()) {
                            const auto prefix = k == "labels" ? std::string("label.") : k == "fields" ? std::string("field.") : k + ".";
                            for (const auto& [sub, _] : v.items()) {
                                add_column(prefix + sub);
                            }
                        } else if (!v.is_array()) {
                            add_column(k);
                        }
                    }
                }
                table.columns = order;
                for (const auto& r : rows) {
                    std::map<std::string, std::optional<std::string>> row;
                    for (const auto& c : order) {
                        row[c] = std::nullopt;
                    }
                    for (const auto& [k, v] : r.items()) {
                        auto cell = [](const Json& x) -> std::optional<std::string> {
                            if (x.is_null()) {
                                return std::nullopt;
                            }
                            return x.is_string() ? x.get<std::string>() : x.dump();
                        };
                        if (v.is_object()) {
                            const auto prefix = k == "labels" ? std::string("label.") : k == "fields" ? std::string("field.") : k + ".";
                            for (const auto& [sub, x] : v.items()) {
                                row[prefix + sub] = cell(x);
                            }
                        } else if (!v.is_array()) {
                            row[k] = cell(v);
                        }
                    }
                    table.rows.push_back(std::move(row));
                }
            } else {
                const auto csv_table = csv::parse(fs::read_file(exp_table));
                table.columns = csv_table.header;
                for (const auto& r : csv_table.rows) {
                    std::map<std::string, std::optional<std::string>> row;
                    for (std::size_t i = 0; i < table.columns.size(); ++i) {
                        row[table.columns[i]] =
                            i < r.size() && !r[i].empty() ? std::optional<std::string>(r[i]) : std::nullopt;
                    }
                    table.rows.push_back(std::move(row));
                }
            }
            const auto report = validation::run_expectations(table, validation::parse_rules(fs::read_file(exp_rules)));
            const auto dir = out_dir(c_exp, config);
            write_out(dir / "expectations.json", report.to_json().dump(2) + "\n");
            std::cout << report.to_text();
            return report.passed ? 0 : 1;
        }

        if (*csv_cmd) {
            const auto config = maybe_config(c_csv);
            provenance::ProvenanceLedger ledger(csv_ledger);
            const auto files = provenance::export_project_csv(ledger, csv_run, dataset_of(csv_dataset, config),
                                                              schema_of(csv_schema, config), out_dir(c_csv, config),
                                                              provenance::parse_group_by(csv_group));
            for (const auto& f : files) {
                std::cout << f.string() << "\n";
            }
            return 0;
        }

        if (*man_cmd) {
            const auto config = maybe_config(c_man);
            provenance::ProvenanceLedger ledger(man_ledger);
            provenance::ManifestInputs inputs;
            inputs.run_id = man_run;
            inputs.partial = man_partial;
            std::set<std::string> versions;
            std::set<std::string> model_ids;
            std::size_t matched = 0;
            for (const auto& r : ledger.records()) {
                if (r.run_id == man_run || r.run_id.rfind(man_run + "/", 0) == 0) {
                    versions.insert(r.prompt_version_id);
                    model_ids.insert(r.model_id);
                    ++matched;
                }
            }
            if (matched == 0) {
                throw Error("unknown run '" + man_run + "' (no ledger records)");
            }
            inputs.prompt_version_ids = {versions.begin(), versions.end()};
            if (!man_dataset.empty() || (config && config->dataset)) {
                inputs.dataset_digest = dataset_digest(dataset_of(man_dataset, config));
            }
            for (const auto& id : model_ids) {
                inputs.model_specs.push_back(config ? config->model(id).to_json() : Json{{"model_id", id}});
            }
            if (config) {
                inputs.parameters = config->parameters();
                std::vector<std::string> keys;
                if (fsys::exists(config->cache_dir)) {
                    for (const auto& e : fsys::directory_iterator(config->cache_dir)) {
                        if (e.path().extension() == ".json") {
                            keys.push_back(e.path().stem().string());
                        }
                    }
                }
                inputs.cache_digest = llm::ResponseCache(config->cache_dir).digest_of(keys);
            }
            if (!man_artifacts.empty()) {
                for (const auto& e : fsys::recursive_directory_iterator(man_artifacts)) {
                    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
                        inputs.artifact_digests[fsys::relative(e.path(), man_artifacts).generic_string()] =
                            sha256_hex(fs::read_file(e.path()));
                    }
                }
                const auto enhanced = fsys::path(man_artifacts) / "enhanced.jsonl";
                if (fsys::exists(enhanced)) {
                    inputs.enhanced_dataset_digest = sha256_hex(fs::read_file(enhanced));
                }
            }
            const auto manifest = provenance::build_manifest(inputs);
            const auto path = out_dir(c_man, config) / "manifest.json";
            provenance::write_manifest(path, manifest);
            std::cout << manifest.digest << "\n";
            return 0;
        }

        if (*serve_cmd) {
            if (!fsys::exists(fsys::path(serve_store) / "state.json")) {
                const auto config = maybe_config(c_serve);
                if (serve_sample.empty() || serve_version.empty()) {
                    throw ConfigError("initialising a store needs --dataset, --sample, --schema and --prompt-version");
                }
                pilot::RoundSetup setup;
                setup.schema = schema_of(serve_schema, config);
                setup.pool = dataset_of(serve_dataset, config);
                setup.sample_item_ids = read_id_list(serve_sample);
                setup.prompt_version_id = serve_version;
                setup.threshold = serve_threshold;
                setup.min_n = serve_min_n;
                if (!serve_llm.empty()) {
                    setup.model_annotations = pilot::read_annotations_csv(
                        serve_llm, setup.schema, Annotator{Annotator::Kind::model, "model"});
                }
                pilot::RoundStore::initialize(serve_store, setup);
            }
            pilot::RoundStore store(serve_store);
            server::ApiServer api(store, {serve_host, serve_port});
            g_server = &api;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            api.run();
            g_server = nullptr;
            return 0;
        }

        if (*run_cmd) {
            auto config = require_config(maybe_config(c_run), "run");
            if (c_run.seed) {
                config.seed = *c_run.seed;
                config.sources["seed"] = "flag";
            }
            if (!c_run.out_dir.empty()) {
                config.out_dir = c_run.out_dir;
                config.sources["out_dir"] = "flag";
            }
            if (!run_id.empty()) {
                config.run_id = run_id;
                config.sources["run_id"] = "flag";
            }
            const auto result = pipeline::run_pipeline(config);
            std::cout << "status: " << result.status << "\n"
                      << "prompt version: " << result.prompt_version_id << "\n"
                      << "pilot round " << result.pilot_round << ": " << pilot::to_string(result.gate.outcome)
                      << "\n";
            for (const auto& r : result.gate.reasons) {
                std::cout << "  " << r << "\n";
            }
            if (!result.selected_model.empty()) {
                std::cout << "model: " << result.selected_model << "\n";
            }
            std::cout << "items: " << result.items << ", findings: " << result.findings << "\n"
                      << "enhanced dataset digest: " << result.enhanced_dataset_digest << "\n"
                      << "manifest: " << result.manifest_path.string() << " (" << result.manifest_digest << ")\n";
            return result.status == "complete" ? 0 : 1;
        }
    } catch (const primes::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
