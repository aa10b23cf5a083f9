#include "primes/benchmark.hpp"
#include "primes/digest.hpp"
#include "primes/llm_client.hpp"
#include "primes/pilot.hpp"
#include "primes/pipeline.hpp"
#include "primes/validation.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace primes;

namespace {

py::object to_py(const Json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

Json from_py(const py::handle& obj) {
    return Json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict kappa(const std::vector<std::string>& a, const std::vector<std::string>& b,
               const std::vector<std::string>& categories, const std::string& task) {
    return to_py(pilot::kappa_from_labels(a, b, categories, task).to_json());
}

py::dict gate(const py::list& results, double threshold, std::size_t min_n, const std::string& comparison) {
    std::vector<pilot::AgreementResult> parsed;
    for (const auto& r : results) {
        parsed.push_back(pilot::AgreementResult::from_json(from_py(r)));
    }
    return to_py(pilot::evaluate_gate(parsed, threshold, min_n, pilot::parse_gate_comparison(comparison)).to_json());
}

std::string cost(std::int64_t input_tokens, std::int64_t output_tokens, const std::string& price_in,
                 const std::string& price_out) {
    llm::ModelSpec spec;
    spec.model_id = "cost";
    spec.price_in_per_million = Money::parse(price_in);
    spec.price_out_per_million = Money::parse(price_out);
    spec.check();
    llm::ModelResponse r;
    r.input_tokens = input_tokens;
    r.output_tokens = output_tokens;
    return llm::call_cost(r, spec).to_string();
}

py::dict format(const std::string& raw, const py::dict& schema, const std::string& item_id) {
    const auto out_schema = validation::OutputSchema::from_label_schema(LabelSchema::from_json(from_py(schema)));
    const auto result = validation::validate_format(raw, out_schema, item_id);
    py::dict d;
    if (result.parsed) {
        Json labels = Json::object();
        for (const auto& [task, category] : result.parsed->labels) {
            labels[task] = category;
        }
        d["labels"] = to_py(labels);
        d["rationale"] = result.parsed->rationale ? py::object(py::str(*result.parsed->rationale)) : py::none();
    } else {
        d["labels"] = py::none();
        d["rationale"] = py::none();
    }
    py::list findings;
    for (const auto& f : result.findings) {
        findings.append(to_py(f.to_json()));
    }
    d["findings"] = findings;
    return d;
}

py::list duplicates(const std::vector<std::pair<std::string, std::string>>& outputs, double threshold,
                    int shingle_width) {
    std::vector<validation::OutputText> texts;
    for (const auto& [id, text] : outputs) {
        texts.push_back({id, text});
    }
    py::list out;
    for (const auto& f : validation::detect_duplicates(texts, threshold, shingle_width)) {
        out.append(to_py(f.to_json()));
    }
    return out;
}

py::dict run(const std::string& config_path, const std::optional<std::string>& run_id) {
    auto config = pipeline::load_config(config_path);
    if (run_id) {
        config.run_id = *run_id;
        config.sources["run_id"] = "argument";
    }
    pipeline::PipelineResult r;
    {
        py::gil_scoped_release release;
        r = pipeline::run_pipeline(config);
    }
    py::dict d;
    d["status"] = r.status;
    d["gate"] = to_py(r.gate.to_json());
    d["pilot_round"] = r.pilot_round;
    d["prompt_version_id"] = r.prompt_version_id;
    d["selected_model"] = r.selected_model;
    d["items"] = r.items;
    d["findings"] = r.findings;
    d["enhanced_dataset_digest"] = r.enhanced_dataset_digest;
    d["manifest_digest"] = r.manifest_digest;
    d["manifest_path"] = r.manifest_path.string();
    py::list csvs;
    for (const auto& p : r.project_csvs) {
        csvs.append(p.string());
    }
    d["project_csvs"] = csvs;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the primes annotation pipeline library";

    auto base = py::register_exception<Error>(m, "PrimesError");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Json::exception& e) {
            py::set_error(PyExc_ValueError, e.what());
        }
    });

    m.def("sha256_hex", [](const py::bytes& data) { return sha256_hex(std::string(data)); }, py::arg("data"));
    m.def("kappa", &kappa, py::arg("a"), py::arg("b"), py::arg("categories"), py::arg("task") = "");
    m.def("evaluate_gate", &gate, py::arg("results"), py::arg("threshold") = pilot::kDefaultGateThreshold,
          py::arg("min_n") = pilot::kDefaultMinItems, py::arg("comparison") = "at_least");
    m.def(
        "required_sample_size",
        [](std::optional<std::int64_t> population, double confidence, double margin, double p) {
            return benchmark::required_sample_size(population, confidence, margin, p);
        },
        py::arg("population") = py::none(), py::arg("confidence") = 0.95, py::arg("margin") = 0.05,
        py::arg("p") = 0.5);
    m.def("call_cost", &cost, py::arg("input_tokens"), py::arg("output_tokens"), py::arg("price_in_per_million"),
          py::arg("price_out_per_million"), "Exact cost as a decimal string.");
    m.def("validate_format", &format, py::arg("raw"), py::arg("schema"), py::arg("item_id") = "");
    m.def("detect_duplicates", &duplicates, py::arg("outputs"),
          py::arg("threshold") = validation::kDefaultDuplicateThreshold,
          py::arg("shingle_width") = validation::kDefaultShingleWidth);
    m.def("run_pipeline", &run, py::arg("config_path"), py::arg("run_id") = py::none());
}
