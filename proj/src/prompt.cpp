#include "primes/prompt.hpp"

#include "primes/digest.hpp"
#include "primes/error.hpp"
#include "primes/text.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace primes::prompt {

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    const auto v = text::to_lower(text::trim(value));
    if (v == "true" || v == "yes" || v == "1") {
        return true;
    }
    if (v == "false" || v == "no" || v == "0") {
        return false;
    }
    throw ValidationError("template front matter: '" + key + "' expects true/false, got '" + value + "'");
}

ShotExample parse_example(const std::string& section) {
    ShotExample ex;
    std::vector<std::string> input_lines;
    bool answered = false;
    for (const auto& line : text::split(section, '\n')) {
        if (text::starts_with(line, "answer:")) {
            try {
                ex.answer = Json::parse(line.substr(7)).get<LabelMap>();
            } catch (const Json::exception& e) {
                throw ValidationError(std::string("template example: answer must be a JSON object of strings: ") +
                                      e.what());
            }
            answered = true;
        } else if (text::starts_with(line, "rationale:")) {
            ex.rationale = std::string(text::trim(line.substr(10)));
        } else if (!answered) {
            input_lines.push_back(line);
        }
    }
    if (!answered) {
        throw ValidationError("template example without an 'answer:' line");
    }
    ex.input = text::normalize_lines(text::join(input_lines, "\n"));
    return ex;
}

Json example_to_json(const ShotExample& ex) {
    Json j = {{"input", ex.input}, {"answer", ex.answer}};
    j["rationale"] = ex.rationale ? Json(*ex.rationale) : Json(nullptr);
    return j;
}

ShotExample example_from_json(const Json& j) {
    ShotExample ex;
    ex.input = j.at("input").get<std::string>();
    ex.answer = j.at("answer").get<LabelMap>();
    if (j.contains("rationale") && j["rationale"].is_string()) {
        ex.rationale = j["rationale"].get<std::string>();
    }
    return ex;
}

} // namespace

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    return parse(fs::read_file(path), path.parent_path());
}

PromptTemplate PromptTemplate::parse(std::string_view raw, const std::filesystem::path& base_dir) {
    const auto normalized = text::normalize_lines(raw);
    const auto lines = text::split(normalized, '\n');
    std::size_t i = 0;
    while (i < lines.size() && text::trim(lines[i]).empty()) {
        ++i;
    }
    if (i >= lines.size() || text::trim(lines[i]) != "---") {
        throw ValidationError("template: missing '---' front matter");
    }
    ++i;
    std::map<std::string, std::string> front;
    for (; i < lines.size() && text::trim(lines[i]) != "---"; ++i) {
        const auto& line = lines[i];
        if (text::trim(line).empty() || text::starts_with(text::trim(line), "#")) {
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw ValidationError("template front matter: expected 'key: value', got '" + line + "'");
        }
        front[std::string(text::trim(line.substr(0, colon)))] = std::string(text::trim(line.substr(colon + 1)));
    }
    if (i >= lines.size()) {
        throw ValidationError("template: unterminated front matter");
    }
    ++i;

    std::map<std::string, std::string> sections;
    std::vector<std::string> example_sections;
    std::string current;
    std::vector<std::string> buffer;
    auto flush = [&] {
        if (current.empty()) {
            return;
        }
        auto body = text::join(buffer, "\n");
        // drop leading blank lines inside a section
        const auto first = body.find_first_not_of('\n');
        body = first == std::string::npos ? std::string{} : body.substr(first);
        if (current == "example") {
            example_sections.push_back(body);
        } else {
            if (sections.count(current) != 0) {
                throw ValidationError("template: duplicate section '## " + current + "'");
            }
            sections[current] = body;
        }
        buffer.clear();
    };
    for (; i < lines.size(); ++i) {
        if (text::starts_with(lines[i], "## ")) {
            flush();
            current = text::to_lower(text::trim(lines[i].substr(3)));
            static const std::set<std::string> kKnown = {"task", "context", "output_format", "example", "body"};
            if (kKnown.count(current) == 0) {
                throw ValidationError("template: unknown section '## " + current + "'");
            }
        } else if (!current.empty()) {
            buffer.push_back(lines[i]);
        } else if (!text::trim(lines[i]).empty()) {
            throw ValidationError("template: text outside a section: '" + lines[i] + "'");
        }
    }
    flush();

    const auto schema_ref = front.count("schema") != 0 ? front["schema"] : std::string{};
    if (schema_ref.empty()) {
        throw ValidationError("template front matter: 'schema' is required");
    }
    auto schema_path = std::filesystem::path(schema_ref);
    if (schema_path.is_relative()) {
        schema_path = base_dir / schema_path;
    }

    Strategy strategy;
    if (front.count("shots") != 0) {
        try {
            strategy.shots = std::stoi(front["shots"]);
        } catch (const std::exception&) {
            throw ValidationError("template front matter: 'shots' must be an integer");
        }
    }
    if (front.count("chain_of_thought") != 0) {
        strategy.chain_of_thought = parse_bool("chain_of_thought", front["chain_of_thought"]);
    }
    if (front.count("structured_output") != 0) {
        strategy.structured_output = parse_bool("structured_output", front["structured_output"]);
    }
    for (const auto& ex : example_sections) {
        strategy.examples.push_back(parse_example(ex));
    }

    std::vector<std::string> fields;
    if (front.count("fields") != 0) {
        for (const auto& f : text::split(front["fields"], ',')) {
            const auto name = std::string(text::trim(f));
            if (!name.empty()) {
                fields.push_back(name);
            }
        }
    }

    return PromptTemplate{front.count("name") != 0 ? front["name"] : std::string{},
                          sections["task"],
                          sections["context"],
                          sections["output_format"],
                          LabelSchema::load(schema_path),
                          std::move(fields),
                          std::move(strategy),
                          sections["body"]};
}

Json PromptTemplate::to_json() const {
    Json examples = Json::array();
    for (const auto& ex : strategy.examples) {
        examples.push_back(example_to_json(ex));
    }
    return {{"name", name},
            {"task_description", task_description},
            {"context", context},
            {"output_format_spec", output_format_spec},
            {"schema", schema.to_json()},
            {"input_fields", input_fields},
            {"strategy",
             {{"shots", strategy.shots},
              {"examples", examples},
              {"chain_of_thought", strategy.chain_of_thought},
              {"structured_output", strategy.structured_output}}},
            {"body", body}};
}

PromptTemplate PromptTemplate::from_json(const Json& j) {
    Strategy strategy;
    const auto& s = j.at("strategy");
    strategy.shots = s.at("shots").get<int>();
    for (const auto& ex : s.at("examples")) {
        strategy.examples.push_back(example_from_json(ex));
    }
    strategy.chain_of_thought = s.at("chain_of_thought").get<bool>();
    strategy.structured_output = s.at("structured_output").get<bool>();
    return PromptTemplate{j.at("name").get<std::string>(),
                          j.at("task_description").get<std::string>(),
                          j.at("context").get<std::string>(),
                          j.at("output_format_spec").get<std::string>(),
                          LabelSchema::from_json(j.at("schema")),
                          j.at("input_fields").get<std::vector<std::string>>(),
                          std::move(strategy),
                          j.at("body").get<std::string>()};
}

std::vector<std::string> placeholders(std::string_view body, bool* malformed) {
    std::vector<std::string> names;
    if (malformed != nullptr) {
        *malformed = false;
    }
    std::size_t pos = 0;
    while ((pos = body.find("{{", pos)) != std::string_view::npos) {
        const auto close = body.find("}}", pos + 2);
        if (close == std::string_view::npos) {
            if (malformed != nullptr) {
                *malformed = true;
            }
            break;
        }
        names.emplace_back(text::trim(body.substr(pos + 2, close - pos - 2)));
        pos = close + 2;
    }
    return names;
}

std::vector<LintFinding> lint_template(const PromptTemplate& tmpl) {
    std::vector<LintFinding> findings;
    auto error = [&](std::string code, std::string message) {
        findings.push_back({Severity::error, std::move(code), std::move(message)});
    };

    if (text::trim(tmpl.task_description).empty()) {
        error("missing-task-description", "task description is empty");
    }
    if (text::trim(tmpl.output_format_spec).empty()) {
        error("missing-output-format", "output format specification is empty");
    }
    const auto& strat = tmpl.strategy;
    if (strat.shots < 0 || static_cast<std::size_t>(strat.shots) != strat.examples.size()) {
        error("example-count-mismatch", "example count mismatch: shots=" + std::to_string(strat.shots) +
                                            " but " + std::to_string(strat.examples.size()) + " example(s) attached");
    }
    for (std::size_t k = 0; k < strat.examples.size(); ++k) {
        for (const auto& [task, category] : strat.examples[k].answer) {
            if (!tmpl.schema.is_legal(task, category)) {
                error("example-label-invalid", "example " + std::to_string(k + 1) + " labels task '" + task +
                                                   "' with '" + category + "', which the schema does not allow");
            }
        }
    }

    bool malformed = false;
    std::set<std::string> reported;
    for (const auto& name : placeholders(tmpl.body, &malformed)) {
        const bool builtin = name == kBuiltinSchema || name == kBuiltinExamples;
        const bool known =
            std::find(tmpl.input_fields.begin(), tmpl.input_fields.end(), name) != tmpl.input_fields.end();
        if (!builtin && !known && reported.insert(name).second) {
            error("unresolved-placeholder", "placeholder {{" + name + "}} names no declared input field: " + name);
        }
    }
    if (malformed) {
        error("malformed-placeholder", "unterminated '{{' in body");
    }
    if (strat.chain_of_thought && strat.structured_output) {
        findings.push_back({Severity::warning, "cot-with-bare-answer",
                            "chain-of-thought is on while the answer must be a bare structured object; reasoning "
                            "will be requested before the delimited answer block"});
    }
    return findings;
}

bool has_errors(const std::vector<LintFinding>& findings) {
    return std::any_of(findings.begin(), findings.end(), [](const auto& f) { return f.severity == Severity::error; });
}

PromptTemplate canonicalize(const PromptTemplate& tmpl) {
    PromptTemplate out = tmpl;
    out.name = std::string(text::trim(tmpl.name));
    out.task_description = text::normalize_lines(tmpl.task_description);
    out.context = text::normalize_lines(tmpl.context);
    out.output_format_spec = text::normalize_lines(tmpl.output_format_spec);
    out.body = text::normalize_lines(tmpl.body);
    for (auto& ex : out.strategy.examples) {
        ex.input = text::normalize_lines(ex.input);
        if (ex.rationale) {
            ex.rationale = text::normalize_lines(*ex.rationale);
        }
    }
    return out;
}

std::string canonical_text(const PromptTemplate& tmpl) {
    return canonicalize(tmpl).to_json().dump();
}

std::string template_digest(const PromptTemplate& tmpl) {
    return sha256_hex("prompt-template/1\n" + canonical_text(tmpl));
}

Json PromptVersion::to_json() const {
    Json j = {{"version_id", version_id}, {"changelog", changelog}, {"created_at", created_at},
              {"template", content.to_json()}};
    j["parent_version"] = parent_version ? Json(*parent_version) : Json(nullptr);
    return j;
}

PromptVersion PromptVersion::from_json(const Json& j) {
    std::optional<std::string> parent;
    if (j.contains("parent_version") && j["parent_version"].is_string()) {
        parent = j["parent_version"].get<std::string>();
    }
    return PromptVersion{j.at("version_id").get<std::string>(), parent, j.value("changelog", std::string{}),
                         j.value("created_at", std::string{}), PromptTemplate::from_json(j.at("template"))};
}

std::string render_schema_section(const LabelSchema& schema) {
    std::string out = "Label schema:";
    for (const auto& task : schema.tasks()) {
        out += "\n- " + task.name + ": " + text::join(task.categories, " | ");
    }
    return out;
}

namespace {

std::string render_examples(const PromptTemplate& tmpl) {
    std::string out = "Examples:";
    for (std::size_t k = 0; k < tmpl.strategy.examples.size(); ++k) {
        const auto& ex = tmpl.strategy.examples[k];
        out += "\nExample " + std::to_string(k + 1) + ":\nInput:\n" + ex.input + "\n";
        if (ex.rationale && tmpl.strategy.chain_of_thought) {
            out += "Reasoning: " + *ex.rationale + "\n";
        }
        out += "Answer:\n";
        out += kAnswerOpen;
        if (tmpl.strategy.structured_output) {
            Json answer(ex.answer);
            if (ex.rationale) {
                answer["rationale"] = *ex.rationale;
            }
            out += answer.dump();
        } else {
            std::vector<std::string> lines;
            for (const auto& [task, cat] : ex.answer) {
                lines.push_back(task + ": " + cat);
            }
            out += "\n" + text::join(lines, "\n") + "\n";
        }
        out += kAnswerClose;
    }
    return out;
}

std::string render_answer_instructions(const PromptTemplate& tmpl) {
    std::vector<std::string> task_names;
    for (const auto& t : tmpl.schema.tasks()) {
        task_names.push_back(t.name);
    }
    std::string out;
    if (tmpl.strategy.chain_of_thought) {
        out += "Think through the classification step by step before answering. Write your reasoning first, "
               "then give the final answer after it.\n";
    }
    if (tmpl.strategy.structured_output) {
        out += "The final answer must be a single JSON object whose keys are the task names (" +
               text::join(task_names, ", ") +
               ") and whose values are exactly one category from the label schema. You may add a \"rationale\" "
               "key with a short justification that quotes the input. Wrap the JSON object in ";
    } else {
        out += "The final answer must list one line per task in the form 'task: category' using categories from "
               "the label schema. Wrap the answer in ";
    }
    out += std::string(kAnswerOpen) + " and " + std::string(kAnswerClose) + ".";
    return out;
}

} // namespace

RenderedPrompt compose_prompt(const PromptVersion& version, const DataItem& item) {
    const auto& tmpl = version.content;
    const auto schema_text = render_schema_section(tmpl.schema);
    const bool with_examples = tmpl.strategy.shots >= 1 && !tmpl.strategy.examples.empty();
    const auto examples_text = with_examples ? render_examples(tmpl) : std::string{};

    bool body_has_schema = false;
    bool body_has_examples = false;
    std::string body;
    std::size_t pos = 0;
    const std::string_view src = tmpl.body;
    while (true) {
        const auto open = src.find("{{", pos);
        if (open == std::string_view::npos) {
            body.append(src.substr(pos));
            break;
        }
        const auto close = src.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw ValidationError("prompt " + version.version_id + ": unterminated placeholder");
        }
        body.append(src.substr(pos, open - pos));
        const auto name = std::string(text::trim(src.substr(open + 2, close - open - 2)));
        if (name == kBuiltinSchema) {
            body += schema_text;
            body_has_schema = true;
        } else if (name == kBuiltinExamples) {
            body += examples_text;
            body_has_examples = true;
        } else if (const auto* value = item.field(name)) {
            body += *value;
        } else {
            throw ValidationError("placeholder {{" + name + "}} has no field in item " + item.id());
        }
        pos = close + 2;
    }

    std::string out = tmpl.task_description;
    if (!tmpl.context.empty()) {
        out += "\n\nContext:\n" + tmpl.context;
    }
    if (!body.empty()) {
        out += "\n\n" + body;
    }
    out += "\n\nOutput format:\n" + tmpl.output_format_spec;
    if (!body_has_schema) {
        out += "\n\n" + schema_text;
    }
    if (with_examples && !body_has_examples) {
        out += "\n\n" + examples_text;
    }
    out += "\n\n" + render_answer_instructions(tmpl) + "\n";
    return RenderedPrompt{std::move(out), version.version_id, item.id()};
}

PromptVersion make_version(const PromptTemplate& tmpl, std::optional<std::string> parent, std::string changelog) {
    const auto findings = lint_template(tmpl);
    if (has_errors(findings)) {
        std::string msg = "prompt template '" + tmpl.name + "' has lint errors:";
        for (const auto& f : findings) {
            if (f.severity == Severity::error) {
                msg += "\n  " + f.code + ": " + f.message;
            }
        }
        throw ValidationError(msg);
    }
    auto canon = canonicalize(tmpl);
    return PromptVersion{template_digest(canon), std::move(parent), std::move(changelog), now_iso8601(),
                         std::move(canon)};
}

PromptLedger::PromptLedger(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) {
        return;
    }
    std::istringstream in(fs::read_file(path_));
    std::string line;
    while (std::getline(in, line)) {
        if (!text::trim(line).empty()) {
            versions_.push_back(PromptVersion::from_json(Json::parse(line)));
        }
    }
}

PromptVersion PromptLedger::register_version(const PromptTemplate& tmpl, std::optional<std::string> parent,
                                             std::string changelog) {
    auto version = make_version(tmpl, parent, std::move(changelog));
    std::lock_guard lock(mutex_);
    for (const auto& v : versions_) {
        if (v.version_id == version.version_id) {
            return v;
        }
    }
    if (parent) {
        const bool known = std::any_of(versions_.begin(), versions_.end(),
                                       [&](const auto& v) { return v.version_id == *parent; });
        if (!known) {
            throw ValidationError("unknown parent prompt version " + *parent);
        }
    }
    fs::append_line(path_, version.to_json().dump());
    versions_.push_back(version);
    return version;
}

std::optional<PromptVersion> PromptLedger::find(const std::string& version_id) const {
    std::lock_guard lock(mutex_);
    for (const auto& v : versions_) {
        if (v.version_id == version_id) {
            return v;
        }
    }
    return std::nullopt;
}

std::vector<PromptVersion> PromptLedger::versions() const {
    std::lock_guard lock(mutex_);
    return versions_;
}

} // namespace primes::prompt
