#include "primes/llm_client.hpp"

#include "primes/digest.hpp"
#include "primes/log.hpp"
#include "primes/provenance.hpp"
#include "primes/text.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <thread>

namespace primes::llm {

ProviderKind parse_provider_kind(const std::string& text) {
    if (text == "openai-compatible-http" || text == "openai") {
        return ProviderKind::openai_compatible;
    }
    if (text == "anthropic-compatible-http" || text == "anthropic") {
        return ProviderKind::anthropic_compatible;
    }
    if (text == "mock") {
        return ProviderKind::mock;
    }
    throw ConfigError("unknown provider kind '" + text + "'");
}

std::string to_string(ProviderKind kind) {
    switch (kind) {
    case ProviderKind::openai_compatible:
        return "openai-compatible-http";
    case ProviderKind::anthropic_compatible:
        return "anthropic-compatible-http";
    case ProviderKind::mock:
        return "mock";
    }
    return "?";
}

Json ModelParams::to_json() const {
    Json j = {{"temperature", temperature}, {"max_output_tokens", max_output_tokens}};
    j["seed"] = seed ? Json(*seed) : Json(nullptr);
    return j;
}

namespace {

Money price_from_json(const Json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) {
        return Money{};
    }
    const auto& v = j[key];
    if (v.is_string()) {
        return Money::parse(v.get<std::string>());
    }
    if (v.is_number()) {
        // JSON numbers are binary floats; snap to the six-decimal price grid
        const auto micro = std::llround(v.get<double>() * 1e6);
        return Money::from_units(static_cast<int128_t>(micro) * 1000000);
    }
    throw ConfigError(std::string("model spec: '") + key + "' must be a decimal string or number");
}

} // namespace

void ModelSpec::check() const {
    if (model_id.empty()) {
        throw ConfigError("model spec: model_id is required");
    }
    for (const auto* price : {&price_in_per_million, &price_out_per_million}) {
        if (*price < Money{}) {
            throw ConfigError("model spec " + model_id + ": prices must be >= 0");
        }
        if (price->fractional_digits() > 6) {
            throw ConfigError("model spec " + model_id + ": prices allow at most six decimals");
        }
    }
    if (!(params.temperature >= 0.0 && params.temperature <= 2.0)) {
        throw ConfigError("model spec " + model_id + ": temperature must be within [0, 2]");
    }
    if (params.max_output_tokens < 1) {
        throw ConfigError("model spec " + model_id + ": max_output_tokens must be >= 1");
    }
    if (provider != ProviderKind::mock && endpoint.empty()) {
        throw ConfigError("model spec " + model_id + ": endpoint is required for HTTP providers");
    }
}

Json ModelSpec::to_json() const {
    Json j = {{"model_id", model_id},
              {"provider", to_string(provider)},
              {"endpoint", endpoint},
              {"credential_env", credential_env},
              {"provider_model", provider_model.empty() ? model_id : provider_model},
              {"price_in_per_million", price_in_per_million.to_string()},
              {"price_out_per_million", price_out_per_million.to_string()},
              {"params", params.to_json()},
              {"mock", mock}};
    j["context_limit"] = context_limit ? Json(*context_limit) : Json(nullptr);
    return j;
}

ModelSpec ModelSpec::from_json(const Json& j) {
    try {
        ModelSpec m;
        m.model_id = j.at("model_id").get<std::string>();
        m.provider = parse_provider_kind(j.value("provider", std::string("mock")));
        m.endpoint = j.value("endpoint", std::string{});
        m.credential_env = j.value("credential_env", std::string{});
        m.provider_model = j.value("provider_model", std::string{});
        m.price_in_per_million = price_from_json(j, "price_in_per_million");
        m.price_out_per_million = price_from_json(j, "price_out_per_million");
        if (j.contains("params")) {
            const auto& p = j["params"];
            m.params.temperature = p.value("temperature", kDefaultTemperature);
            m.params.max_output_tokens = p.value("max_output_tokens", kDefaultMaxOutputTokens);
            if (p.contains("seed") && !p["seed"].is_null()) {
                m.params.seed = p["seed"].get<std::int64_t>();
            }
        }
        if (j.contains("context_limit") && !j["context_limit"].is_null()) {
            m.context_limit = j["context_limit"].get<std::int64_t>();
        }
        if (j.contains("mock")) {
            m.mock = j["mock"];
        }
        m.check();
        return m;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("model spec: ") + e.what());
    }
}

Json ModelResponse::to_json() const {
    return {{"text", text},
            {"input_tokens", input_tokens},
            {"output_tokens", output_tokens},
            {"latency_ms", latency_ms},
            {"finish_reason", finish_reason}};
}

ModelResponse ModelResponse::from_json(const Json& j) {
    return ModelResponse{j.at("text").get<std::string>(), j.at("input_tokens").get<std::int64_t>(),
                         j.at("output_tokens").get<std::int64_t>(), j.at("latency_ms").get<std::int64_t>(),
                         j.at("finish_reason").get<std::string>()};
}

Money call_cost(const ModelResponse& response, const ModelSpec& model) {
    // prices carry at most six decimals, so units / 1e6 is an exact division
    const int128_t in = static_cast<int128_t>(response.input_tokens) * model.price_in_per_million.units() / 1000000;
    const int128_t out = static_cast<int128_t>(response.output_tokens) * model.price_out_per_million.units() / 1000000;
    return Money::from_units(in + out);
}

// ---------------------------------------------------------------------------

HttplibTransport::HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

HttpResponse HttplibTransport::post(const HttpRequest& request) {
    const auto scheme_end = request.url.find("://");
    if (scheme_end == std::string::npos) {
        return {0, {}, "malformed url: " + request.url};
    }
    const auto path_start = request.url.find('/', scheme_end + 3);
    const auto base = request.url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : request.url.substr(path_start);

    httplib::Client client(base);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "Content-Type") {
            content_type = v;
        } else {
            headers.emplace(k, v);
        }
    }
    auto res = client.Post(path, headers, request.body, content_type);
    if (!res) {
        return {0, {}, httplib::to_string(res.error())};
    }
    return {res->status, res->body, {}};
}

HttpRequest build_request(const ModelSpec& model, const std::string& prompt_text, const std::string& api_key) {
    const auto wire_model = model.provider_model.empty() ? model.model_id : model.provider_model;
    Json messages = Json::array({{{"role", "user"}, {"content", prompt_text}}});
    HttpRequest req;
    req.url = model.endpoint;
    req.headers.emplace_back("Content-Type", "application/json");
    Json body;
    switch (model.provider) {
    case ProviderKind::openai_compatible:
        body = {{"model", wire_model},
                {"messages", messages},
                {"temperature", model.params.temperature},
                {"max_tokens", model.params.max_output_tokens}};
        if (model.params.seed) {
            body["seed"] = *model.params.seed;
        }
        req.headers.emplace_back("Authorization", "Bearer " + api_key);
        break;
    case ProviderKind::anthropic_compatible:
        body = {{"model", wire_model},
                {"messages", messages},
                {"temperature", model.params.temperature},
                {"max_tokens", model.params.max_output_tokens}};
        req.headers.emplace_back("x-api-key", api_key);
        req.headers.emplace_back("anthropic-version", "2023-06-01");
        break;
    case ProviderKind::mock:
        throw ConfigError("mock models have no wire format");
    }
    req.body = body.dump();
    return req;
}

ModelResponse parse_response(const ModelSpec& model, const std::string& body) {
    const auto j = Json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ProviderError(200, "provider returned a non-JSON body");
    }
    ModelResponse out;
    try {
        if (model.provider == ProviderKind::openai_compatible) {
            const auto& choice = j.at("choices").at(0);
            const auto& content = choice.at("message").at("content");
            out.text = content.is_string() ? content.get<std::string>() : std::string{};
            out.finish_reason = choice.value("finish_reason", std::string("unknown"));
            if (j.contains("usage")) {
                out.input_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
                out.output_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
            }
        } else {
            for (const auto& block : j.at("content")) {
                if (block.value("type", std::string{}) == "text") {
                    out.text += block.at("text").get<std::string>();
                }
            }
            out.finish_reason = j.value("stop_reason", std::string("unknown"));
            if (j.contains("usage")) {
                out.input_tokens = j["usage"].value("input_tokens", std::int64_t{0});
                out.output_tokens = j["usage"].value("output_tokens", std::int64_t{0});
            }
        }
    } catch (const Json::exception& e) {
        throw ProviderError(200, std::string("unexpected provider response shape: ") + e.what());
    }
    if (!j.contains("usage")) {
        log::warn("provider response for " + model.model_id + " has no usage object; tokens recorded as 0");
    }
    return out;
}

// ---------------------------------------------------------------------------

Json RetryPolicy::to_json() const {
    return {{"max_attempts", max_attempts},
            {"base_delay_ms", base_delay.count()},
            {"factor", factor},
            {"jitter", full_jitter ? "full" : "none"}};
}

RetryPolicy RetryPolicy::from_json(const Json& j) {
    RetryPolicy p;
    p.max_attempts = j.value("max_attempts", p.max_attempts);
    p.base_delay = std::chrono::milliseconds(j.value("base_delay_ms", static_cast<std::int64_t>(p.base_delay.count())));
    p.factor = j.value("factor", p.factor);
    p.full_jitter = j.value("jitter", std::string("full")) == "full";
    if (p.max_attempts < 1 || p.factor < 1.0 || p.base_delay.count() < 0) {
        throw ConfigError("retry policy: max_attempts >= 1, factor >= 1, base_delay_ms >= 0 required");
    }
    return p;
}

bool is_retryable_status(int status) {
    return status == 0 || status == 408 || status == 429 || (status >= 500 && status <= 599);
}

std::shared_ptr<ProviderThrottle> ProviderThrottle::for_provider(const std::string& key) {
    static std::mutex registry_mutex;
    static std::map<std::string, std::weak_ptr<ProviderThrottle>> registry;
    std::lock_guard lock(registry_mutex);
    auto& slot = registry[key];
    if (auto existing = slot.lock()) {
        return existing;
    }
    auto created = std::make_shared<ProviderThrottle>();
    slot = created;
    return created;
}

std::chrono::milliseconds ProviderThrottle::pending_delay() const {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    if (not_before_ <= now) {
        return std::chrono::milliseconds(0);
    }
    return std::chrono::duration_cast<std::chrono::milliseconds>(not_before_ - now);
}

void ProviderThrottle::push_back(std::chrono::milliseconds delay) {
    std::lock_guard lock(mutex_);
    const auto candidate = std::chrono::steady_clock::now() + delay;
    if (candidate > not_before_) {
        not_before_ = candidate;
    }
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key_for(const ModelSpec& model, const std::string& prompt_text) {
    const Json doc = {{"model_id", model.model_id}, {"params", model.params.to_json()}, {"prompt", prompt_text}};
    return sha256_hex(doc.dump());
}

std::filesystem::path ResponseCache::entry_path(const std::string& key) const {
    return dir_ / (key + ".json");
}

std::optional<ModelResponse> ResponseCache::get(const std::string& key) const {
    const auto path = entry_path(key);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) {
        return std::nullopt;
    }
    try {
        const auto j = Json::parse(fs::read_file(path));
        if (j.at("key").get<std::string>() != key) {
            throw ValidationError("key mismatch");
        }
        return ModelResponse::from_json(j.at("response"));
    } catch (const std::exception& e) {
        log::warn("cache entry " + path.string() + " is corrupt (" + e.what() + "); discarding and refetching");
        std::filesystem::remove(path, ec);
        return std::nullopt;
    }
}

void ResponseCache::put(const std::string& key, const ModelResponse& response) const {
    const Json j = {{"key", key}, {"response", response.to_json()}};
    fs::write_file_atomic(entry_path(key), j.dump() + "\n");
}

void ResponseCache::clear() const {
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
        if (entry.path().extension() == ".json") {
            std::filesystem::remove(entry.path(), ec);
        }
    }
}

std::string ResponseCache::digest_of(std::vector<std::string> keys) const {
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::string acc;
    for (const auto& k : keys) {
        std::error_code ec;
        const auto path = entry_path(k);
        acc += k;
        acc += ' ';
        acc += std::filesystem::exists(path, ec) ? sha256_hex(fs::read_file(path)) : std::string("missing");
        acc += '\n';
    }
    return sha256_hex(acc);
}

// ---------------------------------------------------------------------------

namespace {

std::string answer_text(const Json& labels, const Json& rationale, const std::string& preamble,
                        std::string_view excerpt = {}) {
    Json answer = labels.is_object() ? labels : Json::object();
    if (rationale.is_string()) {
        auto r = rationale.get<std::string>();
        const std::string marker = "{{match}}";
        if (const auto pos = r.find(marker); pos != std::string::npos) {
            r.replace(pos, marker.size(), text::trim(excerpt));
        }
        answer["rationale"] = r;
    }
    std::string out = preamble;
    if (!out.empty()) {
        out += "\n";
    }
    out += std::string(prompt::kAnswerOpen) + answer.dump() + std::string(prompt::kAnswerClose);
    return out;
}

std::string_view scope_excerpt(const Json& config, const std::string& text) {
    std::string_view view = text;
    const auto start = config.value("scope_start", std::string{});
    const auto end = config.value("scope_end", std::string{});
    if (!start.empty()) {
        const auto pos = view.find(start);
        if (pos != std::string_view::npos) {
            view.remove_prefix(pos + start.size());
        }
    }
    if (!end.empty()) {
        const auto pos = view.find(end);
        if (pos != std::string_view::npos) {
            view = view.substr(0, pos);
        }
    }
    return view;
}

} // namespace

std::string mock_respond(const Json& config, const prompt::RenderedPrompt& prompt) {
    const auto mode = config.value("mode", std::string("echo"));
    const auto preamble = config.value("preamble", std::string{});
    if (mode == "echo") {
        return prompt.text;
    }
    if (mode == "fixed") {
        return config.value("text", std::string{});
    }
    if (mode == "rules") {
        const auto excerpt = scope_excerpt(config, prompt.text);
        const auto haystack = text::to_lower(excerpt);
        for (const auto& rule : config.value("rules", Json::array())) {
            const auto needle = text::to_lower(rule.value("contains", std::string{}));
            if (!needle.empty() && haystack.find(needle) != std::string::npos) {
                if (rule.contains("text")) {
                    return rule["text"].get<std::string>();
                }
                return answer_text(rule.value("answer", Json::object()), rule.value("rationale", Json()), preamble,
                                   excerpt);
            }
        }
        const auto fallback = config.value("default", Json::object());
        if (fallback.contains("text")) {
            return fallback["text"].get<std::string>();
        }
        return answer_text(fallback.value("answer", Json::object()), fallback.value("rationale", Json()), preamble,
                           excerpt);
    }
    if (mode == "hash") {
        const auto schema = LabelSchema::from_json(config.at("schema"));
        Json labels = Json::object();
        for (const auto& task : schema.tasks()) {
            const auto digest = sha256_hex(prompt.text + '\x1f' + task.name);
            const auto pick = std::stoull(digest.substr(0, 12), nullptr, 16) % task.categories.size();
            labels[task.name] = task.categories[pick];
        }
        return answer_text(labels, config.value("rationale", Json()), preamble);
    }
    throw ConfigError("unknown mock mode '" + mode + "'");
}

LlmClient::LlmClient(ModelSpec model, ClientOptions options)
    : model_(std::move(model)), options_(std::move(options)), jitter_rng_(options_.jitter_seed) {
    model_.check();
    if (!options_.sleeper) {
        options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    if (model_.provider != ProviderKind::mock && !options_.transport) {
        options_.transport = std::make_shared<HttplibTransport>();
    }
    if (options_.retry.max_attempts < 1) {
        throw ConfigError("retry policy needs at least one attempt");
    }
    throttle_ = ProviderThrottle::for_provider(model_.provider == ProviderKind::mock ? "mock:" + model_.model_id
                                                                                     : model_.endpoint);
}

std::int64_t LlmClient::estimate_tokens(const std::string& text) {
    const auto words = static_cast<std::int64_t>(text::word_count(text));
    const auto by_bytes = static_cast<std::int64_t>((text.size() + 3) / 4);
    return std::max(words, by_bytes);
}

std::vector<AttemptLog> LlmClient::attempt_log() const {
    std::lock_guard lock(mutex_);
    return attempts_;
}

std::vector<std::string> LlmClient::cache_keys_used() const {
    std::lock_guard lock(mutex_);
    return cache_keys_;
}

ModelResponse LlmClient::send_with_retries(const prompt::RenderedPrompt& prompt) {
    if (model_.provider == ProviderKind::mock) {
        ModelResponse r;
        r.text = options_.mock_responder ? options_.mock_responder(prompt) : mock_respond(model_.mock, prompt);
        r.input_tokens = static_cast<std::int64_t>(text::word_count(prompt.text));
        r.output_tokens = static_cast<std::int64_t>(text::word_count(r.text));
        r.latency_ms = 0;
        r.finish_reason = r.text.empty() ? "empty" : "stop";
        ++network_calls_;
        std::lock_guard lock(mutex_);
        attempts_.push_back({1, 200, {}});
        return r;
    }

    const char* key = model_.credential_env.empty() ? nullptr : std::getenv(model_.credential_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw AuthError("credential environment variable '" + model_.credential_env + "' for model " +
                        model_.model_id + " is not set");
    }
    const auto request = build_request(model_, prompt.text, key);

    int last_status = 0;
    std::string last_error;
    for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
        if (const auto wait = throttle_->pending_delay(); wait.count() > 0) {
            options_.sleeper(wait);
        }
        const auto t0 = std::chrono::steady_clock::now();
        const auto res = options_.transport->post(request);
        const auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
        ++network_calls_;
        {
            std::lock_guard lock(mutex_);
            attempts_.push_back({attempt, res.status, res.error});
        }
        if (res.status >= 200 && res.status < 300) {
            auto out = parse_response(model_, res.body);
            out.latency_ms = elapsed;
            if (out.text.empty() && (out.finish_reason == "stop" || out.finish_reason == "end_turn")) {
                out.finish_reason = "empty";
            }
            return out;
        }
        last_status = res.status;
        last_error = res.error.empty() ? res.body.substr(0, 200) : res.error;
        if (res.status == 401 || res.status == 403) {
            throw AuthError("provider rejected credentials for " + model_.model_id + " (HTTP " +
                            std::to_string(res.status) + ")");
        }
        if (!is_retryable_status(res.status)) {
            throw ProviderError(res.status, "provider error for " + model_.model_id + " (HTTP " +
                                                std::to_string(res.status) + "): " + last_error);
        }
        if (attempt == options_.retry.max_attempts) {
            break;
        }
        const double cap = static_cast<double>(options_.retry.base_delay.count()) *
                           std::pow(options_.retry.factor, static_cast<double>(attempt - 1));
        std::chrono::milliseconds delay(static_cast<std::int64_t>(cap));
        if (options_.retry.full_jitter) {
            std::uniform_real_distribution<double> dist(0.0, cap);
            std::lock_guard lock(mutex_);
            delay = std::chrono::milliseconds(static_cast<std::int64_t>(dist(jitter_rng_)));
        }
        if (res.status == 429) {
            throttle_->push_back(delay);
        }
        log::warn("attempt " + std::to_string(attempt) + " for " + model_.model_id + " failed (status " +
                  std::to_string(res.status) + "); retrying in " + std::to_string(delay.count()) + " ms");
        options_.sleeper(delay);
    }
    throw RetryExhaustedError(last_status, options_.retry.max_attempts,
                              "retries exhausted for " + model_.model_id + " after " +
                                  std::to_string(options_.retry.max_attempts) + " attempts; last status " +
                                  std::to_string(last_status) + (last_error.empty() ? "" : ": " + last_error));
}

void LlmClient::record(const prompt::RenderedPrompt& prompt, const ModelResponse& response) {
    if (options_.ledger == nullptr) {
        return;
    }
    ProvenanceRecord rec;
    rec.run_id = options_.run_id;
    rec.model_id = model_.model_id;
    rec.prompt_version_id = prompt.version_id;
    rec.item_id = prompt.item_id;
    rec.request_digest =
        provenance::request_digest(model_.model_id, model_.params.to_json(), prompt.version_id, prompt.item_id, prompt.text);
    rec.raw_response = response.text;
    rec.token_usage = {response.input_tokens, response.output_tokens};
    rec.latency_ms = response.latency_ms;
    rec.finish_reason = response.finish_reason;
    rec.created_at = now_iso8601();
    options_.ledger->record(rec);
}

ModelResponse LlmClient::complete(const prompt::RenderedPrompt& prompt) {
    if (model_.context_limit && estimate_tokens(prompt.text) > *model_.context_limit) {
        throw ContextLengthError("prompt for item " + prompt.item_id + " (~" +
                                 std::to_string(estimate_tokens(prompt.text)) + " tokens) exceeds the context limit of " +
                                 std::to_string(*model_.context_limit) + " for " + model_.model_id);
    }
    auto response = send_with_retries(prompt);
    record(prompt, response);
    return response;
}

ModelResponse LlmClient::cached_complete(const prompt::RenderedPrompt& prompt) {
    if (options_.cache == nullptr) {
        return complete(prompt);
    }
    const auto key = ResponseCache::key_for(model_, prompt.text);
    {
        std::lock_guard lock(mutex_);
        cache_keys_.push_back(key);
    }
    if (auto hit = options_.cache->get(key)) {
        record(prompt, *hit);
        return *hit;
    }
    if (model_.context_limit && estimate_tokens(prompt.text) > *model_.context_limit) {
        throw ContextLengthError("prompt for item " + prompt.item_id + " exceeds the context limit of " +
                                 std::to_string(*model_.context_limit) + " for " + model_.model_id);
    }
    auto response = send_with_retries(prompt);
    options_.cache->put(key, response);
    record(prompt, response);
    return response;
}

} // namespace primes::llm
