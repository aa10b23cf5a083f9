#pragma once

#include "primes/core.hpp"
#include "primes/error.hpp"
#include "primes/money.hpp"
#include "primes/prompt.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace primes::provenance {
class ProvenanceLedger;
}

namespace primes::llm {

enum class ProviderKind { openai_compatible, anthropic_compatible, mock };
ProviderKind parse_provider_kind(const std::string& text);
std::string to_string(ProviderKind kind);

/// Default sampling parameters for mining runs.
inline constexpr double kDefaultTemperature = 0.0;
inline constexpr int kDefaultMaxOutputTokens = 1024;

struct ModelParams {
    double temperature = kDefaultTemperature;
    int max_output_tokens = kDefaultMaxOutputTokens;
    std::optional<std::int64_t> seed;

    Json to_json() const;
    bool operator==(const ModelParams&) const = default;
};

struct ModelSpec {
    std::string model_id;
    ProviderKind provider = ProviderKind::mock;
    std::string endpoint;
    /// Name of the environment variable holding the API key. The key itself is
    /// never stored or serialised.
    std::string credential_env;
    /// Model name sent on the wire; defaults to model_id.
    std::string provider_model;
    Money price_in_per_million;
    Money price_out_per_million;
    ModelParams params;
    /// Advertised context window in tokens; prompts estimated above it fail
    /// before any network call.
    std::optional<std::int64_t> context_limit;
    /// Mock behaviour: {"mode": "echo" | "fixed" | "rules" | "hash", ...}.
    Json mock = Json::object();

    /// Throws ConfigError on negative prices, more than six price decimals,
    /// temperature outside [0, 2] or an empty model id.
    void check() const;

    /// Everything but the credential variable's value (which is never read here).
    Json to_json() const;
    static ModelSpec from_json(const Json& j);
};

struct ModelResponse {
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::int64_t latency_ms = 0;
    std::string finish_reason;

    Json to_json() const;
    static ModelResponse from_json(const Json& j);
    bool operator==(const ModelResponse&) const = default;
};

/// input_tokens * price_in / 1e6 + output_tokens * price_out / 1e6, exact.
Money call_cost(const ModelResponse& response, const ModelSpec& model);

// ---------------------------------------------------------------------------
// Errors

class AuthError : public Error {
public:
    using Error::Error;
};

class ContextLengthError : public Error {
public:
    using Error::Error;
};

/// Non-retryable provider failure (bad request, malformed body).
class ProviderError : public Error {
public:
    ProviderError(int status, const std::string& message) : Error(message), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

class RetryExhaustedError : public Error {
public:
    RetryExhaustedError(int last_status, int attempts, const std::string& message)
        : Error(message), last_status_(last_status), attempts_(attempts) {}
    int last_status() const { return last_status_; }
    int attempts() const { return attempts_; }

private:
    int last_status_;
    int attempts_;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
};

struct HttpResponse {
    /// 0 when the request never produced an HTTP status (connect/read failure).
    int status = 0;
    std::string body;
    std::string error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport (http and https).
class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(120));
    HttpResponse post(const HttpRequest& request) override;

private:
    std::chrono::seconds timeout_;
};

/// Builds the provider-specific request body for a prompt.
HttpRequest build_request(const ModelSpec& model, const std::string& prompt_text, const std::string& api_key);

/// Parses a 2xx provider body into text, usage and finish reason. Throws
/// ProviderError on a body that does not match the wire format.
ModelResponse parse_response(const ModelSpec& model, const std::string& body);

// ---------------------------------------------------------------------------
// Retry policy

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    double factor = 2.0;
    /// Full jitter: each delay is uniform in [0, base * factor^(retry-1)].
    bool full_jitter = true;

    Json to_json() const;
    static RetryPolicy from_json(const Json& j);
};

/// True for transport failures, 408, 429 and 5xx.
bool is_retryable_status(int status);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Coordinates rate-limit backoff across every client using one provider endpoint.
class ProviderThrottle {
public:
    static std::shared_ptr<ProviderThrottle> for_provider(const std::string& key);

    /// Returns how long a caller must still wait before sending.
    std::chrono::milliseconds pending_delay() const;
    void push_back(std::chrono::milliseconds delay);

private:
    mutable std::mutex mutex_;
    std::chrono::steady_clock::time_point not_before_{};
};

// ---------------------------------------------------------------------------
// Cache

/// One JSON file per key under a directory; writes are atomic (temp + rename).
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    static std::string key_for(const ModelSpec& model, const std::string& prompt_text);

    /// Corrupt entries are deleted, logged as warnings, and reported as misses.
    std::optional<ModelResponse> get(const std::string& key) const;
    void put(const std::string& key, const ModelResponse& response) const;
    void clear() const;
    const std::filesystem::path& dir() const { return dir_; }

    /// Digest over the given keys' stored entries (sorted, missing ones marked).
    std::string digest_of(std::vector<std::string> keys) const;

private:
    std::filesystem::path entry_path(const std::string& key) const;
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Client

/// Programmatic mock behaviour; overrides ModelSpec::mock when set.
using MockResponder = std::function<std::string(const prompt::RenderedPrompt&)>;

/// The built-in mock behaviours described by ModelSpec::mock.
std::string mock_respond(const Json& mock_config, const prompt::RenderedPrompt& prompt);

struct AttemptLog {
    int attempt = 0;
    int status = 0;
    std::string error;
};

struct ClientOptions {
    std::shared_ptr<HttpTransport> transport;
    provenance::ProvenanceLedger* ledger = nullptr;
    std::string run_id;
    ResponseCache* cache = nullptr;
    RetryPolicy retry;
    Sleeper sleeper;
    std::uint64_t jitter_seed = 0;
    MockResponder mock_responder;
};

class LlmClient {
public:
    LlmClient(ModelSpec model, ClientOptions options);

    /// Sends one prompt. The response is written to the provenance ledger (if
    /// attached) before it is returned; pre-flight failures write nothing.
    ModelResponse complete(const prompt::RenderedPrompt& prompt);

    /// Like complete() but served from the cache when possible. A hit returns
    /// the stored response unchanged and makes no network call.
    ModelResponse cached_complete(const prompt::RenderedPrompt& prompt);

    const ModelSpec& model() const { return model_; }
    std::int64_t network_calls() const { return network_calls_.load(); }
    std::vector<AttemptLog> attempt_log() const;
    /// Cache keys touched by this client, for the manifest's cache digest.
    std::vector<std::string> cache_keys_used() const;

    /// Rough pre-flight token estimate: max(words, ceil(bytes / 4)).
    static std::int64_t estimate_tokens(const std::string& text);

private:
    ModelResponse send_with_retries(const prompt::RenderedPrompt& prompt);
    void record(const prompt::RenderedPrompt& prompt, const ModelResponse& response);

    ModelSpec model_;
    ClientOptions options_;
    std::shared_ptr<ProviderThrottle> throttle_;
    std::atomic<std::int64_t> network_calls_{0};
    mutable std::mutex mutex_;
    std::vector<AttemptLog> attempts_;
    std::vector<std::string> cache_keys_;
    std::mt19937_64 jitter_rng_;
};

} // namespace primes::llm
