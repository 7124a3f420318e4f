#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "quorum/error.hpp"

namespace quorum {

using Json = nlohmann::json;

struct PromptParams {
    double temperature = 0.0;
    int max_tokens = 1024;
    std::string model_id;
    bool logprobs = false;
};

struct Prompt {
    std::string system;
    std::string user;
    PromptParams params;
    /// Template id for logs; not part of the request fingerprint.
    std::string tag;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
};

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct Completion {
    std::string text;
    std::optional<std::vector<TokenLogprob>> logprobs;
    Usage usage;
};

Json to_json(const Prompt& p);
Json to_json(const Completion& c);
Completion completion_from_json(const Json& j);

/// Hex SHA-256 of the compact, key-sorted JSON rendering of `request`.
std::string fingerprint(const Json& request);
std::string fingerprint(const Prompt& prompt);

enum class CassetteMode { Record, Replay, Passthrough };

std::string_view to_string(CassetteMode m) noexcept;
CassetteMode parse_cassette_mode(std::string_view s);

/// Persistent map from request fingerprint to recorded response. One
/// cassette can hold LLM completions, forecast responses and search results;
/// each entry stores the canonical request next to the response.
class Cassette {
public:
    explicit Cassette(CassetteMode mode = CassetteMode::Replay) : mode_(mode) {}

    static std::shared_ptr<Cassette> load(const std::filesystem::path& path, CassetteMode mode);
    void save(const std::filesystem::path& path) const;
    std::string dump() const;

    CassetteMode mode() const noexcept { return mode_; }
    std::optional<Json> find(const std::string& fp) const;
    /// Returns false when the fingerprint was already present (entry kept).
    bool put(const std::string& fp, Json request, Json response);
    std::size_t size() const;

private:
    CassetteMode mode_;
    mutable std::shared_mutex mu_;
    std::map<std::string, Json> entries_;
};

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    /// Throws ProviderError; `transient()` errors are retried by the gateway.
    virtual Completion complete(const Prompt& prompt) = 0;
};

/// Token bucket. `acquire()` blocks until a token is available.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::nanoseconds)>;

    RateLimiter(double requests_per_minute, double burst, Clock clock = {}, Sleeper sleep = {});
    void acquire();

private:
    std::mutex mu_;
    double rate_per_sec_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    Clock clock_;
    Sleeper sleep_;
};

enum class FieldType { String, Number, Boolean, Enum, StringList, Object, Any };

struct FieldSpec {
    std::string name;
    FieldType type = FieldType::String;
    bool required = true;
    std::vector<std::string> allowed;  // Enum
    double min = -std::numeric_limits<double>::infinity();
    double max = std::numeric_limits<double>::infinity();
};

struct Schema {
    std::vector<FieldSpec> fields;

    /// Empty string when `record` conforms, otherwise the first violation.
    std::string violation(const Json& record) const;
    std::string describe() const;
};

/// Pulls the JSON object out of a model reply: the first ```json fenced block
/// when present, otherwise the first balanced `{...}` span.
std::optional<Json> extract_json_object(std::string_view reply);

struct StructuredResult {
    Json record;
    Completion completion;
    int attempts = 1;
};

struct PromptLogEntry {
    std::string fingerprint;
    std::string tag;
    std::string system;
    std::string user;
    std::string response;
};

enum class LlmMode { Record, Replay, Live };

std::string_view to_string(LlmMode m) noexcept;
LlmMode parse_llm_mode(std::string_view s);

class LlmGateway {
public:
    struct Options {
        LlmMode mode = LlmMode::Replay;
        double requests_per_minute = 60.0;
        std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds{1000},
                                                       std::chrono::milliseconds{2000},
                                                       std::chrono::milliseconds{4000}};
        std::function<void(std::chrono::milliseconds)> sleep;
        std::string default_model;
    };

    LlmGateway(std::shared_ptr<Cassette> cassette, std::unique_ptr<LlmProvider> provider, Options options);

    Completion complete(Prompt prompt);
    StructuredResult complete_structured(Prompt prompt, const Schema& schema);

    LlmMode mode() const noexcept { return options_.mode; }
    std::size_t calls() const noexcept { return calls_.load(); }
    std::size_t provider_calls() const noexcept { return provider_calls_.load(); }
    std::vector<PromptLogEntry> prompt_log() const;
    void clear_prompt_log();
    const std::shared_ptr<Cassette>& cassette() const noexcept { return cassette_; }

private:
    Completion call_provider(const Prompt& prompt);

    std::shared_ptr<Cassette> cassette_;
    std::unique_ptr<LlmProvider> provider_;
    Options options_;
    std::unique_ptr<RateLimiter> limiter_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> provider_calls_{0};
    mutable std::mutex log_mu_;
    std::vector<PromptLogEntry> log_;
};

/// Chat-completions client for OpenAI-compatible endpoints. Configured from
/// QUORUM_LLM_ENDPOINT, QUORUM_LLM_MODEL and QUORUM_LLM_API_KEY_VAR (the
/// name of the variable holding the key; defaults to OPENAI_API_KEY).
class OpenAiCompatibleProvider : public LlmProvider {
public:
    struct Config {
        std::string endpoint;  // e.g. https://api.openai.com/v1/chat/completions
        std::string api_key;
        std::string model;
        int timeout_seconds = 60;
    };

    explicit OpenAiCompatibleProvider(Config config);
    static std::unique_ptr<OpenAiCompatibleProvider> from_environment();

    Completion complete(const Prompt& prompt) override;

private:
    Config config_;
};

/// POSTs `body` as JSON to an http(s) URL and returns the parsed response.
/// Used by the remote forecaster and search clients.
Json post_json(const std::string& url, const Json& body, const std::string& bearer_token = {},
               int timeout_seconds = 60);

}  // namespace quorum
