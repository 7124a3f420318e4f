#include <cstdlib>

#include <httplib.h>

#include "quorum/llm_gateway.hpp"

namespace quorum {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::InvalidArgument, "URL without scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool is_transient(int status) { return status == 408 || status == 429 || status >= 500; }

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

}  // namespace

Json post_json(const std::string& url, const Json& body, const std::string& bearer_token,
               int timeout_seconds) {
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw ProviderError(0, "transport error: " + httplib::to_string(res.error()), true);
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProviderError(res->status, res->body.substr(0, 500), is_transient(res->status));
    }
    try {
        return Json::parse(res->body);
    } catch (const Json::parse_error& e) {
        throw ProviderError(res->status, std::string("response is not JSON: ") + e.what(), false);
    }
}

OpenAiCompatibleProvider::OpenAiCompatibleProvider(Config config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw Error(Errc::ConfigError, "LLM endpoint not configured");
}

std::unique_ptr<OpenAiCompatibleProvider> OpenAiCompatibleProvider::from_environment() {
    Config cfg;
    cfg.endpoint = env_or("QUORUM_LLM_ENDPOINT", "https://api.openai.com/v1/chat/completions");
    cfg.model = env_or("QUORUM_LLM_MODEL", "gpt-4o-mini");
    const std::string key_var = env_or("QUORUM_LLM_API_KEY_VAR", "OPENAI_API_KEY");
    cfg.api_key = env_or(key_var.c_str(), "");
    if (cfg.api_key.empty()) {
        throw Error(Errc::ConfigError, "API key variable " + key_var + " is not set");
    }
    return std::make_unique<OpenAiCompatibleProvider>(std::move(cfg));
}

Completion OpenAiCompatibleProvider::complete(const Prompt& prompt) {
    Json messages = Json::array();
    if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
    messages.push_back({{"role", "user"}, {"content", prompt.user}});
    Json body{{"model", prompt.params.model_id.empty() ? config_.model : prompt.params.model_id},
              {"messages", std::move(messages)},
              {"temperature", prompt.params.temperature},
              {"max_tokens", prompt.params.max_tokens}};
    if (prompt.params.logprobs) body["logprobs"] = true;

    Json res = post_json(config_.endpoint, body, config_.api_key, config_.timeout_seconds);
    try {
        const auto& choice = res.at("choices").at(0);
        Completion out;
        out.text = choice.at("message").at("content").get<std::string>();
        if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
            choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
            std::vector<TokenLogprob> lp;
            for (const auto& t : choice["logprobs"]["content"]) {
                lp.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
            }
            out.logprobs = std::move(lp);
        }
        if (res.contains("usage")) {
            out.usage.prompt_tokens = res["usage"].value("prompt_tokens", 0);
            out.usage.completion_tokens = res["usage"].value("completion_tokens", 0);
        }
        return out;
    } catch (const Json::exception& e) {
        throw ProviderError(200, std::string("unexpected response shape: ") + e.what(), false);
    }
}

}  // namespace quorum
