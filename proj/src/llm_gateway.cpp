#include "quorum/llm_gateway.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "quorum/market_data.hpp"

namespace quorum {

namespace {

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(Errc::IoError, "sha256 failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) {
        out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return out.str();
}

}  // namespace

Json to_json(const Prompt& p) {
    return Json{{"system", p.system},
                {"user", p.user},
                {"params",
                 {{"temperature", p.params.temperature},
                  {"max_tokens", p.params.max_tokens},
                  {"model", p.params.model_id},
                  {"logprobs", p.params.logprobs}}}};
}

Json to_json(const Completion& c) {
    Json j{{"text", c.text},
           {"usage", {{"prompt_tokens", c.usage.prompt_tokens},
                      {"completion_tokens", c.usage.completion_tokens}}}};
    if (c.logprobs) {
        Json lp = Json::array();
        for (const auto& t : *c.logprobs) lp.push_back({{"token", t.token}, {"logprob", t.logprob}});
        j["logprobs"] = std::move(lp);
    }
    return j;
}

Completion completion_from_json(const Json& j) {
    Completion c;
    c.text = j.at("text").get<std::string>();
    if (j.contains("usage")) {
        c.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        c.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    if (j.contains("logprobs") && j["logprobs"].is_array()) {
        std::vector<TokenLogprob> lp;
        for (const auto& t : j["logprobs"]) {
            lp.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
        }
        c.logprobs = std::move(lp);
    }
    return c;
}

std::string fingerprint(const Json& request) {
    // nlohmann::json objects are key-sorted, so a compact dump is canonical.
    return sha256_hex(request.dump());
}

std::string fingerprint(const Prompt& prompt) { return fingerprint(to_json(prompt)); }

std::string_view to_string(CassetteMode m) noexcept {
    switch (m) {
        case CassetteMode::Record: return "record";
        case CassetteMode::Replay: return "replay";
        case CassetteMode::Passthrough: return "passthrough";
    }
    return "?";
}

CassetteMode parse_cassette_mode(std::string_view s) {
    if (s == "record") return CassetteMode::Record;
    if (s == "replay") return CassetteMode::Replay;
    if (s == "passthrough" || s == "live") return CassetteMode::Passthrough;
    throw Error(Errc::InvalidArgument, "unknown cassette mode '" + std::string(s) + "'");
}

std::string_view to_string(LlmMode m) noexcept {
    switch (m) {
        case LlmMode::Record: return "record";
        case LlmMode::Replay: return "replay";
        case LlmMode::Live: return "live";
    }
    return "?";
}

LlmMode parse_llm_mode(std::string_view s) {
    if (s == "record") return LlmMode::Record;
    if (s == "replay") return LlmMode::Replay;
    if (s == "live") return LlmMode::Live;
    throw Error(Errc::InvalidArgument, "unknown llm mode '" + std::string(s) + "' (record|replay|live)");
}

std::shared_ptr<Cassette> Cassette::load(const std::filesystem::path& path, CassetteMode mode) {
    auto cassette = std::make_shared<Cassette>(mode);
    if (!std::filesystem::exists(path)) {
        if (mode == CassetteMode::Replay) throw Error(Errc::IoError, "cassette not found: " + path.string());
        return cassette;
    }
    Json doc;
    try {
        doc = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw Error(Errc::IoError, "cassette " + path.string() + ": " + e.what());
    }
    for (auto& [fp, entry] : doc.items()) cassette->entries_.emplace(fp, entry);
    return cassette;
}

std::string Cassette::dump() const {
    std::shared_lock lock(mu_);
    Json doc = Json::object();
    for (const auto& [fp, entry] : entries_) doc[fp] = entry;
    return doc.dump(2) + "\n";
}

void Cassette::save(const std::filesystem::path& path) const { write_file(path, dump()); }

std::optional<Json> Cassette::find(const std::string& fp) const {
    // Replay cassettes are never mutated after load, so reads skip the lock.
    if (mode_ == CassetteMode::Replay) {
        auto it = entries_.find(fp);
        if (it == entries_.end()) return std::nullopt;
        return std::optional<Json>(std::in_place, it->second.at("response"));
    }
    std::shared_lock lock(mu_);
    auto it = entries_.find(fp);
    if (it == entries_.end()) return std::nullopt;
    return std::optional<Json>(std::in_place, it->second.at("response"));
}

bool Cassette::put(const std::string& fp, Json request, Json response) {
    if (mode_ == CassetteMode::Replay) {
        throw Error(Errc::InvalidArgument, "cannot record into a replay cassette");
    }
    std::unique_lock lock(mu_);
    return entries_.emplace(fp, Json{{"request", std::move(request)}, {"response", std::move(response)}})
        .second;
}

std::size_t Cassette::size() const {
    if (mode_ == CassetteMode::Replay) return entries_.size();
    std::shared_lock lock(mu_);
    return entries_.size();
}

RateLimiter::RateLimiter(double requests_per_minute, double burst, Clock clock, Sleeper sleep)
    : rate_per_sec_(requests_per_minute / 60.0),
      capacity_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      clock_(clock ? std::move(clock) : Clock{[] { return std::chrono::steady_clock::now(); }}),
      sleep_(sleep ? std::move(sleep) : Sleeper{[](std::chrono::nanoseconds d) { std::this_thread::sleep_for(d); }}) {
    if (!(requests_per_minute > 0)) throw Error(Errc::InvalidArgument, "rate limit must be positive");
    last_ = clock_();
}

void RateLimiter::acquire() {
    std::unique_lock lock(mu_);
    for (;;) {
        auto now = clock_();
        double elapsed = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_sec_);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        double wait = (1.0 - tokens_) / rate_per_sec_;
        sleep_(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::duration<double>(wait)));
    }
}

namespace {

std::string_view type_name(FieldType t) {
    switch (t) {
        case FieldType::String: return "string";
        case FieldType::Number: return "number";
        case FieldType::Boolean: return "boolean";
        case FieldType::Enum: return "enum";
        case FieldType::StringList: return "list of strings";
        case FieldType::Object: return "object";
        case FieldType::Any: return "any";
    }
    return "?";
}

}  // namespace

std::string Schema::violation(const Json& record) const {
    if (!record.is_object()) return "reply is not a JSON object";
    for (const auto& f : fields) {
        if (!record.contains(f.name) || record[f.name].is_null()) {
            if (f.required) return "missing field '" + f.name + "'";
            continue;
        }
        const Json& v = record[f.name];
        switch (f.type) {
            case FieldType::String:
                if (!v.is_string()) return "field '" + f.name + "' must be a string";
                break;
            case FieldType::Number: {
                if (!v.is_number()) return "field '" + f.name + "' must be a number";
                double x = v.get<double>();
                if (!std::isfinite(x) || x < f.min || x > f.max) {
                    return "field '" + f.name + "' = " + format_number(x) + " outside [" +
                           format_number(f.min) + ", " + format_number(f.max) + "]";
                }
                break;
            }
            case FieldType::Boolean:
                if (!v.is_boolean()) return "field '" + f.name + "' must be true or false";
                break;
            case FieldType::Enum: {
                if (!v.is_string()) return "field '" + f.name + "' must be one of the allowed strings";
                auto s = v.get<std::string>();
                if (std::find(f.allowed.begin(), f.allowed.end(), s) == f.allowed.end()) {
                    return "field '" + f.name + "' has unexpected value '" + s + "'";
                }
                break;
            }
            case FieldType::StringList:
                if (!v.is_array()) return "field '" + f.name + "' must be a list";
                for (const auto& e : v) {
                    if (!e.is_string()) return "field '" + f.name + "' must contain only strings";
                }
                break;
            case FieldType::Object:
                if (!v.is_object()) return "field '" + f.name + "' must be an object";
                break;
            case FieldType::Any: break;
        }
    }
    return {};
}

std::string Schema::describe() const {
    std::string out;
    for (const auto& f : fields) {
        out += "- \"" + f.name + "\" (" + std::string(type_name(f.type));
        if (f.type == FieldType::Enum) {
            out += ": ";
            for (std::size_t i = 0; i < f.allowed.size(); ++i) {
                out += (i ? " | " : "") + f.allowed[i];
            }
        }
        if (f.type == FieldType::Number && std::isfinite(f.min) && std::isfinite(f.max)) {
            out += " in [" + format_number(f.min) + ", " + format_number(f.max) + "]";
        }
        out += f.required ? ")\n" : ", optional)\n";
    }
    return out;
}

std::optional<Json> extract_json_object(std::string_view reply) {
    auto try_parse = [](std::string_view s) -> std::optional<Json> {
        try {
            auto j = Json::parse(s);
            if (j.is_object()) return j;
        } catch (const Json::parse_error&) {
        }
        return std::nullopt;
    };

    // Fenced block first.
    for (std::size_t pos = reply.find("```"); pos != std::string_view::npos;) {
        std::size_t body = reply.find('\n', pos);
        if (body == std::string_view::npos) break;
        std::size_t end = reply.find("```", body);
        if (end == std::string_view::npos) break;
        if (auto j = try_parse(reply.substr(body + 1, end - body - 1))) return j;
        pos = reply.find("```", end + 3);
    }

    // Otherwise scan for the first balanced object, honouring string literals.
    for (std::size_t start = reply.find('{'); start != std::string_view::npos;
         start = reply.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < reply.size(); ++i) {
            char c = reply[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                if (auto j = try_parse(reply.substr(start, i - start + 1))) return j;
                break;
            }
        }
    }
    return std::nullopt;
}

LlmGateway::LlmGateway(std::shared_ptr<Cassette> cassette, std::unique_ptr<LlmProvider> provider,
                       Options options)
    : cassette_(std::move(cassette)), provider_(std::move(provider)), options_(std::move(options)) {
    if (!cassette_) {
        cassette_ = std::make_shared<Cassette>(options_.mode == LlmMode::Live ? CassetteMode::Passthrough
                                               : options_.mode == LlmMode::Record ? CassetteMode::Record
                                                                                  : CassetteMode::Replay);
    }
    if (options_.mode != LlmMode::Replay && !provider_) {
        throw Error(Errc::InvalidArgument, "record and live modes need a provider");
    }
    if (options_.mode != LlmMode::Replay) {
        limiter_ = std::make_unique<RateLimiter>(options_.requests_per_minute, 1.0);
    }
    if (!options_.sleep) {
        options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

Completion LlmGateway::call_provider(const Prompt& prompt) {
    for (std::size_t attempt = 0;; ++attempt) {
        if (limiter_) limiter_->acquire();
        try {
            ++provider_calls_;
            return provider_->complete(prompt);
        } catch (const ProviderError& e) {
            if (!e.transient() || attempt >= options_.backoff.size()) throw;
            options_.sleep(options_.backoff[attempt]);
        }
    }
}

Completion LlmGateway::complete(Prompt prompt) {
    if (prompt.user.empty()) throw Error(Errc::InvalidArgument, "prompt user message is empty");
    if (prompt.params.model_id.empty()) prompt.params.model_id = options_.default_model;
    if (prompt.params.temperature < 0.0 || prompt.params.temperature > 2.0) {
        throw Error(Errc::InvalidArgument, "temperature outside [0, 2]");
    }
    ++calls_;
    const Json request = to_json(prompt);
    const std::string fp = fingerprint(request);

    Completion result;
    switch (options_.mode) {
        case LlmMode::Replay: {
            auto hit = cassette_->find(fp);
            if (!hit) throw CassetteMiss(fp);
            result = completion_from_json(*hit);
            break;
        }
        case LlmMode::Record: {
            if (auto hit = cassette_->find(fp)) {
                result = completion_from_json(*hit);
                break;
            }
            result = call_provider(prompt);
            cassette_->put(fp, request, to_json(result));
            break;
        }
        case LlmMode::Live: result = call_provider(prompt); break;
    }
    for (const auto& t : result.logprobs.value_or(std::vector<TokenLogprob>{})) {
        if (!(t.logprob <= 0.0)) throw Error(Errc::ProviderError, "token logprob above zero");
    }

    std::lock_guard lock(log_mu_);
    log_.push_back({fp, prompt.tag, prompt.system, prompt.user, result.text});
    return result;
}

StructuredResult LlmGateway::complete_structured(Prompt prompt, const Schema& schema) {
    Completion first = complete(prompt);
    std::string problem;
    if (auto j = extract_json_object(first.text)) {
        problem = schema.violation(*j);
        if (problem.empty()) return {std::move(*j), std::move(first), 1};
    } else {
        problem = "no JSON object found in the reply";
    }

    Prompt repair = prompt;
    repair.tag = prompt.tag + ".repair";
    repair.user = prompt.user + "\n\nYour previous reply could not be used (" + problem +
                  "). Reply again with only a JSON object in a ```json fenced block with these fields:\n" +
                  schema.describe();
    Completion second = complete(repair);
    if (auto j = extract_json_object(second.text)) {
        auto again = schema.violation(*j);
        if (again.empty()) return {std::move(*j), std::move(second), 2};
        problem = again;
    } else {
        problem = "no JSON object found in the repaired reply";
    }
    throw Error(Errc::UnparseableAfterRepair, prompt.tag + ": " + problem);
}

std::vector<PromptLogEntry> LlmGateway::prompt_log() const {
    std::lock_guard lock(log_mu_);
    return log_;
}

void LlmGateway::clear_prompt_log() {
    std::lock_guard lock(log_mu_);
    log_.clear();
}

}  // namespace quorum
