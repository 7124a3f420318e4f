#pragma once

// The scripted investor conversation used to record the session fixture and
// to check the service against it. `send(method, path, body, query)` returns
// (status, parsed body).

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "quorum/llm_gateway.hpp"

namespace quorum::testing {

struct Exchange {
    std::string label;
    std::string method;
    std::string path;
    Json body;
    int status = 0;
    Json response;
};

using Send = std::function<std::pair<int, Json>(const std::string& method, const std::string& path,
                                                const std::string& body,
                                                const std::map<std::string, std::string>& query)>;

inline const char* kSessionTicker = "HRBR";
inline const char* kSessionStart = "2024-03-11";

inline std::vector<Exchange> run_session_script(const Send& send) {
    std::vector<Exchange> log;
    std::string id;
    auto call = [&](std::string label, std::string method, std::string path, Json body,
                    std::map<std::string, std::string> query = {}) -> const Exchange& {
        auto [status, response] = send(method, path, body.is_null() ? "" : body.dump(), query);
        log.push_back({std::move(label), std::move(method), std::move(path), std::move(body), status, std::move(response)});
        return log.back();
    };
    const auto& created = call("create", "POST", "/sessions", {{"ticker", kSessionTicker}, {"start_date", kSessionStart}});
    id = created.response.value("session_id", "");
    const std::string base = "/sessions/" + id;
    call("decide-without-preference", "POST", base + "/decide", Json::object());
    call("advance-before-decide", "POST", base + "/advance", nullptr);
    call("feedback-before-decide", "POST", base + "/feedback", {{"feedback", "agree"}});
    call("preference", "PUT", base + "/preference", {{"text", "moderately aggressive"}});
    call("signals", "GET", base + "/signals", nullptr);
    call("decide-1", "POST", base + "/decide", Json::object());
    call("decide-again", "POST", base + "/decide", Json::object());
    call("feedback-disagree", "POST", base + "/feedback", {{"feedback", "disagree"}});
    call("feedback-twice", "POST", base + "/feedback", {{"feedback", "agree"}});
    call("advance-1", "POST", base + "/advance", nullptr);
    call("signals-past", "GET", base + "/signals", nullptr, {{"date", kSessionStart}});
    call("decide-2", "POST", base + "/decide", {{"attitude", "optimistic"}});
    call("feedback-text", "POST", base + "/feedback", {{"feedback", "I trust the news analyst more than the others"}});
    call("advance-2", "POST", base + "/advance", nullptr);
    call("equity", "GET", base + "/equity", nullptr);
    call("session", "GET", base, nullptr);
    call("unknown-session", "GET", "/sessions/nope/equity", nullptr);
    return log;
}

}  // namespace quorum::testing
