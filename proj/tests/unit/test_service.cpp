#include <gtest/gtest.h>

#include <thread>

#include "quorum/service.hpp"
#include "session_script.hpp"

using namespace quorum;
namespace fs = std::filesystem;

namespace {

const fs::path kGolden = fs::path(QUORUM_FIXTURES) / "golden";

ExperimentConfig golden() { return load_experiment_config(kGolden / "config.json"); }

struct Fixture {
    ExperimentConfig config = golden();
    Service service{config, make_run_context(config)};

    ServiceResponse call(const std::string& method, const std::string& path, const Json& body = nullptr,
                         const std::map<std::string, std::string>& query = {}) {
        return service.handle(method, path, body.is_null() ? "" : body.dump(), query);
    }
    std::string create(const std::string& start = quorum::testing::kSessionStart) {
        auto r = call("POST", "/sessions", {{"ticker", "HRBR"}, {"start_date", start}});
        EXPECT_EQ(r.status, 201) << r.body.dump();
        return r.body["session_id"].get<std::string>();
    }
};

}  // namespace

TEST(Service, HealthAndRouting) {
    Fixture f;
    EXPECT_EQ(f.call("GET", "/health").status, 200);
    EXPECT_EQ(f.call("GET", "/nowhere").status, 404);
    EXPECT_EQ(f.call("DELETE", "/sessions").status, 405);
    auto r = f.call("GET", "/sessions/abc");
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(r.body["code"], "UnknownSession");
}

TEST(Service, CreateValidatesInput) {
    Fixture f;
    EXPECT_EQ(f.call("POST", "/sessions", Json::object()).status, 400);
    EXPECT_EQ(f.call("POST", "/sessions", {{"ticker", "HRBR"}, {"start_date", "soon"}}).status, 400);
    EXPECT_EQ(f.call("POST", "/sessions", {{"ticker", "HRBR"}, {"start_date", "2030-01-01"}}).status, 400);
    auto bad_json = f.service.handle("POST", "/sessions", "{not json");
    EXPECT_EQ(bad_json.status, 400);
    auto unknown = f.call("POST", "/sessions", {{"ticker", "NOPE"}});
    EXPECT_GE(unknown.status, 400);
    EXPECT_LT(unknown.status, 500);
    // A weekend start moves to the next trading day.
    auto weekend = f.call("POST", "/sessions", {{"ticker", "HRBR"}, {"start-date", "2024-03-16"}});
    EXPECT_EQ(weekend.body["cursor"], "2024-03-18");
    EXPECT_EQ(f.service.session_count(), 1u);
}

TEST(Service, SignalsNeverLookAhead) {
    Fixture f;
    auto id = f.create();
    auto now = f.call("GET", "/sessions/" + id + "/signals");
    ASSERT_EQ(now.status, 200) << now.body.dump();
    EXPECT_EQ(now.body["date"], quorum::testing::kSessionStart);
    EXPECT_EQ(now.body["target"], "2024-03-12");
    auto future = f.call("GET", "/sessions/" + id + "/signals", nullptr, {{"date", "2024-03-12"}});
    EXPECT_EQ(future.status, 400);
}

TEST(Service, EmptyPreferenceIsRejected) {
    Fixture f;
    auto id = f.create();
    auto r = f.call("PUT", "/sessions/" + id + "/preference", {{"text", "  "}});
    EXPECT_EQ(r.status, 403);
    EXPECT_EQ(r.body["code"], "EmptyPreference");
}

TEST(Service, ScriptedWalkAndPortfolioAccounting) {
    Fixture f;
    auto log = quorum::testing::run_session_script([&](const std::string& m, const std::string& p, const std::string& b,
                                                       const std::map<std::string, std::string>& q) {
        auto r = f.service.handle(m, p, b, q);
        return std::make_pair(r.status, r.body);
    });
    std::map<std::string, Json> out;
    std::map<std::string, int> status;
    for (const auto& e : log) {
        out[e.label] = e.response;
        status[e.label] = e.status;
    }
    EXPECT_EQ(status["advance-1"], 200);
    EXPECT_EQ(status["advance-2"], 200);
    const auto& session = out["session"];
    EXPECT_EQ(session["cursor"], "2024-03-13");
    EXPECT_EQ(session["decisions"].size(), 2u);
    // Cash plus holdings at the equity dates reproduce the reported curve.
    auto prices = load_prices(kGolden / "HRBR.prices.csv");
    auto close = [&](const std::string& d) { return prices.bars[*prices.index_of(*Date::parse_iso(d))].close; };
    const auto& pts = out["equity"]["points"];
    ASSERT_EQ(pts.size(), 3u);
    EXPECT_DOUBLE_EQ(pts[0]["equity"].get<double>(), f.config.initial_capital);
    double cash = session["portfolio"]["cash"].get<double>(), shares = session["portfolio"]["shares"].get<double>();
    EXPECT_NEAR(pts[2]["equity"].get<double>(), cash + shares * close("2024-03-13"), 1e-6);
    // Free-text feedback that trusts the news analyst rewards only that agent.
    const auto& w2 = out["feedback-text"]["weights"];
    const auto& w1 = out["feedback-disagree"]["weights"];
    EXPECT_NEAR(w2["news"].get<double>(), w1["news"].get<double>() * 1.1, 1e-12);
    EXPECT_DOUBLE_EQ(w2["time"].get<double>(), w1["time"].get<double>());
}

TEST(Service, SessionsAreIndependentUnderConcurrency) {
    Fixture f;
    std::vector<std::string> ids;
    for (int i = 0; i < 6; ++i) ids.push_back(f.create());
    std::vector<std::thread> threads;
    std::vector<int> statuses(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        threads.emplace_back([&, i] {
            auto base = "/sessions/" + ids[i];
            f.call("PUT", base + "/preference", {{"text", "moderately aggressive"}});
            statuses[i] = f.call("POST", base + "/decide", Json::object()).status;
        });
    }
    for (auto& t : threads) t.join();
    for (int s : statuses) EXPECT_EQ(s, 200);
    std::set<std::string> unique(ids.begin(), ids.end());
    EXPECT_EQ(unique.size(), ids.size());
}

TEST(Service, SnapshotsSurviveRestart) {
    auto dir = fs::temp_directory_path() / ("quorum_service_state_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    auto config = golden();
    std::string id;
    Json before;
    {
        Service s(config, make_run_context(config), dir);
        id = s.handle("POST", "/sessions", Json{{"ticker", "HRBR"}}.dump()).body["session_id"];
        s.handle("PUT", "/sessions/" + id + "/preference", Json{{"text", "aggressive"}}.dump());
        before = s.handle("GET", "/sessions/" + id, "").body;
    }
    Service again(config, make_run_context(config), dir);
    EXPECT_EQ(again.session_count(), 1u);
    EXPECT_EQ(again.handle("GET", "/sessions/" + id, "").body, before);
    // New sessions continue the ordinal sequence instead of reusing an id.
    auto next = again.handle("POST", "/sessions", Json{{"ticker", "HRBR"}}.dump()).body["session_id"];
    EXPECT_NE(next, id);
    fs::remove_all(dir);
}

TEST(Service, SessionJsonRoundTrip) {
    Session s;
    s.id = "abc";
    s.ordinal = 3;
    s.ticker = "HRBR";
    s.cursor = {2024, 3, 12};
    s.profile = named_profile(ProfileKind::MCons);
    s.portfolio = {10.5, 2.0};
    s.equity.points.push_back({{2024, 3, 11}, 100.0});
    EXPECT_EQ(to_json(session_from_json(to_json(s))), to_json(s));
}
