#include <gtest/gtest.h>

#include <filesystem>

#include "quorum/llm_gateway.hpp"
#include "scripted_provider.hpp"

using namespace quorum;

namespace {

Prompt prompt(std::string user, std::string tag = "t.v1") {
    Prompt p;
    p.system = "sys";
    p.user = std::move(user);
    p.tag = std::move(tag);
    return p;
}

class FlakyProvider : public LlmProvider {
public:
    int failures_left = 0;
    int status = 503;
    bool transient = true;
    int calls = 0;
    Completion complete(const Prompt& p) override {
        ++calls;
        if (failures_left > 0) {
            --failures_left;
            throw ProviderError(status, "busy", transient);
        }
        return {"echo: " + p.user, std::nullopt, {}};
    }
};

LlmGateway::Options opts(LlmMode mode, std::vector<std::chrono::milliseconds>* slept = nullptr) {
    LlmGateway::Options o;
    o.mode = mode;
    o.requests_per_minute = 1e9;
    o.sleep = [slept](std::chrono::milliseconds d) {
        if (slept) slept->push_back(d);
    };
    return o;
}

}  // namespace

TEST(Fingerprint, IgnoresTagAndKeyOrder) {
    auto a = prompt("hello", "a.v1");
    auto b = prompt("hello", "b.v1");
    EXPECT_EQ(fingerprint(a), fingerprint(b));
    b.params.temperature = 0.5;
    EXPECT_NE(fingerprint(a), fingerprint(b));
    EXPECT_EQ(fingerprint(Json::parse(R"({"x":1,"y":[2,3]})")), fingerprint(Json::parse(R"({"y":[2,3],"x":1})")));
    EXPECT_EQ(fingerprint(a).size(), 64u);
}

TEST(Gateway, RecordThenReplay) {
    auto cassette = std::make_shared<Cassette>(CassetteMode::Record);
    auto flaky = std::make_unique<FlakyProvider>();
    auto* raw = flaky.get();
    LlmGateway rec(cassette, std::move(flaky), opts(LlmMode::Record));
    EXPECT_EQ(rec.complete(prompt("one")).text, "echo: one");
    EXPECT_EQ(rec.complete(prompt("one")).text, "echo: one");
    EXPECT_EQ(raw->calls, 1);
    EXPECT_EQ(cassette->size(), 1u);

    auto path = std::filesystem::temp_directory_path() / "quorum_gateway_cassette.json";
    cassette->save(path);
    LlmGateway replay(Cassette::load(path, CassetteMode::Replay), nullptr, opts(LlmMode::Replay));
    EXPECT_EQ(replay.complete(prompt("one")).text, "echo: one");
    EXPECT_THROW(replay.complete(prompt("two")), CassetteMiss);
    std::filesystem::remove(path);
}

TEST(Gateway, TransientErrorsBackOff) {
    std::vector<std::chrono::milliseconds> slept;
    auto flaky = std::make_unique<FlakyProvider>();
    flaky->failures_left = 2;
    LlmGateway gw(nullptr, std::move(flaky), opts(LlmMode::Live, &slept));
    EXPECT_EQ(gw.complete(prompt("x")).text, "echo: x");
    EXPECT_EQ(slept, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds{1000}, std::chrono::milliseconds{2000}}));
    EXPECT_EQ(gw.provider_calls(), 3u);
}

TEST(Gateway, GivesUpAfterThreeRetries) {
    std::vector<std::chrono::milliseconds> slept;
    auto flaky = std::make_unique<FlakyProvider>();
    flaky->failures_left = 10;
    LlmGateway gw(nullptr, std::move(flaky), opts(LlmMode::Live, &slept));
    EXPECT_THROW(gw.complete(prompt("x")), ProviderError);
    EXPECT_EQ(slept.size(), 3u);
    EXPECT_EQ(gw.provider_calls(), 4u);
}

TEST(Gateway, PermanentErrorsAreNotRetried) {
    std::vector<std::chrono::milliseconds> slept;
    auto flaky = std::make_unique<FlakyProvider>();
    flaky->failures_left = 1;
    flaky->status = 400;
    flaky->transient = false;
    LlmGateway gw(nullptr, std::move(flaky), opts(LlmMode::Live, &slept));
    EXPECT_THROW(gw.complete(prompt("x")), ProviderError);
    EXPECT_TRUE(slept.empty());
}

TEST(Gateway, RejectsBadPrompts) {
    LlmGateway gw(nullptr, std::make_unique<FlakyProvider>(), opts(LlmMode::Live));
    EXPECT_THROW(gw.complete(prompt("")), Error);
    auto p = prompt("x");
    p.params.temperature = 3.0;
    EXPECT_THROW(gw.complete(p), Error);
    EXPECT_THROW(LlmGateway(nullptr, nullptr, opts(LlmMode::Record)), Error);
}

TEST(Gateway, StructuredRepairsOnce) {
    auto scripted = std::make_unique<quorum::testing::ScriptedProvider>();
    scripted->queue("s.v1", "I think it goes up.");
    scripted->queue("s.v1.repair", "```json\n{\"trend\": \"Up\"}\n```");
    LlmGateway gw(nullptr, std::move(scripted), opts(LlmMode::Live));
    Schema schema{{{"trend", FieldType::Enum, true, {"Up", "Down"}}}};
    auto r = gw.complete_structured(prompt("predict", "s.v1"), schema);
    EXPECT_EQ(r.attempts, 2);
    EXPECT_EQ(r.record["trend"], "Up");
    auto log = gw.prompt_log();
    ASSERT_EQ(log.size(), 2u);
    EXPECT_EQ(log[1].tag, "s.v1.repair");
    EXPECT_NE(log[1].user.find("\"trend\" (enum: Up | Down)"), std::string::npos);
}

TEST(Gateway, StructuredFailsAfterRepair) {
    auto scripted = std::make_unique<quorum::testing::ScriptedProvider>();
    scripted->queue("s.v1", "{\"trend\": \"Sideways\"}");
    scripted->queue("s.v1.repair", "{\"trend\": \"Flat\"}");
    LlmGateway gw(nullptr, std::move(scripted), opts(LlmMode::Live));
    Schema schema{{{"trend", FieldType::Enum, true, {"Up", "Down"}}}};
    try {
        gw.complete_structured(prompt("predict", "s.v1"), schema);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnparseableAfterRepair);
    }
}

TEST(Gateway, RejectsPositiveLogprobs) {
    class Bad : public LlmProvider {
        Completion complete(const Prompt&) override { return {"x", std::vector<TokenLogprob>{{"x", 0.2}}, {}}; }
    };
    LlmGateway gw(nullptr, std::make_unique<Bad>(), opts(LlmMode::Live));
    EXPECT_THROW(gw.complete(prompt("x")), Error);
}

TEST(ExtractJson, FencedAndBare) {
    EXPECT_EQ((*extract_json_object("text ```json\n{\"a\": 1}\n``` more"))["a"], 1);
    EXPECT_EQ((*extract_json_object("prefix {\"a\": \"}{\", \"b\": {\"c\": 2}} suffix"))["b"]["c"], 2);
    EXPECT_EQ((*extract_json_object("{broken {\"ok\": true}"))["ok"], true);
    EXPECT_FALSE(extract_json_object("no object here"));
    EXPECT_FALSE(extract_json_object("[1, 2]"));
}

TEST(Schema, Violations) {
    Schema s{{{"name", FieldType::String},
              {"conf", FieldType::Number, true, {}, 0.0, 1.0},
              {"tags", FieldType::StringList, false}}};
    EXPECT_EQ(s.violation(Json::parse(R"({"name":"x","conf":0.5})")), "");
    EXPECT_NE(s.violation(Json::parse(R"({"name":"x"})")), "");
    EXPECT_NE(s.violation(Json::parse(R"({"name":"x","conf":1.5})")), "");
    EXPECT_NE(s.violation(Json::parse(R"({"name":1,"conf":0.5})")), "");
    EXPECT_NE(s.violation(Json::parse(R"({"name":"x","conf":0.5,"tags":[1]})")), "");
    EXPECT_NE(s.violation(Json::array()), "");
}

TEST(RateLimiter, SpacesRequests) {
    using namespace std::chrono;
    auto now = steady_clock::time_point{};
    std::vector<nanoseconds> waits;
    RateLimiter limiter(
        60.0, 1.0, [&] { return now; },
        [&](nanoseconds d) {
            waits.push_back(d);
            now += d;
        });
    limiter.acquire();
    EXPECT_TRUE(waits.empty());
    limiter.acquire();
    ASSERT_EQ(waits.size(), 1u);
    EXPECT_NEAR(duration<double>(waits[0]).count(), 1.0, 1e-6);
    now += seconds{5};
    limiter.acquire();
    EXPECT_EQ(waits.size(), 1u);
    EXPECT_THROW(RateLimiter(0.0, 1.0), Error);
}

TEST(Cassette, ReplayFileMissingIsAnError) {
    EXPECT_THROW(Cassette::load("/nonexistent/cassette.json", CassetteMode::Replay), Error);
    auto fresh = Cassette::load("/nonexistent/cassette.json", CassetteMode::Record);
    EXPECT_EQ(fresh->size(), 0u);
}

TEST(Cassette, PutKeepsFirstEntry) {
    Cassette c(CassetteMode::Record);
    EXPECT_TRUE(c.put("fp", Json{{"q", 1}}, Json{{"a", 1}}));
    EXPECT_FALSE(c.put("fp", Json{{"q", 1}}, Json{{"a", 2}}));
    EXPECT_EQ((*c.find("fp"))["a"], 1);
}
