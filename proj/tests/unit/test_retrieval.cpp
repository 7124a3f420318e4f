#include <gtest/gtest.h>

#include <thread>

#include "quorum/retrieval.hpp"
#include "scripted_provider.hpp"

using namespace quorum;

namespace {

const char* kStub = R"({
  "Quillon  HRBR": [{"url": "u1", "snippet": "one"}, {"url": "u2", "snippet": "two"}],
  "orlenko hrbr": [{"url": "u3", "snippet": "three"}, {"url": "u1", "snippet": "one"}]
})";

LlmGateway scripted_gateway(std::unique_ptr<quorum::testing::ScriptedProvider> p = nullptr) {
    LlmGateway::Options o;
    o.mode = LlmMode::Live;
    o.requests_per_minute = 1e9;
    if (!p) p = std::make_unique<quorum::testing::ScriptedProvider>();
    return LlmGateway(nullptr, std::move(p), o);
}

CleanArticle clean(std::string title, std::string text) {
    return strip_bias({std::move(title), {2024, 3, 12}, std::move(text)}, BiasRuleSet{});
}

class SlowClient : public SearchClient {
public:
    std::atomic<int> calls{0};
    std::vector<InfoItem> search(const std::string& q, std::size_t) override {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        return {{"url/" + q, "snippet", 1}};
    }
};

}  // namespace

TEST(Query, Normalization) {
    EXPECT_EQ(normalize_query("  Quillon \t  HRBR "), "quillon hrbr");
    EXPECT_THROW(normalize_query("   "), Error);
}

TEST(StubClient, NormalizesKeysAndTruncates) {
    auto client = FileStubSearchClient::parse(kStub);
    auto items = client->search("quillon hrbr", 1);
    ASSERT_EQ(items.size(), 1u);
    EXPECT_EQ(items[0].url, "u1");
    EXPECT_EQ(items[0].rank, 1);
    EXPECT_TRUE(client->search("unknown", 5).empty());
    EXPECT_EQ(client->calls(), 2u);
}

TEST(Cache, OneClientCallPerNormalizedQuery) {
    auto client = FileStubSearchClient::parse(kStub);
    QueryCache cache;
    auto a = search("Quillon HRBR", 5, cache, *client);
    auto b = search("  quillon   hrbr", 5, cache, *client);
    EXPECT_EQ(a, b);
    EXPECT_EQ(client->calls(), 1u);
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_EQ(cache.misses(), 1u);
    EXPECT_TRUE(search("nothing here", 5, cache, *client).degenerate());
}

TEST(Cache, ConcurrentMissesShareOneCall) {
    SlowClient client;
    QueryCache cache;
    std::vector<std::thread> threads;
    std::vector<InfoSet> results(8);
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&, i] { results[i] = search("same query", 5, cache, client); });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(client.calls.load(), 1);
    for (const auto& r : results) EXPECT_EQ(r, results[0]);
}

TEST(Cache, PersistsAcrossRuns) {
    auto path = std::filesystem::temp_directory_path() / "quorum_query_cache.json";
    std::filesystem::remove(path);
    auto client = FileStubSearchClient::parse(kStub);
    {
        auto cache = QueryCache::load(path);
        EXPECT_EQ(cache->size(), 0u);
        search("orlenko hrbr", 5, *cache, *client);
        cache->save(path);
    }
    auto warm = QueryCache::load(path);
    search("Orlenko HRBR", 5, *warm, *client);
    EXPECT_EQ(client->calls(), 1u);
    EXPECT_EQ(warm->hits(), 1u);
    std::filesystem::remove(path);
}

TEST(Retrieve, OffNeverSearches) {
    auto client = FileStubSearchClient::parse(kStub);
    QueryCache cache;
    auto out = retrieve_if_needed(clean("t", "Quillon"), "HRBR", nullptr, cache, *client, {RagMode::Off});
    EXPECT_EQ(out.judgment.value, 0);
    EXPECT_FALSE(out.info);
    EXPECT_EQ(client->calls(), 0u);
}

TEST(Retrieve, AlwaysSearchesTheTitle) {
    auto client = FileStubSearchClient::parse(kStub);
    QueryCache cache;
    auto out = retrieve_if_needed(clean("Quillon HRBR", "text"), "HRBR", nullptr, cache, *client, {RagMode::Always});
    ASSERT_TRUE(out.info);
    EXPECT_EQ(out.info->items.size(), 2u);
}

TEST(Retrieve, AdaptiveUnionDeduplicatesAndReranks) {
    auto gw = scripted_gateway();
    auto client = FileStubSearchClient::parse(kStub);
    QueryCache cache;
    auto out = retrieve_if_needed(clean("Orlenko joins", "Orlenko joins from Quillon."), "HRBR", &gw, cache, *client);
    EXPECT_EQ(out.judgment.value, 1);
    ASSERT_TRUE(out.info);
    std::vector<std::string> urls;
    std::vector<int> ranks;
    for (const auto& i : out.info->items) {
        urls.push_back(i.url);
        ranks.push_back(i.rank);
    }
    EXPECT_EQ(urls, (std::vector<std::string>{"u3", "u1", "u2"}));
    EXPECT_EQ(ranks, (std::vector<int>{1, 2, 3}));

    auto none = retrieve_if_needed(clean("Plant opens", "A familiar story."), "HRBR", &gw, cache, *client);
    EXPECT_EQ(none.judgment.value, 0);
    EXPECT_FALSE(none.info);
    EXPECT_THROW(retrieve_if_needed(clean("t", "x"), "HRBR", nullptr, cache, *client), Error);
}

TEST(Retrieve, UnusableJudgmentFailsOpen) {
    auto p = std::make_unique<quorum::testing::ScriptedProvider>();
    p->queue("judge_sufficiency.v1", "maybe?");
    p->queue("judge_sufficiency.v1.repair", "still not sure");
    auto gw = scripted_gateway(std::move(p));
    auto client = FileStubSearchClient::parse(kStub);
    QueryCache cache;
    auto out = retrieve_if_needed(clean("Quillon HRBR", "text"), "HRBR", &gw, cache, *client);
    EXPECT_TRUE(out.judgment.fail_open);
    EXPECT_EQ(out.judgment.queries, (std::vector<std::string>{"Quillon HRBR"}));
    ASSERT_TRUE(out.info);
    EXPECT_FALSE(out.info->degenerate());
}

TEST(Retrieve, QueryCountIsCapped) {
    auto p = std::make_unique<quorum::testing::ScriptedProvider>();
    p->queue("judge_sufficiency.v1", R"({"need_search": true, "queries": ["a", "b", "c", "d", "e"]})");
    auto gw = scripted_gateway(std::move(p));
    auto client = FileStubSearchClient::parse(kStub);
    QueryCache cache;
    RetrievalOptions opts;
    opts.max_queries = 2;
    retrieve_if_needed(clean("t", "x"), "HRBR", &gw, cache, *client, opts);
    EXPECT_EQ(client->calls(), 2u);
}

TEST(InfoSet, JsonRoundTrip) {
    InfoSet s{"q", {{"u", "s", 1}}};
    EXPECT_EQ(info_set_from_json(to_json(s)), s);
}
