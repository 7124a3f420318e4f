#pragma once

#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "quorum/llm_gateway.hpp"
#include "quorum/news_pipeline.hpp"

namespace quorum {

/// Whether the news analyst needs external search for an article.
struct Judgment {
    int value = 1;  // 0: background knowledge suffices, 1: search
    std::string rationale;
    std::vector<std::string> queries;
    bool fail_open = false;  // reply was unusable; searching by title
};

struct InfoItem {
    std::string url;
    std::string snippet;
    int rank = 0;  // 1-based

    friend bool operator==(const InfoItem&, const InfoItem&) = default;
};

struct InfoSet {
    std::string query;
    std::vector<InfoItem> items;

    /// A search that came back empty is valid but worth flagging.
    bool degenerate() const noexcept { return items.empty(); }
    friend bool operator==(const InfoSet&, const InfoSet&) = default;
};

Json to_json(const InfoSet& info);
InfoSet info_set_from_json(const Json& j);

/// Trim, collapse internal whitespace, ASCII case-fold. Throws
/// InvalidArgument when nothing is left.
std::string normalize_query(std::string_view query);

class SearchClient {
public:
    virtual ~SearchClient() = default;
    /// Ranked results, best first. Throws Error(SearchClientError).
    virtual std::vector<InfoItem> search(const std::string& query, std::size_t n) = 0;
};

/// Serves canned results from a JSON object `{query: [{url, snippet}]}`.
/// Keys are normalized on load; unknown queries return no results.
class FileStubSearchClient : public SearchClient {
public:
    static std::unique_ptr<FileStubSearchClient> parse(std::string_view json);
    static std::unique_ptr<FileStubSearchClient> load(const std::filesystem::path& path);

    std::vector<InfoItem> search(const std::string& query, std::size_t n) override;
    std::size_t calls() const noexcept { return calls_.load(); }
    std::vector<std::string> queries() const;

private:
    std::map<std::string, std::vector<InfoItem>> results_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex mu_;
    std::vector<std::string> seen_;
};

/// POSTs `{"query", "n"}` to an endpoint answering `{"results": [{url, snippet}]}`.
class HttpSearchClient : public SearchClient {
public:
    HttpSearchClient(std::string endpoint, std::string api_key) : endpoint_(std::move(endpoint)), key_(std::move(api_key)) {}
    std::vector<InfoItem> search(const std::string& query, std::size_t n) override;

private:
    std::string endpoint_;
    std::string key_;
};

/// Normalized query -> InfoSet. Readers run concurrently; concurrent misses
/// on one key share a single client call.
class QueryCache {
public:
    QueryCache() = default;

    static std::shared_ptr<QueryCache> load(const std::filesystem::path& path);  // missing file: empty cache
    void save(const std::filesystem::path& path) const;
    std::string dump() const;

    std::optional<InfoSet> lookup(const std::string& normalized) const;
    std::size_t size() const;
    std::size_t hits() const noexcept { return hits_.load(); }
    std::size_t misses() const noexcept { return misses_.load(); }

    template <typename Fetch>
    InfoSet get_or_fetch(const std::string& normalized, Fetch&& fetch);

private:
    mutable std::shared_mutex entries_mu_;
    std::map<std::string, InfoSet> entries_;
    std::mutex inflight_mu_;
    std::map<std::string, std::shared_future<InfoSet>> inflight_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

template <typename Fetch>
InfoSet QueryCache::get_or_fetch(const std::string& normalized, Fetch&& fetch) {
    if (auto hit = lookup(normalized)) {
        ++hits_;
        return *hit;
    }
    std::promise<InfoSet> promise;
    {
        std::unique_lock lock(inflight_mu_);
        if (auto hit = lookup(normalized)) {
            ++hits_;
            return *hit;
        }
        if (auto it = inflight_.find(normalized); it != inflight_.end()) {
            auto pending = it->second;
            lock.unlock();
            ++hits_;
            return pending.get();
        }
        inflight_.emplace(normalized, promise.get_future().share());
        ++misses_;
    }
    try {
        InfoSet result = fetch();
        {
            std::lock_guard lock(inflight_mu_);
            {
                std::unique_lock write(entries_mu_);
                entries_.emplace(normalized, result);
            }
            inflight_.erase(normalized);
        }
        promise.set_value(result);
        return result;
    } catch (...) {
        {
            std::lock_guard lock(inflight_mu_);
            inflight_.erase(normalized);
        }
        promise.set_exception(std::current_exception());
        throw;
    }
}

/// Cached search: at most one client call per distinct normalized query.
InfoSet search(const std::string& query, std::size_t n_max, QueryCache& cache, SearchClient& client);

/// One LLM call. An unusable reply fails open: value 1 with the title as query.
Judgment judge_sufficiency(const CleanArticle& article, const std::string& ticker, LlmGateway& gateway);

enum class RagMode { Off, Always, Adaptive };

std::string_view to_string(RagMode m) noexcept;
RagMode parse_rag_mode(std::string_view s);

struct RetrievalOptions {
    RagMode mode = RagMode::Adaptive;
    std::size_t n_max = 5;
    std::size_t max_queries = 3;
};

struct RetrievalOutcome {
    Judgment judgment;
    std::optional<InfoSet> info;  // empty when no search was made
};

/// Off: never search. Always: search the title. Adaptive: judge first, then
/// union the per-query results, deduplicated by url and re-ranked.
RetrievalOutcome retrieve_if_needed(const CleanArticle& article, const std::string& ticker, LlmGateway* gateway,
                                    QueryCache& cache, SearchClient& client, const RetrievalOptions& options = {});

}  // namespace quorum
