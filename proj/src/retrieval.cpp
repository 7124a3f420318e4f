#include "quorum/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "quorum/prompts.hpp"

namespace quorum {

Json to_json(const InfoSet& info) {
    Json items = Json::array();
    for (const auto& i : info.items) items.push_back({{"url", i.url}, {"snippet", i.snippet}, {"rank", i.rank}});
    return {{"query", info.query}, {"items", std::move(items)}};
}

InfoSet info_set_from_json(const Json& j) {
    InfoSet out;
    out.query = j.value("query", "");
    if (j.contains("items")) {
        for (const auto& i : j["items"]) {
            out.items.push_back({i.at("url").get<std::string>(), i.value("snippet", ""), i.value("rank", 0)});
        }
    }
    return out;
}

std::string normalize_query(std::string_view query) {
    std::string out;
    bool pending_space = false;
    for (char ch : query) {
        auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += static_cast<char>(std::tolower(c));
    }
    if (out.empty()) throw Error(Errc::InvalidArgument, "search query is empty");
    return out;
}

namespace {

std::vector<InfoItem> parse_result_list(const Json& list) {
    if (!list.is_array()) throw Error(Errc::SearchClientError, "results must be a list");
    std::vector<InfoItem> out;
    int rank = 0;
    for (const auto& r : list) {
        if (!r.is_object() || !r.contains("url") || !r["url"].is_string()) {
            throw Error(Errc::SearchClientError, "result without url");
        }
        out.push_back({r["url"].get<std::string>(), r.value("snippet", ""), ++rank});
    }
    return out;
}

}  // namespace

std::unique_ptr<FileStubSearchClient> FileStubSearchClient::parse(std::string_view json) {
    Json doc;
    try {
        doc = Json::parse(json);
    } catch (const Json::parse_error& e) {
        throw Error(Errc::SearchClientError, std::string("search fixture is not JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(Errc::SearchClientError, "search fixture must be an object");
    auto client = std::make_unique<FileStubSearchClient>();
    for (const auto& [query, list] : doc.items()) client->results_[normalize_query(query)] = parse_result_list(list);
    return client;
}

std::unique_ptr<FileStubSearchClient> FileStubSearchClient::load(const std::filesystem::path& path) {
    return parse(read_file(path));
}

std::vector<InfoItem> FileStubSearchClient::search(const std::string& query, std::size_t n) {
    ++calls_;
    auto key = normalize_query(query);
    {
        std::lock_guard lock(mu_);
        seen_.push_back(key);
    }
    auto it = results_.find(key);
    if (it == results_.end()) return {};
    std::vector<InfoItem> out(it->second.begin(), it->second.begin() + std::min(n, it->second.size()));
    return out;
}

std::vector<std::string> FileStubSearchClient::queries() const {
    std::lock_guard lock(mu_);
    return seen_;
}

std::vector<InfoItem> HttpSearchClient::search(const std::string& query, std::size_t n) {
    Json res;
    try {
        res = post_json(endpoint_, {{"query", query}, {"n", n}}, key_);
    } catch (const ProviderError& e) {
        throw Error(Errc::SearchClientError, e.what());
    }
    auto out = parse_result_list(res.value("results", Json::array()));
    if (out.size() > n) out.resize(n);
    return out;
}

std::shared_ptr<QueryCache> QueryCache::load(const std::filesystem::path& path) {
    auto cache = std::make_shared<QueryCache>();
    if (!std::filesystem::exists(path)) return cache;
    Json doc;
    try {
        doc = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw Error(Errc::IoError, path.string() + ": " + e.what());
    }
    for (const auto& [key, value] : doc.items()) cache->entries_.emplace(key, info_set_from_json(value));
    return cache;
}

std::string QueryCache::dump() const {
    Json doc = Json::object();
    std::shared_lock lock(entries_mu_);
    for (const auto& [key, info] : entries_) doc[key] = to_json(info);
    return doc.dump(2) + "\n";
}

void QueryCache::save(const std::filesystem::path& path) const { write_file(path, dump()); }

std::optional<InfoSet> QueryCache::lookup(const std::string& normalized) const {
    std::shared_lock lock(entries_mu_);
    auto it = entries_.find(normalized);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::size_t QueryCache::size() const {
    std::shared_lock lock(entries_mu_);
    return entries_.size();
}

InfoSet search(const std::string& query, std::size_t n_max, QueryCache& cache, SearchClient& client) {
    if (n_max == 0) throw Error(Errc::InvalidArgument, "n_max must be >= 1");
    auto key = normalize_query(query);
    InfoSet info = cache.get_or_fetch(key, [&] {
        InfoSet fresh{key, client.search(key, n_max)};
        if (fresh.items.size() > n_max) fresh.items.resize(n_max);
        for (std::size_t i = 0; i < fresh.items.size(); ++i) fresh.items[i].rank = static_cast<int>(i + 1);
        return fresh;
    });
    if (info.items.size() > n_max) info.items.resize(n_max);
    return info;
}

Judgment judge_sufficiency(const CleanArticle& article, const std::string& ticker, LlmGateway& gateway) {
    static const Schema schema{{
        {"need_search", FieldType::Boolean},
        {"queries", FieldType::StringList, false},
        {"rationale", FieldType::String, false},
    }};
    PromptVars vars{{"ticker", ticker},
                    {"date", article.original.date.iso()},
                    {"title", article.original.title},
                    {"text", article.cleaned_text}};
    Judgment j;
    try {
        auto res = gateway.complete_structured(build_prompt("judge_sufficiency.v1", vars), schema);
        j.value = res.record["need_search"].get<bool>() ? 1 : 0;
        j.rationale = res.record.value("rationale", "");
        if (j.value == 1 && res.record.contains("queries")) {
            for (const auto& q : res.record["queries"]) {
                auto text = q.get<std::string>();
                if (text.find_first_not_of(" \t\r\n") != std::string::npos) j.queries.push_back(text);
            }
        }
    } catch (const Error& e) {
        if (e.code() != Errc::UnparseableAfterRepair) throw;
        j.value = 1;
        j.fail_open = true;
        j.rationale = "judgment reply unusable; searching by title";
    }
    if (j.value == 1 && j.queries.empty()) j.queries.push_back(article.original.title);
    return j;
}

std::string_view to_string(RagMode m) noexcept {
    switch (m) {
        case RagMode::Off: return "off";
        case RagMode::Always: return "always";
        case RagMode::Adaptive: return "adaptive";
    }
    return "adaptive";
}

RagMode parse_rag_mode(std::string_view s) {
    if (s == "off") return RagMode::Off;
    if (s == "always") return RagMode::Always;
    if (s == "adaptive") return RagMode::Adaptive;
    throw Error(Errc::ConfigError, "unknown rag mode '" + std::string(s) + "'");
}

RetrievalOutcome retrieve_if_needed(const CleanArticle& article, const std::string& ticker, LlmGateway* gateway,
                                    QueryCache& cache, SearchClient& client, const RetrievalOptions& options) {
    RetrievalOutcome out;
    switch (options.mode) {
        case RagMode::Off:
            out.judgment = {0, "retrieval disabled", {}, false};
            return out;
        case RagMode::Always:
            out.judgment = {1, "retrieval forced", {article.original.title}, false};
            break;
        case RagMode::Adaptive:
            if (!gateway) throw Error(Errc::InvalidArgument, "adaptive retrieval needs an LLM gateway");
            out.judgment = judge_sufficiency(article, ticker, *gateway);
            if (out.judgment.value == 0) return out;
            break;
    }
    if (out.judgment.queries.size() > options.max_queries) out.judgment.queries.resize(options.max_queries);

    InfoSet merged;
    std::set<std::string> urls;
    for (std::size_t i = 0; i < out.judgment.queries.size(); ++i) {
        auto info = search(out.judgment.queries[i], options.n_max, cache, client);
        merged.query += (i ? "; " : "") + info.query;
        for (auto& item : info.items) {
            if (!urls.insert(item.url).second) continue;
            item.rank = static_cast<int>(merged.items.size() + 1);
            merged.items.push_back(std::move(item));
        }
    }
    out.info = std::move(merged);
    return out;
}

}  // namespace quorum
