#pragma once

#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "quorum/experiment.hpp"

namespace httplib {
class Server;
}

namespace quorum {

/// One investor's walk through the data, a trading day at a time.
struct Session {
    std::string id;
    std::uint64_t ordinal = 0;
    std::string ticker;
    Date cursor;
    std::optional<RiskProfile> profile;
    CorrectionState state;
    PortfolioState portfolio;
    std::optional<ExpertDecision> pending;  // decided, not yet advanced
    bool feedback_given = false;
    std::vector<ExpertDecision> decisions;  // executed decisions
    std::vector<Trade> trades;
    EquityCurve equity;
};

Json to_json(const Session& s);
Session session_from_json(const Json& j);

struct ServiceResponse {
    int status = 200;
    Json body;
};

/// Session protocol: preference -> decide -> feedback (optional) -> advance.
/// Requests for different sessions run concurrently; requests for one
/// session are serialized. Every mutation writes a snapshot to `state_dir`
/// (when set), and snapshots found there are loaded on construction.
class Service {
public:
    Service(ExperimentConfig config, RunContext context, std::filesystem::path state_dir = {});
    ~Service();

    ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& query = {});

    /// Binds and serves on a background thread; port 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    std::size_t session_count() const;

private:
    struct Slot {
        std::mutex mu;
        Session session;
    };
    template <typename V>
    struct Memo {
        std::mutex mu;
        std::map<std::string, std::shared_future<std::shared_ptr<const V>>> entries;
    };

    ServiceResponse create_session(const Json& body);
    ServiceResponse set_preference(Slot& slot, const Json& body);
    ServiceResponse get_signals(Slot& slot, const std::map<std::string, std::string>& query);
    ServiceResponse decide_now(Slot& slot, const Json& body);
    ServiceResponse feedback(Slot& slot, const Json& body);
    ServiceResponse advance(Slot& slot);

    std::shared_ptr<Slot> find(const std::string& id) const;
    std::shared_ptr<const PreparedTicker> prepared(const std::string& ticker);
    std::shared_ptr<const DayRecord> day(const std::string& ticker, const Date& origin);
    void persist(const Session& s) const;
    void load_snapshots();
    void install_routes();

    ExperimentConfig config_;
    RunContext context_;
    std::filesystem::path state_dir_;

    mutable std::shared_mutex sessions_mu_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::uint64_t next_ordinal_ = 1;

    Memo<PreparedTicker> tickers_;
    Memo<DayRecord> days_;

    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace quorum
