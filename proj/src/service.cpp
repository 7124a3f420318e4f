#include "quorum/service.hpp"

#include <httplib.h>

#include <sstream>

namespace quorum {

namespace {

Json trade_json(const Trade& t) {
    return {{"date", t.date.iso()}, {"side", to_string(t.side)}, {"shares", t.shares},
            {"price", t.price},     {"cash_after", t.cash_after}, {"fee", t.fee}};
}

Date iso_date(const Json& j) {
    auto d = Date::parse_iso(j.get<std::string>());
    if (!d) throw Error(Errc::UnparseableDate, j.get<std::string>());
    return *d;
}

Json curve_json(const EquityCurve& c) {
    Json points = Json::array();
    for (const auto& p : c.points) points.push_back({{"date", p.date.iso()}, {"equity", p.equity}});
    return {{"points", points}};
}

Json portfolio_json(const PortfolioState& p, double close) {
    return {{"cash", p.cash}, {"shares", p.shares}, {"equity", p.equity(close)}};
}

Json opt_signal(const std::optional<AgentSignal>& s) { return s ? to_json(*s) : Json(nullptr); }

ServiceResponse fail(int status, std::string_view code, const std::string& message) {
    return {status, {{"code", code}, {"message", message}}};
}

int status_for(Errc code) {
    switch (code) {
        case Errc::EmptyPreference: return 403;
        case Errc::NoDecision: return 409;
        case Errc::CassetteMiss:
        case Errc::ProviderError:
        case Errc::SearchClientError: return 502;
        case Errc::IoError: return 500;
        default: return 400;
    }
}

template <typename V, typename Memo, typename Fn>
std::shared_ptr<const V> memoized(Memo& memo, const std::string& key, Fn&& compute) {
    std::promise<std::shared_ptr<const V>> promise;
    std::shared_future<std::shared_ptr<const V>> existing;
    {
        std::lock_guard lock(memo.mu);
        auto it = memo.entries.find(key);
        if (it != memo.entries.end()) {
            existing = it->second;
        } else {
            memo.entries.emplace(key, promise.get_future().share());
        }
    }
    if (existing.valid()) return existing.get();
    try {
        auto value = std::make_shared<const V>(compute());
        promise.set_value(value);
        return value;
    } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(memo.mu);
        memo.entries.erase(key);  // a later request may succeed
        throw;
    }
}

}  // namespace

Json to_json(const Session& s) {
    Json decisions = Json::array();
    for (const auto& d : s.decisions) decisions.push_back(to_json(d));
    Json trades = Json::array();
    for (const auto& t : s.trades) trades.push_back(trade_json(t));
    return {{"id", s.id},
            {"ordinal", s.ordinal},
            {"ticker", s.ticker},
            {"cursor", s.cursor.iso()},
            {"profile", s.profile ? to_json(*s.profile) : Json(nullptr)},
            {"state", to_json(s.state)},
            {"portfolio", {{"cash", s.portfolio.cash}, {"shares", s.portfolio.shares}}},
            {"pending", s.pending ? to_json(*s.pending) : Json(nullptr)},
            {"feedback_given", s.feedback_given},
            {"decisions", decisions},
            {"trades", trades},
            {"equity", curve_json(s.equity)}};
}

Session session_from_json(const Json& j) {
    Session s;
    s.id = j.at("id").get<std::string>();
    s.ordinal = j.at("ordinal").get<std::uint64_t>();
    s.ticker = j.at("ticker").get<std::string>();
    s.cursor = iso_date(j.at("cursor"));
    if (!j.at("profile").is_null()) s.profile = risk_profile_from_json(j["profile"]);
    s.state = correction_state_from_json(j.at("state"));
    s.portfolio.cash = j.at("portfolio").at("cash").get<double>();
    s.portfolio.shares = j.at("portfolio").at("shares").get<double>();
    if (!j.at("pending").is_null()) s.pending = expert_decision_from_json(j["pending"]);
    s.feedback_given = j.value("feedback_given", false);
    for (const auto& d : j.at("decisions")) s.decisions.push_back(expert_decision_from_json(d));
    for (const auto& t : j.at("trades")) {
        s.trades.push_back({iso_date(t.at("date")), parse_action(t.at("side").get<std::string>()),
                            t.at("shares").get<double>(), t.at("price").get<double>(),
                            t.at("cash_after").get<double>(), t.at("fee").get<double>()});
    }
    for (const auto& p : j.at("equity").at("points")) {
        s.equity.points.push_back({iso_date(p.at("date")), p.at("equity").get<double>()});
    }
    return s;
}

Service::Service(ExperimentConfig config, RunContext context, std::filesystem::path state_dir)
    : config_(std::move(config)), context_(std::move(context)), state_dir_(std::move(state_dir)) {
    if (!state_dir_.empty()) {
        std::filesystem::create_directories(state_dir_);
        load_snapshots();
    }
}

Service::~Service() { stop(); }

std::size_t Service::session_count() const {
    std::shared_lock lock(sessions_mu_);
    return sessions_.size();
}

void Service::load_snapshots() {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(state_dir_)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        Session s;
        try {
            s = session_from_json(Json::parse(read_file(f)));
        } catch (const std::exception& e) {
            throw Error(Errc::IoError, "unreadable session snapshot " + f.filename().string() + ": " + e.what());
        }
        next_ordinal_ = std::max(next_ordinal_, s.ordinal + 1);
        auto slot = std::make_shared<Slot>();
        slot->session = std::move(s);
        sessions_[slot->session.id] = slot;
    }
}

void Service::persist(const Session& s) const {
    if (state_dir_.empty()) return;
    auto tmp = state_dir_ / (s.id + ".json.tmp");
    write_file(tmp, to_json(s).dump(2) + "\n");
    std::filesystem::rename(tmp, state_dir_ / (s.id + ".json"));
}

std::shared_ptr<Service::Slot> Service::find(const std::string& id) const {
    std::shared_lock lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const PreparedTicker> Service::prepared(const std::string& ticker) {
    return memoized<PreparedTicker>(tickers_, ticker, [&] {
        for (const auto& in : config_.tickers) {
            if (in.ticker == ticker) return prepare_ticker(config_, in, context_);
        }
        throw Error(Errc::InvalidArgument, "unknown ticker '" + ticker + "'");
    });
}

std::shared_ptr<const DayRecord> Service::day(const std::string& ticker, const Date& origin) {
    auto t = prepared(ticker);
    return memoized<DayRecord>(days_, ticker + "/" + origin.iso(),
                               [&] { return evaluate_day(config_, *t, context_, config_.rag, origin); });
}

ServiceResponse Service::handle(const std::string& method, const std::string& path, const std::string& body,
                                const std::map<std::string, std::string>& query) {
    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string part; std::getline(ss, part, '/');) {
        if (!part.empty()) parts.push_back(part);
    }
    try {
        Json payload = Json::object();
        if (!body.empty()) {
            payload = Json::parse(body, nullptr, false);
            if (payload.is_discarded() || !payload.is_object()) {
                return fail(400, "InvalidArgument", "request body must be a JSON object");
            }
        }
        if (parts.size() == 1 && parts[0] == "health" && method == "GET") return {200, {{"status", "ok"}}};
        if (parts.empty() || parts[0] != "sessions") return fail(404, "NotFound", "no route for " + path);
        if (parts.size() == 1) {
            if (method == "POST") return create_session(payload);
            return fail(405, "MethodNotAllowed", method + " " + path);
        }
        auto slot = find(parts[1]);
        if (!slot) return fail(404, "UnknownSession", "no session '" + parts[1] + "'");
        const std::string action = parts.size() == 3 ? parts[2] : parts.size() == 2 ? "" : "?";
        std::lock_guard lock(slot->mu);
        if (action.empty() && method == "GET") return {200, to_json(slot->session)};
        if (action == "preference" && method == "PUT") return set_preference(*slot, payload);
        if (action == "signals" && method == "GET") return get_signals(*slot, query);
        if (action == "decide" && method == "POST") return decide_now(*slot, payload);
        if (action == "feedback" && method == "POST") return feedback(*slot, payload);
        if (action == "advance" && method == "POST") return advance(*slot);
        if (action == "equity" && method == "GET") return {200, curve_json(slot->session.equity)};
        return fail(404, "NotFound", "no route for " + method + " " + path);
    } catch (const Error& e) {
        return fail(status_for(e.code()), to_string(e.code()), e.what());
    } catch (const Json::exception& e) {
        return fail(400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
        return fail(500, "Internal", e.what());
    }
}

ServiceResponse Service::create_session(const Json& body) {
    if (!body.contains("ticker")) return fail(400, "MissingField", "ticker is required");
    const std::string ticker = body["ticker"].get<std::string>();
    auto t = prepared(ticker);
    const auto& cal = t->dataset.calendar;
    Date cursor = cal.front();
    for (const char* key : {"start_date", "start-date", "start"}) {
        if (!body.contains(key)) continue;
        auto d = Date::parse_iso(body[key].get<std::string>());
        if (!d) return fail(400, "UnparseableDate", "bad start date");
        auto a = attribute_to_trading_day(cal, *d);
        if (!a) return fail(400, "InvalidArgument", "start date is after the last trading day");
        cursor = *a;
    }
    auto slot = std::make_shared<Slot>();
    Session& s = slot->session;
    s.ticker = ticker;
    s.cursor = cursor;
    s.portfolio.cash = config_.initial_capital;
    s.equity.points.push_back({cursor, config_.initial_capital});
    {
        std::unique_lock lock(sessions_mu_);
        s.ordinal = next_ordinal_++;
        s.id = fingerprint(Json{{"session", s.ordinal}, {"seed", config_.seed}}).substr(0, 16);
        sessions_[s.id] = slot;
    }
    persist(s);
    return {201, {{"session_id", s.id}, {"ticker", s.ticker}, {"cursor", s.cursor.iso()}}};
}

ServiceResponse Service::set_preference(Slot& slot, const Json& body) {
    std::string text = body.value("text", "");
    auto profile = parse_risk_preference(text, context_.gateway.get());
    slot.session.profile = profile;
    persist(slot.session);
    return {200, to_json(profile)};
}

ServiceResponse Service::get_signals(Slot& slot, const std::map<std::string, std::string>& query) {
    Date date = slot.session.cursor;
    if (auto it = query.find("date"); it != query.end() && !it->second.empty()) {
        auto d = Date::parse_iso(it->second);
        if (!d) return fail(400, "UnparseableDate", "bad date '" + it->second + "'");
        if (slot.session.cursor < *d) return fail(400, "InvalidArgument", "date is after the session cursor");
        date = *d;
    }
    auto t = prepared(slot.session.ticker);
    auto rec = day(slot.session.ticker, date);
    Json gaps = Json::array();
    for (const auto& g : rec->gaps) gaps.push_back({{"agent", to_string(g.agent)}, {"reason", g.reason}});
    Json retrieval = nullptr;
    if (rec->retrieval) {
        const auto& r = *rec->retrieval;
        retrieval = {{"judgment", r.judgment.value},
                     {"rationale", r.judgment.rationale},
                     {"queries", r.judgment.queries},
                     {"fail_open", r.judgment.fail_open},
                     {"info", r.info ? to_json(*r.info) : Json(nullptr)}};
    }
    Json representative = nullptr;
    if (const auto* rep = t->representative_for(date)) {
        representative = {{"title", rep->article.original.title},
                          {"date", rep->article.original.date.iso()},
                          {"text", rep->article.cleaned_text},
                          {"group_size", rep->group_size}};
    }
    Json statement = t->statement_chain ? to_json(*t->statement_chain) : Json(nullptr);
    Json body{{"ticker", slot.session.ticker},
              {"date", rec->origin.iso()},
              {"target", rec->target.iso()},
              {"signals", {{"time", opt_signal(rec->time)}, {"news", opt_signal(rec->news)},
                           {"statement", opt_signal(rec->statement)}}},
              {"gaps", gaps},
              {"intermediates",
               {{"representative", representative},
                {"retrieval", retrieval},
                {"statement_chain", statement},
                {"token_confidence",
                 t->statement_chain && t->statement_chain->outlook.confidence_source == "logprob"
                     ? Json(t->statement_chain->outlook.confidence)
                     : Json(nullptr)}}}};
    return {200, body};
}

ServiceResponse Service::decide_now(Slot& slot, const Json& body) {
    Session& s = slot.session;
    if (!s.profile) return fail(403, "EmptyPreference", "set a risk preference before asking for a decision");
    if (s.pending) return fail(409, "DecisionPending", "advance before deciding again");
    auto t = prepared(s.ticker);
    if (!t->dataset.next_trading_day(s.cursor)) return fail(409, "EndOfData", "no trading day after the cursor");
    auto rec = day(s.ticker, s.cursor);
    DecideOptions opts;
    opts.mode = DecisionMode::Trading;
    opts.attitude = parse_attitude(body.value("attitude", "none"));
    opts.holdings = {s.portfolio.cash, s.portfolio.shares};
    opts.llm_fusion = config_.llm_fusion;
    opts.ticker = s.ticker;
    opts.date = s.cursor;
    s.pending = decide(rec->signals(), s.state, &*s.profile, context_.gateway.get(), opts);
    s.feedback_given = false;
    persist(s);
    return {200, to_json(*s.pending)};
}

ServiceResponse Service::feedback(Slot& slot, const Json& body) {
    Session& s = slot.session;
    if (!s.pending) return fail(409, "NoPendingDecision", "feedback needs a decision");
    if (s.feedback_given) return fail(409, "FeedbackGiven", "feedback already recorded for this decision");
    std::string text;
    for (const char* key : {"feedback", "text"}) {
        if (body.contains(key)) text = body[key].get<std::string>();
    }
    auto fb = parse_feedback(text);
    s.state = apply_feedback(s.state, fb, std::nullopt, *s.pending, context_.gateway.get());
    s.feedback_given = true;
    persist(s);
    return {200, to_json(s.state)};
}

ServiceResponse Service::advance(Slot& slot) {
    Session& s = slot.session;
    if (!s.pending) return fail(409, "NoDecision", "decide before advancing");
    auto t = prepared(s.ticker);
    const auto& prices = t->dataset.prices;
    auto next = t->dataset.next_trading_day(s.cursor);
    if (!next) return fail(409, "EndOfData", "no trading day after the cursor");
    const double close = prices.bars[*prices.index_of(s.cursor)].close;
    const double next_close = prices.bars[*prices.index_of(*next)].close;
    auto trade = execute_action(s.portfolio, s.cursor, s.pending->action, close, *s.profile);
    if (trade) s.trades.push_back(*trade);
    s.decisions.push_back(std::move(*s.pending));
    s.pending.reset();
    s.feedback_given = false;
    s.cursor = *next;
    s.equity.points.push_back({s.cursor, s.portfolio.equity(next_close)});
    persist(s);
    return {200,
            {{"cursor", s.cursor.iso()},
             {"portfolio", portfolio_json(s.portfolio, next_close)},
             {"trade", trade ? trade_json(*trade) : Json(nullptr)}}};
}

void Service::install_routes() {
    server_ = std::make_unique<httplib::Server>();
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) query[k] = v;
        auto out = handle(req.method, req.path, req.body, query);
        res.status = out.status;
        res.set_content(out.body.dump(), "application/json; charset=utf-8");
    };
    server_->Get(".*", route);
    server_->Post(".*", route);
    server_->Put(".*", route);
    server_->Delete(".*", route);
}

int Service::start(const std::string& host, int port) {
    install_routes();
    int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::IoError, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::listen(const std::string& host, int port) {
    install_routes();
    if (!server_->listen(host, port)) throw Error(Errc::IoError, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace quorum
