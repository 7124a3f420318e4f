#include "quorum/news_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "quorum/parallel.hpp"
#include "quorum/prompts.hpp"

namespace quorum {

namespace {

std::string_view trim(std::string_view s) {
    auto ws = [](char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

void BiasRuleSet::add_delete(std::string pattern) {
    BiasRule r;
    r.pattern = std::move(pattern);
    try {
        r.compiled = std::regex(r.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw Error(Errc::InvalidRule, "pattern '" + r.pattern + "': " + e.what());
    }
    rules_.push_back(std::move(r));
}

void BiasRuleSet::add_replace(std::string pattern, std::string replacement) {
    add_delete(std::move(pattern));
    rules_.back().replace = true;
    rules_.back().replacement = std::move(replacement);
}

BiasRuleSet BiasRuleSet::parse(std::string_view text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(Errc::InvalidRule, std::string("rule file is not JSON: ") + e.what());
    }
    if (!doc.is_array()) throw Error(Errc::InvalidRule, "rule file must be a JSON list");
    BiasRuleSet set;
    for (const auto& r : doc) {
        if (!r.is_object() || !r.contains("pattern") || !r["pattern"].is_string()) {
            throw Error(Errc::InvalidRule, "every rule needs a string 'pattern'");
        }
        std::string action = r.value("action", "delete");
        if (action == "delete") {
            set.add_delete(r["pattern"].get<std::string>());
        } else if (action == "replace") {
            set.add_replace(r["pattern"].get<std::string>(), r.value("replacement", ""));
        } else {
            throw Error(Errc::InvalidRule, "unknown rule action '" + action + "'");
        }
    }
    return set;
}

BiasRuleSet BiasRuleSet::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string apply_edits(std::string text, const std::vector<TextEdit>& edits) {
    for (const auto& e : edits) {
        if (e.offset > text.size() || e.length > text.size() - e.offset) {
            throw Error(Errc::InvalidArgument, "edit outside text");
        }
        text.replace(e.offset, e.length, e.replacement);
    }
    return text;
}

CleanArticle strip_bias(const NewsArticle& article, const BiasRuleSet& rules) {
    CleanArticle out{article, article.text, {}, {}};
    for (std::size_t r = 0; r < rules.rules().size(); ++r) {
        const auto& rule = rules.rules()[r];
        std::string next;
        std::size_t last = 0;
        const std::string& cur = out.cleaned_text;
        for (auto it = std::sregex_iterator(cur.begin(), cur.end(), rule.compiled); it != std::sregex_iterator();
             ++it) {
            const auto& m = *it;
            if (m.length() == 0) continue;
            const auto pos = static_cast<std::size_t>(m.position());
            next.append(cur, last, pos - last);
            std::string replacement = rule.replace ? m.format(rule.replacement) : std::string{};
            // Offset is relative to the text after the edits already recorded.
            out.edits.push_back({next.size(), static_cast<std::size_t>(m.length()), replacement,
                                 "rule:" + std::to_string(r)});
            next += replacement;
            last = pos + static_cast<std::size_t>(m.length());
        }
        next.append(cur, last, std::string::npos);
        out.cleaned_text = std::move(next);
    }
    return out;
}

CleanArticle reflect_clean(const CleanArticle& article, LlmGateway& gateway) {
    CleanArticle out = article;
    PromptVars vars{{"title", article.original.title}, {"text", article.cleaned_text}};
    Completion first = gateway.complete(build_prompt("reflect_identify.v1", vars));

    std::string_view reply = trim(first.text);
    std::string head{reply.substr(0, 4)};
    for (auto& c : head) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (head == "NONE" && reply.find('{') == std::string_view::npos) return out;

    auto parsed = extract_json_object(first.text);
    if (!parsed || !parsed->contains("edits") || !(*parsed)["edits"].is_array()) {
        out.warnings.push_back("reflect: malformed suggestion list");
        return out;
    }
    struct Suggestion {
        std::string find, replace;
    };
    std::vector<Suggestion> suggestions;
    for (const auto& e : (*parsed)["edits"]) {
        if (!e.is_object() || !e.contains("find") || !e["find"].is_string() ||
            (e.contains("replace") && !e["replace"].is_string())) {
            out.warnings.push_back("reflect: malformed suggestion list");
            return out;
        }
        suggestions.push_back({e["find"].get<std::string>(), e.value("replace", "")});
    }
    if (suggestions.empty()) return out;

    // Locate every suggestion before spending the second call.
    std::string expected = article.cleaned_text;
    std::vector<TextEdit> edits;
    for (const auto& s : suggestions) {
        auto pos = s.find.empty() ? std::string::npos : expected.find(s.find);
        if (pos == std::string::npos) {
            out.warnings.push_back("reflect: suggestion not found in text: \"" + s.find + "\"");
            return out;
        }
        edits.push_back({pos, s.find.size(), s.replace, "llm"});
        expected.replace(pos, s.find.size(), s.replace);
    }

    Json edit_list = Json::array();
    for (const auto& s : suggestions) edit_list.push_back({{"find", s.find}, {"replace", s.replace}});
    vars["edits"] = edit_list.dump(2);
    Completion second = gateway.complete(build_prompt("reflect_apply.v1", vars));

    // The model's rewrite is accepted only when it is exactly the recorded
    // edits applied; otherwise the edits are applied locally.
    if (trim(second.text) != trim(expected)) {
        out.warnings.push_back("reflect: model rewrite differs from suggested edits; applied edits directly");
    }
    out.cleaned_text = std::move(expected);
    out.edits.insert(out.edits.end(), edits.begin(), edits.end());
    return out;
}

// ---------------------------------------------------------------------------

namespace {

bool decode_utf8(std::string_view s, std::size_t& i, char32_t& cp) {
    auto b0 = static_cast<unsigned char>(s[i]);
    int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + static_cast<std::size_t>(len) > s.size()) {
        ++i;
        return false;
    }
    cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (int k = 1; k < len; ++k) {
        auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
        if ((b >> 6) != 0x2) {
            ++i;
            return false;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += static_cast<std::size_t>(len);
    return true;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_han(char32_t c) {
    return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0xF900 && c <= 0xFAFF) ||
           (c >= 0x20000 && c <= 0x2A6DF);
}

bool is_separator(char32_t c) {
    if (c < 0x80) return !((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'));
    if (c < 0xC0) return c != 0xAA && c != 0xB5 && c != 0xBA;
    if (c == 0xD7 || c == 0xF7) return true;
    return (c >= 0x2000 && c <= 0x2BFF) || (c >= 0x2E00 && c <= 0x2E7F) || (c >= 0x3000 && c <= 0x303F) ||
           (c >= 0xFE30 && c <= 0xFE4F) || (c >= 0xFF00 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
           (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65) || c == 0xFEFF;
}

char32_t fold(char32_t c) {
    if (c >= 0xFF10 && c <= 0xFF5A) c -= 0xFEE0;  // fullwidth ASCII
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x131 && c != 0x138 && c != 0x149 && c != 0x178) {
        bool odd_lower = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
        if (odd_lower) return (c % 2 == 1) ? c + 1 : c;
        return (c % 2 == 0) ? c + 1 : c;
    }
    return c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string word;
    std::vector<char32_t> han;

    auto flush_word = [&] {
        if (!word.empty()) tokens.push_back(std::move(word));
        word.clear();
    };
    auto flush_han = [&] {
        if (han.size() == 1) {
            std::string t;
            append_utf8(t, han[0]);
            tokens.push_back(std::move(t));
        }
        for (std::size_t i = 0; i + 1 < han.size(); ++i) {
            std::string t;
            append_utf8(t, han[i]);
            append_utf8(t, han[i + 1]);
            tokens.push_back(std::move(t));
        }
        han.clear();
    };

    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = 0;
        if (!decode_utf8(text, i, cp) || is_separator(cp)) {
            flush_word();
            flush_han();
            continue;
        }
        if (is_han(cp)) {
            flush_word();
            han.push_back(cp);
        } else {
            flush_han();
            append_utf8(word, fold(cp));
        }
    }
    flush_word();
    flush_han();
    return tokens;
}

double DocVector::norm() const {
    double s = 0.0;
    for (const auto& [_, w] : weights) s += w * w;
    return std::sqrt(s);
}

double cosine(const DocVector& a, const DocVector& b) {
    double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    double dot = 0.0;
    auto ia = a.weights.begin();
    auto ib = b.weights.begin();
    while (ia != a.weights.end() && ib != b.weights.end()) {
        if (ia->first < ib->first) ++ia;
        else if (ib->first < ia->first) ++ib;
        else {
            dot += ia->second * ib->second;
            ++ia;
            ++ib;
        }
    }
    return dot / (na * nb);
}

std::vector<DocVector> vectorize(const std::vector<std::string>& texts) {
    const double n = static_cast<double>(texts.size());
    std::vector<std::map<std::string, double>> counts(texts.size());
    std::map<std::string, double> df;
    for (std::size_t d = 0; d < texts.size(); ++d) {
        for (auto& t : tokenize(texts[d])) counts[d][t] += 1.0;
        for (const auto& [term, _] : counts[d]) df[term] += 1.0;
    }
    std::vector<DocVector> out(texts.size());
    for (std::size_t d = 0; d < texts.size(); ++d) {
        out[d].article_id = d;
        double sq = 0.0;
        for (const auto& [term, tf] : counts[d]) {
            double w = tf * (std::log((1.0 + n) / (1.0 + df[term])) + 1.0);
            out[d].weights.emplace(term, w);
            sq += w * w;
        }
        if (sq > 0.0) {
            double norm = std::sqrt(sq);
            for (auto& [_, w] : out[d].weights) w /= norm;
        }
    }
    return out;
}

std::vector<DocVector> vectorize(const std::vector<CleanArticle>& corpus) {
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& a : corpus) texts.push_back(a.cleaned_text);
    return vectorize(texts);
}

std::vector<std::vector<double>> densify(const std::vector<DocVector>& docs) {
    std::map<std::string, std::size_t> vocab;
    for (const auto& d : docs) {
        for (const auto& [term, _] : d.weights) vocab.emplace(term, 0);
    }
    std::size_t idx = 0;
    for (auto& [_, i] : vocab) i = idx++;
    std::vector<std::vector<double>> rows(docs.size(), std::vector<double>(vocab.size(), 0.0));
    for (std::size_t r = 0; r < docs.size(); ++r) {
        for (const auto& [term, w] : docs[r].weights) rows[r][vocab[term]] = w;
    }
    return rows;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                    int max_iter) {
    const std::size_t n = points.size();
    if (n == 0 || k == 0) throw Error(Errc::InvalidArgument, "kmeans needs points and k >= 1");
    k = std::min(k, n);
    std::mt19937_64 rng(seed);

    // k-means++ seeding.
    std::vector<std::size_t> chosen;
    chosen.push_back(std::min(n - 1, static_cast<std::size_t>(unit(rng) * static_cast<double>(n))));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (chosen.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], sq_dist(points[i], points[chosen.back()]));
            total += nearest[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double r = unit(rng) * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += nearest[i];
                if (nearest[i] > 0.0 && r < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick == n) {  // rounding at the tail
                for (std::size_t i = n; i-- > 0;) {
                    if (nearest[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) pick = i;
            }
        }
        chosen.push_back(pick);
    }

    KMeansResult res;
    for (auto c : chosen) res.centroids.push_back(points[c]);
    res.assignment.assign(n, 0);
    const std::size_t dim = points.front().size();

    for (int it = 0; it < max_iter; ++it) {
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                double d = sq_dist(points[i], res.centroids[c]);
                if (d < best) {
                    best = d;
                    res.assignment[i] = c;
                }
            }
            objective += best;
        }
        res.objective_trace.push_back(objective);
        res.iterations = it + 1;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = res.assignment[i];
            ++sizes[c];
            for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (sizes[c] == 0) continue;  // empty cluster keeps its centroid
            for (auto& v : sums[c]) v /= static_cast<double>(sizes[c]);
            shift = std::max(shift, std::sqrt(sq_dist(sums[c], res.centroids[c])));
            res.centroids[c] = std::move(sums[c]);
        }
        if (shift < 1e-9) break;
    }
    return res;
}

std::size_t select_representative_index(const std::vector<CleanArticle>& articles, std::size_t k,
                                        std::uint64_t seed) {
    if (articles.empty()) throw Error(Errc::InvalidArgument, "no articles to select from");
    if (k == 0) throw Error(Errc::InvalidArgument, "cluster count must be >= 1");
    if (articles.size() == 1) return 0;

    auto docs = vectorize(articles);
    auto rows = densify(docs);
    auto km = kmeans(rows, k, seed);

    const std::size_t clusters = km.centroids.size();
    std::vector<std::size_t> size(clusters, 0);
    std::vector<std::size_t> first_member(clusters, articles.size());
    for (std::size_t i = 0; i < articles.size(); ++i) {
        auto c = km.assignment[i];
        ++size[c];
        first_member[c] = std::min(first_member[c], i);
    }
    std::size_t largest = 0;
    for (std::size_t c = 1; c < clusters; ++c) {
        if (size[c] > size[largest] || (size[c] == size[largest] && first_member[c] < first_member[largest])) {
            largest = c;
        }
    }

    const auto& centroid = km.centroids[largest];
    double cnorm = 0.0;
    for (double v : centroid) cnorm += v * v;
    cnorm = std::sqrt(cnorm);

    std::size_t best = first_member[largest];
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < articles.size(); ++i) {
        if (km.assignment[i] != largest) continue;
        double dot = 0.0, rnorm = 0.0;
        for (std::size_t j = 0; j < centroid.size(); ++j) {
            dot += rows[i][j] * centroid[j];
            rnorm += rows[i][j] * rows[i][j];
        }
        double sim = (cnorm == 0.0 || rnorm == 0.0) ? 0.0 : dot / (cnorm * std::sqrt(rnorm));
        if (sim > best_sim) {
            best_sim = sim;
            best = i;
        }
    }
    return best;
}

const CleanArticle& select_representative(const std::vector<CleanArticle>& articles, std::size_t k,
                                          std::uint64_t seed) {
    return articles[select_representative_index(articles, k, seed)];
}

PreprocessResult preprocess(const Dataset& dataset, const BiasRuleSet& rules, LlmGateway* gateway,
                            const PreprocessOptions& options) {
    const auto& news = dataset.news;
    std::vector<CleanArticle> cleaned(news.size());
    const bool reflect = options.reflect && gateway != nullptr;
    parallel_for(news.size(), options.threads, [&](std::size_t i) {
        auto c = strip_bias(news[i], rules);
        cleaned[i] = reflect ? reflect_clean(c, *gateway) : std::move(c);
    });

    PreprocessResult out;
    std::map<Date, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < news.size(); ++i) {
        const auto& when = i < dataset.attribution.size() ? dataset.attribution[i] : std::nullopt;
        if (when) groups[*when].push_back(i);
        else out.unattributed.push_back(i);
    }

    std::vector<std::pair<Date, std::vector<std::size_t>>> ordered(groups.begin(), groups.end());
    out.representatives.resize(ordered.size());
    parallel_for(ordered.size(), options.threads, [&](std::size_t g) {
        const auto& [date, members] = ordered[g];
        std::vector<CleanArticle> group;
        group.reserve(members.size());
        for (auto i : members) group.push_back(cleaned[i]);
        auto seed = splitmix64(options.seed ^ static_cast<std::uint64_t>(date.days().time_since_epoch().count()));
        auto pick = select_representative_index(group, options.k, seed);
        out.representatives[g] = {date, std::move(group[pick]), members.size()};
    });
    return out;
}

std::string serialize_representatives(const std::vector<RepresentativeNews>& reps) {
    std::string out;
    for (const auto& r : reps) {
        Json edits = Json::array();
        for (const auto& e : r.article.edits) {
            edits.push_back({{"offset", e.offset}, {"length", e.length}, {"replacement", e.replacement},
                             {"source", e.source}});
        }
        Json j{{"title", r.article.original.title},
               {"date", r.article.original.date.iso()},
               {"text", r.article.cleaned_text},
               {"original_text", r.article.original.text},
               {"attributed_date", r.attributed_date.iso()},
               {"group_size", r.group_size},
               {"edits", std::move(edits)},
               {"warnings", r.article.warnings}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<RepresentativeNews> parse_representatives(std::string_view jsonl) {
    std::vector<RepresentativeNews> out;
    std::size_t pos = 0, record = 0;
    while (pos < jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        auto line = trim(jsonl.substr(pos, nl == std::string_view::npos ? jsonl.npos : nl - pos));
        pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
        if (line.empty()) continue;
        ++record;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw MalformedRow(record, e.what());
        }
        for (const char* key : {"title", "date", "text", "attributed_date"}) {
            if (!j.contains(key) || !j[key].is_string()) throw MissingField(key, record);
        }
        auto date = Date::parse_lenient(j["date"].get<std::string>());
        auto attributed = Date::parse_iso(j["attributed_date"].get<std::string>());
        if (!date || !attributed) throw Error(Errc::UnparseableDate, "record " + std::to_string(record));
        RepresentativeNews r;
        r.attributed_date = *attributed;
        r.article.original = {j["title"].get<std::string>(), *date, j.value("original_text", j["text"].get<std::string>())};
        r.article.cleaned_text = j["text"].get<std::string>();
        r.group_size = j.value("group_size", std::size_t{1});
        if (j.contains("edits")) {
            for (const auto& e : j["edits"]) {
                r.article.edits.push_back({e.at("offset").get<std::size_t>(), e.at("length").get<std::size_t>(),
                                           e.value("replacement", ""), e.value("source", "")});
            }
        }
        if (j.contains("warnings")) r.article.warnings = j["warnings"].get<std::vector<std::string>>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace quorum
