#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "quorum/llm_gateway.hpp"
#include "quorum/market_data.hpp"

namespace quorum {

struct BiasRule {
    std::string pattern;
    bool replace = false;  // false: delete the match
    std::string replacement;
    std::regex compiled;
};

/// Ordered regex rules for known, fixed-pattern noise (bylines, ads, chrome).
class BiasRuleSet {
public:
    BiasRuleSet() = default;

    void add_delete(std::string pattern);
    void add_replace(std::string pattern, std::string replacement);

    /// JSON list of `{"pattern", "action": "delete"|"replace", "replacement"?}`.
    static BiasRuleSet parse(std::string_view json);
    static BiasRuleSet load(const std::filesystem::path& path);

    const std::vector<BiasRule>& rules() const noexcept { return rules_; }
    bool empty() const noexcept { return rules_.empty(); }

private:
    std::vector<BiasRule> rules_;
};

/// One recorded edit. `offset` refers to the text as it was when the edit
/// was applied, so replaying edits in order rebuilds the cleaned text.
struct TextEdit {
    std::size_t offset = 0;
    std::size_t length = 0;
    std::string replacement;
    std::string source;  // "rule:<index>" or "llm"

    friend bool operator==(const TextEdit&, const TextEdit&) = default;
};

struct CleanArticle {
    NewsArticle original;
    std::string cleaned_text;
    std::vector<TextEdit> edits;
    std::vector<std::string> warnings;
};

/// Replays `edits` on `text`.
std::string apply_edits(std::string text, const std::vector<TextEdit>& edits);

CleanArticle strip_bias(const NewsArticle& article, const BiasRuleSet& rules);

/// LLM self-reflection pass: one call to find leftover bias spans, and when
/// any are found a second call that applies them.
CleanArticle reflect_clean(const CleanArticle& article, LlmGateway& gateway);

// ---------------------------------------------------------------------------
// Vectorization and clustering

/// Word segmentation: maximal runs of letters/digits, Latin script folded to
/// lower case; runs of Han characters become overlapping character bigrams.
std::vector<std::string> tokenize(std::string_view text);

struct DocVector {
    std::size_t article_id = 0;
    std::map<std::string, double> weights;

    double norm() const;
};

double cosine(const DocVector& a, const DocVector& b);

/// tf-idf with raw counts and smoothed idf ln((1+N)/(1+df)) + 1, L2-normalized.
std::vector<DocVector> vectorize(const std::vector<std::string>& texts);
std::vector<DocVector> vectorize(const std::vector<CleanArticle>& corpus);

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::vector<std::vector<double>> centroids;
    /// Sum of squared distances after each assignment step.
    std::vector<double> objective_trace;
    int iterations = 0;
};

/// Lloyd's algorithm on dense rows with k-means++ seeding. Stops when no
/// centroid moves more than 1e-9 or after `max_iter` iterations.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                    int max_iter = 100);

/// Dense matrix over the union vocabulary of `docs` (sorted term order).
std::vector<std::vector<double>> densify(const std::vector<DocVector>& docs);

/// Index (into `articles`) of the representative article of one date group:
/// nearest by cosine to the centroid of the largest cluster, earliest on ties.
std::size_t select_representative_index(const std::vector<CleanArticle>& articles, std::size_t k,
                                        std::uint64_t seed);
const CleanArticle& select_representative(const std::vector<CleanArticle>& articles, std::size_t k,
                                          std::uint64_t seed);

struct RepresentativeNews {
    Date attributed_date;
    CleanArticle article;
    std::size_t group_size = 0;
};

struct PreprocessOptions {
    std::size_t k = 2;
    std::uint64_t seed = 7;
    bool reflect = true;  // run the LLM pass (needs a gateway)
    unsigned threads = 1;
};

struct PreprocessResult {
    std::vector<RepresentativeNews> representatives;  // one per attributed date, ascending
    std::vector<std::size_t> unattributed;            // article indices past the last trading date
};

PreprocessResult preprocess(const Dataset& dataset, const BiasRuleSet& rules, LlmGateway* gateway,
                            const PreprocessOptions& options);

/// JSON-lines of representatives; readable by `load_news` (extra keys ignored).
std::string serialize_representatives(const std::vector<RepresentativeNews>& reps);
std::vector<RepresentativeNews> parse_representatives(std::string_view jsonl);

}  // namespace quorum
