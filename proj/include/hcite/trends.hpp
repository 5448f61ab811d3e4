#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

namespace hcite {

/// Graph-ranking parameters. Defaults: damping 0.85, window 2, keep the top
/// third of nodes as keywords.
struct RankConfig {
    double damping = 0.85;
    double epsilon = 1e-6;  // on the max absolute score change per sweep
    int max_iterations = 100;
    std::size_t window = 2;
    double top_fraction = 1.0 / 3.0;

    void validate() const;
};

using TokenDoc = std::vector<std::string>;
using Stopwords = std::unordered_set<std::string>;

/// Built-in English stopword list.
const Stopwords& default_stopwords();
/// One word per line; '#' starts a comment.
Stopwords load_stopwords(const std::filesystem::path& path);

/// Lowercase alphabetic tokens of length >= 2 that are not stopwords.
TokenDoc tokenize(std::string_view text, const Stopwords& stopwords);

/// Undirected co-occurrence graph with lexicographically ordered nodes.
struct PhraseGraph {
    struct Edge {
        std::uint32_t to;
        std::uint64_t weight;
        bool operator==(const Edge&) const = default;
    };
    std::vector<std::string> nodes;
    std::vector<std::vector<Edge>> adjacency;  // sorted by `to`

    std::size_t node_count() const { return nodes.size(); }
    std::size_t edge_count() const;
    /// 0 when the terms are not adjacent or unknown.
    std::uint64_t weight(std::string_view u, std::string_view v) const;
    bool operator==(const PhraseGraph&) const = default;
};

/// Every pair of distinct tokens at most window-1 positions apart adds 1 to
/// their edge. Documents are sharded across threads.
PhraseGraph build_graph(const std::vector<TokenDoc>& documents, const RankConfig& config);

struct Ranking {
    std::vector<std::string> terms;  // same order as the graph's nodes
    std::vector<double> scores;
    int iterations = 0;
    bool converged = false;
};

/// Weighted PageRank sweeps from all-ones until the largest change drops
/// below epsilon. Throws on an empty graph.
Ranking rank(const PhraseGraph& graph, const RankConfig& config);

namespace serial {
PhraseGraph build_graph(const std::vector<TokenDoc>& documents, const RankConfig& config);
Ranking rank(const PhraseGraph& graph, const RankConfig& config);
}  // namespace serial

/// Top `top_fraction` of terms (at least one), score descending then term.
std::vector<std::string> select_keywords(const Ranking& ranking, const RankConfig& config);

struct PhraseCount {
    std::string phrase;
    std::uint64_t frequency = 0;
    bool operator==(const PhraseCount&) const = default;
};

/// Collapses maximal runs of adjacent keywords into phrases and counts their
/// occurrences. A keyword that never takes part in a multi-word run is kept
/// as a unigram. Sorted by frequency descending, then phrase.
std::vector<PhraseCount> extract_phrases(const Ranking& ranking, const std::vector<TokenDoc>& documents,
                                         const RankConfig& config);

/// Ordered theme -> glob patterns (fnmatch syntax); first match wins.
struct ThemeMap {
    struct Theme {
        std::string name;
        std::vector<std::string> patterns;
    };
    std::vector<Theme> themes;

    void validate() const;
    /// Theme name, or "other".
    std::string classify(const std::string& phrase) const;
};

inline constexpr const char* kOtherTheme = "other";

ThemeMap parse_theme_map(const std::string& text);
ThemeMap load_theme_map(const std::filesystem::path& path);

struct ThemeNode {
    std::string name;
    std::uint64_t total = 0;
    std::vector<PhraseCount> phrases;
};

struct Treemap {
    std::vector<ThemeNode> themes;  // theme-map order, "other" last, empty themes omitted
};

Treemap theme_frequencies(const std::vector<PhraseCount>& phrases, const ThemeMap& theme_map);

std::string treemap_to_json(const Treemap& treemap);
std::string phrases_to_json(const std::vector<PhraseCount>& phrases);

}  // namespace hcite
