#include "hcite/trends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fnmatch.h>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <json.hpp>

#include "hcite/util.hpp"

namespace hcite {

using json = nlohmann::ordered_json;

void RankConfig::validate() const {
    if (!(damping > 0.0 && damping < 1.0)) throw Error("damping must be in (0, 1)");
    if (!(epsilon > 0.0)) throw Error("epsilon must be > 0");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    if (window < 2) throw Error("window must be >= 2");
    if (!(top_fraction > 0.0 && top_fraction <= 1.0)) throw Error("top_fraction must be in (0, 1]");
}

const Stopwords& default_stopwords() {
    // General English function words plus abstract boilerplate verbs/nouns.
    static const Stopwords words = {
        "a", "about", "above", "across", "after", "again", "against", "all", "almost", "along", "already",
        "also", "although", "always", "am", "among", "an", "and", "another", "any", "are", "around", "as",
        "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can",
        "cannot", "could", "did", "do", "does", "doing", "down", "due", "during", "each", "either", "else",
        "enough", "etc", "even", "ever", "every", "few", "for", "from", "further", "had", "has", "have",
        "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "however", "if",
        "in", "into", "is", "it", "its", "itself", "just", "less", "many", "may", "might", "more", "most",
        "much", "must", "my", "neither", "no", "nor", "not", "now", "of", "off", "often", "on", "once",
        "one", "only", "or", "other", "others", "otherwise", "our", "ours", "ourselves", "out", "over", "own",
        "per", "rather", "same", "several", "shall", "she", "should", "since", "so", "some", "such", "than",
        "that", "the", "their", "theirs", "them", "themselves", "then", "there", "thereby", "therefore",
        "these", "they", "this", "those", "though", "through", "thus", "to", "too", "two", "under", "until",
        "up", "upon", "us", "very", "via", "was", "we", "were", "what", "when", "where", "whereas", "whether",
        "which", "while", "who", "whom", "whose", "why", "will", "with", "within", "without", "would", "yet",
        "you", "your", "yours",
        // abstract boilerplate
        "paper", "article", "propose", "proposed", "proposes", "present", "presented", "show", "shows",
        "shown", "study", "studies", "studied", "consider", "considered", "provide", "provides", "provided",
        "develop", "developed", "new", "use", "used", "uses", "using", "based", "result", "results", "also",
        "well", "first", "second", "three", "obtain", "obtained", "give", "given", "illustrate", "illustrated",
        "demonstrate", "demonstrated", "apply", "applied", "introduce", "introduced", "discuss", "discussed",
    };
    return words;
}

Stopwords load_stopwords(const std::filesystem::path& path) {
    Stopwords words;
    for (const auto& line : split(read_file(path), '\n')) {
        auto w = trim(line.substr(0, line.find('#')));
        if (!w.empty()) words.insert(to_lower(w));
    }
    return words;
}

TokenDoc tokenize(std::string_view text, const Stopwords& stopwords) {
    TokenDoc out;
    std::string cur;
    auto flush = [&] {
        if (cur.size() >= 2 && !stopwords.count(cur)) out.push_back(cur);
        cur.clear();
    };
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (uc < 0x80 && std::isalpha(uc)) cur += static_cast<char>(std::tolower(uc));
        else flush();
    }
    flush();
    return out;
}

std::size_t PhraseGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& adj : adjacency) n += adj.size();
    return n / 2;
}

std::uint64_t PhraseGraph::weight(std::string_view u, std::string_view v) const {
    auto find = [&](std::string_view t) -> std::ptrdiff_t {
        auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
        return (it != nodes.end() && *it == t) ? it - nodes.begin() : -1;
    };
    const auto a = find(u), b = find(v);
    if (a < 0 || b < 0) return 0;
    const auto& adj = adjacency[static_cast<std::size_t>(a)];
    auto it = std::lower_bound(adj.begin(), adj.end(), static_cast<std::uint32_t>(b),
                               [](const Edge& e, std::uint32_t to) { return e.to < to; });
    return (it != adj.end() && it->to == static_cast<std::uint32_t>(b)) ? it->weight : 0;
}

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

PhraseGraph assemble_graph(std::vector<std::string> nodes, const std::unordered_map<std::uint64_t, std::uint64_t>& edges) {
    PhraseGraph g;
    g.nodes = std::move(nodes);
    g.adjacency.resize(g.nodes.size());
    for (const auto& [key, w] : edges) {
        const auto a = static_cast<std::uint32_t>(key >> 32);
        const auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
        g.adjacency[a].push_back({b, w});
        g.adjacency[b].push_back({a, w});
    }
    for (auto& adj : g.adjacency)
        std::sort(adj.begin(), adj.end(), [](const auto& x, const auto& y) { return x.to < y.to; });
    return g;
}

}  // namespace

PhraseGraph build_graph(const std::vector<TokenDoc>& documents, const RankConfig& config) {
    config.validate();
    std::set<std::string> vocab;
    for (const auto& doc : documents) vocab.insert(doc.begin(), doc.end());
    std::vector<std::string> nodes(vocab.begin(), vocab.end());
    std::unordered_map<std::string_view, std::uint32_t> id;
    id.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) id.emplace(nodes[i], static_cast<std::uint32_t>(i));

    std::unordered_map<std::uint64_t, std::uint64_t> edges;
    const auto n_docs = static_cast<std::ptrdiff_t>(documents.size());
    const std::size_t w = config.window;

#pragma omp parallel
    {
        std::unordered_map<std::uint64_t, std::uint64_t> local;
#pragma omp for schedule(dynamic, 16) nowait
        for (std::ptrdiff_t d = 0; d < n_docs; ++d) {
            const auto& doc = documents[static_cast<std::size_t>(d)];
            std::vector<std::uint32_t> ids(doc.size());
            for (std::size_t i = 0; i < doc.size(); ++i) ids[i] = id.at(doc[i]);
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = i + 1; j < ids.size() && j - i < w; ++j)
                    if (ids[i] != ids[j]) ++local[edge_key(ids[i], ids[j])];
        }
#pragma omp critical(hcite_graph_merge)
        for (const auto& [k, c] : local) edges[k] += c;
    }
    return assemble_graph(std::move(nodes), edges);
}

namespace {

std::vector<double> out_strength(const PhraseGraph& g) {
    std::vector<double> s(g.node_count(), 0.0);
    for (std::size_t i = 0; i < g.node_count(); ++i)
        for (const auto& e : g.adjacency[i]) s[i] += static_cast<double>(e.weight);
    return s;
}

}  // namespace

Ranking rank(const PhraseGraph& graph, const RankConfig& config) {
    config.validate();
    if (graph.node_count() == 0) throw Error("cannot rank an empty graph");
    const auto n = graph.node_count();
    const auto strength = out_strength(graph);
    const double d = config.damping;

    Ranking r;
    r.terms = graph.nodes;
    std::vector<double> cur(n, 1.0), next(n, 0.0);
    for (int it = 1; it <= config.max_iterations; ++it) {
        double max_delta = 0.0;
#pragma omp parallel for schedule(static) reduction(max : max_delta)
        for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
            const auto i = static_cast<std::size_t>(si);
            double mass = 0.0;
            for (const auto& e : graph.adjacency[i]) mass += static_cast<double>(e.weight) / strength[e.to] * cur[e.to];
            next[i] = (1.0 - d) + d * mass;
            max_delta = std::max(max_delta, std::abs(next[i] - cur[i]));
        }
        cur.swap(next);
        r.iterations = it;
        if (max_delta < config.epsilon) {
            r.converged = true;
            break;
        }
    }
    r.scores = std::move(cur);
    return r;
}

namespace serial {

PhraseGraph build_graph(const std::vector<TokenDoc>& documents, const RankConfig& config) {
    config.validate();
    std::map<std::pair<std::string, std::string>, std::uint64_t> counts;
    std::set<std::string> vocab;
    for (const auto& doc : documents) {
        vocab.insert(doc.begin(), doc.end());
        for (std::size_t i = 0; i < doc.size(); ++i)
            for (std::size_t j = i + 1; j < doc.size() && j - i < config.window; ++j)
                if (doc[i] != doc[j]) ++counts[std::minmax(doc[i], doc[j])];
    }
    std::vector<std::string> nodes(vocab.begin(), vocab.end());
    auto index = [&](const std::string& t) {
        return static_cast<std::uint32_t>(std::lower_bound(nodes.begin(), nodes.end(), t) - nodes.begin());
    };
    std::unordered_map<std::uint64_t, std::uint64_t> edges;
    for (const auto& [pair, c] : counts) edges[edge_key(index(pair.first), index(pair.second))] = c;
    return assemble_graph(std::move(nodes), edges);
}

Ranking rank(const PhraseGraph& graph, const RankConfig& config) {
    config.validate();
    if (graph.node_count() == 0) throw Error("cannot rank an empty graph");
    const auto n = graph.node_count();
    const auto strength = out_strength(graph);
    Ranking r;
    r.terms = graph.nodes;
    std::vector<double> cur(n, 1.0), next(n);
    for (int it = 1; it <= config.max_iterations; ++it) {
        double max_delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mass = 0.0;
            for (const auto& e : graph.adjacency[i]) mass += static_cast<double>(e.weight) / strength[e.to] * cur[e.to];
            next[i] = (1.0 - config.damping) + config.damping * mass;
            max_delta = std::max(max_delta, std::abs(next[i] - cur[i]));
        }
        cur.swap(next);
        r.iterations = it;
        if (max_delta < config.epsilon) {
            r.converged = true;
            break;
        }
    }
    r.scores = std::move(cur);
    return r;
}

}  // namespace serial

std::vector<std::string> select_keywords(const Ranking& ranking, const RankConfig& config) {
    const std::size_t n = ranking.terms.size();
    if (n == 0) return {};
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (ranking.scores[a] != ranking.scores[b]) return ranking.scores[a] > ranking.scores[b];
        return ranking.terms[a] < ranking.terms[b];
    });
    const auto keep = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.top_fraction + 1e-9)), 1, n);
    std::vector<std::string> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(ranking.terms[order[i]]);
    return out;
}

std::vector<PhraseCount> extract_phrases(const Ranking& ranking, const std::vector<TokenDoc>& documents,
                                         const RankConfig& config) {
    const auto keywords_list = select_keywords(ranking, config);
    const std::unordered_set<std::string> keywords(keywords_list.begin(), keywords_list.end());

    std::map<std::string, std::uint64_t> multi, single;
    std::unordered_set<std::string> joined;
    for (const auto& doc : documents) {
        std::size_t i = 0;
        while (i < doc.size()) {
            if (!keywords.count(doc[i])) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < doc.size() && keywords.count(doc[j])) ++j;
            if (j - i == 1) {
                ++single[doc[i]];
            } else {
                std::vector<std::string> run(doc.begin() + static_cast<std::ptrdiff_t>(i),
                                             doc.begin() + static_cast<std::ptrdiff_t>(j));
                joined.insert(run.begin(), run.end());
                ++multi[join(run, " ")];
            }
            i = j;
        }
    }
    std::vector<PhraseCount> out;
    for (const auto& [p, c] : multi) out.push_back({p, c});
    for (const auto& [p, c] : single)
        if (!joined.count(p)) out.push_back({p, c});
    std::sort(out.begin(), out.end(), [](const PhraseCount& a, const PhraseCount& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.phrase < b.phrase;
    });
    return out;
}

void ThemeMap::validate() const {
    std::set<std::string> names;
    for (const auto& t : themes) {
        if (trim(t.name).empty()) throw Error("theme with empty name");
        if (t.name == kOtherTheme) throw Error("theme name \"other\" is reserved");
        if (!names.insert(t.name).second) throw Error("duplicate theme name " + t.name);
    }
}

std::string ThemeMap::classify(const std::string& phrase) const {
    for (const auto& t : themes)
        for (const auto& p : t.patterns)
            if (fnmatch(p.c_str(), phrase.c_str(), 0) == 0) return t.name;
    return kOtherTheme;
}

ThemeMap parse_theme_map(const std::string& text) {
    ThemeMap m;
    try {
        const auto j = json::parse(text);
        for (const auto& t : j.at("themes"))
            m.themes.push_back({t.at("name").get<std::string>(), t.at("patterns").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
        throw Error(std::string("malformed theme map: ") + e.what());
    }
    m.validate();
    return m;
}

ThemeMap load_theme_map(const std::filesystem::path& path) { return parse_theme_map(read_file(path)); }

Treemap theme_frequencies(const std::vector<PhraseCount>& phrases, const ThemeMap& theme_map) {
    std::vector<ThemeNode> nodes;
    for (const auto& t : theme_map.themes) nodes.push_back({t.name, 0, {}});
    nodes.push_back({kOtherTheme, 0, {}});
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < nodes.size(); ++i) slot[nodes[i].name] = i;

    for (const auto& p : phrases) {
        auto& node = nodes[slot.at(theme_map.classify(p.phrase))];
        node.total += p.frequency;
        node.phrases.push_back(p);
    }
    Treemap tm;
    for (auto& n : nodes) {
        if (n.phrases.empty()) continue;
        std::stable_sort(n.phrases.begin(), n.phrases.end(), [](const PhraseCount& a, const PhraseCount& b) {
            if (a.frequency != b.frequency) return a.frequency > b.frequency;
            return a.phrase < b.phrase;
        });
        tm.themes.push_back(std::move(n));
    }
    return tm;
}

std::string treemap_to_json(const Treemap& tm) {
    json j = json::object();
    for (const auto& t : tm.themes) {
        json arr = json::array();
        for (const auto& p : t.phrases) arr.push_back({{"phrase", p.phrase}, {"frequency", p.frequency}});
        j[t.name] = arr;
    }
    return j.dump(2);
}

std::string phrases_to_json(const std::vector<PhraseCount>& phrases) {
    json arr = json::array();
    for (std::size_t i = 0; i < phrases.size(); ++i)
        arr.push_back({{"rank", i + 1}, {"phrase", phrases[i].phrase}, {"frequency", phrases[i].frequency}});
    return arr.dump(2);
}

}  // namespace hcite
