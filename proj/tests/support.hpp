// Fixture builders and independent reference implementations shared by the
// unit tests and the acceptance runner. Nothing here calls into the code
// under test except for the plain data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "hcite/backends.hpp"
#include "hcite/corpus.hpp"
#include "hcite/labeling.hpp"

namespace fixture {

namespace fs = std::filesystem;

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = {
        "causal",   "effect",     "treatment", "bayesian", "inference", "markov",    "chain",   "regression",
        "model",    "variable",   "selection", "neural",   "network",   "deep",      "learning", "confidence",
        "interval", "multiple",   "testing",   "graphical", "sparse",   "estimator", "kernel",  "density",
        "survival", "functional", "quantile",  "mixture",  "latent",    "factor",    "panel",   "bootstrap"};
    return words;
}

inline std::string sentence(std::mt19937_64& rng, int words) {
    std::uniform_int_distribution<std::size_t> pick(0, vocabulary().size() - 1);
    std::string out;
    for (int i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += vocabulary()[pick(rng)];
    }
    return out;
}

struct CorpusShape {
    int first_year = 1991;
    int last_year = 2020;
    int min_per_year = 1;
    int max_per_year = 60;
    std::int64_t max_citations = 400;  // small range forces ties
};

/// Synthetic records with citations, ids shuffled so input order is not
/// rank order.
inline std::vector<hcite::PaperRecord> corpus(std::uint64_t seed, const CorpusShape& shape = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> per_year(shape.min_per_year, shape.max_per_year);
    std::uniform_int_distribution<std::int64_t> cites(0, shape.max_citations);
    const std::vector<std::string> journals = {"Annals of Statistics", "Biometrika", "JASA", "Statistica Sinica"};
    std::vector<hcite::PaperRecord> out;
    int serial = 0;
    for (int year = shape.first_year; year <= shape.last_year; ++year) {
        const int n = per_year(rng);
        for (int i = 0; i < n; ++i) {
            hcite::PaperRecord r;
            r.id = "r" + std::to_string(rng() % 1000000) + "-" + std::to_string(serial++);
            r.title = sentence(rng, 6);
            r.abstract = sentence(rng, 30);
            r.keywords = {sentence(rng, 2), sentence(rng, 1)};
            r.journal = journals[rng() % journals.size()];
            r.year = year;
            r.citations = cites(rng);
            out.push_back(std::move(r));
        }
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// Brute-force rank: for each record, 1 + the number of same-year records
/// that outrank it under (citations desc, id asc). Quadratic within a year.
inline std::map<std::string, std::size_t> brute_force_ranks(const std::vector<hcite::PaperRecord>& records) {
    std::map<int, std::vector<const hcite::PaperRecord*>> by_year;
    for (const auto& r : records) by_year[r.year].push_back(&r);
    std::map<std::string, std::size_t> out;
    for (const auto& [year, cohort] : by_year)
        for (const auto* r : cohort) {
            std::size_t ahead = 0;
            for (const auto* o : cohort)
                if (*o->citations > *r->citations || (*o->citations == *r->citations && o->id < r->id)) ++ahead;
            out[r->id] = ahead + 1;
        }
    return out;
}

/// Positives per year written out from the definition, not positives_for.
inline std::size_t expected_positives(std::size_t n, double k) {
    const auto m = static_cast<std::size_t>(std::floor(k * static_cast<double>(n) / 100.0 + 1e-9));
    return m < 1 ? 1 : m;
}

inline std::map<std::string, bool> brute_force_labels(const std::vector<hcite::PaperRecord>& records, double k) {
    std::map<int, std::size_t> cohort;
    for (const auto& r : records) ++cohort[r.year];
    std::map<std::string, bool> out;
    const auto ranks = brute_force_ranks(records);
    for (const auto& r : records) out[r.id] = ranks.at(r.id) <= expected_positives(cohort[r.year], k);
    return out;
}

inline hcite::Prediction prediction(const std::string& id, int year, std::optional<hcite::Verdict> v) {
    hcite::Prediction p;
    p.record_id = id;
    p.group = hcite::group_of(year).value();
    p.verdict = v;
    p.raw_text = v ? std::string(hcite::verdict_token(*v)) : std::string();
    p.attempts = 1;
    if (!v) p.error = "scripted failure";
    return p;
}

/// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("hcite-" + tag + "-" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline fs::path test_dir() { return HCITE_TEST_DIR; }
inline fs::path data_dir() { return HCITE_DATA_DIR_FOR_TESTS; }

}  // namespace fixture

namespace fixture {

struct PairFixture {
    std::vector<hcite::CitationLabel> labels;
    std::vector<hcite::Prediction> predictions;
};

/// Random labels plus predictions over a random subset of them, with some
/// failed slots. Up to `max_size` records.
inline PairFixture pairs(std::uint64_t seed, std::size_t max_size = 300) {
    std::mt19937_64 rng(seed);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_size)(rng);
    const double label_rate = std::uniform_real_distribution<double>(0, 1)(rng);
    const double pred_rate = std::uniform_real_distribution<double>(0, 1)(rng);
    // Some fixtures use a narrow year span so groups go missing or one class
    // is absent.
    const int span = std::uniform_int_distribution<int>(0, 3)(rng) == 0 ? 3 : 30;
    std::bernoulli_distribution label_pos(label_rate), pred_pos(pred_rate), fail(0.05), predicted(0.9);
    PairFixture f;
    for (std::size_t i = 0; i < n; ++i) {
        hcite::CitationLabel l;
        l.record_id = "x" + std::to_string(i);
        l.year = 1991 + static_cast<int>(rng() % span);
        l.k_percent = 5;
        l.positive = label_pos(rng);
        f.labels.push_back(l);
        if (!predicted(rng)) continue;
        std::optional<hcite::Verdict> v;
        if (!fail(rng)) v = pred_pos(rng) ? hcite::Verdict::Positive : hcite::Verdict::Negative;
        f.predictions.push_back(prediction(l.record_id, l.year, v));
    }
    std::shuffle(f.predictions.begin(), f.predictions.end(), rng);
    return f;
}

struct Counts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Per-record counting keyed by group name, written without the library's
/// join: a linear scan of labels per prediction.
inline std::map<std::string, Counts> count_by_hand(const PairFixture& f, std::size_t& failed) {
    std::map<std::string, Counts> out;
    failed = 0;
    for (const auto& p : f.predictions) {
        if (!p.verdict) {
            ++failed;
            continue;
        }
        const hcite::CitationLabel* label = nullptr;
        for (const auto& l : f.labels)
            if (l.record_id == p.record_id) label = &l;
        const int y = label->year;
        const int start = 1991 + (y - 1991) / 5 * 5;
        auto& c = out[std::to_string(start) + "-" + std::to_string(start + 4)];
        const bool said = *p.verdict == hcite::Verdict::Positive;
        if (label->positive && said) ++c.tp;
        else if (label->positive) ++c.fn;
        else if (said) ++c.fp;
        else ++c.tn;
    }
    return out;
}

}  // namespace fixture

#include "hcite/trends.hpp"

namespace fixture {

struct WeightedEdge {
    std::size_t a, b;
    std::uint64_t w;
};

/// Builds a PhraseGraph directly from an edge list over nodes "n00".."nNN".
inline hcite::PhraseGraph graph_from_edges(std::size_t n, const std::vector<WeightedEdge>& edges) {
    hcite::PhraseGraph g;
    for (std::size_t i = 0; i < n; ++i) g.nodes.push_back((i < 10 ? "n0" : "n") + std::to_string(i));
    g.adjacency.resize(n);
    for (const auto& e : edges) {
        g.adjacency[e.a].push_back({static_cast<std::uint32_t>(e.b), e.w});
        g.adjacency[e.b].push_back({static_cast<std::uint32_t>(e.a), e.w});
    }
    for (auto& adj : g.adjacency)
        std::sort(adj.begin(), adj.end(), [](const auto& x, const auto& y) { return x.to < y.to; });
    return g;
}

/// Circulant k-regular graph with unit weights (n even when k is odd).
inline std::vector<WeightedEdge> regular_edges(std::size_t n, std::size_t k) {
    std::vector<WeightedEdge> out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t off = 1; off <= k / 2; ++off)
            if (i < (i + off) % n || (i + off) % n < i) out.push_back({i, (i + off) % n, 1});
        if (k % 2 == 1 && i < n / 2) out.push_back({i, i + n / 2, 1});
    }
    return out;
}

/// Random simple graph; isolated nodes allowed.
inline std::vector<WeightedEdge> random_edges(std::mt19937_64& rng, std::size_t n) {
    std::vector<WeightedEdge> out;
    std::bernoulli_distribution link(0.35);
    std::uniform_int_distribution<std::uint64_t> weight(1, 1000);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (link(rng)) out.push_back({a, b, weight(rng)});
    return out;
}

/// Dense power iteration on S = (1-d) 1 + d M S with M[i][j] = w_ij / W_j,
/// run far past the library's tolerance.
inline std::vector<double> power_iteration(std::size_t n, const std::vector<WeightedEdge>& edges, double d) {
    std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
    for (const auto& e : edges) w[e.a][e.b] = w[e.b][e.a] = static_cast<double>(e.w);
    std::vector<double> strength(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) strength[j] += w[i][j];
    std::vector<double> s(n, 1.0), t(n);
    for (int it = 0; it < 20000; ++it) {
        double delta = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0;
            for (std::size_t j = 0; j < n; ++j)
                if (strength[j] > 0) acc += w[i][j] / strength[j] * s[j];
            t[i] = (1 - d) + d * acc;
            delta = std::max(delta, std::abs(t[i] - s[i]));
        }
        s = t;
        if (delta < 1e-15) break;
    }
    return s;
}

/// Node order by score descending, then name.
inline std::vector<std::string> order_of(const std::vector<std::string>& names, const std::vector<double>& scores) {
    std::vector<std::size_t> idx(names.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return names[a] < names[b];
    });
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(names[i]);
    return out;
}

}  // namespace fixture
