#include <doctest.h>

#include <json.hpp>

#include "hcite/trends.hpp"
#include "support.hpp"

using namespace hcite;

namespace {

RankConfig tight() {
    RankConfig c;
    c.epsilon = 1e-13;
    c.max_iterations = 100000;
    return c;
}

}  // namespace

TEST_CASE("tokenize lowercases and drops stopwords and short tokens") {
    Stopwords sw = {"the", "of"};
    CHECK(tokenize("The Rate of FALSE discoveries, a p-value!", sw) ==
          TokenDoc{"rate", "false", "discoveries", "value"});
    auto def = tokenize("We propose a new method for the analysis of data", default_stopwords());
    CHECK(std::find(def.begin(), def.end(), "the") == def.end());
    CHECK(std::find(def.begin(), def.end(), "propose") == def.end());  // abstract boilerplate
}

TEST_CASE("stopword file") {
    fixture::TempDir dir("stop");
    write_file(dir / "s.txt", "# comment\nfoo\n  Bar \n\n");
    auto sw = load_stopwords(dir / "s.txt");
    CHECK(sw.count("foo"));
    CHECK(sw.count("bar"));
    CHECK(sw.size() == 2);
}

TEST_CASE("window 2 links adjacent tokens only") {
    RankConfig c;
    auto g = build_graph({{"a", "b", "c", "a"}}, c);
    CHECK(g.nodes == std::vector<std::string>{"a", "b", "c"});
    CHECK(g.weight("a", "b") == 1);
    CHECK(g.weight("b", "c") == 1);
    CHECK(g.weight("c", "a") == 1);
    CHECK(g.edge_count() == 3);
    c.window = 3;
    auto g3 = build_graph({{"a", "b", "c", "a"}}, c);
    CHECK(g3.weight("a", "c") == 2);
    CHECK(g3.weight("a", "b") == 2);
    CHECK(build_graph({{"x", "x"}}, RankConfig{}).edge_count() == 0);
}

TEST_CASE("parallel and serial graphs agree") {
    std::mt19937_64 rng(4);
    for (std::size_t window : {2u, 3u, 5u}) {
        std::vector<TokenDoc> docs;
        for (int d = 0; d < 300; ++d) docs.push_back(tokenize(fixture::sentence(rng, 25), {}));
        RankConfig c;
        c.window = window;
        auto g = build_graph(docs, c);
        CHECK(g == serial::build_graph(docs, c));
        auto r = rank(g, c), s = serial::rank(g, c);
        CHECK(r.iterations == s.iterations);
        for (std::size_t i = 0; i < r.scores.size(); ++i) CHECK(r.scores[i] == doctest::Approx(s.scores[i]).epsilon(1e-12));
    }
}

TEST_CASE("regular graphs sit at the fixed point") {
    for (std::size_t k : {2u, 3u, 4u})
        for (std::size_t n : {6u, 12u, 20u}) {
            auto g = fixture::graph_from_edges(n, fixture::regular_edges(n, k));
            for (const auto& adj : g.adjacency) REQUIRE(adj.size() == k);
            auto r = rank(g, RankConfig{});
            CHECK(r.converged);
            for (double s : r.scores) CHECK(std::abs(s - 1.0) <= 1e-6);
        }
}

TEST_CASE("scores match dense power iteration") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng() % 11;
        auto edges = fixture::random_edges(rng, n);
        auto g = fixture::graph_from_edges(n, edges);
        auto oracle = fixture::power_iteration(n, edges, 0.85);
        auto r = rank(g, RankConfig{});
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.scores[i] - oracle[i]) <= 1e-5);
        auto precise = rank(g, tight());
        CHECK(fixture::order_of(precise.terms, precise.scores) == fixture::order_of(g.nodes, oracle));
    }
}

TEST_CASE("empty graph cannot be ranked") {
    CHECK_THROWS_AS(rank(PhraseGraph{}, RankConfig{}), Error);
}

TEST_CASE("keyword cut keeps at least one term") {
    Ranking r;
    r.terms = {"a", "b", "c", "d", "e"};
    r.scores = {0.5, 2.0, 1.0, 2.0, 0.1};
    RankConfig c;
    CHECK(select_keywords(r, c) == std::vector<std::string>{"b"});
    c.top_fraction = 0.6;
    CHECK(select_keywords(r, c) == std::vector<std::string>{"b", "d", "c"});
    c.top_fraction = 0.01;
    CHECK(select_keywords(r, c).size() == 1);
}

TEST_CASE("adjacent keywords merge into phrases") {
    Ranking r;
    r.terms = {"causal", "effect", "model", "noise", "treatment"};
    r.scores = {3, 3, 1, 0.5, 2.5};
    RankConfig c;
    c.top_fraction = 0.6;  // causal, effect, treatment
    std::vector<TokenDoc> docs = {{"causal", "effect", "model", "treatment", "effect"},
                                  {"treatment", "noise", "causal", "effect"},
                                  {"treatment"}};
    auto ps = extract_phrases(r, docs, c);
    // causal effect x2, treatment effect x1; all three words joined a phrase
    // so none survives as a unigram.
    CHECK(ps == std::vector<PhraseCount>{{"causal effect", 2}, {"treatment effect", 1}});
}

TEST_CASE("theme classification") {
    auto m = parse_theme_map(R"({"themes":[
        {"name":"Causal Inference and Treatment Effects","patterns":["causal *","*treatment effect*"]},
        {"name":"Bayesian Analysis","patterns":["bayesian *","causal effect"]}]})");
    CHECK(m.classify("causal effect") == "Causal Inference and Treatment Effects");
    CHECK(m.classify("average treatment effect") == "Causal Inference and Treatment Effects");
    CHECK(m.classify("bayesian inference") == "Bayesian Analysis");
    CHECK(m.classify("quantile regression") == "other");
    CHECK(ThemeMap{}.classify("causal effect") == "other");
    CHECK_THROWS_AS(parse_theme_map(R"({"themes":[{"name":"A","patterns":[]},{"name":"A","patterns":[]}]})"), Error);
    CHECK_THROWS_AS(parse_theme_map(R"({"themes":[{"name":"other","patterns":[]}]})"), Error);
}

TEST_CASE("shipped theme map") {
    auto m = load_theme_map(fixture::data_dir() / "themes.json");
    CHECK(m.themes.size() == 7);
    CHECK(m.classify("causal effect") == "Causal Inference and Treatment Effects");
    CHECK(m.classify("deep learning") == "Learning-based Model");
    CHECK(m.classify("markov chain") == "Bayesian Analysis");
}

TEST_CASE("themes partition frequency exactly") {
    auto m = load_theme_map(fixture::data_dir() / "themes.json");
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<PhraseCount> phrases;
        std::set<std::string> seen;
        std::uint64_t total = 0;
        for (int i = 0; i < 40; ++i) {
            auto p = fixture::sentence(rng, 1 + static_cast<int>(rng() % 3));
            if (!seen.insert(p).second) continue;
            const auto f = 1 + rng() % 50;
            phrases.push_back({p, f});
            total += f;
        }
        for (const auto& map : {m, ThemeMap{}}) {
            auto tm = theme_frequencies(phrases, map);
            std::uint64_t sum = 0;
            std::size_t count = 0;
            for (const auto& t : tm.themes) {
                std::uint64_t inner = 0;
                for (const auto& p : t.phrases) inner += p.frequency;
                CHECK(inner == t.total);
                sum += t.total;
                count += t.phrases.size();
            }
            CHECK(sum == total);
            CHECK(count == phrases.size());
        }
    }
}

TEST_CASE("treemap export shape") {
    ThemeMap m;
    m.themes.push_back({"Causal", {"causal *"}});
    auto tm = theme_frequencies({{"causal effect", 5}, {"random forest", 2}}, m);
    auto j = nlohmann::json::parse(treemap_to_json(tm));
    CHECK(j["Causal"][0]["phrase"] == "causal effect");
    CHECK(j["Causal"][0]["frequency"] == 5);
    CHECK(j["other"][0]["phrase"] == "random forest");
    auto flat = nlohmann::json::parse(phrases_to_json({{"causal effect", 5}}));
    CHECK(flat[0]["rank"] == 1);
}

TEST_CASE("graph symmetry and insertion-order independence") {
    std::mt19937_64 rng(12);
    std::vector<TokenDoc> docs;
    for (int d = 0; d < 60; ++d) docs.push_back(tokenize(fixture::sentence(rng, 15), {}));
    RankConfig c;
    c.window = 3;
    auto g = build_graph(docs, c);
    for (const auto& u : g.nodes)
        for (const auto& v : g.nodes) CHECK(g.weight(u, v) == g.weight(v, u));
    auto shuffled = docs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto h = build_graph(shuffled, c);
    CHECK(g == h);
    CHECK(rank(g, c).scores == rank(h, c).scores);
}
