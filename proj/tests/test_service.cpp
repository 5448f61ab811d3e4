#include <doctest.h>

#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "hcite/pipeline.hpp"
#include "hcite/service.hpp"
#include "support.hpp"

using namespace hcite;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<const TemplateStore> shipped() {
    static auto store = std::make_shared<const TemplateStore>(load_templates(fixture::data_dir() / "templates"));
    return store;
}

std::shared_ptr<const Backend> mock(double bias = 0.5, std::uint64_t seed = 0, double flip = 0.1) {
    BackendConfig c;
    c.mock_seed = seed;
    c.mock_positive_bias = bias;
    c.mock_flip_rate = flip;
    return std::make_shared<const Backend>(c, make_transport(c));
}

LogSink quiet() {
    return [](std::string_view) {};
}

const char* kRequest =
    R"({"title":"Sharp bounds for zebrafish kinetics","abstract":"Quokka-specific abstract text",)"
    R"("keywords":["okapi","narwhal"],"year":2019,"journal":"Journal of Xylophone Studies"})";

/// FNV hash over every file path and its bytes under `root`.
std::uint64_t tree_hash(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) {
        acc += fs::relative(f, root).string();
        acc += '\0';
        if (fs::is_regular_file(f)) acc += read_file(f);
    }
    return fnv1a64(acc);
}

}  // namespace

TEST_CASE("valid request with a positive-biased mock") {
    PredictionService svc(shipped(), mock(1.0, 0, 0.0), {}, quiet());
    auto r = svc.handle_predict(kRequest);
    CHECK(r.status == 200);
    auto j = json::parse(r.body);
    CHECK(j["verdict"] == "Positive");
    CHECK(j["backend_name"] == "mock");
    CHECK(j["template_version"] == "v1");
    CHECK_FALSE(j["disclaimer"].get<std::string>().empty());
}

TEST_CASE("validation errors name the fields") {
    PredictionService svc(shipped(), mock(), {}, quiet());
    auto r = svc.handle_predict(R"({"title":"  ","abstract":"","keywords":[],"year":2001,"journal":"J"})");
    CHECK(r.status == 400);
    auto j = json::parse(r.body);
    CHECK(j["fields"].contains("title"));

    auto early = json::parse(svc.handle_predict(R"({"title":"t","year":1985,"journal":"J"})").body);
    CHECK(early["fields"].contains("year"));
    auto kw = json::parse(svc.handle_predict(R"({"title":"t","year":2001,"journal":"J","keywords":"a;b"})").body);
    CHECK(kw["fields"].contains("keywords"));
    CHECK(svc.handle_predict("not json").status == 400);
    CHECK(svc.handle_predict(R"({"title":"t","year":2001,"journal":"arXiv"})").status == 200);
}

TEST_CASE("identical requests give identical verdicts; forecast years accepted") {
    PredictionService svc(shipped(), mock(0.5, 42, 0.1), {}, quiet());
    CHECK(svc.handle_predict(kRequest).body == svc.handle_predict(kRequest).body);
    auto later = json::parse(kRequest);
    later["year"] = 2031;
    CHECK(svc.handle_predict(later.dump()).status == 200);
}

TEST_CASE("backend failure hides internals") {
    struct Down : Transport {
        TransportReply send(const TransportRequest&) override { throw TransportError("10.0.0.7 refused secret-path"); }
    };
    BackendConfig c;
    c.name = "down";
    c.endpoint = "https://example.invalid";
    c.model_id = "m";
    c.max_retries = 1;
    auto backend = std::make_shared<const Backend>(c, std::make_shared<Down>(), [](milliseconds) {});
    PredictionService svc(shipped(), backend, {}, quiet());
    auto r = svc.handle_predict(kRequest);
    CHECK(r.status >= 500);
    CHECK(r.body.find("10.0.0.7") == std::string::npos);
    CHECK(r.body.find("secret") == std::string::npos);
}

TEST_CASE("health") {
    PredictionService svc(shipped(), mock(), {}, quiet());
    auto a = json::parse(svc.handle_health().body);
    CHECK(a["status"] == "ok");
    CHECK(a["template_version"] == "v1");
    CHECK(a["backend"] == "mock");
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    auto b = json::parse(svc.handle_health().body);
    CHECK(b["uptime_seconds"].get<double>() >= a["uptime_seconds"].get<double>());

    PredictionService degraded(nullptr, mock(), {}, quiet());
    CHECK(json::parse(degraded.handle_health().body)["status"] == "degraded");
    CHECK(degraded.handle_predict(kRequest).status == 503);
}

TEST_CASE("http session leaves no trace in logs or on disk") {
    fixture::TempDir dir("svc");
    fs::copy(fixture::data_dir() / "templates", dir / "templates");
    const auto before = tree_hash(dir.path());

    std::mutex mu;
    std::vector<std::string> lines;
    auto store = std::make_shared<const TemplateStore>(load_templates(dir / "templates"));
    PredictionService svc(store, mock(), {}, [&](std::string_view l) {
        std::lock_guard lock(mu);
        lines.emplace_back(l);
    });
    httplib::Server server;
    svc.mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::jthread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto ok = client.Post("/predict", kRequest, "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    CHECK(ok->get_header_value("Access-Control-Allow-Origin") == "*");
    auto bad = client.Post("/predict", R"({"title":"","journal":"Okapi Quarterly","year":1700})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    auto health = client.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    server.stop();
    thread.join();

    REQUIRE(lines.size() == 3);
    for (const auto& l : lines) {
        for (const char* secret : {"zebrafish", "Quokka", "okapi", "narwhal", "Xylophone", "Okapi", "2019", "1700"})
            CHECK_MESSAGE(l.find(secret) == std::string::npos, l);
    }
    CHECK(tree_hash(dir.path()) == before);
}

TEST_CASE("service and CLI agree on the verdict") {
    fixture::TempDir dir("agree");
    const auto corpus = dir / "c.jsonl";
    std::vector<PaperRecord> records;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 40; ++i) {
        PaperRecord r;
        r.id = "q" + std::to_string(i);
        r.title = fixture::sentence(rng, 5);
        r.abstract = fixture::sentence(rng, 20);
        r.keywords = {fixture::sentence(rng, 2)};
        r.journal = "Biometrika";
        r.year = 1991 + i % 33;
        records.push_back(r);
    }
    {
        std::ostringstream out;
        write_corpus(out, records);
        write_file(corpus, out.str());
    }
    const auto data = fixture::data_dir().string();
    REQUIRE(cli::run({"hcite", "assemble", "--corpus", corpus.string(), "--templates", data + "/templates", "--out",
                      (dir / "a").string()}) == 0);
    REQUIRE(cli::run({"hcite", "predict", "--prompts", (dir / "a/prompts.jsonl").string(), "--seed", "5",
                      "--flip-rate", "0.1", "--out", (dir / "p").string()}) == 0);
    auto preds = read_predictions(dir / "p/predictions.jsonl");
    REQUIRE(preds.size() == records.size());

    PredictionService svc(shipped(), mock(0.5, 5, 0.1), {}, quiet());
    for (std::size_t i = 0; i < records.size(); ++i) {
        json req = {{"title", records[i].title},     {"abstract", records[i].abstract},
                    {"keywords", records[i].keywords}, {"year", records[i].year},
                    {"journal", records[i].journal}};
        auto j = json::parse(svc.handle_predict(req.dump()).body);
        CHECK(j["verdict"] == (*preds[i].verdict == Verdict::Positive ? "Positive" : "Negative"));
    }
}
