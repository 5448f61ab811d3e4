#include "hcite/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hcite/backends.hpp"
#include "hcite/corpus.hpp"
#include "hcite/evaluation.hpp"
#include "hcite/labeling.hpp"
#include "hcite/prompting.hpp"
#include "hcite/service.hpp"
#include "hcite/trends.hpp"

#ifndef HCITE_DEFAULT_DATA_DIR
#define HCITE_DEFAULT_DATA_DIR "data"
#endif

namespace hcite::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

fs::path data_dir() {
    if (const char* env = std::getenv("HCITE_DATA_DIR"); env && *env) return env;
    return HCITE_DEFAULT_DATA_DIR;
}

namespace {

void require_file(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw Error("input file not found: " + p.string());
}

void require_dir(const fs::path& p) {
    if (!fs::is_directory(p)) throw Error("input directory not found: " + p.string());
}

/// Collects what a batch command read and wrote, then writes manifest.json.
class Manifest {
public:
    Manifest(std::string command, const CLI::App& sub, fs::path out_dir)
        : command_(std::move(command)), out_dir_(std::move(out_dir)), started_(utc_timestamp()) {
        for (const CLI::Option* opt : sub.get_options()) {
            if (opt->get_lnames().empty()) continue;
            const auto& name = opt->get_lnames().front();
            if (name == "help") continue;
            if (opt->count() > 0) {
                config_[name] = opt->get_expected_max() > 1 ? join(opt->results(), ",") : opt->results().front();
            } else if (opt->get_type_size_max() == 0) {
                config_[name] = "false";
            } else {
                config_[name] = opt->get_default_str();
            }
        }
    }

    void input(const fs::path& p) { inputs_.push_back(p.string()); }
    fs::path output(const std::string& name) {
        outputs_.push_back(name);
        return out_dir_ / name;
    }
    void set(const std::string& key, json value) { extra_[key] = std::move(value); }

    void write() const {
        json j;
        j["command"] = command_;
        j["tool_version"] = kToolVersion;
        j["config"] = config_;
        j["inputs"] = inputs_;
        j["outputs"] = outputs_;
        j["seed"] = extra_.contains("seed") ? extra_["seed"] : json(nullptr);
        j["template_version"] = extra_.contains("template_version") ? extra_["template_version"] : json(nullptr);
        for (const auto& [k, v] : extra_.items())
            if (k != "seed" && k != "template_version") j[k] = v;
        j["started_at"] = started_;
        j["finished_at"] = utc_timestamp();
        write_file(out_dir_ / "manifest.json", j.dump(2) + "\n");
    }

private:
    std::string command_;
    fs::path out_dir_;
    std::string started_;
    json config_ = json::object();
    std::vector<std::string> inputs_;
    std::vector<std::string> outputs_;
    json extra_ = json::object();
};

template <class T>
std::string lines_of(const std::vector<T>& items) {
    std::string out;
    for (const auto& item : items) {
        out += to_json_line(item);
        out += '\n';
    }
    return out;
}

std::vector<PaperRecord> load_corpus(const fs::path& path, std::ostream& err) {
    require_file(path);
    auto result = ingest_file(path);
    if (!result.report.rejections.empty())
        err << fmt::format("warning: {} line(s) rejected in {} (first: line {}: {})\n",
                           result.report.rejections.size(), path.string(), result.report.rejections.front().line,
                           result.report.rejections.front().reason);
    return std::move(result.records);
}

struct BackendOptions {
    std::string profile = "mock";
    std::string profiles_file;
    std::optional<std::uint64_t> seed;
    std::optional<double> positive_bias;
    std::optional<double> flip_rate;
    std::optional<std::size_t> max_in_flight;
    std::optional<int> max_retries;

    void attach(CLI::App* sub) {
        sub->add_option("--backend", profile, "Backend profile name")->capture_default_str();
        sub->add_option("--backends", profiles_file, "Backend profile file (JSON)");
        sub->add_option("--seed", seed, "Mock backend seed");
        sub->add_option("--positive-bias", positive_bias, "Mock backend positive bias in [0,1]");
        sub->add_option("--flip-rate", flip_rate, "Mock backend flip rate in [0,1]");
        sub->add_option("--max-in-flight", max_in_flight, "Concurrent request limit");
        sub->add_option("--max-retries", max_retries, "Retries after the first attempt");
    }

    BackendConfig resolve() const {
        BackendConfig config;
        if (!profiles_file.empty()) {
            require_file(profiles_file);
            auto profiles = load_backend_profiles(profiles_file);
            auto it = profiles.find(profile);
            if (it == profiles.end()) throw Error(fmt::format("no backend profile {} in {}", profile, profiles_file));
            config = it->second;
        } else if (profile != "mock") {
            throw Error(fmt::format("backend profile {} needs --backends FILE (only \"mock\" is built in)", profile));
        }
        if (seed) config.mock_seed = *seed;
        if (positive_bias) config.mock_positive_bias = *positive_bias;
        if (flip_rate) config.mock_flip_rate = *flip_rate;
        if (max_in_flight) config.max_in_flight = *max_in_flight;
        if (max_retries) config.max_retries = *max_retries;
        config.validate();
        return config;
    }
};

/// Resolved backend settings for the manifest. Only the name of the
/// credential variable is recorded, never its value.
json backend_snapshot(const BackendConfig& c) {
    json j;
    j["name"] = c.name;
    j["endpoint"] = c.endpoint;
    j["model_id"] = c.model_id;
    j["max_retries"] = c.max_retries;
    j["max_in_flight"] = c.max_in_flight;
    j["currency_rate_to_usd"] = c.currency_rate_to_usd;
    if (c.temperature) j["temperature"] = *c.temperature;
    if (!c.api_key_env.empty()) j["api_key_env"] = c.api_key_env;
    if (c.is_mock()) {
        j["mock_seed"] = c.mock_seed;
        j["mock_positive_bias"] = c.mock_positive_bias;
        j["mock_flip_rate"] = c.mock_flip_rate;
    }
    return j;
}

std::string template_version_of(const std::vector<PromptBundle>& bundles) {
    std::set<std::string> versions;
    for (const auto& b : bundles) versions.insert(b.template_version);
    if (versions.empty()) return "";
    return versions.size() == 1 ? *versions.begin() : "mixed";
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"Highly-cited paper prediction toolkit", "hcite"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a TOML/INI file (flags override file values)");
    app.set_version_flag("--version", kToolVersion);

    std::ostream& out = std::cout;
    std::ostream& err = std::cerr;
    std::function<void()> action;

    // ingest
    struct {
        std::string corpus, out;
    } ingest_opts;
    auto* ingest_cmd = app.add_subcommand("ingest", "Validate a corpus file and report descriptive statistics");
    ingest_cmd->add_option("--corpus", ingest_opts.corpus, "Line-delimited record file")->required();
    ingest_cmd->add_option("--out", ingest_opts.out, "Output directory")->required();
    ingest_cmd->callback([&] {
        action = [&] {
            require_file(ingest_opts.corpus);
            Manifest m("ingest", *ingest_cmd, ingest_opts.out);
            m.input(ingest_opts.corpus);
            auto result = ingest_file(ingest_opts.corpus);
            write_file(m.output("records.jsonl"), lines_of(result.records));

            json report;
            report["lines_read"] = result.report.lines_read;
            report["accepted"] = result.records.size();
            report["rejections"] = json::array();
            for (const auto& r : result.report.rejections)
                report["rejections"].push_back({{"line", r.line}, {"reason", r.reason}});
            report["warnings"] = json::array();
            for (const auto& w : result.report.warnings)
                report["warnings"].push_back({{"line", w.line}, {"reason", w.reason}});
            write_file(m.output("ingest_report.json"), report.dump(2) + "\n");

            std::vector<PaperRecord> cited;
            for (const auto& r : result.records)
                if (r.citations) cited.push_back(r);
            const auto summary = descriptive_stats(cited);
            write_file(m.output("summary.json"), summary_to_json(summary) + "\n");
            write_file(m.output("summary.txt"), format_summary_table(summary));
            m.set("records", result.records.size());
            m.write();
            out << fmt::format("ingested {} record(s), rejected {}\n", result.records.size(),
                               result.report.rejections.size());
            out << format_summary_table(summary);
        };
    });

    // label
    struct {
        std::string corpus, out;
        double k = 5.0;
    } label_opts;
    auto* label_cmd = app.add_subcommand("label", "Assign per-year Top-k% citation labels");
    label_cmd->add_option("--corpus", label_opts.corpus, "Line-delimited record file")->required();
    label_cmd->add_option("--k", label_opts.k, "Top-k percent threshold")->capture_default_str();
    label_cmd->add_option("--out", label_opts.out, "Output directory")->required();
    label_cmd->callback([&] {
        action = [&] {
            Manifest m("label", *label_cmd, label_opts.out);
            m.input(label_opts.corpus);
            // Forecast-era records carry no citation counts yet; they are
            // left out of labeling rather than failing the whole run.
            std::vector<PaperRecord> records;
            std::size_t uncited = 0;
            for (auto& r : load_corpus(label_opts.corpus, err)) {
                if (r.citations)
                    records.push_back(std::move(r));
                else
                    ++uncited;
            }
            if (uncited) err << fmt::format("note: {} record(s) without citation counts left unlabeled\n", uncited);
            const LabelSpec spec{label_opts.k};
            const auto labels = label_corpus(records, spec);
            write_file(m.output("labels.jsonl"), lines_of(labels));
            const auto summary = summarize_top_slice(records, spec);
            write_file(m.output("top_slice_summary.json"), summary_to_json(summary) + "\n");
            write_file(m.output("top_slice_summary.txt"), format_summary_table(summary));
            std::size_t positives = 0;
            for (const auto& l : labels) positives += l.positive;
            m.set("positives", positives);
            m.set("unlabeled", uncited);
            m.write();
            out << fmt::format("labeled {} record(s) at Top {}%: {} positive\n", labels.size(), spec.k_percent,
                               positives);
        };
    });

    // assemble
    struct {
        std::string corpus, templates, out;
    } assemble_opts;
    assemble_opts.templates = (data_dir() / "templates").string();
    auto* assemble_cmd = app.add_subcommand("assemble", "Build one structured prompt per record");
    assemble_cmd->add_option("--corpus", assemble_opts.corpus, "Line-delimited record file")->required();
    assemble_cmd->add_option("--templates", assemble_opts.templates, "Template directory")->capture_default_str();
    assemble_cmd->add_option("--out", assemble_opts.out, "Output directory")->required();
    assemble_cmd->callback([&] {
        action = [&] {
            Manifest m("assemble", *assemble_cmd, assemble_opts.out);
            m.input(assemble_opts.corpus);
            m.input(assemble_opts.templates);
            const auto records = load_corpus(assemble_opts.corpus, err);
            require_dir(assemble_opts.templates);
            const auto store = load_templates(assemble_opts.templates);
            std::vector<PromptBundle> bundles;
            std::size_t skipped = 0;
            for (const auto& r : records) {
                if (!group_of(r.year)) {
                    ++skipped;
                    continue;
                }
                bundles.push_back(assemble(r, store));
            }
            if (skipped) err << fmt::format("warning: skipped {} record(s) outside all publication groups\n", skipped);
            write_file(m.output("prompts.jsonl"), lines_of(bundles));
            m.set("template_version", store.version());
            m.set("skipped", skipped);
            m.write();
            out << fmt::format("assembled {} prompt(s)\n", bundles.size());
        };
    });

    // predict
    struct {
        std::string prompts, out;
        BackendOptions backend;
    } predict_opts;
    auto* predict_cmd = app.add_subcommand("predict", "Send prompts to a backend and record verdicts");
    predict_cmd->add_option("--prompts", predict_opts.prompts, "prompts.jsonl from `assemble`")->required();
    predict_opts.backend.attach(predict_cmd);
    predict_cmd->add_option("--out", predict_opts.out, "Output directory")->required();
    predict_cmd->callback([&] {
        action = [&] {
            require_file(predict_opts.prompts);
            Manifest m("predict", *predict_cmd, predict_opts.out);
            m.input(predict_opts.prompts);
            const auto config = predict_opts.backend.resolve();
            const auto bundles = read_bundles(predict_opts.prompts);
            Backend backend(config, make_transport(config));
            const auto result = backend.predict_batch(bundles);
            write_file(m.output("predictions.jsonl"), lines_of(result.predictions));
            write_file(m.output("usage.json"), ledger_to_json(result.ledger, true) + "\n");
            if (config.is_mock()) m.set("seed", config.mock_seed);
            m.set("template_version", template_version_of(bundles));
            m.set("backend", backend_snapshot(config));
            m.write();
            out << fmt::format("predicted {} record(s), {} failed, cost ${:.6f}\n", result.predictions.size(),
                               result.ledger.failed, result.ledger.total_cost_usd());
        };
    });

    // evaluate
    struct {
        std::string labels, predictions, corpus, backend_name = "unknown", out;
        std::size_t top_journals = 0;
        std::string journal_scope = "forecast";
    } eval_opts;
    auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against labels; journal and rate breakdowns");
    eval_cmd->add_option("--labels", eval_opts.labels, "labels.jsonl from `label` (omit for forecast-era reports)");
    eval_cmd->add_option("--predictions", eval_opts.predictions, "predictions.jsonl from `predict`")->required();
    eval_cmd->add_option("--corpus", eval_opts.corpus, "Corpus file, enables journal and per-year breakdowns");
    eval_cmd->add_option("--backend-name", eval_opts.backend_name, "Backend name shown in the report")
        ->capture_default_str();
    eval_cmd->add_option("--top-journals", eval_opts.top_journals, "Rows in the text journal table (0 = all)");
    eval_cmd->add_option("--journal-scope", eval_opts.journal_scope, "Predictions counted in journal/rate tables")
        ->check(CLI::IsMember({"forecast", "all"}))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_opts.out, "Output directory")->required();
    eval_cmd->callback([&] {
        action = [&] {
            require_file(eval_opts.predictions);
            if (eval_opts.labels.empty() && eval_opts.corpus.empty())
                throw Error("evaluate needs --labels, --corpus, or both");
            Manifest m("evaluate", *eval_cmd, eval_opts.out);
            m.input(eval_opts.predictions);
            const auto predictions = read_predictions(eval_opts.predictions);

            if (!eval_opts.labels.empty()) {
                require_file(eval_opts.labels);
                m.input(eval_opts.labels);
                const auto labels = read_labels(eval_opts.labels);
                std::unordered_set<std::string_view> label_ids;
                for (const auto& l : labels) label_ids.insert(l.record_id);
                // Forecast-era predictions have no labels by construction and
                // only feed the rate and journal tables below.
                const auto forecast = forecast_group();
                std::vector<Prediction> scored;
                std::vector<std::string> missing;
                for (const auto& p : predictions) {
                    if (p.group == forecast) continue;
                    if (!label_ids.count(p.record_id)) missing.push_back(p.record_id);
                    scored.push_back(p);
                }
                if (!missing.empty()) {
                    const auto n = missing.size();
                    if (missing.size() > 5) missing.resize(5);
                    throw Error(fmt::format("label/prediction mismatch: {} prediction(s) have no label (e.g. {})", n,
                                            join(missing, ", ")));
                }
                const auto report = evaluate(labels, scored, eval_opts.backend_name, ledger_of(scored));
                write_file(m.output("report.txt"), format_report(report));
                write_file(m.output("report.json"), report_to_json(report) + "\n");
                out << format_report(report);
            }
            if (!eval_opts.corpus.empty()) {
                m.input(eval_opts.corpus);
                const auto records = load_corpus(eval_opts.corpus, err);
                std::vector<Prediction> in_scope;
                for (const auto& p : predictions)
                    if (eval_opts.journal_scope == "all" || p.group == forecast_group()) in_scope.push_back(p);
                if (in_scope.empty())
                    throw Error(fmt::format("no predictions in journal scope \"{}\"", eval_opts.journal_scope));
                const auto table = journal_breakdown(in_scope, records);
                write_file(m.output("journals.txt"), format_journal_breakdown(table, eval_opts.top_journals));
                write_file(m.output("journals.json"), journal_breakdown_to_json(table) + "\n");

                const auto overall = positive_rate(in_scope);
                json rates;
                rates["overall"] = {{"count", overall.count},
                                    {"total", overall.total},
                                    {"proportion", overall.proportion},
                                    {"reported", overall.reported()}};
                rates["by_year"] = json::object();
                for (const auto& [year, r] : positive_rate_by_year(in_scope, records))
                    rates["by_year"][std::to_string(year)] = {
                        {"count", r.count}, {"total", r.total}, {"proportion", r.proportion}, {"reported", r.reported()}};
                write_file(m.output("positive_rates.json"), rates.dump(2) + "\n");
                out << fmt::format("predicted positive: {} of {} ({:.2f}%)\n", overall.count, overall.total,
                                   100.0 * overall.reported());
            }
            m.write();
        };
    });

    // stability
    struct {
        std::string prompts, out;
        BackendOptions backend;
    } stab_opts;
    auto* stab_cmd = app.add_subcommand("stability", "Predict twice and report per-group agreement");
    stab_cmd->add_option("--prompts", stab_opts.prompts, "prompts.jsonl from `assemble`")->required();
    stab_opts.backend.attach(stab_cmd);
    stab_cmd->add_option("--out", stab_opts.out, "Output directory")->required();
    stab_cmd->callback([&] {
        action = [&] {
            require_file(stab_opts.prompts);
            Manifest m("stability", *stab_cmd, stab_opts.out);
            m.input(stab_opts.prompts);
            const auto config = stab_opts.backend.resolve();
            const auto bundles = read_bundles(stab_opts.prompts);
            // Each run gets its own id; for the mock backend the run index
            // offsets the seed so the runs sample independently.
            std::vector<std::vector<Prediction>> runs;
            UsageLedger total;
            for (const char* run_id : {"run_a", "run_b"}) {
                auto run_config = config;
                if (config.is_mock()) run_config.mock_seed = config.mock_seed + runs.size();
                Backend backend(run_config, make_transport(run_config));
                auto result = backend.predict_batch(bundles);
                write_file(m.output(fmt::format("predictions_{}.jsonl", run_id)), lines_of(result.predictions));
                total += result.ledger;
                runs.push_back(std::move(result.predictions));
            }
            const auto report = agreement(runs[0], runs[1]);
            write_file(m.output("agreement.txt"), format_agreement(report));
            write_file(m.output("agreement.json"), agreement_to_json(report) + "\n");
            write_file(m.output("usage.json"), ledger_to_json(total, true) + "\n");
            if (config.is_mock()) m.set("seed", config.mock_seed);
            m.set("template_version", template_version_of(bundles));
            m.set("backend", backend_snapshot(config));
            m.set("run_ids", json::array({"run_a", "run_b"}));
            m.write();
            out << format_agreement(report);
        };
    });

    // trends
    struct {
        std::string corpus, predictions, themes, stopwords, out;
        RankConfig rank;
    } trend_opts;
    trend_opts.themes = (data_dir() / "themes.json").string();
    auto* trend_cmd = app.add_subcommand("trends", "Extract phrases from predicted-positive papers into themes");
    trend_cmd->add_option("--corpus", trend_opts.corpus, "Corpus file")->required();
    trend_cmd->add_option("--predictions", trend_opts.predictions, "predictions.jsonl from `predict`")->required();
    trend_cmd->add_option("--themes", trend_opts.themes, "Theme map (JSON)")->capture_default_str();
    trend_cmd->add_option("--stopwords", trend_opts.stopwords, "Stopword file (default: built-in list)");
    trend_cmd->add_option("--window", trend_opts.rank.window, "Co-occurrence window")->capture_default_str();
    trend_cmd->add_option("--damping", trend_opts.rank.damping, "Damping factor")->capture_default_str();
    trend_cmd->add_option("--epsilon", trend_opts.rank.epsilon, "Convergence threshold")->capture_default_str();
    trend_cmd->add_option("--max-iterations", trend_opts.rank.max_iterations, "Iteration cap")->capture_default_str();
    trend_cmd->add_option("--top-fraction", trend_opts.rank.top_fraction, "Fraction of terms kept as keywords")
        ->capture_default_str();
    trend_cmd->add_option("--out", trend_opts.out, "Output directory")->required();
    trend_cmd->callback([&] {
        action = [&] {
            require_file(trend_opts.predictions);
            require_file(trend_opts.themes);
            Manifest m("trends", *trend_cmd, trend_opts.out);
            m.input(trend_opts.corpus);
            m.input(trend_opts.predictions);
            m.input(trend_opts.themes);
            const auto records = load_corpus(trend_opts.corpus, err);
            const auto predictions = read_predictions(trend_opts.predictions);
            Stopwords stopwords = default_stopwords();
            if (!trend_opts.stopwords.empty()) {
                require_file(trend_opts.stopwords);
                m.input(trend_opts.stopwords);
                stopwords = load_stopwords(trend_opts.stopwords);
            }
            const auto theme_map = load_theme_map(trend_opts.themes);

            std::unordered_set<std::string_view> positive;
            for (const auto& p : predictions)
                if (p.ok() && *p.verdict == Verdict::Positive) positive.insert(p.record_id);
            std::vector<TokenDoc> docs;
            for (const auto& r : records) {
                if (!positive.count(r.id)) continue;
                docs.push_back(tokenize(r.title, stopwords));
                docs.push_back(tokenize(r.abstract, stopwords));
            }
            const auto graph = build_graph(docs, trend_opts.rank);
            std::vector<PhraseCount> phrases;
            if (graph.node_count() > 0) phrases = extract_phrases(rank(graph, trend_opts.rank), docs, trend_opts.rank);
            const auto treemap = theme_frequencies(phrases, theme_map);
            write_file(m.output("phrases.json"), phrases_to_json(phrases) + "\n");
            write_file(m.output("treemap.json"), treemap_to_json(treemap) + "\n");
            m.set("documents", docs.size());
            m.write();
            out << fmt::format("{} phrase(s) from {} predicted-positive paper(s)\n", phrases.size(), positive.size());
            for (std::size_t i = 0; i < std::min<std::size_t>(10, phrases.size()); ++i)
                out << fmt::format("  {:>5}  {}\n", phrases[i].frequency, phrases[i].phrase);
        };
    });

    // serve
    struct {
        ServeOptions serve;
        BackendOptions backend;
        std::string static_dir, templates;
    } serve_opts;
    serve_opts.templates = (data_dir() / "templates").string();
    auto* serve_cmd = app.add_subcommand("serve", "Run the stateless prediction service");
    serve_cmd->add_option("--host", serve_opts.serve.host, "Listen address")->capture_default_str();
    serve_cmd->add_option("--port", serve_opts.serve.port, "Listen port")->capture_default_str();
    serve_cmd->add_option("--templates", serve_opts.templates, "Template directory")->capture_default_str();
    serve_cmd->add_option("--min-year", serve_opts.serve.years.min_year, "Earliest accepted year")->capture_default_str();
    serve_cmd->add_option("--max-year", serve_opts.serve.years.max_year, "Latest accepted year")->capture_default_str();
    serve_cmd->add_option("--static-dir", serve_opts.static_dir, "Serve a built web UI from this directory");
    serve_cmd->add_option("--cors-origin", serve_opts.serve.cors_origin, "Access-Control-Allow-Origin value")
        ->capture_default_str();
    serve_opts.backend.attach(serve_cmd);
    serve_cmd->callback([&] {
        action = [&] {
            serve_opts.serve.template_dir = serve_opts.templates;
            if (!serve_opts.static_dir.empty()) serve_opts.serve.static_dir = serve_opts.static_dir;
            serve(serve_opts.serve, serve_opts.backend.resolve());
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (action) action();
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

int run(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hcite::cli
