#include "hcite/service.hpp"

#include <iostream>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

namespace hcite {

using json = nlohmann::ordered_json;

const PromptTemplate& template_for_request(const TemplateStore& store, int year) {
    if (year > historical_groups().back().end_year) return forecast_template(store);
    return store.for_year(year);
}

Prediction predict_record(const PaperRecord& record, const PromptTemplate& t, const Backend& backend) {
    return backend.predict_one(assemble(record, t));
}

namespace {

std::string describe(const std::map<std::string, std::string>& fields) {
    std::vector<std::string> parts;
    for (const auto& [name, why] : fields) parts.push_back(name + ": " + why);
    return "invalid request (" + join(parts, "; ") + ")";
}

}  // namespace

ValidationError::ValidationError(std::map<std::string, std::string> fields)
    : Error(describe(fields)), fields_(std::move(fields)) {}

PredictRequest parse_predict_request(std::string_view body, const YearRange& range) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error&) {
        throw ValidationError(std::map<std::string, std::string>{{"body", "must be a JSON object"}});
    }
    if (!j.is_object()) throw ValidationError(std::map<std::string, std::string>{{"body", "must be a JSON object"}});

    PredictRequest req;
    std::map<std::string, std::string> bad;
    auto text = [&](const char* name, std::string& out, bool required) {
        auto it = j.find(name);
        if (it == j.end() || it->is_null()) {
            if (required) bad[name] = "required";
            return;
        }
        if (!it->is_string()) {
            bad[name] = "must be a string";
            return;
        }
        out = it->get<std::string>();
        if (required && trim(out).empty()) bad[name] = "required";
    };
    text("title", req.title, true);
    text("abstract", req.abstract, false);
    text("journal", req.journal, true);

    if (auto it = j.find("keywords"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) {
            bad["keywords"] = "must be an array of strings";
        } else {
            for (const auto& k : *it) {
                if (!k.is_string()) {
                    bad["keywords"] = "must be an array of strings";
                    break;
                }
                if (auto kw = trim(k.get<std::string>()); !kw.empty()) req.keywords.push_back(kw);
            }
        }
    }

    auto year = j.find("year");
    if (year == j.end() || year->is_null()) {
        bad["year"] = "required";
    } else if (!year->is_number_integer()) {
        bad["year"] = "must be an integer";
    } else {
        const auto y = year->get<std::int64_t>();
        if (y < range.min_year || y > range.max_year)
            bad["year"] = fmt::format("must be between {} and {}", range.min_year, range.max_year);
        else
            req.year = static_cast<int>(y);
    }
    if (!bad.empty()) throw ValidationError(std::move(bad));
    return req;
}

PredictionService::PredictionService(std::shared_ptr<const TemplateStore> store,
                                     std::shared_ptr<const Backend> backend, YearRange range, LogSink log)
    : store_(std::move(store)),
      backend_(std::move(backend)),
      range_(range),
      log_(std::move(log)),
      started_(std::chrono::steady_clock::now()) {
    if (!backend_) throw Error("prediction service needs a backend");
    if (range_.min_year < historical_groups().front().start_year)
        throw Error("service year range starts before template coverage");
    if (!log_) log_ = [](std::string_view line) { std::cerr << line << '\n'; };
}

HttpResult PredictionService::handle_predict(std::string_view body) const {
    PredictRequest req;
    try {
        req = parse_predict_request(body, range_);
    } catch (const ValidationError& e) {
        json j;
        j["error"] = "validation failed";
        j["fields"] = e.fields();
        return {400, j.dump()};
    }
    if (!store_) return {503, json{{"error", "service templates unavailable"}}.dump()};

    PaperRecord record;
    record.id = "request";
    record.title = req.title;
    record.abstract = req.abstract;
    record.keywords = req.keywords;
    record.journal = req.journal;
    record.year = req.year;

    const auto& tmpl = template_for_request(*store_, req.year);
    Prediction p;
    try {
        p = predict_record(record, tmpl, *backend_);
    } catch (const PredictionFailed&) {
        return {502, json{{"error", "prediction backend unavailable; please retry later"}}.dump()};
    } catch (const std::exception&) {
        return {500, json{{"error", "internal error"}}.dump()};
    }

    PredictResponse resp;
    resp.verdict = *p.verdict;
    resp.backend_name = backend_->config().name;
    resp.template_version = tmpl.version;
    json j;
    j["verdict"] = resp.verdict == Verdict::Positive ? "Positive" : "Negative";
    j["backend_name"] = resp.backend_name;
    j["template_version"] = resp.template_version;
    j["disclaimer"] = resp.disclaimer;
    return {200, j.dump()};
}

HttpResult PredictionService::handle_health() const {
    const auto uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    json j;
    j["status"] = store_ ? "ok" : "degraded";
    j["template_version"] = store_ ? json(store_->version()) : json(nullptr);
    j["backend"] = backend_->config().name;
    j["uptime_seconds"] = uptime;
    return {200, j.dump()};
}

void PredictionService::mount(httplib::Server& server, const std::string& cors_origin) const {
    auto cors = [cors_origin](httplib::Response& res) {
        if (cors_origin.empty()) return;
        res.set_header("Access-Control-Allow-Origin", cors_origin);
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    };
    server.Post("/predict", [this, cors](const httplib::Request& req, httplib::Response& res) {
        auto r = handle_predict(req.body);
        res.status = r.status;
        cors(res);
        res.set_content(r.body, "application/json");
    });
    server.Get("/health", [this, cors](const httplib::Request&, httplib::Response& res) {
        auto r = handle_health();
        res.status = r.status;
        cors(res);
        res.set_content(r.body, "application/json");
    });
    server.Options(R"(/(predict|health))", [cors](const httplib::Request&, httplib::Response& res) {
        cors(res);
        res.status = 204;
    });
    // Method, path and status only: request bodies never reach the log.
    server.set_logger([log = log_](const httplib::Request& req, const httplib::Response& res) {
        log(fmt::format("{} {} {}", req.method, req.path, res.status));
    });
}

int serve(const ServeOptions& options, const BackendConfig& backend_config, LogSink log) {
    if (!log) log = [](std::string_view line) { std::cerr << line << '\n'; };
    std::shared_ptr<const TemplateStore> store;
    try {
        store = std::make_shared<const TemplateStore>(load_templates(options.template_dir));
    } catch (const Error& e) {
        log(fmt::format("templates failed to load, serving degraded: {}", e.what()));
    }
    auto backend = std::make_shared<const Backend>(backend_config, make_transport(backend_config));
    PredictionService service(store, backend, options.years, log);

    httplib::Server server;
    service.mount(server, options.cors_origin);
    if (options.static_dir && !server.set_mount_point("/", options.static_dir->string()))
        throw Error("static directory not found: " + options.static_dir->string());
    log(fmt::format("listening on {}:{} (backend {})", options.host, options.port, backend_config.name));
    if (!server.listen(options.host, options.port))
        throw Error(fmt::format("cannot listen on {}:{}", options.host, options.port));
    return 0;
}

}  // namespace hcite
