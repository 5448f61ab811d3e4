#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hcite/backends.hpp"
#include "hcite/prompting.hpp"

namespace httplib {
class Server;
}

namespace hcite {

inline constexpr const char* kDisclaimer =
    "For reference only: this verdict is a model estimate of citation potential from the submitted text. "
    "It is not a definitive assessment of the work and does not replace expert judgment.";

/// Templates chosen for a service request: years after the last historical
/// window use the forecast-era template.
const PromptTemplate& template_for_request(const TemplateStore& store, int year);

/// The one prediction path shared by the CLI and the service.
Prediction predict_record(const PaperRecord& record, const PromptTemplate& t, const Backend& backend);

struct PredictRequest {
    std::string title;
    std::string abstract;
    std::vector<std::string> keywords;
    int year = 0;
    std::string journal;  // "arXiv" for unpublished work
};

struct PredictResponse {
    Verdict verdict = Verdict::Negative;
    std::string backend_name;
    std::string template_version;
    std::string disclaimer = kDisclaimer;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::map<std::string, std::string> fields);
    const std::map<std::string, std::string>& fields() const { return fields_; }

private:
    std::map<std::string, std::string> fields_;
};

struct YearRange {
    int min_year = 1991;
    int max_year = kMaxYear;
};

/// Throws ValidationError naming every invalid field.
PredictRequest parse_predict_request(std::string_view body, const YearRange& range);

struct HttpResult {
    int status = 200;
    std::string body;  // JSON
};

using LogSink = std::function<void(std::string_view)>;

/// Stateless: per-request data lives only on the stack of the handling
/// thread and is never logged or written anywhere.
class PredictionService {
public:
    /// `store` may be null when templates failed to load; the service then
    /// answers health checks as degraded and rejects predictions with 503.
    PredictionService(std::shared_ptr<const TemplateStore> store, std::shared_ptr<const Backend> backend,
                      YearRange range = {}, LogSink log = {});

    HttpResult handle_predict(std::string_view body) const;
    HttpResult handle_health() const;

    /// Registers POST /predict and GET /health (plus CORS preflight).
    void mount(httplib::Server& server, const std::string& cors_origin = "*") const;

private:
    std::shared_ptr<const TemplateStore> store_;
    std::shared_ptr<const Backend> backend_;
    YearRange range_;
    LogSink log_;
    std::chrono::steady_clock::time_point started_;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path template_dir;
    YearRange years;
    std::optional<std::filesystem::path> static_dir;
    std::string cors_origin = "*";
};

/// Loads templates (degraded on failure), binds, and blocks until stopped.
int serve(const ServeOptions& options, const BackendConfig& backend, LogSink log = {});

}  // namespace hcite
