#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hcite/prompting.hpp"
#include "hcite/verdict.hpp"

namespace hcite {

using std::chrono::microseconds;
using std::chrono::milliseconds;

struct BackendConfig {
    std::string name = "mock";
    std::string endpoint = "mock";  // "mock" or an http(s) base URL
    std::string model_id;
    double price_per_1k_input_tokens = 0.0;   // native currency
    double price_per_1k_output_tokens = 0.0;  // native currency
    double currency_rate_to_usd = 1.0;        // native units per USD, e.g. 7.20 for CNY
    int max_retries = 3;
    milliseconds backoff_base{500};
    milliseconds backoff_cap{30'000};
    std::size_t max_in_flight = 4;
    std::chrono::seconds timeout{120};
    std::optional<double> temperature;
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in config.
    std::string api_key_env;

    // Only read when endpoint == "mock".
    std::uint64_t mock_seed = 0;
    double mock_positive_bias = 0.5;
    double mock_flip_rate = 0.0;

    bool is_mock() const { return endpoint == "mock"; }
    void validate() const;
};

/// Reads {"profiles": [...]} from a backend config file.
std::map<std::string, BackendConfig> load_backend_profiles(const std::filesystem::path& path);
std::map<std::string, BackendConfig> parse_backend_profiles(const std::string& text);

/// Cost in integer micro-USD so ledgers add exactly.
std::int64_t cost_micro_usd(std::uint64_t input_tokens, std::uint64_t output_tokens, const BackendConfig& config);
/// Converts a native-currency amount to USD, rounded to 6 decimals.
double to_usd(double native_amount, double currency_rate_to_usd);

struct Prediction {
    std::string record_id;
    PublicationGroup group;
    std::optional<Verdict> verdict;  // empty for a failed slot
    std::string raw_text;
    microseconds latency{0};
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    std::int64_t cost_micro_usd = 0;
    int attempts = 0;
    std::string error;  // last failure cause for failed slots

    bool ok() const { return verdict.has_value(); }
    double cost_usd() const { return static_cast<double>(cost_micro_usd) / 1e6; }
    bool operator==(const Prediction&) const = default;
};

struct UsageLedger {
    std::uint64_t total_requests = 0;
    std::uint64_t total_retries = 0;
    std::uint64_t total_input_tokens = 0;
    std::uint64_t total_output_tokens = 0;
    std::int64_t total_cost_micro_usd = 0;
    std::uint64_t failed = 0;
    std::chrono::milliseconds wall_time{0};

    void add(const Prediction& p);
    UsageLedger& operator+=(const UsageLedger& other);
    double total_cost_usd() const { return static_cast<double>(total_cost_micro_usd) / 1e6; }
};

UsageLedger ledger_of(const std::vector<Prediction>& predictions);

class AmbiguousResponse : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class PredictionFailed : public Error {
public:
    PredictionFailed(const std::string& cause, Prediction partial)
        : Error("prediction failed: " + cause), partial_(std::move(partial)) {}
    /// The slot as it stood after the last attempt (tokens, attempts, cause).
    const Prediction& partial() const { return partial_; }

private:
    Prediction partial_;
};

/// Strict first-token parse: YES -> Positive, NO -> Negative, case-insensitive,
/// trailing punctuation ignored. Anything else (including a response that also
/// contains the opposite token) throws AmbiguousResponse.
Verdict parse_verdict(std::string_view raw_text);

struct TransportRequest {
    std::string_view record_id;
    std::string_view prompt;
};

struct TransportReply {
    std::string text;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    microseconds latency{0};
};

/// One request-response exchange with a model. Implementations throw
/// TransportError on failure and must be safe for concurrent use.
class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportReply send(const TransportRequest& request) = 0;
};

/// Reproducible verdict from (seed, text). The base decision depends on the
/// text only; the flip depends on (seed, text), so two seeds disagree with
/// probability 2 f (1 - f).
Verdict mock_verdict(std::string_view text, std::uint64_t seed, double positive_bias, double flip_rate);

Prediction mock_predict(const PromptBundle& bundle, std::uint64_t seed, double positive_bias, double flip_rate);

class MockTransport : public Transport {
public:
    MockTransport(std::uint64_t seed, double positive_bias, double flip_rate)
        : seed_(seed), positive_bias_(positive_bias), flip_rate_(flip_rate) {}
    TransportReply send(const TransportRequest& request) override;

private:
    std::uint64_t seed_;
    double positive_bias_;
    double flip_rate_;
};

/// OpenAI-compatible chat-completions client.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(BackendConfig config);
    TransportReply send(const TransportRequest& request) override;

private:
    BackendConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

std::unique_ptr<Transport> make_transport(const BackendConfig& config);

using Sleeper = std::function<void(milliseconds)>;

/// Delay before retry number `attempt` (1-based): min(cap, base * 2^(attempt-1))
/// scaled by a jitter factor in [0.5, 1] derived from the record id.
milliseconds backoff_delay(const BackendConfig& config, std::string_view record_id, int attempt);

struct BatchResult {
    std::vector<Prediction> predictions;  // input order; failed slots included
    UsageLedger ledger;
};

/// A configured backend. All calls through one instance share its in-flight
/// limit, which is how the service caps concurrency across requests.
class Backend {
public:
    Backend(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = {});
    ~Backend();
    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    /// Throws PredictionFailed once max_retries retries are exhausted.
    Prediction predict_one(const PromptBundle& bundle) const;
    BatchResult predict_batch(const std::vector<PromptBundle>& bundles) const;

    const BackendConfig& config() const { return config_; }

private:
    struct Gate;
    BackendConfig config_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    std::unique_ptr<Gate> gate_;
};

Prediction predict_one(const PromptBundle& bundle, const BackendConfig& config, std::shared_ptr<Transport> transport);
BatchResult predict_batch(const std::vector<PromptBundle>& bundles, const BackendConfig& config,
                          std::shared_ptr<Transport> transport);

std::string to_json_line(const Prediction& p);
Prediction prediction_from_json_line(const std::string& line);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);
std::string ledger_to_json(const UsageLedger& ledger, bool include_wall_time);

}  // namespace hcite
