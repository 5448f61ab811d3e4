#include "hcite/backends.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <semaphore>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

namespace hcite {

using json = nlohmann::ordered_json;

void BackendConfig::validate() const {
    if (name.empty()) throw Error("backend profile has no name");
    if (endpoint.empty()) throw Error(fmt::format("backend {}: missing endpoint", name));
    if (price_per_1k_input_tokens < 0 || price_per_1k_output_tokens < 0)
        throw Error(fmt::format("backend {}: prices must be >= 0", name));
    if (!(currency_rate_to_usd > 0)) throw Error(fmt::format("backend {}: currency_rate_to_usd must be > 0", name));
    if (max_retries < 0) throw Error(fmt::format("backend {}: max_retries must be >= 0", name));
    if (max_in_flight < 1) throw Error(fmt::format("backend {}: max_in_flight must be >= 1", name));
    if (backoff_base.count() < 0 || backoff_cap.count() < 0)
        throw Error(fmt::format("backend {}: backoff durations must be >= 0", name));
    if (is_mock()) {
        if (mock_positive_bias < 0 || mock_positive_bias > 1)
            throw Error(fmt::format("backend {}: positive_bias must be in [0, 1]", name));
        if (mock_flip_rate < 0 || mock_flip_rate > 1)
            throw Error(fmt::format("backend {}: flip_rate must be in [0, 1]", name));
    } else if (model_id.empty()) {
        throw Error(fmt::format("backend {}: missing model_id", name));
    }
}

std::map<std::string, BackendConfig> parse_backend_profiles(const std::string& text) {
    std::map<std::string, BackendConfig> out;
    try {
        const auto j = json::parse(text);
        for (const auto& p : j.at("profiles")) {
            for (const char* forbidden : {"api_key", "apikey", "token", "secret"})
                if (p.contains(forbidden))
                    throw Error(fmt::format("credentials must not appear in config files (field \"{}\"); "
                                            "name an environment variable with api_key_env instead",
                                            forbidden));
            BackendConfig c;
            c.name = p.at("name").get<std::string>();
            c.endpoint = p.value("endpoint", c.endpoint);
            c.model_id = p.value("model_id", c.model_id);
            c.price_per_1k_input_tokens = p.value("price_per_1k_input_tokens", 0.0);
            c.price_per_1k_output_tokens = p.value("price_per_1k_output_tokens", 0.0);
            c.currency_rate_to_usd = p.value("currency_rate_to_usd", 1.0);
            c.max_retries = p.value("max_retries", c.max_retries);
            c.backoff_base = milliseconds(p.value("backoff_base_ms", c.backoff_base.count()));
            c.backoff_cap = milliseconds(p.value("backoff_cap_ms", c.backoff_cap.count()));
            c.max_in_flight = p.value("max_in_flight", c.max_in_flight);
            c.timeout = std::chrono::seconds(p.value("timeout_s", c.timeout.count()));
            if (p.contains("temperature")) c.temperature = p.at("temperature").get<double>();
            c.api_key_env = p.value("api_key_env", std::string{});
            if (auto m = p.find("mock"); m != p.end()) {
                c.mock_seed = m->value("seed", c.mock_seed);
                c.mock_positive_bias = m->value("positive_bias", c.mock_positive_bias);
                c.mock_flip_rate = m->value("flip_rate", c.mock_flip_rate);
            }
            c.validate();
            if (!out.emplace(c.name, c).second) throw Error("duplicate backend profile " + c.name);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("malformed backend config: ") + e.what());
    }
    return out;
}

std::map<std::string, BackendConfig> load_backend_profiles(const std::filesystem::path& path) {
    try {
        return parse_backend_profiles(read_file(path));
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

std::int64_t cost_micro_usd(std::uint64_t input_tokens, std::uint64_t output_tokens, const BackendConfig& c) {
    const double native = (static_cast<double>(input_tokens) * c.price_per_1k_input_tokens +
                           static_cast<double>(output_tokens) * c.price_per_1k_output_tokens) /
                          1000.0;
    return std::llround(round_to(native / c.currency_rate_to_usd, 6) * 1e6);
}

double to_usd(double native_amount, double currency_rate_to_usd) {
    return round_to(native_amount / currency_rate_to_usd, 6);
}

void UsageLedger::add(const Prediction& p) {
    total_requests += static_cast<std::uint64_t>(p.attempts);
    total_retries += p.attempts > 0 ? static_cast<std::uint64_t>(p.attempts - 1) : 0;
    total_input_tokens += p.input_tokens;
    total_output_tokens += p.output_tokens;
    total_cost_micro_usd += p.cost_micro_usd;
    if (!p.ok()) ++failed;
}

UsageLedger& UsageLedger::operator+=(const UsageLedger& o) {
    total_requests += o.total_requests;
    total_retries += o.total_retries;
    total_input_tokens += o.total_input_tokens;
    total_output_tokens += o.total_output_tokens;
    total_cost_micro_usd += o.total_cost_micro_usd;
    failed += o.failed;
    wall_time += o.wall_time;
    return *this;
}

UsageLedger ledger_of(const std::vector<Prediction>& predictions) {
    UsageLedger l;
    for (const auto& p : predictions) l.add(p);
    return l;
}

namespace {

std::string normalize_token(std::string_view token) {
    while (!token.empty() && std::ispunct(static_cast<unsigned char>(token.back()))) token.remove_suffix(1);
    return to_lower(token);
}

}  // namespace

Verdict parse_verdict(std::string_view raw) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < raw.size()) {
        while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
        std::size_t j = i;
        while (j < raw.size() && !std::isspace(static_cast<unsigned char>(raw[j]))) ++j;
        if (j > i) tokens.emplace_back(raw.substr(i, j - i));
        i = j;
    }
    if (tokens.empty()) throw AmbiguousResponse("empty response");

    const auto first = normalize_token(tokens.front());
    if (first != "yes" && first != "no")
        throw AmbiguousResponse(fmt::format("first token is neither YES nor NO: \"{}\"", tokens.front()));
    const std::string opposite = first == "yes" ? "no" : "yes";
    for (std::size_t t = 1; t < tokens.size(); ++t) {
        std::string_view tok = tokens[t];
        while (!tok.empty() && std::ispunct(static_cast<unsigned char>(tok.front()))) tok.remove_prefix(1);
        if (normalize_token(tok) == opposite) throw AmbiguousResponse("response contains both YES and NO");
    }
    return first == "yes" ? Verdict::Positive : Verdict::Negative;
}

Verdict mock_verdict(std::string_view text, std::uint64_t seed, double positive_bias, double flip_rate) {
    const std::uint64_t text_hash = fnv1a64(text);
    const Verdict base = unit_interval(mix64(text_hash)) < positive_bias ? Verdict::Positive : Verdict::Negative;
    const std::uint64_t flip_hash = mix64(fnv1a64(text, mix64(seed ^ 0x5bd1e9955bd1e995ULL)));
    return unit_interval(flip_hash) < flip_rate ? invert(base) : base;
}

Prediction mock_predict(const PromptBundle& bundle, std::uint64_t seed, double positive_bias, double flip_rate) {
    Prediction p;
    p.record_id = bundle.record_id;
    p.group = bundle.group;
    p.verdict = mock_verdict(bundle.text, seed, positive_bias, flip_rate);
    p.raw_text = std::string(verdict_token(*p.verdict));
    p.input_tokens = bundle.token_estimate;
    p.output_tokens = 1;
    p.attempts = 1;
    return p;
}

TransportReply MockTransport::send(const TransportRequest& request) {
    TransportReply r;
    r.text = std::string(verdict_token(mock_verdict(request.prompt, seed_, positive_bias_, flip_rate_)));
    r.input_tokens = (utf8_length(request.prompt) + 3) / 4;
    r.output_tokens = 1;
    return r;
}

std::unique_ptr<Transport> make_transport(const BackendConfig& config) {
    config.validate();
    if (config.is_mock())
        return std::make_unique<MockTransport>(config.mock_seed, config.mock_positive_bias, config.mock_flip_rate);
    return std::make_unique<HttpTransport>(config);
}

milliseconds backoff_delay(const BackendConfig& config, std::string_view record_id, int attempt) {
    const double exp = std::ldexp(static_cast<double>(config.backoff_base.count()), std::max(0, attempt - 1));
    const double capped = std::min(exp, static_cast<double>(config.backoff_cap.count()));
    const double jitter = 0.5 + 0.5 * unit_interval(mix64(fnv1a64(record_id) + static_cast<std::uint64_t>(attempt)));
    return milliseconds(static_cast<std::int64_t>(capped * jitter));
}

struct Backend::Gate {
    explicit Gate(std::size_t n) : slots(static_cast<std::ptrdiff_t>(n)) {}
    std::counting_semaphore<> slots;
};

Backend::Backend(BackendConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    config_.validate();
    if (!transport_) throw Error("backend " + config_.name + " has no transport");
    if (!sleeper_) sleeper_ = [](milliseconds d) { std::this_thread::sleep_for(d); };
    gate_ = std::make_unique<Gate>(config_.max_in_flight);
}

Backend::~Backend() = default;

Prediction Backend::predict_one(const PromptBundle& bundle) const {
    Prediction p;
    p.record_id = bundle.record_id;
    p.group = bundle.group;
    const int max_attempts = 1 + config_.max_retries;
    std::string last_cause;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (attempt > 1) sleeper_(backoff_delay(config_, bundle.record_id, attempt - 1));
        p.attempts = attempt;
        try {
            TransportReply reply;
            {
                gate_->slots.acquire();
                struct Release {
                    Gate& g;
                    ~Release() { g.slots.release(); }
                } release{*gate_};
                reply = transport_->send({bundle.record_id, bundle.text});
            }
            p.input_tokens += reply.input_tokens;
            p.output_tokens += reply.output_tokens;
            p.latency += reply.latency;
            p.raw_text = std::move(reply.text);
            p.cost_micro_usd = cost_micro_usd(p.input_tokens, p.output_tokens, config_);
            p.verdict = parse_verdict(p.raw_text);
            p.error.clear();
            return p;
        } catch (const AmbiguousResponse& e) {
            last_cause = std::string("ambiguous response: ") + e.what();
        } catch (const TransportError& e) {
            last_cause = std::string("transport error: ") + e.what();
        }
    }
    p.error = last_cause;
    throw PredictionFailed(last_cause, std::move(p));
}

BatchResult Backend::predict_batch(const std::vector<PromptBundle>& bundles) const {
    const auto start = std::chrono::steady_clock::now();
    BatchResult result;
    result.predictions.resize(bundles.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < bundles.size(); i = next++) {
            try {
                result.predictions[i] = predict_one(bundles[i]);
            } catch (const PredictionFailed& e) {
                result.predictions[i] = e.partial();
            }
        }
    };
    const std::size_t n_workers = std::min(config_.max_in_flight, bundles.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }

    result.ledger = ledger_of(result.predictions);
    result.ledger.wall_time =
        std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - start);
    return result;
}

Prediction predict_one(const PromptBundle& bundle, const BackendConfig& config, std::shared_ptr<Transport> transport) {
    return Backend(config, std::move(transport)).predict_one(bundle);
}

BatchResult predict_batch(const std::vector<PromptBundle>& bundles, const BackendConfig& config,
                          std::shared_ptr<Transport> transport) {
    return Backend(config, std::move(transport)).predict_batch(bundles);
}

std::string to_json_line(const Prediction& p) {
    json j;
    j["id"] = p.record_id;
    j["group"] = p.group.key();
    j["verdict"] = p.verdict ? json(verdict_token(*p.verdict)) : json(nullptr);
    j["raw_text"] = p.raw_text;
    j["latency_ms"] = static_cast<double>(p.latency.count()) / 1000.0;
    j["input_tokens"] = p.input_tokens;
    j["output_tokens"] = p.output_tokens;
    j["cost_usd"] = p.cost_usd();
    j["attempts"] = p.attempts;
    if (!p.ok()) j["error"] = p.error;
    return j.dump();
}

Prediction prediction_from_json_line(const std::string& line) {
    const auto j = json::parse(line);
    Prediction p;
    p.record_id = j.at("id").get<std::string>();
    auto group = group_from_key(j.at("group").get<std::string>());
    if (!group) throw Error("unknown group in prediction " + p.record_id);
    p.group = *group;
    if (!j.at("verdict").is_null()) {
        const auto v = j.at("verdict").get<std::string>();
        if (v != "YES" && v != "NO") throw Error("bad verdict in prediction " + p.record_id);
        p.verdict = v == "YES" ? Verdict::Positive : Verdict::Negative;
    }
    p.raw_text = j.value("raw_text", std::string{});
    p.latency = microseconds(std::llround(j.value("latency_ms", 0.0) * 1000.0));
    p.input_tokens = j.value("input_tokens", std::uint64_t{0});
    p.output_tokens = j.value("output_tokens", std::uint64_t{0});
    p.cost_micro_usd = std::llround(j.value("cost_usd", 0.0) * 1e6);
    p.attempts = j.value("attempts", 1);
    p.error = j.value("error", std::string{});
    return p;
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read predictions file " + path.string());
    std::vector<Prediction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(prediction_from_json_line(line));
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": bad prediction line (" + e.what() + ")");
        }
    }
    return out;
}

std::string ledger_to_json(const UsageLedger& l, bool include_wall_time) {
    json j;
    j["total_requests"] = l.total_requests;
    j["total_retries"] = l.total_retries;
    j["total_input_tokens"] = l.total_input_tokens;
    j["total_output_tokens"] = l.total_output_tokens;
    j["total_cost_usd"] = l.total_cost_usd();
    j["failed"] = l.failed;
    if (include_wall_time) j["wall_time_s"] = static_cast<double>(l.wall_time.count()) / 1000.0;
    return j.dump(2);
}

}  // namespace hcite
