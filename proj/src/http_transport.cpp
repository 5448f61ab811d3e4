#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "hcite/backends.hpp"

namespace hcite {

using json = nlohmann::json;

HttpTransport::HttpTransport(BackendConfig config) : config_(std::move(config)) {
    static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url_re))
        throw Error(fmt::format("backend {}: endpoint must be an http(s) URL", config_.name));
    scheme_host_port_ = m[1].str();
    path_prefix_ = m[2].matched ? m[2].str() : std::string{};
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

TransportReply HttpTransport::send(const TransportRequest& request) {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw TransportError(fmt::format("credential variable {} is not set", config_.api_key_env));
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    json body;
    body["model"] = config_.model_id;
    body["messages"] = json::array({{{"role", "user"}, {"content", std::string(request.prompt)}}});
    if (config_.temperature) body["temperature"] = *config_.temperature;

    const auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(), "application/json");
    const auto latency = std::chrono::duration_cast<microseconds>(std::chrono::steady_clock::now() - start);
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError(fmt::format("HTTP status {}", res->status));

    TransportReply reply;
    reply.latency = latency;
    try {
        const auto j = json::parse(res->body);
        reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (auto u = j.find("usage"); u != j.end()) {
            reply.input_tokens = u->value("prompt_tokens", std::uint64_t{0});
            reply.output_tokens = u->value("completion_tokens", std::uint64_t{0});
        }
    } catch (const json::exception& e) {
        throw TransportError(std::string("unexpected response body: ") + e.what());
    }
    return reply;
}

}  // namespace hcite
