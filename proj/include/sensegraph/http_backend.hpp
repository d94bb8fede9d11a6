#pragma once

// Chat-completions client for OpenAI-compatible endpoints.
//
// POST <endpoint> with {"model", "messages": [{"role": "user", ...}],
// "temperature", "max_tokens"}; the answer is choices[0].message.content.
// The API key is read from an environment variable and sent as a bearer
// token; without it no Authorization header is sent (local servers).

#include <cstdlib>
#include <string>
#include <string_view>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sensegraph/defgen.hpp"
#include "sensegraph/error.hpp"

namespace sensegraph::defgen {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // starts with '/'
};

inline Endpoint parse_endpoint(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw InputError("endpoint '" + std::string(url) + "' lacks a scheme");
    const auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw InputError("endpoint '" + std::string(url) + "': unsupported scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, path_start));
    e.path = path_start == std::string_view::npos ? "/v1/chat/completions" : std::string(url.substr(path_start));
    if (e.origin.size() <= scheme_end + 3) throw InputError("endpoint '" + std::string(url) + "' lacks a host");
    return e;
}

class HttpBackend : public Backend {
public:
    explicit HttpBackend(std::string api_key_env = "OPENAI_API_KEY") : api_key_env_(std::move(api_key_env)) {}

    std::string complete(const GenerationRequest& req, const std::string& prompt) override {
        const auto endpoint = parse_endpoint(req.endpoint);
        httplib::Client client(endpoint.origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(req.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        if (const char* key = std::getenv(api_key_env_.c_str()); key && *key) client.set_bearer_token_auth(key);

        const nlohmann::json body = {{"model", req.model},
                                     {"messages", {{{"role", "user"}, {"content", prompt}}}},
                                     {"temperature", req.temperature},
                                     {"max_tokens", req.max_tokens}};
        auto res = client.Post(endpoint.path, body.dump(), "application/json");
        if (!res) throw TransientError("request failed: " + httplib::to_string(res.error()));

        const int status = res->status;
        if (status == 401 || status == 403) throw AuthError("HTTP " + std::to_string(status));
        if (status == 408 || status == 409 || status == 429 || status >= 500)
            throw TransientError("HTTP " + std::to_string(status));
        if (status != 200) throw RuntimeError("HTTP " + std::to_string(status) + ": " + res->body);

        try {
            const auto j = nlohmann::json::parse(res->body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            if (content.is_null()) throw EmptyResponseError("empty model response");
            return content.get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw RuntimeError(std::string("malformed completion response: ") + e.what());
        }
    }

    bool is_remote() const override { return true; }

private:
    std::string api_key_env_;
};

} // namespace sensegraph::defgen
