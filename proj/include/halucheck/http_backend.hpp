#pragma once

// Network clients. Kept apart from the rest of the library because httplib is heavy to compile.

#include <httplib.h>

#include <thread>

#include "halucheck/model_backend.hpp"
#include "halucheck/search.hpp"

namespace halucheck {

namespace detail {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // without trailing slash
};

inline SplitUrl split_url(std::string_view url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("URL needs a scheme: '" + std::string(url) + "'");
    const auto slash = url.find('/', scheme_end + 3);
    SplitUrl out{std::string(url.substr(0, slash)), slash == std::string_view::npos ? "" : std::string(url.substr(slash))};
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (out.origin.rfind("https://", 0) == 0)
        throw ConfigError("this build has no TLS support; use an http:// endpoint");
#endif
    return out;
}

inline void set_timeouts(httplib::Client& cli, std::chrono::milliseconds timeout) {
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    cli.set_connection_timeout(sec, usec);
    cli.set_read_timeout(sec, usec);
    cli.set_write_timeout(sec, usec);
}

}  // namespace detail

inline std::string_view wire_role(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::agent: return "assistant";
        case Role::environment: return "user";
    }
    return "user";
}

/// Chat-completion endpoint: POST {endpoint}/chat/completions with bearer auth.
/// Safe for concurrent calls; every call opens its own connection.
class HttpBackend final : public ModelBackend {
public:
    explicit HttpBackend(BackendConfig config) : config_(std::move(config)), url_(detail::split_url(config_.endpoint_url)) {
        if (config_.model_name.empty()) throw ConfigError("http backend needs a model name");
        if (config_.temperature < 0) throw ConfigError("temperature must be non-negative");
        if (config_.max_turn_tokens <= 0) throw ConfigError("max_turn_tokens must be positive");
    }

    std::string complete(std::span<const ChatMessage> history) override {
        check_history(history);
        json body{{"model", config_.model_name},
                  {"temperature", config_.temperature},
                  {"max_tokens", config_.max_turn_tokens},
                  {"messages", json::array()}};
        for (const auto& m : history) body["messages"].push_back({{"role", std::string(wire_role(m.role))}, {"content", m.content}});
        const std::string payload = body.dump(-1, ' ', false, json::error_handler_t::replace);

        std::string last_error;
        auto backoff = config_.initial_backoff;
        for (int attempt = 0; attempt <= config_.retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            httplib::Client cli(url_.origin);
            detail::set_timeouts(cli, config_.request_timeout);
            if (!config_.api_key.empty()) cli.set_bearer_token_auth(config_.api_key);
            auto res = cli.Post(url_.path + "/chat/completions", payload, "application/json");
            if (!res) {
                last_error = "request failed: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw BackendUnavailable("model endpoint returned HTTP " + std::to_string(res->status) + ": " +
                                         res->body.substr(0, 300));
            try {
                const json reply = json::parse(res->body);
                return reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const json::exception& e) {
                throw BackendUnavailable(std::string("malformed completion response: ") + e.what());
            }
        }
        throw BackendUnavailable("model endpoint unavailable after " + std::to_string(config_.retries + 1) +
                                 " attempts: " + last_error);
    }

private:
    BackendConfig config_;
    detail::SplitUrl url_;
};

/// Google Programmable Search (custom search JSON API).
class GoogleSearchProvider final : public SearchProvider {
public:
    GoogleSearchProvider(std::string api_key, std::string engine_id,
                         std::string base_url = "https://www.googleapis.com",
                         std::chrono::milliseconds timeout = std::chrono::seconds(20))
        : api_key_(std::move(api_key)), engine_id_(std::move(engine_id)), url_(detail::split_url(base_url)),
          timeout_(timeout) {
        if (api_key_.empty() || engine_id_.empty()) throw ConfigError("live search needs SEARCH_API_KEY and SEARCH_ENGINE_ID");
    }

    std::vector<SearchHit> search(std::string_view query) const override {
        httplib::Client cli(url_.origin);
        detail::set_timeouts(cli, timeout_);
        httplib::Params params{{"key", api_key_},
                               {"cx", engine_id_},
                               {"q", std::string(query)},
                               {"num", std::to_string(max_search_results)}};
        auto res = cli.Get(url_.path + "/customsearch/v1", params, httplib::Headers{});
        if (!res) throw ProviderUnavailable("search request failed: " + httplib::to_string(res.error()));
        if (res->status != 200) throw ProviderUnavailable("search provider returned HTTP " + std::to_string(res->status));
        std::vector<SearchHit> hits;
        try {
            const json doc = json::parse(res->body);
            for (const auto& item : doc.value("items", json::array()))
                hits.push_back({item.value("title", std::string{}), item.value("snippet", std::string{}),
                                item.value("link", std::string{})});
        } catch (const json::exception& e) {
            throw ProviderUnavailable(std::string("malformed search response: ") + e.what());
        }
        return hits;
    }

private:
    std::string api_key_;
    std::string engine_id_;
    detail::SplitUrl url_;
    std::chrono::milliseconds timeout_;
};

}  // namespace halucheck
