#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "halucheck/core_types.hpp"

namespace halucheck {

enum class Role { system, agent, environment };

constexpr std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::system: return "system";
        case Role::agent: return "agent";
        case Role::environment: return "environment";
    }
    return "system";
}

inline Role parse_role(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "agent") return Role::agent;
    if (s == "environment") return Role::environment;
    throw Error("unknown role '" + std::string(s) + "'");
}

struct ChatMessage {
    Role role = Role::system;
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

enum class BackendKind { http_endpoint, scripted, replay };

struct BackendConfig {
    BackendKind kind = BackendKind::scripted;
    std::string endpoint_url;
    std::string model_name;
    double temperature = 0.0;
    int max_turn_tokens = 1024;
    std::chrono::milliseconds request_timeout{60'000};
    /// Transient-failure retries after the first attempt.
    int retries = 2;
    std::chrono::milliseconds initial_backoff{500};
    std::string api_key;
};

/// Fatal for the session: network failure or timeout after all retries.
class BackendUnavailable : public Error {
public:
    using Error::Error;
};

/// A scripted or replayed fixture was asked for more turns than it holds.
class ReplayExhausted : public Error {
public:
    using Error::Error;
};

/// One model turn per call. Implementations must not modify `history`.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    virtual std::string complete(std::span<const ChatMessage> history) = 0;

    /// For replay backends: the observation recorded after the most recently returned turn.
    virtual std::optional<std::string> recorded_observation() const { return std::nullopt; }

protected:
    static void check_history(std::span<const ChatMessage> history) {
        if (history.empty()) throw Error("complete: history is empty");
        if (history.front().role != Role::system) throw Error("complete: history must begin with a system message");
    }
};

/// Returns queued turns in order, or delegates to a responder that sees the history.
class ScriptedBackend final : public ModelBackend {
public:
    using Responder = std::function<std::string(std::span<const ChatMessage>)>;

    explicit ScriptedBackend(std::vector<std::string> turns) : queue_(turns.begin(), turns.end()) {}
    explicit ScriptedBackend(Responder responder) : responder_(std::move(responder)) {}

    std::string complete(std::span<const ChatMessage> history) override {
        check_history(history);
        if (responder_) return responder_(history);
        std::lock_guard lock(mutex_);
        if (queue_.empty()) throw ReplayExhausted("scripted backend has no turns left");
        std::string next = std::move(queue_.front());
        queue_.pop_front();
        return next;
    }

    std::size_t remaining() const {
        std::lock_guard lock(mutex_);
        return queue_.size();
    }

private:
    mutable std::mutex mutex_;
    std::deque<std::string> queue_;
    Responder responder_;
};

struct ReplayTurn {
    std::string model;
    std::string observation;
    bool operator==(const ReplayTurn&) const = default;
};

/// A recorded session: the input plus every raw model turn and the observation that followed it.
struct ReplayFixture {
    static constexpr int schema_version = 1;
    DetectionInput input;
    std::vector<ReplayTurn> turns;
};

inline json to_json(const ReplayFixture& f) {
    json turns = json::array();
    for (const auto& t : f.turns) turns.push_back({{"model", t.model}, {"observation", t.observation}});
    return json{{"schema_version", ReplayFixture::schema_version}, {"input", to_json(f.input)}, {"turns", turns}};
}

inline ReplayFixture replay_fixture_from_json(const json& j) {
    if (j.value("schema_version", 0) != ReplayFixture::schema_version)
        throw ConfigError("replay fixture: unsupported schema_version");
    ReplayFixture f;
    if (j.contains("input")) f.input = input_from_json(j.at("input"), 1, false);
    for (const auto& t : j.at("turns"))
        f.turns.push_back(ReplayTurn{t.at("model").get<std::string>(), t.value("observation", std::string{})});
    return f;
}

inline ReplayFixture load_replay_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open replay fixture " + path.string());
    try {
        return replay_fixture_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw ConfigError("replay fixture " + path.string() + ": " + e.what());
    }
}

/// Plays back a recorded session. Holds a cursor, so use one instance per session.
class ReplayBackend final : public ModelBackend {
public:
    explicit ReplayBackend(std::vector<ReplayTurn> turns) : turns_(std::move(turns)) {}
    explicit ReplayBackend(const ReplayFixture& fixture) : turns_(fixture.turns) {}

    std::string complete(std::span<const ChatMessage> history) override {
        check_history(history);
        if (cursor_ >= turns_.size())
            throw ReplayExhausted("replay fixture holds " + std::to_string(turns_.size()) + " turns, turn " +
                                  std::to_string(cursor_ + 1) + " requested");
        return turns_[cursor_++].model;
    }

    std::optional<std::string> recorded_observation() const override {
        if (cursor_ == 0) return std::nullopt;
        return turns_[cursor_ - 1].observation;
    }

    std::size_t cursor() const noexcept { return cursor_; }

private:
    std::vector<ReplayTurn> turns_;
    std::size_t cursor_ = 0;
};

/// Builds a fresh backend for each session.
using BackendFactory = std::function<std::unique_ptr<ModelBackend>(const DetectionInput&)>;

}  // namespace halucheck
