#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "halucheck/action_language.hpp"
#include "halucheck/model_backend.hpp"

namespace halucheck {

/// One element of ⟨o0, (t1,a1), o1, ..., (tn,an), on⟩.
struct TrajectoryTurn {
    enum class Kind { observation, step };

    Kind kind = Kind::observation;
    /// Observation content, or the raw model text of a step.
    std::string text;
    ObservationSource source = ObservationSource::tool_result;

    static TrajectoryTurn observation(Observation o) { return {Kind::observation, std::move(o.content), o.source}; }
    static TrajectoryTurn step(std::string raw) { return {Kind::step, std::move(raw), ObservationSource::tool_result}; }

    bool is_step() const noexcept { return kind == Kind::step; }
    bool operator==(const TrajectoryTurn&) const = default;
};

struct Trajectory {
    static constexpr int schema_version = 1;

    std::string id;
    std::string input_ref;
    std::string dataset;
    Language language = Language::english;
    /// The system instruction the session ran under.
    std::string instruction;
    std::vector<TrajectoryTurn> turns;
    std::optional<Label> final_label;
    std::optional<Label> gold_label;
    /// Empty for completed sessions; the failure reason otherwise.
    std::string failure;

    std::size_t step_count() const {
        return static_cast<std::size_t>(std::count_if(turns.begin(), turns.end(), [](const auto& t) { return t.is_step(); }));
    }

    bool operator==(const Trajectory&) const = default;
};

inline json to_json(const Trajectory& t) {
    json turns = json::array();
    for (const auto& turn : t.turns) {
        if (turn.is_step()) {
            turns.push_back({{"type", "step"}, {"text", turn.text}});
        } else {
            turns.push_back({{"type", "observation"}, {"source", std::string(to_string(turn.source))}, {"text", turn.text}});
        }
    }
    json j{{"schema_version", Trajectory::schema_version},
           {"id", t.id},
           {"input_ref", t.input_ref},
           {"dataset", t.dataset},
           {"language", std::string(to_string(t.language))},
           {"instruction", t.instruction},
           {"turns", turns},
           {"final_label", t.final_label ? json(to_int(*t.final_label)) : json(nullptr)},
           {"gold_label", t.gold_label ? json(to_int(*t.gold_label)) : json(nullptr)}};
    if (!t.failure.empty()) j["failure"] = t.failure;
    return j;
}

inline Trajectory trajectory_from_json(const json& j) {
    if (j.value("schema_version", 0) != Trajectory::schema_version)
        throw Error("trajectory: unsupported schema_version");
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.input_ref = j.value("input_ref", std::string{});
    t.dataset = j.value("dataset", std::string{});
    t.language = parse_language(j.value("language", std::string("english")));
    t.instruction = j.value("instruction", std::string{});
    for (const auto& turn : j.at("turns")) {
        const std::string type = turn.at("type").get<std::string>();
        if (type == "step") {
            t.turns.push_back(TrajectoryTurn::step(turn.at("text").get<std::string>()));
        } else if (type == "observation") {
            t.turns.push_back(TrajectoryTurn::observation(
                {turn.at("text").get<std::string>(), parse_observation_source(turn.value("source", std::string("tool_result")))}));
        } else {
            throw Error("trajectory: unknown turn type '" + type + "'");
        }
    }
    if (auto it = j.find("final_label"); it != j.end() && !it->is_null()) t.final_label = label_from_int(it->get<long long>());
    if (auto it = j.find("gold_label"); it != j.end() && !it->is_null()) t.gold_label = label_from_int(it->get<long long>());
    t.failure = j.value("failure", std::string{});
    return t;
}

/// Newline-delimited JSON helpers shared by the trajectory store and the corpora.
inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (unicode::trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw SchemaError(n, std::string("invalid JSON: ") + e.what());
        }
    }
    return out;
}

template <typename Range, typename ToJson>
void write_jsonl(const std::filesystem::path& path, const Range& items, ToJson&& to_doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& item : items) out << to_doc(item).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

inline std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
    std::vector<Trajectory> out;
    std::size_t line = 0;
    for (const auto& doc : read_jsonl(path)) {
        ++line;
        try {
            out.push_back(trajectory_from_json(doc));
        } catch (const json::exception& e) {
            throw SchemaError(line, e.what());
        } catch (const SchemaError&) {
            throw;
        } catch (const Error& e) {
            throw SchemaError(line, e.what());
        }
    }
    return out;
}

}  // namespace halucheck
