#pragma once

// Trajectory synthesis, filtering and fine-tuning export.

#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "halucheck/batch.hpp"
#include "halucheck/engine.hpp"
#include "halucheck/trajectory.hpp"

namespace halucheck {

enum class RejectionReason { wrong_tool_invocation, formatting_error, label_inconsistent, no_terminal_answer };

inline constexpr std::array<RejectionReason, 4> all_rejection_reasons = {
    RejectionReason::wrong_tool_invocation, RejectionReason::formatting_error, RejectionReason::label_inconsistent,
    RejectionReason::no_terminal_answer};

constexpr std::string_view to_string(RejectionReason r) noexcept {
    switch (r) {
        case RejectionReason::wrong_tool_invocation: return "wrong_tool_invocation";
        case RejectionReason::formatting_error: return "formatting_error";
        case RejectionReason::label_inconsistent: return "label_inconsistent";
        case RejectionReason::no_terminal_answer: return "no_terminal_answer";
    }
    return "formatting_error";
}

inline RejectionReason parse_rejection_reason(std::string_view s) {
    for (auto r : all_rejection_reasons)
        if (to_string(r) == s) return r;
    throw Error("unknown rejection reason '" + std::string(s) + "'");
}

struct Validation {
    /// Sorted, without duplicates. Empty means accepted.
    std::vector<RejectionReason> reasons;
    /// Human-readable notes, one per problem found.
    std::vector<std::string> notes;

    bool accepted() const noexcept { return reasons.empty(); }
};

/// Accepts iff every action is a registered tool with valid arguments, every step is in
/// canonical form, the turns alternate starting and ending with an observation, the last
/// action is get_answer, and final_label equals the gold label.
inline Validation validate_trajectory(const Trajectory& t, std::optional<Label> gold, const ToolRegistry& registry) {
    std::set<RejectionReason> reasons;
    Validation v;
    const auto reject = [&](RejectionReason r, std::string note) {
        reasons.insert(r);
        v.notes.push_back(std::string(to_string(r)) + ": " + std::move(note));
    };

    if (t.turns.empty() || t.turns.front().is_step() || t.turns.front().source != ObservationSource::initial_input)
        reject(RejectionReason::formatting_error, "trajectory must start with the initial observation");
    for (std::size_t i = 1; i < t.turns.size(); ++i)
        if (t.turns[i].is_step() == t.turns[i - 1].is_step()) {
            reject(RejectionReason::formatting_error, "turns " + std::to_string(i) + " and " + std::to_string(i + 1) +
                                                          " do not alternate");
            break;
        }
    if (!t.turns.empty() && t.turns.back().is_step())
        reject(RejectionReason::formatting_error, "trajectory must end with an observation");

    std::optional<std::string> last_action;
    std::size_t step_no = 0;
    for (const auto& turn : t.turns) {
        if (!turn.is_step()) continue;
        ++step_no;
        try {
            AgentStep step = parse_step(turn.text);
            last_action = step.action.tool_name;
            if (serialize_step(step) != turn.text)
                reject(RejectionReason::formatting_error, "step " + std::to_string(step_no) + " is not in canonical form");
            if (auto bad = registry.validate(step.action))
                reject(RejectionReason::wrong_tool_invocation, "step " + std::to_string(step_no) + ": " + bad->message);
        } catch (const StepParseError& e) {
            last_action = std::nullopt;
            reject(RejectionReason::formatting_error, "step " + std::to_string(step_no) + ": " + e.what());
        }
    }
    const bool terminal = last_action && *last_action == tools::get_answer;
    if (!terminal) reject(RejectionReason::no_terminal_answer, "the last action is not get_answer");

    if (!gold) gold = t.gold_label;
    if (terminal || t.final_label) {
        if (!t.final_label)
            reject(RejectionReason::label_inconsistent, "trajectory has no final label");
        else if (!gold)
            reject(RejectionReason::label_inconsistent, "no gold label to compare with");
        else if (*t.final_label != *gold)
            reject(RejectionReason::label_inconsistent, "final label " + std::to_string(to_int(*t.final_label)) +
                                                            " differs from gold " + std::to_string(to_int(*gold)));
    }
    v.reasons.assign(reasons.begin(), reasons.end());
    return v;
}

// ---- yield report ----

struct YieldRow {
    std::string dataset;
    std::size_t attempted = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    /// A trajectory with several reasons counts once in `rejected` and once per reason here.
    std::map<RejectionReason, std::size_t> by_reason;

    void add(const Validation& v) {
        ++attempted;
        if (v.accepted()) {
            ++accepted;
            return;
        }
        ++rejected;
        for (auto r : v.reasons) ++by_reason[r];
    }

    void merge(const YieldRow& other) {
        attempted += other.attempted;
        accepted += other.accepted;
        rejected += other.rejected;
        for (const auto& [r, n] : other.by_reason) by_reason[r] += n;
    }

    std::size_t count(RejectionReason r) const {
        auto it = by_reason.find(r);
        return it == by_reason.end() ? 0 : it->second;
    }
};

struct YieldReport {
    std::vector<YieldRow> rows;  // sorted by dataset
    YieldRow total{"total", 0, 0, 0, {}};

    std::string table() const {
        std::ostringstream out;
        out << std::left << std::setw(24) << "dataset" << std::right << std::setw(10) << "attempted" << std::setw(10)
            << "accepted";
        for (auto r : all_rejection_reasons) out << std::setw(24) << to_string(r);
        out << '\n';
        const auto line = [&](const YieldRow& row) {
            out << std::left << std::setw(24) << row.dataset << std::right << std::setw(10) << row.attempted
                << std::setw(10) << row.accepted;
            for (auto r : all_rejection_reasons) out << std::setw(24) << row.count(r);
            out << '\n';
        };
        for (const auto& row : rows) line(row);
        line(total);
        return out.str();
    }
};

inline json to_json(const YieldRow& row) {
    json reasons = json::object();
    for (auto r : all_rejection_reasons) reasons[std::string(to_string(r))] = row.count(r);
    return json{{"dataset", row.dataset},
                {"attempted", row.attempted},
                {"accepted", row.accepted},
                {"rejected", row.rejected},
                {"rejected_by_reason", reasons}};
}

inline json to_json(const YieldReport& y) {
    json rows = json::array();
    for (const auto& r : y.rows) rows.push_back(to_json(r));
    return json{{"datasets", rows}, {"total", to_json(y.total)}};
}

struct FilterEntry {
    Trajectory trajectory;
    Validation validation;
};

struct FilterResult {
    std::vector<Trajectory> accepted;
    std::vector<FilterEntry> quarantined;
    YieldReport yield;
};

/// Validates each trajectory against its own gold label. Pure and order-stable.
inline FilterResult filter_trajectories(const std::vector<Trajectory>& trajectories, const ToolRegistry& registry) {
    FilterResult out;
    std::map<std::string, YieldRow> rows;
    for (const auto& t : trajectories) {
        Validation v = validate_trajectory(t, std::nullopt, registry);
        auto& row = rows.try_emplace(t.dataset, YieldRow{t.dataset, 0, 0, 0, {}}).first->second;
        row.add(v);
        out.yield.total.add(v);
        if (v.accepted())
            out.accepted.push_back(t);
        else
            out.quarantined.push_back({t, std::move(v)});
    }
    for (auto& [name, row] : rows) out.yield.rows.push_back(std::move(row));
    return out;
}

inline json quarantine_record(const FilterEntry& e) {
    json j = to_json(e.trajectory);
    json reasons = json::array();
    for (auto r : e.validation.reasons) reasons.push_back(std::string(to_string(r)));
    j["rejection_reasons"] = reasons;
    j["rejection_notes"] = e.validation.notes;
    return j;
}

// ---- synthesis ----

struct SynthesisOptions {
    /// Sessions per input; later attempts run only if the previous one was rejected.
    int attempts = 1;
    std::size_t workers = 1;
};

struct SynthesisResult {
    /// Every attempted trajectory, ordered by input id then attempt.
    std::vector<Trajectory> trajectories;
    FilterResult filtered;
};

/// Runs the teacher on every labeled input and filters the results.
inline SynthesisResult synthesize(std::vector<DetectionInput> dataset, const Detector& detector,
                                  const BackendFactory& teacher, const SynthesisOptions& options = {},
                                  const JudgeFactory& judges = nullptr) {
    if (options.attempts < 1) throw ConfigError("attempts must be at least 1");
    for (const auto& in : dataset)
        if (!in.gold_label) throw ConfigError("synthesis input '" + in.id + "' has no gold_label");
    std::stable_sort(dataset.begin(), dataset.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    auto per_input = parallel_map<std::vector<Trajectory>>(dataset.size(), options.workers, [&](std::size_t i) {
        const DetectionInput& in = dataset[i];
        std::vector<Trajectory> tries;
        for (int a = 0; a < options.attempts; ++a) {
            std::unique_ptr<ModelBackend> backend = teacher ? teacher(in) : nullptr;
            std::unique_ptr<ModelBackend> judge = judges ? judges(in) : nullptr;
            Trajectory t = detector.run(in, backend.get(), judge.get()).trajectory;
            if (a > 0) t.id += "-a" + std::to_string(a + 1);
            const bool ok = validate_trajectory(t, in.gold_label, detector.registry()).accepted();
            tries.push_back(std::move(t));
            if (ok) break;
        }
        return tries;
    });

    SynthesisResult out;
    for (auto& tries : per_input)
        for (auto& t : tries) out.trajectories.push_back(std::move(t));
    out.filtered = filter_trajectories(out.trajectories, detector.registry());
    return out;
}

// ---- fine-tuning export ----

struct FinetuneMessage {
    Role role = Role::system;
    std::string content;
    bool train = false;
    bool operator==(const FinetuneMessage&) const = default;
};

struct FinetuneExample {
    std::string trajectory_id;
    std::string input_ref;
    std::string dataset;
    Language language = Language::english;
    std::optional<Label> final_label;
    std::optional<Label> gold_label;
    std::vector<FinetuneMessage> messages;
    bool operator==(const FinetuneExample&) const = default;
};

class NonAcceptedTrajectory : public Error {
public:
    using Error::Error;
};

/// The session as one text: instruction, then every turn, separated by newlines.
inline std::string serialize_session(const Trajectory& t) {
    std::string out = t.instruction;
    for (const auto& turn : t.turns) {
        out += '\n';
        out += turn.text;
    }
    return out;
}

inline std::string transcript(const FinetuneExample& ex) {
    std::string out;
    for (std::size_t i = 0; i < ex.messages.size(); ++i) {
        if (i) out += '\n';
        out += ex.messages[i].content;
    }
    return out;
}

/// Loss applies to agent steps only; the instruction and every observation are masked.
inline FinetuneExample to_finetune_example(const Trajectory& t) {
    FinetuneExample ex{t.id, t.input_ref, t.dataset, t.language, t.final_label, t.gold_label, {}};
    ex.messages.push_back({Role::system, t.instruction, false});
    for (const auto& turn : t.turns)
        ex.messages.push_back(turn.is_step() ? FinetuneMessage{Role::agent, turn.text, true}
                                             : FinetuneMessage{Role::environment, turn.text, false});
    return ex;
}

inline std::vector<FinetuneExample> export_finetune(const std::vector<Trajectory>& trajectories,
                                                    const ToolRegistry& registry) {
    std::vector<FinetuneExample> out;
    for (const auto& t : trajectories) {
        Validation v = validate_trajectory(t, std::nullopt, registry);
        if (!v.accepted())
            throw NonAcceptedTrajectory("trajectory '" + t.id + "' is not accepted (" +
                                        std::string(to_string(v.reasons.front())) + ")");
        out.push_back(to_finetune_example(t));
    }
    return out;
}

inline bool is_error_observation(std::string_view content) {
    return content.substr(0, 20) == "Observation: Error (";
}

/// Inverse of to_finetune_example.
inline Trajectory trajectory_from_example(const FinetuneExample& ex) {
    if (ex.messages.empty() || ex.messages.front().role != Role::system)
        throw Error("fine-tuning example must start with the system message");
    Trajectory t;
    t.id = ex.trajectory_id;
    t.input_ref = ex.input_ref;
    t.dataset = ex.dataset;
    t.language = ex.language;
    t.final_label = ex.final_label;
    t.gold_label = ex.gold_label;
    t.instruction = ex.messages.front().content;
    for (std::size_t i = 1; i < ex.messages.size(); ++i) {
        const auto& m = ex.messages[i];
        if (m.role == Role::agent) {
            t.turns.push_back(TrajectoryTurn::step(m.content));
        } else {
            const auto source = i == 1 ? ObservationSource::initial_input
                                       : (is_error_observation(m.content) ? ObservationSource::error_feedback
                                                                          : ObservationSource::tool_result);
            t.turns.push_back(TrajectoryTurn::observation({m.content, source}));
        }
    }
    return t;
}

inline json to_json(const FinetuneExample& ex) {
    json messages = json::array();
    for (const auto& m : ex.messages)
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}, {"train", m.train}});
    json prov{{"trajectory_id", ex.trajectory_id},
              {"input_ref", ex.input_ref},
              {"dataset", ex.dataset},
              {"language", std::string(to_string(ex.language))},
              {"final_label", ex.final_label ? json(to_int(*ex.final_label)) : json(nullptr)},
              {"gold_label", ex.gold_label ? json(to_int(*ex.gold_label)) : json(nullptr)}};
    return json{{"messages", messages}, {"provenance", prov}};
}

inline FinetuneExample finetune_example_from_json(const json& j) {
    FinetuneExample ex;
    const json& p = j.at("provenance");
    ex.trajectory_id = p.at("trajectory_id").get<std::string>();
    ex.input_ref = p.value("input_ref", std::string{});
    ex.dataset = p.value("dataset", std::string{});
    ex.language = parse_language(p.value("language", std::string("english")));
    if (p.contains("final_label") && !p["final_label"].is_null()) ex.final_label = label_from_int(p["final_label"].get<long long>());
    if (p.contains("gold_label") && !p["gold_label"].is_null()) ex.gold_label = label_from_int(p["gold_label"].get<long long>());
    for (const auto& m : j.at("messages"))
        ex.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>(),
                               m.at("train").get<bool>()});
    return ex;
}

}  // namespace halucheck
