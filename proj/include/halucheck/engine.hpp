#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "halucheck/fallback_policy.hpp"
#include "halucheck/prompts.hpp"
#include "halucheck/session.hpp"
#include "halucheck/toolbox.hpp"
#include "halucheck/trajectory.hpp"

namespace halucheck {

struct EngineConfig {
    /// Model turns per session.
    int max_turns = 25;
    /// Consecutive unparseable turns before the session fails.
    int max_parse_retries = 3;
    /// Tool calls allowed for one sentence before it is recorded as unverifiable.
    int tools_per_sentence = 3;
    /// Drive the session with FallbackPolicy instead of a model backend.
    bool deterministic_fallback = false;

    void validate() const {
        if (max_turns < 4) throw ConfigError("max_turns must be at least 4");
        if (max_parse_retries < 1) throw ConfigError("max_parse_retries must be at least 1");
        if (tools_per_sentence < 1) throw ConfigError("tools_per_sentence must be at least 1");
    }
};

class TurnBudgetExceeded : public Error {
public:
    using Error::Error;
};

class SessionFailed : public Error {
public:
    using Error::Error;
};

struct SessionError {
    enum class Kind { turn_budget_exceeded, session_failed };
    Kind kind = Kind::session_failed;
    std::string message;
};

struct SessionOutcome {
    SessionState state;
    Trajectory trajectory;
    std::optional<DetectionReport> report;
    std::optional<SessionError> error;

    bool ok() const noexcept { return report.has_value(); }
};

/// Runs detection sessions. Immutable after construction and safe to share across threads,
/// provided each session gets its own backend.
class Detector {
public:
    Detector(std::shared_ptr<const ToolRegistry> registry, ToolContext context, EngineConfig config = {},
             TemplateSet templates = TemplateSet::builtin())
        : registry_(std::move(registry)), context_(context), config_(config), templates_(std::move(templates)) {
        if (!registry_) throw ConfigError("detector needs a tool registry");
        config_.validate();
    }

    const EngineConfig& config() const noexcept { return config_; }
    const ToolRegistry& registry() const noexcept { return *registry_; }

    /// System instruction followed by the running observation/step history.
    std::vector<ChatMessage> assemble_prompt(const SessionState& s) const {
        std::vector<ChatMessage> out{{Role::system, render_instruction(templates_, s.language, *registry_)}};
        for (const auto& m : s.history)
            if (m.role != Role::system) out.push_back(m);
        return out;
    }

    SessionState start(const DetectionInput& input) const {
        if (unicode::trim(input.response).empty()) throw SchemaError(0, "response must be non-empty");
        SessionState s;
        s.input = input;
        s.language = input.resolved_language();
        s.history.push_back({Role::environment, render_initial_observation(input, s.language)});
        s.history = assemble_prompt(s);
        return s;
    }

    /// One full session. `backend` may be null in fallback mode; `judge` overrides the
    /// context's judge for this session.
    SessionOutcome run(const DetectionInput& input, ModelBackend* backend, ModelBackend* judge = nullptr) const {
        SessionOutcome out;
        out.state = start(input);
        SessionState& s = out.state;
        ToolContext ctx = context_;
        if (judge) ctx.judge = judge;
        if (!backend && !config_.deterministic_fallback) throw ConfigError("no model backend and fallback mode is off");

        Trajectory& t = out.trajectory;
        t.id = "traj-" + input.id;
        t.input_ref = input.id;
        t.dataset = input.dataset_name();
        t.language = s.language;
        t.instruction = s.history.front().content;
        t.gold_label = input.gold_label;
        t.turns.push_back(TrajectoryTurn::observation({s.history.back().content, ObservationSource::initial_input}));

        const FallbackPolicy policy;
        const auto fail = [&](SessionError::Kind kind, std::string message) {
            s.phase = Phase::failed;
            out.error = SessionError{kind, message};
            t.failure = std::move(message);
            log::warn("session " + input.id + " failed: " + t.failure);
        };

        while (s.phase != Phase::done) {
            if (s.turn >= config_.max_turns) {
                fail(SessionError::Kind::turn_budget_exceeded,
                     "TurnBudgetExceeded: no answer after " + std::to_string(config_.max_turns) + " turns");
                break;
            }
            std::string raw;
            try {
                raw = config_.deterministic_fallback ? policy.next_turn(s) : backend->complete(s.history);
            } catch (const std::exception& e) {
                fail(SessionError::Kind::session_failed, std::string("model backend: ") + e.what());
                break;
            }
            ++s.turn;
            s.history.push_back({Role::agent, raw});
            t.turns.push_back(TrajectoryTurn::step(raw));

            Observation obs;
            bool parse_failed = false;
            try {
                AgentStep step = parse_step(raw);
                s.consecutive_parse_failures = 0;
                obs = dispatch(s, step, ctx);
            } catch (const StepParseError& e) {
                parse_failed = true;
                ++s.consecutive_parse_failures;
                obs = render_error_feedback(e.kind() == StepErrorKind::malformed_step ? "MalformedStep" : "BadArgumentSyntax",
                                            e.reason() + ". Reply with exactly:\n" + std::string(turn_grammar));
            }

            if (backend && !config_.deterministic_fallback) {
                if (auto expected = backend->recorded_observation(); expected && *expected != obs.content) {
                    fail(SessionError::Kind::session_failed, "replay diverged at turn " + std::to_string(s.turn) +
                                                                 ": recorded observation differs from the recomputed one");
                    break;
                }
            }
            s.history.push_back({Role::environment, obs.content});
            t.turns.push_back(TrajectoryTurn::observation(obs));

            if (parse_failed && s.consecutive_parse_failures >= config_.max_parse_retries) {
                fail(SessionError::Kind::session_failed,
                     "SessionFailed: " + std::to_string(s.consecutive_parse_failures) + " consecutive malformed turns");
                break;
            }
        }

        if (s.phase == Phase::done) {
            DetectionReport r;
            r.input_id = input.id;
            r.verdicts = s.memory;
            r.response_label = aggregate_response_label(r.verdicts);
            r.trajectory_id = t.id;
            r.turns_used = s.turn;
            t.final_label = r.response_label;
            out.report = std::move(r);
        }
        return out;
    }

    /// Like run(), but failures surface as TurnBudgetExceeded / SessionFailed.
    DetectionReport detect(const DetectionInput& input, ModelBackend* backend, ModelBackend* judge = nullptr) const {
        SessionOutcome o = run(input, backend, judge);
        if (o.report) return std::move(*o.report);
        if (o.error->kind == SessionError::Kind::turn_budget_exceeded) throw TurnBudgetExceeded(o.error->message);
        throw SessionFailed(o.error->message);
    }

    /// Applies one parsed step to the session and returns the observation it produces.
    Observation dispatch(SessionState& s, const AgentStep& step, const ToolContext& ctx) const {
        using payload::FailureCode;
        const ToolCall& call = step.action;
        if (auto bad = registry_->validate(call)) return failure(bad->code, bad->message);

        if (call.tool_name == tools::split_text) return do_split(s, call, ctx);
        if (call.tool_name == tools::write_memory) return do_write(s, call);
        if (call.tool_name == tools::update_memory) return do_update(s, call);
        if (call.tool_name == tools::get_answer) return do_answer(s);

        if (s.phase == Phase::segmentation)
            return failure(FailureCode::wrong_phase, "call split_text on the text before verifying sentences");
        if (s.phase == Phase::reflection) return render_observation(registry_->invoke(call, ctx));

        const std::size_t k = s.memory.size();
        if (s.calls_for_current >= config_.tools_per_sentence) {
            record_unverifiable(s, "unverifiable: tool budget exhausted");
            Observation o = failure(FailureCode::budget_exhausted,
                                    "sentence [" + std::to_string(k + 1) + "] already used its " +
                                        std::to_string(config_.tools_per_sentence) +
                                        " tool calls and was recorded as unverifiable");
            o.content += "\n" + next_hint(s);
            return o;
        }
        ToolResult result = registry_->invoke(call, ctx);
        ++s.calls_for_current;
        Observation o = render_observation(result);
        s.last_evidence = evidence_text(o.content);
        if (result.failed()) ++s.failed_calls_for_current;
        s.last_result = std::move(result);
        if (s.failed_calls_for_current >= config_.tools_per_sentence) {
            record_unverifiable(s, "unverifiable: every tool call failed");
            o.content += "\n" + next_hint(s);
        }
        return o;
    }

private:
    static Observation failure(payload::FailureCode code, std::string message) {
        return render_observation(tool_failure("", code, std::move(message)));
    }

    static std::string evidence_text(std::string_view content) {
        std::string_view v = content;
        if (v.substr(0, 12) == "Observation:") v.remove_prefix(12);
        return std::string(unicode::trim(v));
    }

    bool zh(const SessionState& s) const { return s.language == Language::chinese; }

    std::string next_hint(const SessionState& s) const {
        if (s.phase == Phase::verification) {
            const std::size_t k = s.memory.size();
            return (zh(s) ? "下一步：验证句子[" : "Next: verify sentence [") + std::to_string(k + 1) + "]: " +
                   detail::escape_item(s.sentences[k]);
        }
        std::string out = zh(s) ? "全部 " + std::to_string(s.memory.size()) +
                                      " 个句子已写入记忆。请反思记忆，必要时用 update_memory 修正，然后调用 get_answer。"
                                : "All " + std::to_string(s.memory.size()) +
                                      " sentences are stored. Reflect on the memory, correct it with update_memory "
                                      "if needed, then call get_answer.";
        out += zh(s) ? "\n记忆：" : "\nMemory:";
        for (std::size_t i = 0; i < s.memory.size(); ++i) out += "\n" + render_verdict_line(i + 1, s.memory[i]);
        return out;
    }

    void record(SessionState& s, SentenceVerdict v) const {
        s.memory.push_back(std::move(v));
        s.calls_for_current = 0;
        s.failed_calls_for_current = 0;
        s.last_result.reset();
        s.last_evidence.clear();
        if (s.memory.size() >= s.sentences.size()) s.phase = Phase::reflection;
    }

    void record_unverifiable(SessionState& s, std::string evidence) const {
        SentenceVerdict v;
        v.sentence = s.sentences[s.memory.size()];
        v.label = Label::clean;
        v.evidence = std::move(evidence);
        v.tool_used = s.last_result ? s.last_result->tool_name : std::string("none");
        v.low_confidence = true;
        record(s, std::move(v));
    }

    Observation do_split(SessionState& s, const ToolCall& call, const ToolContext& ctx) const {
        if (s.phase != Phase::segmentation)
            return failure(payload::FailureCode::wrong_phase, "the text is already segmented");
        ToolResult r = registry_->invoke(call, ctx);
        if (const auto* sent = std::get_if<payload::Sentences>(&r.payload); sent && sent->items.empty())
            r = tool_failure(r.tool_name, payload::FailureCode::empty_segmentation, "segmentation produced no sentences");
        Observation o = render_observation(r);
        if (r.failed()) return o;
        s.sentences = std::get<payload::Sentences>(r.payload).items;
        s.phase = Phase::verification;
        o.content += "\n" + next_hint(s);
        return o;
    }

    Observation do_write(SessionState& s, const ToolCall& call) const {
        using payload::FailureCode;
        if (s.phase != Phase::verification)
            return failure(FailureCode::wrong_phase, s.phase == Phase::segmentation
                                                         ? "call split_text before writing memory"
                                                         : "every sentence is already stored, use update_memory");
        const auto label = *call.arguments.integer("label");
        if (label != 0 && label != 1) return failure(FailureCode::invalid_arguments, "label must be 0 or 1");
        SentenceVerdict v;
        const std::size_t k = s.memory.size();
        v.sentence = s.sentences[k];
        v.label = label_from_int(label);
        const std::string* ev = call.arguments.text("evidence");
        v.evidence = ev && !unicode::trim(*ev).empty() ? *ev : s.last_evidence;
        v.tool_used = s.last_result ? s.last_result->tool_name : std::string("none");
        v.low_confidence = v.label == Label::clean && s.calls_for_current > 0 &&
                           s.failed_calls_for_current == s.calls_for_current;
        if (v.label == Label::hallucinated && unicode::trim(v.evidence).empty())
            return failure(FailureCode::invalid_arguments, "a hallucination label needs evidence");
        record(s, v);
        Observation o{std::string("Observation: ") + (zh(s) ? "已写入 " : "Stored ") +
                          render_verdict_line(k + 1, s.memory.back()),
                      ObservationSource::tool_result};
        o.content += "\n" + next_hint(s);
        return o;
    }

    Observation do_update(SessionState& s, const ToolCall& call) const {
        using payload::FailureCode;
        if (s.phase != Phase::reflection)
            return failure(FailureCode::wrong_phase, "update_memory is only available after every sentence is stored");
        const auto index = *call.arguments.integer("index");
        const auto label = *call.arguments.integer("label");
        if (label != 0 && label != 1) return failure(FailureCode::invalid_arguments, "label must be 0 or 1");
        MemoryUpdate u{index < 1 ? 0 : static_cast<std::size_t>(index), label_from_int(label),
                       *call.arguments.text("evidence")};
        if (index < 1 || static_cast<std::size_t>(index) > s.memory.size()) {
            s.rejected_updates.push_back(u);
            log::warn("update_memory: index " + std::to_string(index) + " out of range");
            return failure(FailureCode::update_out_of_range, "index " + std::to_string(index) + " is outside 1.." +
                                                                 std::to_string(s.memory.size()));
        }
        apply_updates(s.memory, {u});
        s.applied_updates.push_back(u);
        return Observation{std::string("Observation: ") + (zh(s) ? "已更新 " : "Updated ") +
                               render_verdict_line(u.index, s.memory[u.index - 1]),
                           ObservationSource::tool_result};
    }

    Observation do_answer(SessionState& s) const {
        if (s.phase != Phase::reflection)
            return failure(payload::FailureCode::called_before_verification,
                           std::to_string(s.memory.size()) + " of " + std::to_string(s.sentences.size()) +
                               " sentences are verified; store every sentence before get_answer");
        payload::Final final;
        final.label = aggregate_response_label(s.memory);
        for (std::size_t i = 0; i < s.memory.size(); ++i)
            if (s.memory[i].label == Label::hallucinated) final.evidence.push_back(s.memory[i]);
        s.phase = Phase::done;
        return render_observation(ToolResult{std::string(tools::get_answer), std::move(final)});
    }

    std::shared_ptr<const ToolRegistry> registry_;
    ToolContext context_;
    EngineConfig config_;
    TemplateSet templates_;
};

/// Trajectory -> replay fixture: every step paired with the observation that followed it.
inline ReplayFixture replay_fixture_from(const DetectionInput& input, const Trajectory& t) {
    ReplayFixture f;
    f.input = input;
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        if (!t.turns[i].is_step()) continue;
        ReplayTurn turn{t.turns[i].text, ""};
        if (i + 1 < t.turns.size() && !t.turns[i + 1].is_step()) turn.observation = t.turns[i + 1].text;
        f.turns.push_back(std::move(turn));
    }
    return f;
}

}  // namespace halucheck
