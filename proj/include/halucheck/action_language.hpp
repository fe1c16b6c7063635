#pragma once

// Line-labeled ReAct grammar used for every agent turn:
//
//   Thought: <free text, may span lines>
//   Action: <tool_name>
//   Action Input: <single-line JSON object>
//
// Argument values are text or integers; anything else is flattened to its JSON text.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "halucheck/core_types.hpp"
#include "halucheck/tool_result.hpp"

namespace halucheck {

using ArgValue = std::variant<std::string, std::int64_t>;

/// Ordered argument map. Insertion order is preserved through parse and serialize.
class ArgMap {
public:
    using Entry = std::pair<std::string, ArgValue>;

    ArgMap() = default;
    ArgMap(std::initializer_list<Entry> entries) {
        for (const auto& e : entries) set(e.first, e.second);
    }

    void set(std::string key, ArgValue value) {
        for (auto& e : entries_) {
            if (e.first == key) {
                e.second = std::move(value);
                return;
            }
        }
        entries_.emplace_back(std::move(key), std::move(value));
    }

    const ArgValue* find(std::string_view key) const {
        for (const auto& e : entries_)
            if (e.first == key) return &e.second;
        return nullptr;
    }

    const std::string* text(std::string_view key) const {
        const ArgValue* v = find(key);
        return v ? std::get_if<std::string>(v) : nullptr;
    }

    std::optional<std::int64_t> integer(std::string_view key) const {
        const ArgValue* v = find(key);
        if (!v) return std::nullopt;
        if (const auto* i = std::get_if<std::int64_t>(v)) return *i;
        return std::nullopt;
    }

    const std::vector<Entry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    bool operator==(const ArgMap&) const = default;

private:
    std::vector<Entry> entries_;
};

struct ToolCall {
    std::string tool_name;
    ArgMap arguments;
    bool operator==(const ToolCall&) const = default;
};

struct AgentStep {
    std::string thought;
    ToolCall action;
    bool operator==(const AgentStep&) const = default;
};

enum class ObservationSource { initial_input, tool_result, error_feedback };

constexpr std::string_view to_string(ObservationSource s) noexcept {
    switch (s) {
        case ObservationSource::initial_input: return "initial_input";
        case ObservationSource::tool_result: return "tool_result";
        case ObservationSource::error_feedback: return "error_feedback";
    }
    return "tool_result";
}

inline ObservationSource parse_observation_source(std::string_view s) {
    if (s == "initial_input") return ObservationSource::initial_input;
    if (s == "tool_result") return ObservationSource::tool_result;
    if (s == "error_feedback") return ObservationSource::error_feedback;
    throw Error("unknown observation source '" + std::string(s) + "'");
}

struct Observation {
    std::string content;
    ObservationSource source = ObservationSource::tool_result;
    bool operator==(const Observation&) const = default;
};

enum class StepErrorKind { malformed_step, bad_argument_syntax };

/// A model turn that does not fit the grammar. `reason` is fed back to the model verbatim.
class StepParseError : public Error {
public:
    StepParseError(StepErrorKind kind, const std::string& reason)
        : Error(std::string(kind == StepErrorKind::malformed_step ? "MalformedStep: " : "BadArgumentSyntax: ") +
                reason),
          kind_(kind),
          reason_(reason) {}

    StepErrorKind kind() const noexcept { return kind_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    StepErrorKind kind_;
    std::string reason_;
};

/// Accepted spellings that are rewritten to the canonical tool name.
inline std::string normalize_tool_name(std::string_view name) {
    if (name == "word_counter") return "word_count";
    return std::string(name);
}

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    const auto head = [](char c) { return (c >= 'a' && c <= 'z') || c == '_'; };
    const auto tail = [&](char c) { return head(c) || (c >= '0' && c <= '9'); };
    if (!head(s.front())) return false;
    for (char c : s.substr(1))
        if (!tail(c)) return false;
    return true;
}

namespace detail {

inline constexpr std::string_view thought_label = "Thought:";
inline constexpr std::string_view action_label = "Action:";
inline constexpr std::string_view input_label = "Action Input:";
inline constexpr std::string_view observation_label = "Observation:";

inline bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

/// Byte offsets of every line start.
inline std::vector<std::size_t> line_starts(std::string_view text) {
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i < text.size(); ++i)
        if (text[i] == '\n') starts.push_back(i + 1);
    return starts;
}

inline std::string_view line_at(std::string_view text, std::size_t start) {
    std::size_t end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

inline ArgValue flatten(const ordered_json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) {
        if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX))
            return v.dump();
        return v.get<std::int64_t>();
    }
    return v.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

inline ArgMap parse_arguments(std::string_view block) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(block);
    } catch (const ordered_json::parse_error& e) {
        throw StepParseError(StepErrorKind::bad_argument_syntax,
                             std::string("Action Input is not a valid JSON object: ") + e.what());
    }
    if (!doc.is_object())
        throw StepParseError(StepErrorKind::bad_argument_syntax, "Action Input must be a JSON object");
    ArgMap args;
    for (const auto& [key, value] : doc.items()) args.set(key, flatten(value));
    return args;
}

}  // namespace detail

/// Parses one raw model turn. Throws StepParseError; never crashes on arbitrary input.
inline AgentStep parse_step(std::string_view raw) {
    using namespace detail;
    const auto starts = line_starts(raw);

    std::optional<std::size_t> action_idx;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        if (starts_with(line_at(raw, starts[i]), action_label)) {
            action_idx = i;
            break;
        }
    }
    if (!action_idx) throw StepParseError(StepErrorKind::malformed_step, "no 'Action:' line found");

    // Thought: everything before the Action line, minus the trailing line break.
    const std::size_t action_start = starts[*action_idx];
    std::string_view before = raw.substr(0, action_start);
    if (!before.empty() && before.back() == '\n') before.remove_suffix(1);
    if (!before.empty() && before.back() == '\r') before.remove_suffix(1);
    std::string thought;
    std::size_t thought_pos = std::string_view::npos;
    for (std::size_t i = 0; i < *action_idx; ++i) {
        if (starts_with(line_at(raw, starts[i]), thought_label)) {
            thought_pos = starts[i];
            break;
        }
    }
    if (thought_pos != std::string_view::npos) {
        std::string_view t = before.substr(std::min(thought_pos + thought_label.size(), before.size()));
        if (!t.empty() && t.front() == ' ') t.remove_prefix(1);
        thought = std::string(t);
    } else {
        thought = std::string(unicode::trim(before));
    }

    std::string_view name_text = unicode::trim(line_at(raw, action_start).substr(action_label.size()));
    if (name_text.empty()) throw StepParseError(StepErrorKind::malformed_step, "'Action:' line names no tool");
    if (!is_identifier(name_text))
        throw StepParseError(StepErrorKind::malformed_step,
                             "tool name '" + std::string(name_text) + "' is not a valid identifier");

    if (*action_idx + 1 >= starts.size() || !starts_with(line_at(raw, starts[*action_idx + 1]), input_label))
        throw StepParseError(StepErrorKind::malformed_step, "'Action Input:' line must follow the 'Action:' line");

    const std::size_t input_start = starts[*action_idx + 1];
    std::string_view block = unicode::trim(line_at(raw, input_start).substr(input_label.size()));
    if (block.empty()) throw StepParseError(StepErrorKind::bad_argument_syntax, "Action Input is empty");

    ArgMap args;
    try {
        args = parse_arguments(block);
    } catch (const StepParseError&) {
        // Tolerate a JSON object spread over several lines, stopping at any hallucinated observation.
        std::string_view rest = raw.substr(input_start + input_label.size());
        if (auto obs = rest.find(std::string("\n") + std::string(observation_label)); obs != std::string_view::npos)
            rest = rest.substr(0, obs);
        rest = unicode::trim(rest);
        if (rest == block) throw;
        args = parse_arguments(rest);
    }
    return AgentStep{std::move(thought), ToolCall{normalize_tool_name(name_text), std::move(args)}};
}

inline std::string serialize_arguments(const ArgMap& args) {
    ordered_json doc = ordered_json::object();
    for (const auto& [key, value] : args.entries())
        std::visit([&](const auto& v) { doc[key] = v; }, value);
    return doc.dump(-1, ' ', false, ordered_json::error_handler_t::replace);
}

/// Canonical three-line form. parse_step(serialize_step(s)) == s for structurally valid steps.
inline std::string serialize_step(const AgentStep& step) {
    std::string out(detail::thought_label);
    if (!step.thought.empty()) {
        out += ' ';
        out += step.thought;
    }
    out += '\n';
    out += detail::action_label;
    out += ' ';
    out += step.action.tool_name;
    out += '\n';
    out += detail::input_label;
    out += ' ';
    out += serialize_arguments(step.action.arguments);
    return out;
}

/// Steps the canonical form can represent: identifier tool name, a thought with no line that
/// could be mistaken for an Action line, and valid UTF-8 text everywhere.
inline bool is_structurally_valid(const AgentStep& step) {
    if (!is_identifier(step.action.tool_name) || normalize_tool_name(step.action.tool_name) != step.action.tool_name)
        return false;
    for (std::size_t start : detail::line_starts(step.thought)) {
        std::string_view line = detail::line_at(step.thought, start);
        if (detail::starts_with(line, detail::action_label)) return false;
    }
    if (!step.thought.empty() && step.thought.back() == '\r') return false;
    if (step.thought.find('\r') != std::string::npos) return false;
    const auto valid_utf8 = [](std::string_view s) {
        for (char32_t cp : unicode::decode(s))
            if (cp == U'�') return false;
        return true;
    };
    if (!valid_utf8(step.thought)) return false;
    for (const auto& [key, value] : step.action.arguments.entries()) {
        if (!valid_utf8(key)) return false;
        if (const auto* s = std::get_if<std::string>(&value); s && !valid_utf8(*s)) return false;
    }
    return true;
}

namespace detail {

/// Escapes backslashes and line breaks so list items never blend into each other.
inline std::string escape_item(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        if (c == '\\') out += "\\\\";
        else if (c == '\n') out += "\\n";
        else if (c == '\r') out += "\\r";
        else out += c;
    }
    return out;
}

}  // namespace detail

inline std::string numbered_list(const std::vector<std::string>& items, bool bracketed) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += '\n';
        out += bracketed ? "[" + std::to_string(i + 1) + "] " : std::to_string(i + 1) + ". ";
        out += detail::escape_item(items[i]);
    }
    return out;
}

inline std::string render_verdict_line(std::size_t index, const SentenceVerdict& v) {
    return "[" + std::to_string(index) + "] label=" + std::to_string(to_int(v.label)) + " | sentence: " +
           detail::escape_item(v.sentence) + " | evidence: " + detail::escape_item(v.evidence) +
           (v.tool_used.empty() ? "" : " | tool: " + v.tool_used) + (v.low_confidence ? " | low-confidence" : "");
}

/// Deterministic text for a tool result. Failures become error feedback.
inline Observation render_observation(const ToolResult& result) {
    using namespace payload;
    constexpr std::string_view prefix = "Observation:";
    return std::visit(
        [&](const auto& p) -> Observation {
            using T = std::decay_t<decltype(p)>;
            std::string body;
            auto source = ObservationSource::tool_result;
            if constexpr (std::is_same_v<T, Fact>) {
                body = "\n" + p.text;
            } else if constexpr (std::is_same_v<T, Number>) {
                body = " result = " + p.display;
            } else if constexpr (std::is_same_v<T, Verdict>) {
                body = std::string(" label = ") + (p.pass ? "pass" : "fail");
                if (!p.detail.empty()) body += "; " + detail::escape_item(p.detail);
            } else if constexpr (std::is_same_v<T, CountAndVerdict>) {
                body = " count = " + std::to_string(p.count) + ", label = " + (p.pass ? "pass" : "fail");
            } else if constexpr (std::is_same_v<T, Sentences>) {
                body = " " + std::to_string(p.items.size()) + " sentence(s)";
                if (!p.items.empty()) body += "\n" + numbered_list(p.items, true);
            } else if constexpr (std::is_same_v<T, Final>) {
                body = std::string(" Final answer: ") +
                       (p.label == Label::hallucinated ? "Hallucination" : "No hallucination");
                for (std::size_t i = 0; i < p.evidence.size(); ++i)
                    body += "\n" + render_verdict_line(i + 1, p.evidence[i]);
            } else if constexpr (std::is_same_v<T, Note>) {
                body = " " + p.text;
            } else {
                source = ObservationSource::error_feedback;
                body = " Error (" + std::string(to_string(p.code)) + "): " + detail::escape_item(p.message);
            }
            return Observation{std::string(prefix) + body, source};
        },
        result.payload);
}

/// Error feedback for a turn that never reached a tool (grammar or contract violation).
inline Observation render_error_feedback(std::string_view code, std::string_view message) {
    return Observation{"Observation: Error (" + std::string(code) + "): " + detail::escape_item(message),
                       ObservationSource::error_feedback};
}

}  // namespace halucheck
