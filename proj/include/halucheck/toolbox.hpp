#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "halucheck/action_language.hpp"
#include "halucheck/calculator.hpp"
#include "halucheck/sandbox.hpp"
#include "halucheck/search.hpp"
#include "halucheck/text_tools.hpp"

namespace halucheck {

enum class ArgType { text, integer };

constexpr std::string_view to_string(ArgType t) noexcept { return t == ArgType::text ? "str" : "int"; }

struct ArgSpec {
    std::string name;
    ArgType type = ArgType::text;
    bool required = true;
    bool operator==(const ArgSpec&) const = default;
};

enum class ToolKind { deterministic, network, llm_delegated, system };

constexpr std::string_view to_string(ToolKind k) noexcept {
    switch (k) {
        case ToolKind::deterministic: return "deterministic";
        case ToolKind::network: return "network";
        case ToolKind::llm_delegated: return "llm_delegated";
        case ToolKind::system: return "system";
    }
    return "deterministic";
}

inline ToolKind parse_tool_kind(std::string_view s) {
    if (s == "deterministic") return ToolKind::deterministic;
    if (s == "network") return ToolKind::network;
    if (s == "llm_delegated") return ToolKind::llm_delegated;
    if (s == "system") return ToolKind::system;
    throw Error("unknown tool kind '" + std::string(s) + "'");
}

struct UsageExample {
    ArgMap arguments;
    std::string result;
    bool operator==(const UsageExample&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ArgSpec> arg_schema;
    /// Output names as listed in the toolbox table, e.g. "count, label".
    std::string output;
    std::vector<UsageExample> usage_examples;
    ToolKind kind = ToolKind::deterministic;
    /// False for tools registered at runtime; their examples are injected into the prompt.
    bool builtin = true;

    /// "word_count | Input: length: int, text: str -> Output: count, label | <description>"
    std::string signature() const {
        std::string s = name + " | Input: ";
        for (std::size_t i = 0; i < arg_schema.size(); ++i) {
            if (i) s += ", ";
            s += arg_schema[i].name + ": " + std::string(to_string(arg_schema[i].type));
            if (!arg_schema[i].required) s += " (optional)";
        }
        return s + " -> Output: " + output + " | " + description;
    }
};

/// Collaborators the builtin tools need. Pointers may be null when a tool is not configured.
struct ToolContext {
    const SearchProvider* search = nullptr;
    CodeSandbox* sandbox = nullptr;
    ModelBackend* judge = nullptr;
    const SentenceSplitter* splitter = nullptr;
    long long word_count_tolerance = 0;
    std::optional<double> equation_tolerance;
};

using ToolExecutor = std::function<Payload(const ArgMap&, const ToolContext&)>;

class DuplicateName : public Error {
public:
    using Error::Error;
};

class InvalidSchema : public Error {
public:
    using Error::Error;
};

struct ValidationFailure {
    payload::FailureCode code;
    std::string message;
};

/// Name -> spec + executor. Build it up front, then share it read-only across sessions.
class ToolRegistry {
public:
    struct Entry {
        ToolSpec spec;
        ToolExecutor executor;  // empty for tools the engine handles itself
    };

    /// Adds a tool. Throws DuplicateName or InvalidSchema.
    void register_tool(ToolSpec spec, ToolExecutor executor) {
        validate_spec(spec);
        if (find(spec.name)) throw DuplicateName("tool '" + spec.name + "' is already registered");
        order_.push_back(spec.name);
        const std::string name = spec.name;
        entries_.emplace(name, Entry{std::move(spec), std::move(executor)});
    }

    const ToolSpec* find(std::string_view name) const {
        auto it = entries_.find(std::string(name));
        return it == entries_.end() ? nullptr : &it->second.spec;
    }

    bool has(std::string_view name) const { return find(name) != nullptr; }

    /// Specs in registration order.
    std::vector<const ToolSpec*> specs() const {
        std::vector<const ToolSpec*> out;
        for (const auto& n : order_) out.push_back(&entries_.at(n).spec);
        return out;
    }

    std::optional<ValidationFailure> validate(const ToolCall& call) const {
        const ToolSpec* spec = find(call.tool_name);
        if (!spec)
            return ValidationFailure{payload::FailureCode::unknown_tool, "unknown tool '" + call.tool_name + "'"};
        if (auto why = check_arguments(*spec, call.arguments))
            return ValidationFailure{payload::FailureCode::invalid_arguments, *why};
        return std::nullopt;
    }

    /// Validates and runs a tool. Tool failures come back as a Failure payload, never as exceptions.
    ToolResult invoke(const ToolCall& call, const ToolContext& ctx) const {
        if (auto bad = validate(call)) return tool_failure(call.tool_name, bad->code, bad->message);
        const Entry& e = entries_.at(call.tool_name);
        if (!e.executor)
            return tool_failure(call.tool_name, payload::FailureCode::tool_error,
                                "'" + call.tool_name + "' is handled by the agent engine");
        try {
            return ToolResult{call.tool_name, e.executor(call.arguments, ctx)};
        } catch (const ToolError& err) {
            return tool_failure(call.tool_name, err.code(), err.what());
        } catch (const std::exception& err) {
            return tool_failure(call.tool_name, payload::FailureCode::tool_error, err.what());
        }
    }

    static std::optional<std::string> check_arguments(const ToolSpec& spec, const ArgMap& args) {
        for (const auto& a : spec.arg_schema) {
            const ArgValue* v = args.find(a.name);
            if (!v) {
                if (a.required) return "missing required argument '" + a.name + "'";
                continue;
            }
            const bool is_int = std::holds_alternative<std::int64_t>(*v);
            if (a.type == ArgType::integer && !is_int) return "argument '" + a.name + "' must be an integer";
            if (a.type == ArgType::text && is_int) return "argument '" + a.name + "' must be a string";
        }
        for (const auto& [key, value] : args.entries()) {
            const bool known = std::any_of(spec.arg_schema.begin(), spec.arg_schema.end(),
                                           [&](const ArgSpec& a) { return a.name == key; });
            if (!known) return "unexpected argument '" + key + "' for tool '" + spec.name + "'";
        }
        return std::nullopt;
    }

private:
    static void validate_spec(const ToolSpec& spec) {
        if (!is_identifier(spec.name)) throw InvalidSchema("tool name '" + spec.name + "' is not a valid identifier");
        if (spec.description.empty()) throw InvalidSchema("tool '" + spec.name + "' has no description");
        std::set<std::string> names;
        for (const auto& a : spec.arg_schema) {
            if (!is_identifier(a.name)) throw InvalidSchema("argument name '" + a.name + "' is not a valid identifier");
            if (!names.insert(a.name).second) throw InvalidSchema("argument '" + a.name + "' declared twice");
        }
        if (!spec.builtin && spec.usage_examples.empty())
            throw InvalidSchema("tool '" + spec.name + "' needs at least one usage example");
        for (const auto& ex : spec.usage_examples)
            if (auto why = check_arguments(spec, ex.arguments))
                throw InvalidSchema("usage example for '" + spec.name + "': " + *why);
    }

    std::map<std::string, Entry> entries_;
    std::vector<std::string> order_;
};

// ---- builtin tools ----

namespace tools {

inline constexpr std::string_view web_search = "web_search";
inline constexpr std::string_view calculator = "calculator";
inline constexpr std::string_view code_interpreter = "code_interpreter";
inline constexpr std::string_view word_count = "word_count";
inline constexpr std::string_view match = "match";
inline constexpr std::string_view split_text = "split_text";
inline constexpr std::string_view write_memory = "write_memory";
inline constexpr std::string_view update_memory = "update_memory";
inline constexpr std::string_view get_answer = "get_answer";

inline bool is_memory_tool(std::string_view name) {
    return name == split_text || name == write_memory || name == update_memory || name == get_answer;
}

}  // namespace tools

namespace detail {

inline const std::string& required_text(const ArgMap& args, std::string_view key) {
    const std::string* s = args.text(key);
    if (!s) throw ToolError(payload::FailureCode::invalid_arguments, "missing text argument '" + std::string(key) + "'");
    return *s;
}

inline Payload run_calculator(const ArgMap& args, const ToolContext& ctx) {
    const std::string& formula = required_text(args, "formula");
    if (formula.find('=') != std::string::npos) {
        calc::EquationCheck check = calc::check_equation(formula, ctx.equation_tolerance);
        return payload::Verdict{check.pass, check.detail()};
    }
    return payload::Number{calc::evaluate(formula).display()};
}

}  // namespace detail

/// Registry holding the verification tools and the system tools.
inline ToolRegistry default_registry() {
    using payload::CountAndVerdict;
    ToolRegistry reg;
    reg.register_tool(
        ToolSpec{std::string(tools::web_search), "Conduct a web search and return factual information.",
                 {{"sentence", ArgType::text, true}}, "fact", {}, ToolKind::network},
        [](const ArgMap& args, const ToolContext& ctx) -> Payload {
            if (!ctx.search) throw ToolError(payload::FailureCode::provider_unavailable, "no search provider configured");
            return halucheck::web_search(detail::required_text(args, "sentence"), *ctx.search);
        });
    reg.register_tool(
        ToolSpec{std::string(tools::calculator),
                 "Perform calculations based on the input formula and return the result.",
                 {{"formula", ArgType::text, true}}, "result", {}, ToolKind::deterministic},
        detail::run_calculator);
    reg.register_tool(
        ToolSpec{std::string(tools::code_interpreter),
                 "Execute code and return a label indicating whether the execution was successful.",
                 {{"code", ArgType::text, true}}, "label", {}, ToolKind::deterministic},
        [](const ArgMap& args, const ToolContext& ctx) -> Payload {
            if (!ctx.sandbox) throw ToolError(payload::FailureCode::sandbox_unavailable, "no code sandbox configured");
            return halucheck::code_interpreter(detail::required_text(args, "code"), *ctx.sandbox);
        });
    reg.register_tool(
        ToolSpec{std::string(tools::word_count),
                 "Count words in the text and provide a label indicating whether the requirement is met.",
                 {{"length", ArgType::integer, true}, {"text", ArgType::text, true}}, "count, label", {},
                 ToolKind::deterministic},
        [](const ArgMap& args, const ToolContext& ctx) -> Payload {
            return halucheck::word_count(*args.integer("length"), detail::required_text(args, "text"),
                                         ctx.word_count_tolerance);
        });
    reg.register_tool(
        ToolSpec{std::string(tools::match),
                 "Match a sentence with the given context and return a label indicating whether semantic "
                 "matching is successful.",
                 {{"sentence", ArgType::text, true}, {"context", ArgType::text, true}}, "label", {},
                 ToolKind::llm_delegated},
        [](const ArgMap& args, const ToolContext& ctx) -> Payload {
            return halucheck::match(detail::required_text(args, "sentence"), detail::required_text(args, "context"),
                                    ctx.judge);
        });
    reg.register_tool(
        ToolSpec{std::string(tools::split_text), "Split text into individual sentences.",
                 {{"text", ArgType::text, true}}, "sentences", {}, ToolKind::system},
        [](const ArgMap& args, const ToolContext& ctx) -> Payload {
            static const RuleSplitter fallback;
            const SentenceSplitter& splitter = ctx.splitter ? *ctx.splitter : fallback;
            const std::string& text = detail::required_text(args, "text");
            auto items = splitter.split(text, detect_language(text));
            return payload::Sentences{std::move(items)};
        });
    reg.register_tool(
        ToolSpec{std::string(tools::write_memory),
                 "Store the detection result of the current sentence as (sentence, label, evidence); label is 1 "
                 "for hallucination and 0 otherwise.",
                 {{"label", ArgType::integer, true}, {"evidence", ArgType::text, false}}, "memory", {},
                 ToolKind::system},
        nullptr);
    reg.register_tool(
        ToolSpec{std::string(tools::update_memory),
                 "Reflection: correct the stored result of sentence number index with a new label and evidence.",
                 {{"index", ArgType::integer, true}, {"label", ArgType::integer, true}, {"evidence", ArgType::text, true}},
                 "memory", {}, ToolKind::system},
        nullptr);
    reg.register_tool(
        ToolSpec{std::string(tools::get_answer), "Return the detection answer with optional evidence.", {},
                 "result(, evidence)", {}, ToolKind::system},
        nullptr);
    return reg;
}

}  // namespace halucheck
