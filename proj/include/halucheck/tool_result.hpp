#pragma once

#include <string>
#include <variant>
#include <vector>

#include "halucheck/core_types.hpp"

namespace halucheck {

namespace payload {

/// Retrieved evidence. `text` is the numbered concatenation of `snippets`.
struct Fact {
    std::string text;
    std::vector<std::string> snippets;
    bool operator==(const Fact&) const = default;
};

/// Exact display form of a numeric result, e.g. "5", "0.25", "1/3 ≈ 0.3333333333".
struct Number {
    std::string display;
    bool operator==(const Number&) const = default;
};

struct Verdict {
    bool pass = false;
    std::string detail;
    bool operator==(const Verdict&) const = default;
};

struct CountAndVerdict {
    long long count = 0;
    bool pass = false;
    bool operator==(const CountAndVerdict&) const = default;
};

struct Sentences {
    std::vector<std::string> items;
    bool operator==(const Sentences&) const = default;
};

/// Terminal answer from get_answer: aggregated label plus the hallucinated triples.
struct Final {
    Label label = Label::clean;
    std::vector<SentenceVerdict> evidence;
    bool operator==(const Final&) const = default;
};

/// Acknowledgement from a memory tool, including what the agent should do next.
struct Note {
    std::string text;
    bool operator==(const Note&) const = default;
};

enum class FailureCode {
    no_evidence,
    provider_unavailable,
    parse_error,
    division_by_zero,
    overflow,
    math_domain,
    sandbox_unavailable,
    judge_unavailable,
    ambiguous_judge_output,
    empty_segmentation,
    invalid_arguments,
    unknown_tool,
    wrong_phase,
    called_before_verification,
    update_out_of_range,
    budget_exhausted,
    tool_error,
};

constexpr std::string_view to_string(FailureCode c) noexcept {
    switch (c) {
        case FailureCode::no_evidence: return "NoEvidence";
        case FailureCode::provider_unavailable: return "ProviderUnavailable";
        case FailureCode::parse_error: return "ParseError";
        case FailureCode::division_by_zero: return "DivisionByZero";
        case FailureCode::overflow: return "Overflow";
        case FailureCode::math_domain: return "MathDomainError";
        case FailureCode::sandbox_unavailable: return "SandboxUnavailable";
        case FailureCode::judge_unavailable: return "JudgeUnavailable";
        case FailureCode::ambiguous_judge_output: return "AmbiguousJudgeOutput";
        case FailureCode::empty_segmentation: return "EmptySegmentation";
        case FailureCode::invalid_arguments: return "InvalidArguments";
        case FailureCode::unknown_tool: return "UnknownTool";
        case FailureCode::wrong_phase: return "WrongPhase";
        case FailureCode::called_before_verification: return "CalledBeforeVerification";
        case FailureCode::update_out_of_range: return "UpdateOutOfRange";
        case FailureCode::budget_exhausted: return "BudgetExhausted";
        case FailureCode::tool_error: return "ToolError";
    }
    return "ToolError";
}

struct Failure {
    FailureCode code = FailureCode::tool_error;
    std::string message;
    bool operator==(const Failure&) const = default;
};

}  // namespace payload

using Payload = std::variant<payload::Fact, payload::Number, payload::Verdict, payload::CountAndVerdict,
                             payload::Sentences, payload::Final, payload::Note, payload::Failure>;

struct ToolResult {
    std::string tool_name;
    Payload payload;

    bool failed() const noexcept { return std::holds_alternative<payload::Failure>(payload); }
    bool operator==(const ToolResult&) const = default;
};

inline ToolResult tool_failure(std::string tool, payload::FailureCode code, std::string message) {
    return ToolResult{std::move(tool), payload::Failure{code, std::move(message)}};
}

/// Raised inside tool executors; the registry converts it into a Failure payload.
class ToolError : public Error {
public:
    ToolError(payload::FailureCode code, const std::string& message) : Error(message), code_(code) {}
    payload::FailureCode code() const noexcept { return code_; }

private:
    payload::FailureCode code_;
};

}  // namespace halucheck
