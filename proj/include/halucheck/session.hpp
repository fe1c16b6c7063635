#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "halucheck/calculator.hpp"
#include "halucheck/model_backend.hpp"
#include "halucheck/tool_result.hpp"

namespace halucheck {

enum class Phase { segmentation, verification, reflection, done, failed };

constexpr std::string_view to_string(Phase p) noexcept {
    switch (p) {
        case Phase::segmentation: return "segmentation";
        case Phase::verification: return "verification";
        case Phase::reflection: return "reflection";
        case Phase::done: return "done";
        case Phase::failed: return "failed";
    }
    return "failed";
}

/// Correction of memory entry `index` (1-based).
struct MemoryUpdate {
    std::size_t index = 0;
    Label label = Label::clean;
    std::string evidence;
    bool operator==(const MemoryUpdate&) const = default;
};

struct SessionState {
    Phase phase = Phase::segmentation;
    DetectionInput input;
    Language language = Language::english;
    std::vector<std::string> sentences;
    /// Verdicts in sentence order; memory[i] belongs to sentences[i].
    std::vector<SentenceVerdict> memory;
    std::vector<ChatMessage> history;
    int turn = 0;
    int consecutive_parse_failures = 0;

    // Bookkeeping for the sentence under verification.
    int calls_for_current = 0;
    int failed_calls_for_current = 0;
    std::optional<ToolResult> last_result;
    std::string last_evidence;

    std::vector<MemoryUpdate> applied_updates;
    std::vector<MemoryUpdate> rejected_updates;

    /// Index of the sentence under verification, if any.
    std::optional<std::size_t> current_sentence() const {
        if (phase != Phase::verification || memory.size() >= sentences.size()) return std::nullopt;
        return memory.size();
    }
};

// ---- equations inside prose ----

namespace detail {

struct EqToken {
    bool number = false;
    std::string text;
};

inline bool ascii_letter(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

inline std::vector<EqToken> equation_tokens(std::string_view sentence) {
    const std::vector<char32_t> cps = unicode::decode(sentence);
    std::vector<EqToken> out;
    const auto at = [&](std::size_t i) -> char32_t { return i < cps.size() ? cps[i] : 0; };
    for (std::size_t i = 0; i < cps.size();) {
        const char32_t c = cps[i];
        if (c >= '0' && c <= '9') {
            const bool glued = i > 0 && ascii_letter(cps[i - 1]);
            std::string num;
            while (i < cps.size()) {
                if (at(i) >= '0' && at(i) <= '9') {
                    num += static_cast<char>(at(i++));
                } else if (at(i) == ',' && at(i + 1) >= '0' && at(i + 1) <= '9' && at(i + 2) >= '0' &&
                           at(i + 2) <= '9' && at(i + 3) >= '0' && at(i + 3) <= '9' &&
                           !(at(i + 4) >= '0' && at(i + 4) <= '9')) {
                    ++i;
                } else if (at(i) == '.' && at(i + 1) >= '0' && at(i + 1) <= '9') {
                    num += '.';
                    ++i;
                } else {
                    break;
                }
            }
            if (at(i) == '%' || at(i) == U'％') {
                num += '%';
                ++i;
            }
            if (!glued) out.push_back({true, num});
            continue;
        }
        std::string op;
        switch (c) {
            case '+': case '*': case '^': case '(': case ')': case '=': op = std::string(1, static_cast<char>(c)); break;
            case '-': case U'−': op = "-"; break;
            case '/': case U'÷': op = "/"; break;
            case U'×': op = "*"; break;
            case U'＝': op = "="; break;
            case U'（': op = "("; break;
            case U'）': op = ")"; break;
            default: break;
        }
        if (!op.empty() && (op == "-" || op == "/") && i > 0 && unicode::is_letter(cps[i - 1]) &&
            unicode::is_letter(at(i + 1)))
            op.clear();
        if (op == "*" && at(i + 1) == '*') {
            op = "^";
            ++i;
        }
        if (!op.empty()) out.push_back({false, op});
        ++i;
    }
    return out;
}

inline std::string join_tokens(const std::vector<EqToken>& toks, std::size_t from, std::size_t to) {
    std::string s;
    for (std::size_t i = from; i < to; ++i) {
        if (!s.empty()) s += ' ';
        s += toks[i].text;
    }
    return s;
}

/// True when the text parses as an expression; arithmetic failures still count as parseable.
inline bool is_expression(const std::string& text) {
    if (text.empty()) return false;
    try {
        calc::evaluate(text);
        return true;
    } catch (const calc::CalcError& e) {
        return e.code() != payload::FailureCode::parse_error;
    }
}

inline bool has_operator(const std::vector<EqToken>& toks, std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i)
        if (!toks[i].number && toks[i].text != "(" && toks[i].text != ")") return true;
    return false;
}

}  // namespace detail

/// A checkable "lhs = rhs" formula found in a sentence, with unit words stripped.
struct ExtractedEquation {
    std::string lhs;
    std::string rhs;
    std::string formula() const { return lhs + " = " + rhs; }
};

inline std::optional<ExtractedEquation> extract_equation(std::string_view sentence) {
    const auto toks = detail::equation_tokens(sentence);
    std::size_t eq = toks.size();
    for (std::size_t i = 0; i < toks.size(); ++i)
        if (!toks[i].number && toks[i].text == "=") {
            eq = i;
            break;
        }
    if (eq == toks.size()) return std::nullopt;
    std::size_t next_eq = toks.size();
    for (std::size_t i = eq + 1; i < toks.size(); ++i)
        if (!toks[i].number && toks[i].text == "=") {
            next_eq = i;
            break;
        }

    std::optional<std::size_t> lhs_from;
    for (std::size_t from = 0; from < eq; ++from)
        if (detail::is_expression(detail::join_tokens(toks, from, eq))) {
            lhs_from = from;
            break;
        }
    if (!lhs_from) return std::nullopt;
    if (*lhs_from > 0 && !detail::has_operator(toks, *lhs_from, eq)) return std::nullopt;

    std::optional<std::size_t> rhs_to;
    for (std::size_t to = next_eq; to > eq + 1; --to)
        if (detail::is_expression(detail::join_tokens(toks, eq + 1, to))) {
            rhs_to = to;
            break;
        }
    if (!rhs_to) return std::nullopt;
    return ExtractedEquation{detail::join_tokens(toks, *lhs_from, eq), detail::join_tokens(toks, eq + 1, *rhs_to)};
}

/// Numeric literals of an expression, '%' applied.
inline std::vector<calc::Rational> equation_operands(std::string_view expression) {
    std::vector<calc::Rational> out;
    for (const auto& t : detail::equation_tokens(expression)) {
        if (!t.number) continue;
        std::string text = t.text;
        const bool percent = !text.empty() && text.back() == '%';
        if (percent) text.pop_back();
        calc::Rational v = calc::parse_decimal(text);
        out.push_back(percent ? calc::Rational(v / 100) : v);
    }
    return out;
}

// ---- reflection ----

namespace detail {

inline std::optional<calc::Rational> claimed_value(const SentenceVerdict& v) {
    auto eq = extract_equation(v.sentence);
    if (!eq) return std::nullopt;
    try {
        calc::Number rhs = calc::evaluate(eq->rhs);
        if (rhs.exact()) return rhs.rational();
    } catch (const calc::CalcError&) {
    }
    return std::nullopt;
}

}  // namespace detail

/// Deterministic reflection over a complete memory.
/// Local: a clean label whose evidence reports a failed check is raised to 1.
/// Global: a clean calculation that consumes the stated result of a hallucinated
/// calculation is raised to 1, and the error keeps propagating through later steps.
inline std::vector<MemoryUpdate> reflect(const std::vector<SentenceVerdict>& memory, Language lang = Language::english) {
    std::vector<MemoryUpdate> updates;
    std::vector<Label> labels;
    for (const auto& v : memory) labels.push_back(v.label);

    for (std::size_t i = 0; i < memory.size(); ++i) {
        if (labels[i] != Label::clean) continue;
        const std::string& ev = memory[i].evidence;
        if (ev.find("label = fail") != std::string::npos ||
            (memory[i].tool_used == "calculator" && ev.find(" ≠ ") != std::string::npos)) {
            labels[i] = Label::hallucinated;
            updates.push_back({i + 1, Label::hallucinated, ev});
        }
    }

    std::vector<std::pair<std::size_t, calc::Rational>> tainted;
    for (std::size_t j = 0; j < memory.size(); ++j) {
        if (labels[j] == Label::clean) {
            if (auto eq = extract_equation(memory[j].sentence)) {
                const auto operands = equation_operands(eq->lhs);
                for (const auto& [k, value] : tainted) {
                    if (std::find(operands.begin(), operands.end(), value) == operands.end()) continue;
                    labels[j] = Label::hallucinated;
                    const std::string shown = calc::Number(value).display();
                    updates.push_back({j + 1, Label::hallucinated,
                                       lang == Language::chinese
                                           ? "依赖第 " + std::to_string(k + 1) + " 步的错误结果 " + shown
                                           : "depends on incorrect step " + std::to_string(k + 1) + " (uses " + shown + ")"});
                    break;
                }
            }
        }
        if (labels[j] == Label::hallucinated)
            if (auto value = detail::claimed_value(memory[j])) tainted.emplace_back(j, *value);
    }
    std::sort(updates.begin(), updates.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return updates;
}

/// Applies updates in order. Out-of-range indices are rejected, logged and returned.
inline std::vector<MemoryUpdate> apply_updates(std::vector<SentenceVerdict>& memory, const std::vector<MemoryUpdate>& updates) {
    std::vector<MemoryUpdate> rejected;
    for (const auto& u : updates) {
        if (u.index < 1 || u.index > memory.size()) {
            log::warn("update_memory: index " + std::to_string(u.index) + " out of range 1.." +
                      std::to_string(memory.size()));
            rejected.push_back(u);
            continue;
        }
        auto& v = memory[u.index - 1];
        v.label = u.label;
        v.evidence = u.evidence;
    }
    return rejected;
}

}  // namespace halucheck
