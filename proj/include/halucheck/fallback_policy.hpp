#pragma once

// Rule-based stand-in for the model: produces the next turn from session state.
// Its output goes through the same parser and dispatcher as model text.

#include <regex>
#include <set>
#include <string>

#include "halucheck/action_language.hpp"
#include "halucheck/search.hpp"
#include "halucheck/session.hpp"
#include "halucheck/toolbox.hpp"

namespace halucheck {

/// Length requirement stated in a query, e.g. "in 50 words" or "200字".
inline std::optional<long long> requested_length(std::string_view query) {
    static const std::regex pattern(R"((\d+)\s*(?:-\s*)?(words?|个字|字|词))", std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(query.begin(), query.end(), m, pattern)) return std::nullopt;
    try {
        const long long n = std::stoll(m[1].str());
        return n > 0 ? std::optional<long long>(n) : std::nullopt;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

/// Supported iff one sentence of one snippet contains every content token of the claim.
inline std::optional<std::string> supporting_snippet(std::string_view claim, const std::vector<std::string>& snippets) {
    const auto wanted = content_tokens(claim);
    if (wanted.empty()) return std::nullopt;
    for (const auto& snippet : snippets) {
        std::string_view body = snippet;
        if (auto colon = body.find(": "); colon != std::string_view::npos) body = body.substr(colon + 2);
        for (const auto& unit : split_sentences(body)) {
            const auto have = content_tokens(unit);
            const std::set<std::string> bag(have.begin(), have.end());
            if (std::all_of(wanted.begin(), wanted.end(), [&](const std::string& t) { return bag.count(t) > 0; }))
                return unit;
        }
    }
    return std::nullopt;
}

class FallbackPolicy {
public:
    std::string next_turn(const SessionState& s) const {
        const bool zh = s.language == Language::chinese;
        switch (s.phase) {
            case Phase::segmentation:
                return step(zh ? "先将待检测文本切分为句子。" : "First split the text into sentences.",
                            tools::split_text, ArgMap{{"text", s.input.response}});
            case Phase::verification: return verify(s, zh);
            case Phase::reflection: return reflect_turn(s, zh);
            case Phase::done:
            case Phase::failed: break;
        }
        throw Error("fallback policy: session is already finished");
    }

private:
    static std::string step(std::string thought, std::string_view tool, ArgMap args) {
        return serialize_step(AgentStep{std::move(thought), ToolCall{std::string(tool), std::move(args)}});
    }

    static std::string idx(std::size_t i) { return "[" + std::to_string(i + 1) + "]"; }

    std::string verify(const SessionState& s, bool zh) const {
        const std::size_t i = s.memory.size();
        const std::string& sentence = s.sentences.at(i);
        if (s.calls_for_current == 0 || !s.last_result) return choose_tool(s, i, sentence, zh);
        return judge(*s.last_result, i, sentence, zh);
    }

    std::string choose_tool(const SessionState& s, std::size_t i, const std::string& sentence, bool zh) const {
        if (sentence.find("```") != std::string::npos)
            return step(zh ? "句子" + idx(i) + "是代码，运行它检查能否正确执行。"
                           : "Sentence " + idx(i) + " is code, run it to see whether it executes correctly.",
                        tools::code_interpreter, ArgMap{{"code", sentence}});
        if (auto eq = extract_equation(sentence))
            return step(zh ? "句子" + idx(i) + "包含计算，用计算器验证。"
                           : "Sentence " + idx(i) + " contains a calculation, check it with the calculator.",
                        tools::calculator, ArgMap{{"formula", eq->formula()}});
        const TaskType task = s.input.task_type.value_or(TaskType::knowledge_qa);
        switch (task) {
            case TaskType::conditional_generation:
                if (auto length = requested_length(s.input.query)) {
                    if (i == 0)
                        return step(zh ? "问题要求 " + std::to_string(*length) + " 字，统计全文字数。"
                                       : "The query asks for " + std::to_string(*length) +
                                             " words, count the words of the whole text.",
                                    tools::word_count, ArgMap{{"length", *length}, {"text", s.input.response}});
                    return write(zh ? "长度要求已在句子[1]中检查。" : "The length requirement was checked at sentence [1].",
                                 Label::clean, zh ? "长度要求已在句子[1]中检查" : "length checked at sentence [1]");
                }
                break;
            case TaskType::semantic_consistency:
                if (!s.input.query.empty())
                    return step(zh ? "检查句子" + idx(i) + "与问题是否一致。"
                                   : "Check whether sentence " + idx(i) + " is consistent with the query.",
                                tools::match, ArgMap{{"sentence", sentence}, {"context", s.input.query}});
                break;
            case TaskType::math_solving:
                return write(zh ? "句子" + idx(i) + "不含可验证的计算。" : "Sentence " + idx(i) + " has no checkable calculation.",
                             Label::clean, zh ? "没有可验证的计算" : "no checkable calculation");
            default: break;
        }
        return step(zh ? "句子" + idx(i) + "是事实陈述，检索证据。"
                       : "Sentence " + idx(i) + " is a factual statement, search for evidence.",
                    tools::web_search, ArgMap{{"sentence", sentence}});
    }

    static std::string write(std::string thought, Label label, std::string evidence) {
        return step(std::move(thought), tools::write_memory,
                    ArgMap{{"label", static_cast<std::int64_t>(to_int(label))}, {"evidence", std::move(evidence)}});
    }

    std::string judge(const ToolResult& r, std::size_t i, const std::string& sentence, bool zh) const {
        using namespace payload;
        const std::string support = zh ? "工具结果支持句子" + idx(i) + "。" : "The tool result supports sentence " + idx(i) + ".";
        const std::string refute =
            zh ? "工具结果与句子" + idx(i) + "矛盾。" : "The tool result contradicts sentence " + idx(i) + ".";
        if (const auto* v = std::get_if<Verdict>(&r.payload)) {
            std::string ev = v->detail.empty() ? (v->pass ? "pass" : "fail") : v->detail;
            return v->pass ? write(support, Label::clean, ev) : write(refute, Label::hallucinated, ev);
        }
        if (const auto* c = std::get_if<CountAndVerdict>(&r.payload)) {
            std::string ev = "count = " + std::to_string(c->count) + ", label = " + (c->pass ? "pass" : "fail");
            return c->pass ? write(support, Label::clean, ev) : write(refute, Label::hallucinated, ev);
        }
        if (const auto* f = std::get_if<Fact>(&r.payload)) {
            if (auto unit = supporting_snippet(sentence, f->snippets)) return write(support, Label::clean, *unit);
            return write(zh ? "检索到的证据不支持句子" + idx(i) + "。" : "No retrieved evidence supports sentence " + idx(i) + ".",
                         Label::hallucinated,
                         f->snippets.empty() ? std::string("no evidence") : f->snippets.front());
        }
        if (const auto* n = std::get_if<Number>(&r.payload))
            return write(support, Label::clean, "result = " + n->display);
        if (const auto* e = std::get_if<Failure>(&r.payload))
            return write(zh ? "工具调用失败，无法验证句子" + idx(i) + "。"
                            : "The tool failed, sentence " + idx(i) + " cannot be verified.",
                         Label::clean, "unverifiable: " + e->message);
        return write(support, Label::clean, "no contradiction found");
    }

    std::string reflect_turn(const SessionState& s, bool zh) const {
        const auto updates = reflect(s.memory, s.language);
        if (!updates.empty()) {
            const auto& u = updates.front();
            return step(zh ? "反思：句子[" + std::to_string(u.index) + "]的标签需要修正。"
                           : "Reflection: the label of sentence [" + std::to_string(u.index) + "] must be corrected.",
                        tools::update_memory,
                        ArgMap{{"index", static_cast<std::int64_t>(u.index)},
                               {"label", static_cast<std::int64_t>(to_int(u.label))},
                               {"evidence", u.evidence}});
        }
        return step(zh ? "记忆中的结果一致，输出最终答案。" : "The memory is consistent, output the final answer.",
                    tools::get_answer, ArgMap{});
    }
};

}  // namespace halucheck
