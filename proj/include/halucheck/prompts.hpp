#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "halucheck/toolbox.hpp"

namespace halucheck {

inline constexpr std::string_view instruction_version = "v1";

/// The turn grammar, reproduced verbatim inside every instruction template.
inline constexpr std::string_view turn_grammar =
    "Thought: <your reasoning for this step>\n"
    "Action: <tool name>\n"
    "Action Input: <the arguments as a single-line JSON object>";

inline constexpr std::string_view instruction_en_v1 =
    R"(You are a hallucination detection agent. Decide whether the given text contains hallucinations: content that looks plausible but is factually unsupported, contains calculation or code errors, violates the requirements of the instruction, or is irrelevant or self-contradictory.

Work in three stages and keep a memory of (sentence, hallucination label, supporting evidence) triples. The label is 1 if the sentence contains a hallucination and 0 otherwise.
1. Sentence segmentation: call split_text on the text to be checked. Each returned sentence is one detection unit, with pronouns and omitted content completed.
2. Tool selection and verification: check the sentences one at a time, in order. For each sentence choose the most suitable tool, for example web_search for factual statements, calculator for mathematical expressions, code_interpreter for code, word_count for length requirements and match for relevance or consistency. Compare the sentence with the tool result, then call write_memory with the label and the supporting evidence. Use at most 3 tools for one sentence.
3. Reflection: once every sentence is stored, double-check the memory. Locally, make sure each label agrees with its evidence. Globally, judge each sentence in the context of the others: if an earlier calculation is wrong, any later step that uses its result is also wrong, even if it is correct in isolation. Correct mistakes with update_memory, then call get_answer to output the final result.

Available tools:
{tools}
{new_tools}
Reply at every turn in exactly this format and nothing else:
{grammar})";

inline constexpr std::string_view instruction_zh_v1 =
    R"(你是一个幻觉检测智能体。请判断给定文本中是否存在幻觉：看似合理但缺乏事实依据的内容、计算或代码错误、违背指令要求的内容，以及无关或自相矛盾的内容。

请分三个阶段完成检测，并用记忆保存（句子，幻觉标签，支撑证据）三元组。句子存在幻觉时标签为 1，否则为 0。
1. 句子切分：调用 split_text 切分待检测文本。每个返回的句子是一个检测单元，其中的代词和省略内容已被补全。
2. 工具选择与验证：按顺序逐句检测。为每个句子选择最合适的工具，例如事实陈述使用 web_search，数学表达式使用 calculator，代码使用 code_interpreter，长度要求使用 word_count，相关性或一致性使用 match。将句子与工具结果进行比较，然后调用 write_memory 写入标签和支撑证据。每个句子最多使用 3 次工具。
3. 反思：所有句子写入记忆后，重新检查记忆。局部上，确认每个标签与其证据一致；全局上，结合其他句子判断当前句子：如果前面的计算结果有误，那么后续基于该结果的步骤也应视为错误，即使它们单独检查是正确的。使用 update_memory 修正错误，然后调用 get_answer 输出最终结果。

可用工具：
{tools}
{new_tools}
每一轮请严格按照以下格式回复，不要输出其他内容：
{grammar})";

class MissingTemplate : public Error {
public:
    using Error::Error;
};

/// Instruction templates per language. Placeholders: {tools}, {new_tools}, {grammar}.
class TemplateSet {
public:
    static TemplateSet builtin() {
        TemplateSet t;
        t.templates_[Language::english] = std::string(instruction_en_v1);
        t.templates_[Language::chinese] = std::string(instruction_zh_v1);
        return t;
    }

    /// Reads instruction_en.txt / instruction_zh.txt from `dir`; missing files are simply absent.
    static TemplateSet from_directory(const std::filesystem::path& dir) {
        TemplateSet t;
        for (auto [lang, file] : {std::pair{Language::english, "instruction_en.txt"},
                                  std::pair{Language::chinese, "instruction_zh.txt"}}) {
            std::ifstream in(dir / file);
            if (!in) continue;
            std::stringstream ss;
            ss << in.rdbuf();
            t.templates_[lang] = ss.str();
        }
        return t;
    }

    void set(Language lang, std::string text) { templates_[lang] = std::move(text); }

    const std::string& get(Language lang) const {
        auto it = templates_.find(lang);
        if (it == templates_.end())
            throw MissingTemplate("no instruction template for language '" + std::string(to_string(lang)) + "'");
        return it->second;
    }

private:
    std::map<Language, std::string> templates_;
};

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}

}  // namespace detail

/// Description and usage examples of runtime-registered tools.
inline std::string render_new_tools(const ToolRegistry& registry, Language lang) {
    std::string out;
    for (const ToolSpec* spec : registry.specs()) {
        if (spec->builtin) continue;
        if (out.empty()) out = lang == Language::chinese ? "\n新工具：\n" : "\nNew tools:\n";
        out += "- " + spec->signature() + "\n";
        out += lang == Language::chinese ? "  示例：\n" : "  Examples:\n";
        for (const auto& ex : spec->usage_examples) {
            out += "  Action: " + spec->name + "\n";
            out += "  Action Input: " + serialize_arguments(ex.arguments) + "\n";
            if (!ex.result.empty()) out += "  Observation: " + ex.result + "\n";
        }
    }
    return out;
}

/// Fills the language's template with the toolbox listing and the turn grammar.
inline std::string render_instruction(const TemplateSet& templates, Language lang, const ToolRegistry& registry) {
    std::string tools;
    for (const ToolSpec* spec : registry.specs())
        if (spec->builtin) tools += "- " + spec->signature() + "\n";
    std::string text = templates.get(lang);
    detail::replace_all(text, "{tools}", tools);
    detail::replace_all(text, "{new_tools}", render_new_tools(registry, lang));
    detail::replace_all(text, "{grammar}", turn_grammar);
    return text;
}

/// o0: the query (when present) and the text to check.
inline std::string render_initial_observation(const DetectionInput& input, Language lang) {
    std::string out = "Observation: ";
    if (lang == Language::chinese) {
        out += "请检测以下文本中的幻觉。";
        if (!input.query.empty()) out += "\n问题：" + input.query;
        out += "\n文本：" + input.response;
    } else {
        out += "Detect hallucinations in the following text.";
        if (!input.query.empty()) out += "\nQuery: " + input.query;
        out += "\nText: " + input.response;
    }
    return out;
}

}  // namespace halucheck
