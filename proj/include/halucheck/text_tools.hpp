#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "halucheck/model_backend.hpp"
#include "halucheck/tool_result.hpp"
#include "halucheck/unicode.hpp"

namespace halucheck {

// ---- word_count ----

namespace detail {

constexpr bool is_punctuation(char32_t cp) noexcept {
    if (cp < 0x80) return !(unicode::is_digit(cp) || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z'));
    if (cp >= 0x2000 && cp <= 0x206F) return true;  // general punctuation
    if (cp >= 0x3000 && cp <= 0x303F) return true;  // CJK symbols and punctuation
    if (cp >= 0xFF01 && cp <= 0xFF0F) return true;  // fullwidth ASCII punctuation
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    return cp == 0xA1 || cp == 0xAB || cp == 0xB7 || cp == 0xBB || cp == 0xBF;
}

}  // namespace detail

/// Whitespace-delimited words plus one per Han character. A run of non-Han characters
/// counts as a word only if it holds something other than punctuation.
inline long long count_words(std::string_view text) {
    long long count = 0;
    bool in_word = false;
    for (char32_t cp : unicode::decode(text)) {
        if (unicode::is_cjk(cp)) {
            ++count;
            in_word = false;
        } else if (unicode::is_space(cp)) {
            in_word = false;
        } else if (!detail::is_punctuation(cp)) {
            if (!in_word) ++count;
            in_word = true;
        }
    }
    return count;
}

/// pass iff |count - length| <= tolerance.
inline payload::CountAndVerdict word_count(long long length, std::string_view text, long long tolerance = 0) {
    if (length <= 0) throw ToolError(payload::FailureCode::invalid_arguments, "length must be positive");
    const long long count = count_words(text);
    const long long diff = count > length ? count - length : length - count;
    return payload::CountAndVerdict{count, diff <= tolerance};
}

// ---- split_text ----

namespace detail {

constexpr bool is_closer(char32_t cp) noexcept {
    return cp == U'"' || cp == U'\'' || cp == U')' || cp == U']' || cp == U'”' || cp == U'’' || cp == U'」' ||
           cp == U'』' || cp == U'）' || cp == U'》' || cp == U'】';
}
constexpr bool is_ascii_terminal(char32_t cp) noexcept { return cp == U'.' || cp == U'!' || cp == U'?'; }
constexpr bool is_cjk_terminal(char32_t cp) noexcept { return cp == U'。' || cp == U'！' || cp == U'？'; }

inline void push_unit(std::vector<std::string>& out, std::string_view unit) {
    unit = unicode::trim(unit);
    if (!unit.empty()) out.emplace_back(unit);
}

inline void split_prose(std::string_view text, std::vector<std::string>& out) {
    const auto cps = unicode::decode(text);
    std::vector<char32_t> current;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        current.push_back(cps[i]);
        const bool cjk = is_cjk_terminal(cps[i]);
        if (!cjk && !is_ascii_terminal(cps[i])) continue;
        std::size_t j = i + 1;
        while (j < cps.size() && (is_ascii_terminal(cps[j]) || is_cjk_terminal(cps[j]) || is_closer(cps[j])))
            current.push_back(cps[j++]);
        const bool boundary = cjk || j >= cps.size() || unicode::is_space(cps[j]);
        i = j - 1;
        if (boundary) {
            push_unit(out, unicode::encode(current));
            current.clear();
        }
    }
    push_unit(out, unicode::encode(current));
}

inline bool is_fence(std::string_view line) { return unicode::trim(line).substr(0, 3) == "```"; }

}  // namespace detail

/// Rule-based segmentation: cut after . ! ? (when followed by whitespace or end) and after
/// 。！？. A fenced code block is always a single unit.
inline std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t prose_start = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        const std::size_t next = eol == std::string_view::npos ? text.size() : eol + 1;
        std::string_view line = text.substr(pos, next - pos);
        if (detail::is_fence(line)) {
            detail::split_prose(text.substr(prose_start, pos - prose_start), out);
            // find closing fence
            std::size_t scan = next;
            std::size_t block_end = text.size();
            while (scan < text.size()) {
                std::size_t e = text.find('\n', scan);
                const std::size_t n = e == std::string_view::npos ? text.size() : e + 1;
                if (detail::is_fence(text.substr(scan, n - scan))) {
                    block_end = n;
                    break;
                }
                scan = n;
            }
            detail::push_unit(out, text.substr(pos, block_end - pos));
            pos = prose_start = block_end;
            continue;
        }
        pos = next;
    }
    detail::split_prose(text.substr(prose_start), out);
    return out;
}

class SentenceSplitter {
public:
    virtual ~SentenceSplitter() = default;
    virtual std::vector<std::string> split(std::string_view text, Language language) const = 0;
    virtual bool llm_delegated() const noexcept { return false; }
};

class RuleSplitter final : public SentenceSplitter {
public:
    std::vector<std::string> split(std::string_view text, Language) const override {
        return split_sentences(text);
    }
};

inline constexpr std::string_view split_prompt_en =
    "Split the following text into individual sentences. Resolve pronouns and restore omitted content "
    "so that every sentence can be understood on its own. Keep any fenced code block as one sentence. "
    "Reply with a JSON array of strings and nothing else.";

inline constexpr std::string_view split_prompt_zh =
    "请将下面的文本切分为独立的句子，补全代词和省略的内容，使每个句子都能单独理解。代码块保持为一个句子。"
    "只回复一个由字符串组成的 JSON 数组。";

/// Delegates segmentation (with pronoun and omission completion) to a model backend.
class BackendSplitter final : public SentenceSplitter {
public:
    explicit BackendSplitter(std::shared_ptr<ModelBackend> backend) : backend_(std::move(backend)) {}

    std::vector<std::string> split(std::string_view text, Language language) const override {
        std::vector<ChatMessage> history{
            {Role::system, std::string(language == Language::chinese ? split_prompt_zh : split_prompt_en)},
            {Role::environment, std::string(text)}};
        std::string reply;
        try {
            reply = backend_->complete(history);
        } catch (const Error& e) {
            throw ToolError(payload::FailureCode::tool_error, std::string("segmentation backend failed: ") + e.what());
        }
        std::vector<std::string> out;
        try {
            json arr = json::parse(unicode::trim(reply));
            if (arr.is_array())
                for (const auto& item : arr)
                    if (item.is_string()) detail::push_unit(out, item.get<std::string>());
        } catch (const json::exception&) {
            // plain lines, optionally numbered
            std::size_t pos = 0;
            while (pos <= reply.size()) {
                std::size_t eol = reply.find('\n', pos);
                std::string_view line = std::string_view(reply).substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
                line = unicode::trim(line);
                std::size_t k = 0;
                while (k < line.size() && line[k] >= '0' && line[k] <= '9') ++k;
                if (k > 0 && k < line.size() && (line[k] == '.' || line[k] == ')')) line = unicode::trim(line.substr(k + 1));
                detail::push_unit(out, line);
                if (eol == std::string::npos) break;
                pos = eol + 1;
            }
        }
        if (out.empty()) throw ToolError(payload::FailureCode::empty_segmentation, "backend returned zero sentences");
        return out;
    }

    bool llm_delegated() const noexcept override { return true; }

private:
    std::shared_ptr<ModelBackend> backend_;
};

// ---- match ----

inline constexpr std::string_view match_judge_prompt =
    "You are a strict semantic checker. Decide whether the SENTENCE is consistent with the CONTEXT and "
    "relevant to it: it must not contradict the context and must not introduce content unrelated to it. "
    "Answer with exactly one word: Yes or No.";

inline constexpr std::string_view match_judge_reask =
    "Your previous reply could not be read. Answer with exactly one word: Yes or No.";

enum class JudgeAnswer { yes, no, unclear };

inline JudgeAnswer parse_judge_answer(std::string_view reply) {
    std::string_view s = unicode::trim(reply);
    while (!s.empty() && (s.front() == '"' || s.front() == '\'' || s.front() == '*' || s.front() == '`'))
        s.remove_prefix(1);
    const std::string lower = unicode::to_lower_ascii(s.substr(0, 8));
    const auto word = [&](std::string_view w) {
        if (lower.substr(0, w.size()) != w) return false;
        if (lower.size() == w.size()) return true;
        const char c = lower[w.size()];
        return !((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'));
    };
    if (word("yes")) return JudgeAnswer::yes;
    if (word("no")) return JudgeAnswer::no;
    if (s.substr(0, 3) == "是" || s.substr(0, 6) == "一致") return JudgeAnswer::yes;
    if (s.substr(0, 3) == "否" || s.substr(0, 3) == "不") return JudgeAnswer::no;
    return JudgeAnswer::unclear;
}

namespace detail {
inline std::string normalize_for_match(std::string_view s) {
    std::string out;
    bool space = false;
    for (char32_t cp : unicode::decode(unicode::trim(s))) {
        if (unicode::is_space(cp)) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
        unicode::append_utf8(out, cp);
    }
    return out;
}
}  // namespace detail

/// Semantic consistency check through a judge backend. Identical texts pass without a judge call.
inline payload::Verdict match(std::string_view sentence, std::string_view context, ModelBackend* judge) {
    if (unicode::trim(sentence).empty() || unicode::trim(context).empty())
        throw ToolError(payload::FailureCode::invalid_arguments, "sentence and context must be non-empty");
    if (detail::normalize_for_match(sentence) == detail::normalize_for_match(context))
        return payload::Verdict{true, "sentence is identical to the context"};
    if (!judge) throw ToolError(payload::FailureCode::judge_unavailable, "no judge backend configured");
    std::vector<ChatMessage> history{
        {Role::system, std::string(match_judge_prompt)},
        {Role::environment, "SENTENCE: " + std::string(sentence) + "\nCONTEXT: " + std::string(context)}};
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string reply;
        try {
            reply = judge->complete(history);
        } catch (const Error& e) {
            throw ToolError(payload::FailureCode::judge_unavailable, e.what());
        }
        switch (parse_judge_answer(reply)) {
            case JudgeAnswer::yes: return payload::Verdict{true, "judge: consistent and relevant"};
            case JudgeAnswer::no: return payload::Verdict{false, "judge: inconsistent or irrelevant"};
            case JudgeAnswer::unclear: break;
        }
        history.push_back({Role::agent, reply});
        history.push_back({Role::environment, std::string(match_judge_reask)});
    }
    throw ToolError(payload::FailureCode::ambiguous_judge_output, "judge reply is neither yes nor no");
}

}  // namespace halucheck
