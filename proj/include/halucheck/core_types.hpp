#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "halucheck/errors.hpp"
#include "halucheck/log.hpp"
#include "halucheck/unicode.hpp"

namespace halucheck {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Binary hallucination label. The positive class is `hallucinated`.
enum class Label : int { clean = 0, hallucinated = 1 };

constexpr int to_int(Label l) noexcept { return static_cast<int>(l); }

inline Label label_from_int(long long v) {
    if (v == 0) return Label::clean;
    if (v == 1) return Label::hallucinated;
    throw Error("label must be 0 or 1, got " + std::to_string(v));
}

enum class TaskType {
    knowledge_qa,
    conditional_generation,
    semantic_consistency,
    math_solving,
    code_generation,
};

inline constexpr std::array<TaskType, 5> all_task_types = {
    TaskType::knowledge_qa, TaskType::conditional_generation, TaskType::semantic_consistency,
    TaskType::math_solving, TaskType::code_generation};

constexpr std::string_view to_string(TaskType t) noexcept {
    switch (t) {
        case TaskType::knowledge_qa: return "knowledge_qa";
        case TaskType::conditional_generation: return "conditional_generation";
        case TaskType::semantic_consistency: return "semantic_consistency";
        case TaskType::math_solving: return "math_solving";
        case TaskType::code_generation: return "code_generation";
    }
    return "knowledge_qa";
}

/// Unknown names are rejected.
inline TaskType parse_task_type(std::string_view name) {
    for (TaskType t : all_task_types)
        if (to_string(t) == name) return t;
    throw Error("unknown task type '" + std::string(name) + "'");
}

enum class Language { english, chinese };

constexpr std::string_view to_string(Language l) noexcept {
    return l == Language::english ? "english" : "chinese";
}

inline Language parse_language(std::string_view name) {
    if (name == "english" || name == "en") return Language::english;
    if (name == "chinese" || name == "zh") return Language::chinese;
    throw Error("unknown language '" + std::string(name) + "'");
}

/// Chinese iff Han ideographs make up more than 30% of the letters in `text`.
inline Language detect_language(std::string_view text) {
    std::size_t letters = 0;
    std::size_t cjk = 0;
    for (char32_t cp : unicode::decode(text)) {
        if (!unicode::is_letter(cp)) continue;
        ++letters;
        if (unicode::is_cjk(cp)) ++cjk;
    }
    // cjk / letters > 0.3, kept in integers
    return (letters > 0 && cjk * 10 > letters * 3) ? Language::chinese : Language::english;
}

struct DetectionInput {
    std::string id;
    std::string query;
    std::string response;
    std::optional<TaskType> task_type;
    std::optional<Language> language;
    std::optional<Label> gold_label;
    /// Source dataset name, used to group yield and evaluation tables.
    std::string dataset;

    Language resolved_language() const {
        return language ? *language : detect_language(query + "\n" + response);
    }
    std::string dataset_name() const {
        if (!dataset.empty()) return dataset;
        return task_type ? std::string(to_string(*task_type)) : std::string("default");
    }

    bool operator==(const DetectionInput&) const = default;
};

/// One memory triple: (sentence, label, evidence), plus the tool that produced the evidence.
struct SentenceVerdict {
    std::string sentence;
    Label label = Label::clean;
    std::string evidence;
    std::string tool_used;
    /// Set when every tool call for the sentence was inconclusive.
    bool low_confidence = false;

    bool operator==(const SentenceVerdict&) const = default;
};

struct DetectionReport {
    std::string input_id;
    Label response_label = Label::clean;
    std::vector<SentenceVerdict> verdicts;
    std::string trajectory_id;
    int turns_used = 0;

    std::vector<SentenceVerdict> flagged() const {
        std::vector<SentenceVerdict> out;
        std::copy_if(verdicts.begin(), verdicts.end(), std::back_inserter(out),
                     [](const SentenceVerdict& v) { return v.label == Label::hallucinated; });
        return out;
    }

    bool operator==(const DetectionReport&) const = default;
};

/// 1 iff any verdict is hallucinated. An empty list aggregates to clean and logs a warning.
inline Label aggregate_response_label(std::span<const SentenceVerdict> verdicts) {
    if (verdicts.empty()) {
        log::warn("aggregate_response_label: no sentences to aggregate, defaulting to label 0");
        return Label::clean;
    }
    const bool any = std::any_of(verdicts.begin(), verdicts.end(),
                                 [](const SentenceVerdict& v) { return v.label == Label::hallucinated; });
    return any ? Label::hallucinated : Label::clean;
}

// ---- JSON mapping ----

inline void to_json(json& j, const SentenceVerdict& v) {
    j = json{{"sentence", v.sentence},
             {"label", to_int(v.label)},
             {"evidence", v.evidence},
             {"tool_used", v.tool_used}};
    if (v.low_confidence) j["low_confidence"] = true;
}

inline void from_json(const json& j, SentenceVerdict& v) {
    v.sentence = j.at("sentence").get<std::string>();
    v.label = label_from_int(j.at("label").get<long long>());
    v.evidence = j.value("evidence", std::string{});
    v.tool_used = j.value("tool_used", std::string{});
    v.low_confidence = j.value("low_confidence", false);
}

inline void to_json(json& j, const DetectionReport& r) {
    j = json{{"input_id", r.input_id},
             {"response_label", to_int(r.response_label)},
             {"verdicts", r.verdicts},
             {"trajectory_id", r.trajectory_id},
             {"turns_used", r.turns_used}};
}

inline void from_json(const json& j, DetectionReport& r) {
    r.input_id = j.at("input_id").get<std::string>();
    r.response_label = label_from_int(j.at("response_label").get<long long>());
    r.verdicts = j.value("verdicts", std::vector<SentenceVerdict>{});
    r.trajectory_id = j.value("trajectory_id", std::string{});
    r.turns_used = j.value("turns_used", 0);
}

inline json to_json(const DetectionInput& in) {
    json j{{"id", in.id}, {"query", in.query}, {"response", in.response}};
    if (in.task_type) j["task_type"] = to_string(*in.task_type);
    if (in.language) j["language"] = to_string(*in.language);
    if (in.gold_label) j["gold_label"] = to_int(*in.gold_label);
    if (!in.dataset.empty()) j["dataset"] = in.dataset;
    return j;
}

/// Parses one labeled-corpus record. `line` is only used in error messages.
inline DetectionInput input_from_json(const json& j, std::size_t line, bool require_gold) {
    if (!j.is_object()) throw SchemaError(line, "record is not an object");
    const auto text_field = [&](const char* key, bool required) -> std::string {
        auto it = j.find(key);
        if (it == j.end() || it->is_null()) {
            if (required) throw SchemaError(line, std::string("missing field '") + key + "'");
            return {};
        }
        if (!it->is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
        return it->get<std::string>();
    };
    DetectionInput in;
    in.id = text_field("id", true);
    in.query = text_field("query", false);
    in.response = text_field("response", true);
    if (unicode::trim(in.response).empty()) throw SchemaError(line, "response is empty");
    in.dataset = text_field("dataset", false);
    try {
        if (auto t = text_field("task_type", false); !t.empty()) in.task_type = parse_task_type(t);
        if (auto l = text_field("language", false); !l.empty()) in.language = parse_language(l);
    } catch (const SchemaError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(line, e.what());
    }
    if (auto it = j.find("gold_label"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer() || (it->get<long long>() != 0 && it->get<long long>() != 1))
            throw SchemaError(line, "gold_label must be 0 or 1");
        in.gold_label = label_from_int(it->get<long long>());
    } else if (require_gold) {
        throw SchemaError(line, "missing field 'gold_label'");
    }
    return in;
}

}  // namespace halucheck
