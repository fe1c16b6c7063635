#pragma once

// Tools that are not part of the default toolbox and get registered at runtime,
// plus the JSON tool-spec format used by `tools register`.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>

#include "halucheck/toolbox.hpp"

namespace halucheck {

/// Proleptic Gregorian calendar date.
struct CivilDate {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;
};

constexpr bool is_leap_year(int y) noexcept { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr unsigned days_in_month(int y, unsigned m) noexcept {
    constexpr unsigned table[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap_year(y) ? 29 : table[m - 1];
}

/// Days since 1970-01-01.
constexpr long long days_from_civil(CivilDate d) noexcept {
    const int y = d.year - (d.month <= 2 ? 1 : 0);
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (d.month + (d.month > 2 ? -3 : 9)) + 2) / 5 + d.day - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

/// Parses YYYY-MM-DD (also accepts '/' or '.' separators).
inline CivilDate parse_civil_date(std::string_view text) {
    text = unicode::trim(text);
    CivilDate d;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    const auto bad = [&] {
        return ToolError(payload::FailureCode::invalid_arguments, "invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
    };
    auto r = std::from_chars(p, end, d.year);
    if (r.ec != std::errc() || r.ptr == end || (*r.ptr != '-' && *r.ptr != '/' && *r.ptr != '.')) throw bad();
    const char sep = *r.ptr;
    r = std::from_chars(r.ptr + 1, end, d.month);
    if (r.ec != std::errc() || r.ptr == end || *r.ptr != sep) throw bad();
    r = std::from_chars(r.ptr + 1, end, d.day);
    if (r.ec != std::errc() || r.ptr != end) throw bad();
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) throw bad();
    return d;
}

/// Date-difference tool: number of days from start_date to end_date.
inline ToolSpec calendar_spec() {
    ToolSpec spec;
    spec.name = "calendar";
    spec.description = "Calculate the number of days from start_date to end_date (dates as YYYY-MM-DD).";
    spec.arg_schema = {{"start_date", ArgType::text, true}, {"end_date", ArgType::text, true}};
    spec.output = "days";
    spec.usage_examples = {
        {ArgMap{{"start_date", std::string("2023-01-01")}, {"end_date", std::string("2023-03-01")}}, "result = 59"},
        {ArgMap{{"start_date", std::string("2020-02-01")}, {"end_date", std::string("2020-03-01")}}, "result = 29"},
    };
    spec.kind = ToolKind::deterministic;
    spec.builtin = false;
    return spec;
}

inline Payload run_calendar(const ArgMap& args, const ToolContext&) {
    const CivilDate start = parse_civil_date(detail::required_text(args, "start_date"));
    const CivilDate end = parse_civil_date(detail::required_text(args, "end_date"));
    return payload::Number{std::to_string(days_from_civil(end) - days_from_civil(start))};
}

/// Translator backed by a fixed phrase table; unknown phrases yield NoEvidence.
inline ToolSpec translator_spec() {
    ToolSpec spec;
    spec.name = "translator";
    spec.description = "Translate the text into the target language and return the translation.";
    spec.arg_schema = {{"text", ArgType::text, true}, {"target_language", ArgType::text, true}};
    spec.output = "translation";
    spec.usage_examples = {
        {ArgMap{{"text", std::string("Good morning")}, {"target_language", std::string("chinese")}}, "1. 早上好"},
        {ArgMap{{"text", std::string("谢谢")}, {"target_language", std::string("english")}}, "1. Thank you"},
    };
    spec.kind = ToolKind::network;
    spec.builtin = false;
    return spec;
}

using PhraseTable = std::map<std::pair<std::string, std::string>, std::string>;

inline ToolExecutor make_translator(PhraseTable table) {
    return [table = std::move(table)](const ArgMap& args, const ToolContext&) -> Payload {
        const std::string& text = detail::required_text(args, "text");
        const std::string target = unicode::to_lower_ascii(detail::required_text(args, "target_language"));
        auto it = table.find({std::string(unicode::trim(text)), target});
        if (it == table.end()) throw ToolError(payload::FailureCode::no_evidence, "no translation available");
        payload::Fact fact{"", {it->second}};
        fact.text = numbered_list(fact.snippets, false);
        return fact;
    };
}

/// Runs an external program with the arguments written as JSON to a file whose path is
/// appended to argv. Exit status 0 makes stdout the result; anything else is a tool error.
inline ToolExecutor make_command_executor(std::vector<std::string> argv, std::chrono::milliseconds time_limit,
                                          std::shared_ptr<CodeSandbox> runner = nullptr) {
    if (argv.empty()) throw InvalidSchema("command executor needs a program");
    if (!runner) {
        ExecutionProfile profile;
        profile.command = argv;
        profile.command.push_back("{file}");
        profile.extension = ".json";
        profile.time_limit = time_limit;
        profile.isolate_network = false;
        ProfileSet set;
        set.set("tool", std::move(profile));
        runner = std::make_shared<CodeSandbox>(std::move(set), 4);
    }
    return [runner](const ArgMap& args, const ToolContext&) -> Payload {
        ExecutionResult r = runner->run(serialize_arguments(args), "tool");
        if (!r.pass)
            throw ToolError(payload::FailureCode::tool_error,
                            "tool command failed (" + r.reason + "): " + r.stderr_text.substr(0, 500));
        payload::Fact fact{"", {std::string(unicode::trim(r.stdout_text))}};
        fact.text = numbered_list(fact.snippets, false);
        return fact;
    };
}

// ---- JSON tool specs ----

inline json tool_spec_to_json(const ToolSpec& spec) {
    json args = json::array();
    for (const auto& a : spec.arg_schema)
        args.push_back({{"name", a.name}, {"type", std::string(to_string(a.type))}, {"required", a.required}});
    json examples = json::array();
    for (const auto& ex : spec.usage_examples)
        examples.push_back({{"arguments", json::parse(serialize_arguments(ex.arguments))}, {"result", ex.result}});
    return json{{"name", spec.name},           {"description", spec.description}, {"args", args},
                {"output", spec.output},       {"examples", examples},            {"kind", std::string(to_string(spec.kind))}};
}

inline ToolSpec tool_spec_from_json(const json& j) {
    try {
        ToolSpec spec;
        spec.name = j.at("name").get<std::string>();
        spec.description = j.at("description").get<std::string>();
        for (const auto& a : j.value("args", json::array())) {
            const std::string type = a.value("type", std::string("str"));
            if (type != "str" && type != "int") throw InvalidSchema("argument type must be 'str' or 'int'");
            spec.arg_schema.push_back({a.at("name").get<std::string>(), type == "int" ? ArgType::integer : ArgType::text,
                                       a.value("required", true)});
        }
        spec.output = j.value("output", std::string("result"));
        for (const auto& ex : j.value("examples", json::array())) {
            ArgMap args;
            for (const auto& [k, v] : ex.at("arguments").items()) {
                if (v.is_number_integer()) args.set(k, v.get<std::int64_t>());
                else if (v.is_string()) args.set(k, v.get<std::string>());
                else args.set(k, v.dump());
            }
            spec.usage_examples.push_back({std::move(args), ex.value("result", std::string{})});
        }
        spec.kind = parse_tool_kind(j.value("kind", std::string("deterministic")));
        spec.builtin = false;
        return spec;
    } catch (const json::exception& e) {
        throw InvalidSchema(std::string("tool spec: ") + e.what());
    } catch (const InvalidSchema&) {
        throw;
    } catch (const Error& e) {
        throw InvalidSchema(std::string("tool spec: ") + e.what());
    }
}

/// Executor named by a spec document: {"executor": {"type": "builtin", "name": "calendar"}}
/// or {"executor": {"type": "command", "argv": [...], "time_limit_s": 5}}.
inline ToolExecutor executor_from_json(const json& j) {
    const json& ex = j.at("executor");
    const std::string type = ex.at("type").get<std::string>();
    if (type == "builtin") {
        const std::string name = ex.at("name").get<std::string>();
        if (name == "calendar") return run_calendar;
        throw InvalidSchema("unknown builtin executor '" + name + "'");
    }
    if (type == "command") {
        const double limit = ex.value("time_limit_s", 5.0);
        return make_command_executor(ex.at("argv").get<std::vector<std::string>>(),
                                     std::chrono::milliseconds(static_cast<long long>(limit * 1000)));
    }
    throw InvalidSchema("unknown executor type '" + type + "'");
}

/// Registers every spec stored in a registry file (a JSON array of spec documents).
inline void load_registered_tools(ToolRegistry& registry, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open tool registry " + path.string());
    json docs;
    try {
        docs = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("tool registry " + path.string() + ": " + e.what());
    }
    if (!docs.is_array()) throw ConfigError("tool registry " + path.string() + " must hold a JSON array");
    for (const auto& d : docs) registry.register_tool(tool_spec_from_json(d), executor_from_json(d));
}

}  // namespace halucheck
