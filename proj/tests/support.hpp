#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "halucheck/halucheck.hpp"

namespace halucheck::testing {

inline std::filesystem::path source_dir() { return HALUCHECK_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "tests" / "fixtures" / rel; }
inline std::filesystem::path corpus_dir() { return source_dir() / "data" / "corpus"; }

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        char tmpl[] = "/tmp/halucheck-test-XXXXXX";
        if (!::mkdtemp(tmpl)) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// ---- oracles ----

/// Days from 0001-01-01 by walking whole years and months.
inline long long naive_day_number(int y, int m, int d) {
    const auto leap = [](int year) { return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0; };
    static constexpr int month_days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    long long n = 0;
    for (int year = 1; year < y; ++year) n += leap(year) ? 366 : 365;
    for (int month = 1; month < m; ++month) n += month_days[month - 1] + (month == 2 && leap(y) ? 1 : 0);
    return n + d - 1;
}

/// Brute-force confusion recount with exact fractions, independent of ConfusionMatrix.
struct OracleMetrics {
    calc::Rational accuracy, precision, recall, f1;
};

inline OracleMetrics oracle_metrics(const std::vector<std::pair<int, int>>& pairs) {
    long long tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& [p, g] : pairs) {
        if (p == 1 && g == 1) ++tp;
        else if (p == 1 && g == 0) ++fp;
        else if (p == 0 && g == 0) ++tn;
        else ++fn;
    }
    using R = calc::Rational;
    OracleMetrics m;
    m.accuracy = R(tp + tn) / R(static_cast<long long>(pairs.size()));
    m.precision = tp + fp == 0 ? R(0) : R(tp) / R(tp + fp);
    m.recall = tp + fn == 0 ? R(0) : R(tp) / R(tp + fn);
    m.f1 = m.precision + m.recall == 0 ? R(0) : 2 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

// ---- generators ----

inline std::string random_text(std::mt19937_64& rng, std::size_t max_len, bool allow_newlines) {
    static const std::vector<std::string> pieces = {
        "a", "b", "Z", "0", "7", " ", " ", "  ", ".", ",", ":", "\"", "\\", "/", "{", "}", "[", "]", "'",
        "é", "ß", "Ω", "中", "文", "検", "😀", "≠", "−", "\t", "Thought:", "Action:", "Action Input:", "%"};
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
    std::bernoulli_distribution newline(0.08);
    std::string out;
    for (std::size_t i = 0, n = len(rng); i < n; ++i) {
        if (allow_newlines && newline(rng)) out += "\n";
        else out += pieces[pick(rng)];
    }
    return out;
}

inline std::string random_identifier(std::mt19937_64& rng) {
    static constexpr std::string_view first = "abcdefghijklmnopqrstuvwxyz_";
    static constexpr std::string_view rest = "abcdefghijklmnopqrstuvwxyz_0123456789";
    std::uniform_int_distribution<std::size_t> len(0, 12);
    std::string s(1, first[std::uniform_int_distribution<std::size_t>(0, first.size() - 1)(rng)]);
    for (std::size_t i = 0, n = len(rng); i < n; ++i)
        s += rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
    return s;
}

/// Structurally valid step: thought without label-like line starts, any argument text.
inline AgentStep random_step(std::mt19937_64& rng) {
    AgentStep s;
    std::bernoulli_distribution empty(0.2);
    if (!empty(rng)) {
        for (int attempt = 0; attempt < 100; ++attempt) {
            s.thought = std::string(unicode::trim(random_text(rng, 24, true)));
            if (is_structurally_valid(AgentStep{s.thought, ToolCall{"x", {}}})) break;
            s.thought = "plain thought";
        }
    }
    s.action.tool_name = random_identifier(rng);
    std::uniform_int_distribution<int> nargs(0, 4);
    std::bernoulli_distribution is_int(0.3);
    std::uniform_int_distribution<std::int64_t> ints(std::numeric_limits<std::int64_t>::min(),
                                                     std::numeric_limits<std::int64_t>::max());
    for (int i = 0, n = nargs(rng); i < n; ++i) {
        std::string key = random_identifier(rng);
        if (is_int(rng)) s.action.arguments.set(key, ints(rng));
        else s.action.arguments.set(key, random_text(rng, 30, true));
    }
    if (!is_structurally_valid(s)) s.action.tool_name = "calculator";
    return s;
}

inline std::string canonical_step(std::string thought, std::string_view tool, ArgMap args) {
    return serialize_step(AgentStep{std::move(thought), ToolCall{std::string(tool), std::move(args)}});
}

/// A random trajectory that satisfies every acceptance rule against the default registry.
inline Trajectory random_valid_trajectory(std::mt19937_64& rng, const std::string& id) {
    Trajectory t;
    t.id = id;
    t.input_ref = "in-" + id;
    t.dataset = "synthetic";
    std::bernoulli_distribution coin(0.5);
    t.language = coin(rng) ? Language::english : Language::chinese;
    t.instruction = "Instruction " + random_text(rng, 40, true);
    const Label gold = coin(rng) ? Label::hallucinated : Label::clean;
    t.gold_label = gold;
    t.final_label = gold;
    t.turns.push_back(TrajectoryTurn::observation({"Observation: " + random_text(rng, 60, true), ObservationSource::initial_input}));
    std::uniform_int_distribution<int> steps(0, 8);
    std::uniform_int_distribution<int> tool(0, 5);
    for (int i = 0, n = steps(rng); i < n; ++i) {
        std::string raw;
        switch (tool(rng)) {
            case 0: raw = canonical_step(random_text(rng, 20, false), tools::web_search, {{"sentence", random_text(rng, 30, true)}}); break;
            case 1: raw = canonical_step(random_text(rng, 20, false), tools::calculator, {{"formula", "1 + " + std::to_string(i)}}); break;
            case 2:
                raw = canonical_step(random_text(rng, 20, false), tools::word_count,
                                     {{"length", std::int64_t{1 + i}}, {"text", random_text(rng, 30, true)}});
                break;
            case 3:
                raw = canonical_step(random_text(rng, 20, false), tools::write_memory,
                                     {{"label", std::int64_t{coin(rng) ? 1 : 0}}, {"evidence", random_text(rng, 30, true)}});
                break;
            case 4: raw = canonical_step("", tools::split_text, {{"text", random_text(rng, 30, true)}}); break;
            default:
                raw = canonical_step(random_text(rng, 20, false), tools::match,
                                     {{"sentence", random_text(rng, 10, false)}, {"context", random_text(rng, 10, false)}});
        }
        if (!is_structurally_valid(parse_step(raw)) || serialize_step(parse_step(raw)) != raw)
            raw = canonical_step("fallback thought", tools::calculator, {{"formula", "2 * 3"}});
        t.turns.push_back(TrajectoryTurn::step(raw));
        t.turns.push_back(TrajectoryTurn::observation({"Observation: " + random_text(rng, 50, true), ObservationSource::tool_result}));
    }
    t.turns.push_back(TrajectoryTurn::step(canonical_step("Answer.", tools::get_answer, {})));
    t.turns.push_back(TrajectoryTurn::observation(
        {std::string("Observation: Final answer: ") + (gold == Label::hallucinated ? "Hallucination" : "No hallucination"),
         ObservationSource::tool_result}));
    return t;
}

// ---- arithmetic ----

/// Random expression tree, printed fully parenthesized and evaluated independently.
struct Expr {
    std::string text;
    std::optional<calc::Rational> value;  // nullopt when a division by zero occurs
};

inline calc::Rational random_decimal(std::mt19937_64& rng, std::string& text) {
    const long long whole = std::uniform_int_distribution<long long>(0, 999)(rng);
    const int places = std::uniform_int_distribution<int>(0, 3)(rng);
    long long frac = 0;
    long long scale = 1;
    for (int i = 0; i < places; ++i) scale *= 10;
    if (places) frac = std::uniform_int_distribution<long long>(0, scale - 1)(rng);
    text = std::to_string(whole);
    if (places) {
        std::string f = std::to_string(frac);
        f.insert(0, static_cast<std::size_t>(places) - f.size(), '0');
        text += "." + f;
    }
    return calc::Rational(whole) + calc::Rational(frac) / calc::Rational(scale);
}

inline Expr random_expr(std::mt19937_64& rng, int depth) {
    if (depth == 0 || std::bernoulli_distribution(0.3)(rng)) {
        Expr e;
        e.value = random_decimal(rng, e.text);
        if (std::bernoulli_distribution(0.15)(rng)) {
            e.text = "-" + e.text;
            e.value = -*e.value;
            e.text = "(" + e.text + ")";
        }
        return e;
    }
    Expr a = random_expr(rng, depth - 1);
    Expr b = random_expr(rng, depth - 1);
    static constexpr char ops[] = {'+', '-', '*', '/'};
    const char op = ops[std::uniform_int_distribution<int>(0, 3)(rng)];
    Expr e;
    e.text = "(" + a.text + " " + op + " " + b.text + ")";
    if (!a.value || !b.value) return e;
    switch (op) {
        case '+': e.value = *a.value + *b.value; break;
        case '-': e.value = *a.value - *b.value; break;
        case '*': e.value = *a.value * *b.value; break;
        default:
            if (*b.value != 0) e.value = *a.value / *b.value;
    }
    return e;
}

// ---- trajectory defects ----

/// Inserts a step and its error observation just before the final get_answer step.
inline Trajectory insert_before_answer(Trajectory t, std::string raw_step, std::string error) {
    const auto at = t.turns.end() - 2;
    t.turns.insert(at, {TrajectoryTurn::step(std::move(raw_step)),
                        TrajectoryTurn::observation({"Observation: Error (" + std::move(error) + ")",
                                                     ObservationSource::error_feedback})});
    return t;
}

inline Trajectory with_unknown_tool(Trajectory t) {
    return insert_before_answer(std::move(t), canonical_step("Check the sum.", "calc", {{"formula", "1 + 1"}}),
                                "UnknownTool): unknown tool 'calc'");
}

inline Trajectory with_malformed_step(Trajectory t) {
    return insert_before_answer(std::move(t), "I think the answer is fine.", "MalformedStep): missing Action line");
}

inline Trajectory with_flipped_gold(Trajectory t) {
    t.gold_label = *t.gold_label == Label::clean ? Label::hallucinated : Label::clean;
    return t;
}

inline Trajectory without_answer(Trajectory t) {
    t.turns.resize(t.turns.size() - 2);
    t.final_label.reset();
    return t;
}

// ---- engine setup ----

/// Registry, search corpus, sandbox and detector wired together the way the CLI does it.
struct Rig {
    std::shared_ptr<ToolRegistry> registry = std::make_shared<ToolRegistry>(default_registry());
    FixtureSearchProvider search = FixtureSearchProvider::from_directory(corpus_dir());
    CodeSandbox sandbox{ProfileSet::defaults(), 4};
    RuleSplitter splitter;

    ToolContext context() {
        ToolContext ctx;
        ctx.search = &search;
        ctx.sandbox = &sandbox;
        ctx.splitter = &splitter;
        return ctx;
    }

    Detector detector(EngineConfig cfg = {}) { return Detector(registry, context(), cfg); }
};

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

inline DetectionInput load_input(const std::filesystem::path& p) {
    std::ifstream in(p);
    return input_from_json(json::parse(in), 1, false);
}

inline std::vector<DetectionInput> load_inputs(const std::filesystem::path& p) {
    std::vector<DetectionInput> out;
    std::size_t line = 0;
    for (const auto& doc : read_jsonl(p)) out.push_back(input_from_json(doc, ++line, false));
    return out;
}

inline std::vector<std::string> load_script(const std::filesystem::path& p) {
    std::ifstream in(p);
    return json::parse(in).get<std::vector<std::string>>();
}

/// Judge replies per input id from the scripted judge fixture.
inline std::map<std::string, std::vector<std::string>> load_judge_script(const std::filesystem::path& p) {
    std::ifstream in(p);
    const json doc = json::parse(in);
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [id, replies] : doc.at("sessions").items()) out[id] = replies.get<std::vector<std::string>>();
    return out;
}

}  // namespace halucheck::testing
