#pragma once

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "halucheck/calculator.hpp"
#include "halucheck/core_types.hpp"
#include "halucheck/trajectory.hpp"

namespace halucheck {

/// Exact metric value.
using Ratio = calc::Rational;

/// num/den, with 0 for an empty denominator.
inline Ratio ratio(std::int64_t num, std::int64_t den) { return den == 0 ? Ratio(0) : Ratio(num) / Ratio(den); }

/// Percentage with two decimals, rounded half up: 2/3 -> "66.67".
inline std::string percent(const Ratio& r) {
    using boost::multiprecision::numerator;
    using boost::multiprecision::denominator;
    const Ratio scaled = r * 10000;
    const calc::BigInt hundredths = (numerator(scaled) * 2 + denominator(scaled)) / (denominator(scaled) * 2);
    const calc::BigInt whole = hundredths / 100;
    const calc::BigInt frac = hundredths % 100;
    std::string f = frac.str();
    if (f.size() < 2) f.insert(0, 2 - f.size(), '0');
    return whole.str() + "." + f;
}

inline std::string fraction(const Ratio& r) {
    using boost::multiprecision::denominator;
    return denominator(r) == 1 ? boost::multiprecision::numerator(r).str() : r.str();
}

struct LabelPair {
    Label predicted = Label::clean;
    Label gold = Label::clean;
    bool operator==(const LabelPair&) const = default;
};

/// Positive class: hallucinated.
struct ConfusionMatrix {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    static ConfusionMatrix of(const std::vector<LabelPair>& pairs) {
        ConfusionMatrix m;
        for (const auto& p : pairs) m.add(p);
        return m;
    }

    void add(const LabelPair& p) {
        const bool pred = p.predicted == Label::hallucinated;
        const bool gold = p.gold == Label::hallucinated;
        (pred ? (gold ? tp : fp) : (gold ? fn : tn)) += 1;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        tp += o.tp;
        fp += o.fp;
        tn += o.tn;
        fn += o.fn;
        return *this;
    }

    std::int64_t total() const noexcept { return tp + fp + tn + fn; }
    Ratio accuracy() const { return ratio(tp + tn, total()); }
    Ratio precision() const { return ratio(tp, tp + fp); }
    Ratio recall() const { return ratio(tp, tp + fn); }
    /// 2PR/(P+R), which is 2tp/(2tp+fp+fn); 0 when P+R = 0.
    Ratio f1() const { return tp == 0 ? Ratio(0) : ratio(2 * tp, 2 * tp + fp + fn); }

    bool operator==(const ConfusionMatrix&) const = default;
};

class EmptyInput : public Error {
public:
    using Error::Error;
};

struct ResponseMetrics {
    ConfusionMatrix confusion;
    Ratio accuracy;
    Ratio f1;
};

struct SentenceMetrics {
    ConfusionMatrix confusion;
    Ratio accuracy;
    Ratio precision;
    Ratio recall;
    Ratio f1;
};

inline ResponseMetrics response_metrics(const std::vector<LabelPair>& pairs) {
    if (pairs.empty()) throw EmptyInput("response_metrics: no pairs");
    const auto m = ConfusionMatrix::of(pairs);
    return {m, m.accuracy(), m.f1()};
}

inline SentenceMetrics sentence_metrics(const std::vector<LabelPair>& pairs) {
    if (pairs.empty()) throw EmptyInput("sentence_metrics: no pairs");
    const auto m = ConfusionMatrix::of(pairs);
    return {m, m.accuracy(), m.precision(), m.recall(), m.f1()};
}

// ---- claims ----

struct ClaimRecord {
    std::string claim;
    Label gold_label = Label::clean;
    std::string source_id;
    bool operator==(const ClaimRecord&) const = default;
};

/// Lowercased words and single Han characters.
inline std::set<std::string> normalized_tokens(std::string_view text) {
    std::set<std::string> out;
    std::string word;
    for (char32_t cp : unicode::decode(text)) {
        if (unicode::is_cjk(cp)) {
            if (!word.empty()) out.insert(std::exchange(word, {}));
            std::string ch;
            unicode::append_utf8(ch, cp);
            out.insert(ch);
        } else if (unicode::is_letter(cp) || unicode::is_digit(cp)) {
            if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
            unicode::append_utf8(word, cp);
        } else if (!word.empty()) {
            out.insert(std::exchange(word, {}));
        }
    }
    if (!word.empty()) out.insert(word);
    return out;
}

inline Ratio jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::int64_t common = 0;
    for (const auto& t : a) common += b.count(t);
    return ratio(common, static_cast<std::int64_t>(a.size() + b.size()) - common);
}

/// One pair per gold claim, in gold order. Greedy by descending overlap, injective;
/// claims left without a match at or above `threshold` pair with a clean prediction.
inline std::vector<LabelPair> align_claims(const std::vector<SentenceVerdict>& predicted,
                                           const std::vector<ClaimRecord>& gold, const Ratio& threshold = Ratio(1, 2)) {
    std::vector<std::set<std::string>> ptok, gtok;
    for (const auto& p : predicted) ptok.push_back(normalized_tokens(p.sentence));
    for (const auto& g : gold) gtok.push_back(normalized_tokens(g.claim));
    struct Candidate {
        Ratio overlap;
        std::size_t g, p;
    };
    std::vector<Candidate> cands;
    for (std::size_t g = 0; g < gold.size(); ++g)
        for (std::size_t p = 0; p < predicted.size(); ++p)
            if (Ratio j = jaccard(gtok[g], ptok[p]); j >= threshold && j > 0) cands.push_back({j, g, p});
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        if (a.g != b.g) return a.g < b.g;
        return a.p < b.p;
    });
    std::vector<std::optional<std::size_t>> match(gold.size());
    std::vector<bool> used(predicted.size(), false);
    for (const auto& c : cands) {
        if (match[c.g] || used[c.p]) continue;
        match[c.g] = c.p;
        used[c.p] = true;
    }
    std::vector<LabelPair> out;
    for (std::size_t g = 0; g < gold.size(); ++g)
        out.push_back({match[g] ? predicted[*match[g]].label : Label::clean, gold[g].gold_label});
    return out;
}

// ---- datasets ----

enum class DatasetFormat { qa_labeled, claim_labeled };

inline DatasetFormat parse_dataset_format(std::string_view s) {
    if (s == "qa_labeled") return DatasetFormat::qa_labeled;
    if (s == "claim_labeled") return DatasetFormat::claim_labeled;
    throw ConfigError("unknown dataset format '" + std::string(s) + "' (expected qa_labeled or claim_labeled)");
}

struct ClaimGroup {
    std::string source_id;
    std::string query;
    std::string dataset;
    std::optional<TaskType> task_type;
    std::vector<ClaimRecord> claims;

    /// Claims concatenated into one response; gold is 1 iff any claim is 1.
    DetectionInput as_input() const {
        DetectionInput in;
        in.id = source_id;
        in.query = query;
        in.dataset = dataset;
        in.task_type = task_type;
        std::string all;
        for (const auto& c : claims) all += c.claim;
        const bool zh = detect_language(all) == Language::chinese;
        in.response.clear();
        bool any = false;
        for (const auto& c : claims) {
            if (!in.response.empty() && !zh) in.response += ' ';
            in.response += c.claim;
            any = any || c.gold_label == Label::hallucinated;
        }
        in.gold_label = any ? Label::hallucinated : Label::clean;
        return in;
    }
};

struct Dataset {
    DatasetFormat format = DatasetFormat::qa_labeled;
    std::vector<DetectionInput> inputs;
    /// claim_labeled only, aligned with `inputs`.
    std::vector<ClaimGroup> groups;
};

/// Records in file order; claim groups in order of first appearance.
inline Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format, bool require_gold = true) {
    Dataset d;
    d.format = format;
    const auto docs = read_jsonl(path);
    std::size_t line = 0;
    std::map<std::string, std::size_t> group_index;
    std::set<std::string> ids;
    for (const auto& j : docs) {
        ++line;
        if (!j.is_object()) throw SchemaError(line, "record must be a JSON object");
        if (format == DatasetFormat::qa_labeled) {
            DetectionInput in = input_from_json(j, line, require_gold);
            if (!ids.insert(in.id).second) throw SchemaError(line, "duplicate id '" + in.id + "'");
            d.inputs.push_back(std::move(in));
            continue;
        }
        const auto text = [&](const char* key) -> std::string {
            auto it = j.find(key);
            if (it == j.end()) throw SchemaError(line, std::string("missing field '") + key + "'");
            if (!it->is_string()) throw SchemaError(line, std::string("field '") + key + "' must be a string");
            return it->get<std::string>();
        };
        ClaimRecord rec;
        rec.source_id = text("source_id");
        rec.claim = text("claim");
        if (unicode::trim(rec.claim).empty()) throw SchemaError(line, "claim must be non-empty");
        auto g = j.find("gold_label");
        if (g == j.end()) throw SchemaError(line, "missing field 'gold_label'");
        if (!g->is_number_integer() || (g->get<long long>() != 0 && g->get<long long>() != 1))
            throw SchemaError(line, "gold_label must be 0 or 1");
        rec.gold_label = label_from_int(g->get<long long>());
        auto [it, fresh] = group_index.try_emplace(rec.source_id, d.groups.size());
        if (fresh) {
            ClaimGroup grp;
            grp.source_id = rec.source_id;
            grp.query = j.value("query", std::string{});
            grp.dataset = j.value("dataset", std::string{});
            if (auto t = j.find("task_type"); t != j.end() && t->is_string()) {
                try {
                    grp.task_type = parse_task_type(t->get<std::string>());
                } catch (const Error& e) {
                    throw SchemaError(line, e.what());
                }
            }
            d.groups.push_back(std::move(grp));
        }
        d.groups[it->second].claims.push_back(std::move(rec));
    }
    for (const auto& g : d.groups) d.inputs.push_back(g.as_input());
    return d;
}

// ---- reports ----

enum class EvalLevel { response, sentence };

inline EvalLevel parse_eval_level(std::string_view s) {
    if (s == "response") return EvalLevel::response;
    if (s == "sentence") return EvalLevel::sentence;
    throw ConfigError("unknown evaluation level '" + std::string(s) + "'");
}

struct EvalRow {
    std::string name;
    ConfusionMatrix confusion;
    Ratio accuracy, precision, recall, f1;
};

struct EvalReport {
    EvalLevel level = EvalLevel::response;
    std::vector<EvalRow> rows;  // per dataset, sorted by name
    EvalRow micro;              // pooled pairs
    EvalRow macro;              // unweighted mean of the dataset rows
    std::vector<std::string> missing;  // inputs without a prediction

    std::string table() const {
        std::ostringstream out;
        const bool sentence = level == EvalLevel::sentence;
        out << std::left << std::setw(24) << "dataset" << std::right << std::setw(8) << "n" << std::setw(10)
            << "accuracy";
        if (sentence) out << std::setw(10) << "precision" << std::setw(10) << "recall";
        out << std::setw(10) << "f1" << '\n';
        const auto line = [&](const EvalRow& r, bool show_n) {
            out << std::left << std::setw(24) << r.name << std::right << std::setw(8)
                << (show_n ? std::to_string(r.confusion.total()) : std::string("-")) << std::setw(10)
                << percent(r.accuracy);
            if (sentence) out << std::setw(10) << percent(r.precision) << std::setw(10) << percent(r.recall);
            out << std::setw(10) << percent(r.f1) << '\n';
        };
        for (const auto& r : rows) line(r, true);
        line(micro, true);
        line(macro, false);
        return out.str();
    }
};

inline EvalRow make_row(std::string name, const ConfusionMatrix& m) {
    return {std::move(name), m, m.accuracy(), m.precision(), m.recall(), m.f1()};
}

/// Per-dataset rows from pooled pairs, plus micro and macro overall rows.
inline EvalReport build_report(EvalLevel level, const std::map<std::string, std::vector<LabelPair>>& by_dataset) {
    EvalReport rep;
    rep.level = level;
    ConfusionMatrix pooled;
    Ratio acc = 0, p = 0, r = 0, f = 0;
    for (const auto& [name, pairs] : by_dataset) {
        if (pairs.empty()) continue;
        const auto m = ConfusionMatrix::of(pairs);
        pooled += m;
        rep.rows.push_back(make_row(name, m));
        acc += rep.rows.back().accuracy;
        p += rep.rows.back().precision;
        r += rep.rows.back().recall;
        f += rep.rows.back().f1;
    }
    if (rep.rows.empty()) throw EmptyInput("evaluation: no prediction/gold pairs");
    rep.micro = make_row("overall (micro)", pooled);
    const Ratio k(static_cast<long long>(rep.rows.size()));
    rep.macro = {"overall (macro)", pooled, acc / k, p / k, r / k, f / k};
    return rep;
}

inline json row_json(const EvalRow& r, bool sentence, bool with_counts = true) {
    json j{{"name", r.name},
           {"accuracy", percent(r.accuracy)},
           {"accuracy_exact", fraction(r.accuracy)},
           {"f1", percent(r.f1)},
           {"f1_exact", fraction(r.f1)}};
    if (sentence) {
        j["precision"] = percent(r.precision);
        j["precision_exact"] = fraction(r.precision);
        j["recall"] = percent(r.recall);
        j["recall_exact"] = fraction(r.recall);
    }
    if (with_counts) {
        j["n"] = r.confusion.total();
        j["tp"] = r.confusion.tp;
        j["fp"] = r.confusion.fp;
        j["tn"] = r.confusion.tn;
        j["fn"] = r.confusion.fn;
    }
    return j;
}

inline json to_json(const EvalReport& rep) {
    const bool sentence = rep.level == EvalLevel::sentence;
    json rows = json::array();
    for (const auto& r : rep.rows) rows.push_back(row_json(r, sentence));
    return json{{"level", sentence ? "sentence" : "response"},
                {"datasets", rows},
                {"overall_micro", row_json(rep.micro, sentence)},
                {"overall_macro", row_json(rep.macro, sentence, false)},
                {"missing_predictions", rep.missing}};
}

/// Response level: predictions joined to the dataset by input id.
inline EvalReport evaluate_responses(const Dataset& data, const std::map<std::string, DetectionReport>& predictions) {
    std::map<std::string, std::vector<LabelPair>> by_dataset;
    std::vector<std::string> missing;
    for (const auto& in : data.inputs) {
        if (!in.gold_label) throw SchemaError(0, "input '" + in.id + "' has no gold_label");
        auto it = predictions.find(in.id);
        if (it == predictions.end()) {
            missing.push_back(in.id);
            continue;
        }
        by_dataset[in.dataset_name()].push_back({it->second.response_label, *in.gold_label});
    }
    EvalReport rep = build_report(EvalLevel::response, by_dataset);
    rep.missing = std::move(missing);
    return rep;
}

/// Sentence level: each claim group aligned against the verdicts predicted for its source.
inline EvalReport evaluate_sentences(const Dataset& data, const std::map<std::string, DetectionReport>& predictions,
                                     const Ratio& threshold = Ratio(1, 2)) {
    if (data.format != DatasetFormat::claim_labeled) throw ConfigError("sentence-level evaluation needs a claim_labeled dataset");
    std::map<std::string, std::vector<LabelPair>> by_dataset;
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        auto it = predictions.find(g.source_id);
        if (it == predictions.end()) {
            missing.push_back(g.source_id);
            continue;
        }
        auto pairs = align_claims(it->second.verdicts, g.claims, threshold);
        auto& dst = by_dataset[data.inputs[i].dataset_name()];
        dst.insert(dst.end(), pairs.begin(), pairs.end());
    }
    EvalReport rep = build_report(EvalLevel::sentence, by_dataset);
    rep.missing = std::move(missing);
    return rep;
}

/// Predictions file: one DetectionReport document per line, keyed by input_id.
inline std::map<std::string, DetectionReport> load_predictions(const std::filesystem::path& path) {
    std::map<std::string, DetectionReport> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        if (j.is_object() && j.contains("error")) continue;  // failed session, counted as missing
        try {
            DetectionReport r = j.get<DetectionReport>();
            out[r.input_id] = std::move(r);
        } catch (const std::exception& e) {
            throw SchemaError(line, std::string("invalid prediction: ") + e.what());
        }
    }
    return out;
}

}  // namespace halucheck
