#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "halucheck/halucheck.hpp"
#include "halucheck/http_backend.hpp"

namespace fs = std::filesystem;
using namespace halucheck;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_item_failure = 1;
constexpr int exit_config = 2;

struct EngineOptions {
    std::string backend = "fallback";
    bool fallback = false;
    std::optional<std::string> judge;
    std::optional<std::string> model;
    std::optional<std::string> api_base;
    std::optional<std::string> api_key;
    std::optional<double> temperature;
    int max_turns = 25;
    int max_parse_retries = 3;
    std::optional<std::string> corpus;
    bool live_search = false;
    std::optional<std::string> search_api_key;
    std::optional<std::string> search_engine_id;
    std::optional<std::string> profiles;
    std::optional<std::string> registry;
    std::optional<std::string> templates;
    std::string splitter = "rule";
    long long word_tolerance = 0;
    std::optional<double> equation_tolerance;
};

void add_engine_options(CLI::App* cmd, EngineOptions& o) {
    cmd->add_option("--backend", o.backend,
                    "Model backend: http, scripted:FILE, replay:PATH or fallback")
        ->capture_default_str();
    cmd->add_flag("--fallback", o.fallback, "Drive the session with the rule-based policy");
    cmd->add_option("--judge", o.judge, "Backend for the match tool (same forms as --backend)");
    cmd->add_option("--model", o.model, "Model name for the http backend");
    cmd->add_option("--api-base", o.api_base, "Chat-completion base URL (env MODEL_API_BASE)");
    cmd->add_option("--api-key", o.api_key, "API key (env MODEL_API_KEY)");
    cmd->add_option("--temperature", o.temperature, "Decoding temperature")->check(CLI::NonNegativeNumber);
    cmd->add_option("--max-turns", o.max_turns, "Model turns per session")->check(CLI::Range(4, 1000))->capture_default_str();
    cmd->add_option("--max-parse-retries", o.max_parse_retries, "Consecutive malformed turns before failing")
        ->check(CLI::Range(1, 100))
        ->capture_default_str();
    cmd->add_option("--corpus", o.corpus, "Directory of fixture search documents")->check(CLI::ExistingDirectory);
    cmd->add_flag("--live-search", o.live_search, "Use the live search API (SEARCH_API_KEY, SEARCH_ENGINE_ID)");
    cmd->add_option("--search-api-key", o.search_api_key, "Search API key (env SEARCH_API_KEY)");
    cmd->add_option("--search-engine-id", o.search_engine_id, "Search engine id (env SEARCH_ENGINE_ID)");
    cmd->add_option("--profiles", o.profiles, "Code execution profiles (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--registry", o.registry, "Registered tools (JSON array)")->check(CLI::ExistingFile);
    cmd->add_option("--templates", o.templates, "Directory with instruction_en.txt / instruction_zh.txt")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--splitter", o.splitter, "Sentence splitter: rule or model")
        ->check(CLI::IsMember({"rule", "model"}))
        ->capture_default_str();
    cmd->add_option("--word-tolerance", o.word_tolerance, "Allowed deviation for word_count")->check(CLI::NonNegativeNumber);
    cmd->add_option("--equation-tolerance", o.equation_tolerance, "Relative tolerance for calculator equations")
        ->check(CLI::NonNegativeNumber);
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json_file(const fs::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
}

std::string dump(const json& j, int indent = -1) { return j.dump(indent, ' ', false, json::error_handler_t::replace); }

/// Everything a detector needs, owned in one place.
struct Runtime {
    std::shared_ptr<ToolRegistry> registry;
    std::unique_ptr<SearchProvider> search;
    std::unique_ptr<CodeSandbox> sandbox;
    std::unique_ptr<SentenceSplitter> splitter;
    std::unique_ptr<Detector> detector;
    BackendFactory backends;
    JudgeFactory judges;
};

BackendConfig http_config(const EngineOptions& o, const Settings& s) {
    BackendConfig c;
    c.kind = BackendKind::http_endpoint;
    c.endpoint_url = s.get_or(o.api_base, "MODEL_API_BASE", "model_api_base", "");
    c.api_key = s.get_or(o.api_key, "MODEL_API_KEY", "model_api_key", "");
    c.model_name = s.get_or(o.model, "", "model", "");
    const auto temp = o.temperature ? std::optional<std::string>(std::to_string(*o.temperature)) : std::nullopt;
    try {
        c.temperature = std::stod(s.get_or(temp, "", "temperature", "0"));
    } catch (const std::exception&) {
        throw ConfigError("temperature must be a number");
    }
    if (c.endpoint_url.empty()) throw ConfigError("the http backend needs --api-base or MODEL_API_BASE");
    return c;
}

/// Scripted fixtures: a JSON array of turns shared by every input, or
/// {"default": [...], "sessions": {"<input id>": [...]}}.
BackendFactory scripted_factory(const fs::path& file) {
    const json doc = read_json_file(file);
    std::map<std::string, std::vector<std::string>> sessions;
    std::optional<std::vector<std::string>> fallback;
    try {
        if (doc.is_array()) {
            fallback = doc.get<std::vector<std::string>>();
        } else {
            if (doc.contains("default")) fallback = doc.at("default").get<std::vector<std::string>>();
            const json listed = doc.value("sessions", json::object());
            for (const auto& [id, turns] : listed.items())
                sessions[id] = turns.get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(file.string() + ": scripted turns must be lists of strings (" + e.what() + ")");
    }
    return [sessions, fallback](const DetectionInput& in) -> std::unique_ptr<ModelBackend> {
        auto it = sessions.find(in.id);
        if (it != sessions.end()) return std::make_unique<ScriptedBackend>(it->second);
        if (fallback) return std::make_unique<ScriptedBackend>(*fallback);
        return std::make_unique<ScriptedBackend>(std::vector<std::string>{});
    };
}

/// A replay fixture file, or a directory holding <input id>.json fixtures.
BackendFactory replay_factory(const fs::path& path) {
    if (fs::is_directory(path))
        return [path](const DetectionInput& in) -> std::unique_ptr<ModelBackend> {
            const fs::path f = path / (in.id + ".json");
            if (!fs::exists(f)) return std::make_unique<ReplayBackend>(std::vector<ReplayTurn>{});
            return std::make_unique<ReplayBackend>(load_replay_fixture(f));
        };
    if (!fs::exists(path)) throw ConfigError("replay fixture not found: " + path.string());
    const ReplayFixture fixture = load_replay_fixture(path);
    return [fixture](const DetectionInput&) -> std::unique_ptr<ModelBackend> {
        return std::make_unique<ReplayBackend>(fixture);
    };
}

BackendFactory make_factory(const std::string& spec, const EngineOptions& o, const Settings& s) {
    if (spec == "fallback") return nullptr;
    if (spec == "http") {
        const BackendConfig c = http_config(o, s);
        HttpBackend probe(c);  // validates the configuration up front
        return [c](const DetectionInput&) -> std::unique_ptr<ModelBackend> { return std::make_unique<HttpBackend>(c); };
    }
    if (spec.rfind("scripted:", 0) == 0) return scripted_factory(spec.substr(9));
    if (spec.rfind("replay:", 0) == 0) return replay_factory(spec.substr(7));
    throw ConfigError("unknown backend '" + spec + "' (expected http, scripted:FILE, replay:PATH or fallback)");
}

std::shared_ptr<ToolRegistry> build_registry(const std::optional<std::string>& registry_file, const Settings& s) {
    auto reg = std::make_shared<ToolRegistry>(default_registry());
    if (auto path = s.get(registry_file, "", "registry")) load_registered_tools(*reg, *path);
    return reg;
}

Runtime build_runtime(const EngineOptions& o, const Settings& s, std::size_t workers) {
    Runtime rt;
    rt.registry = build_registry(o.registry, s);

    const bool fallback = o.fallback || o.backend == "fallback";
    BackendFactory primary = make_factory(o.backend, o, s);
    if (!fallback && !primary) throw ConfigError("no model backend configured");

    if (o.live_search) {
        rt.search = std::make_unique<GoogleSearchProvider>(s.get_or(o.search_api_key, "SEARCH_API_KEY", "search_api_key", ""),
                                                           s.get_or(o.search_engine_id, "SEARCH_ENGINE_ID", "search_engine_id", ""),
                                                           s.get_or(std::nullopt, "", "search_base_url", "https://www.googleapis.com"));
    } else if (auto dir = s.get(o.corpus, "", "corpus")) {
        rt.search = std::make_unique<FixtureSearchProvider>(FixtureSearchProvider::from_directory(*dir));
    }

    ProfileSet profiles = ProfileSet::defaults();
    if (auto p = s.get(o.profiles, "", "profiles")) profiles = ProfileSet::load(*p);
    rt.sandbox = std::make_unique<CodeSandbox>(std::move(profiles), std::max<std::size_t>(1, workers));

    if (o.splitter == "model") {
        if (o.backend != "http") throw ConfigError("--splitter model needs the http backend");
        rt.splitter = std::make_unique<BackendSplitter>(std::make_shared<HttpBackend>(http_config(o, s)));
    } else {
        rt.splitter = std::make_unique<RuleSplitter>();
    }

    if (o.judge) {
        rt.judges = make_factory(*o.judge, o, s);
    } else if (primary && (fallback || o.backend == "http")) {
        rt.judges = primary;
    }

    ToolContext ctx;
    ctx.search = rt.search.get();
    ctx.sandbox = rt.sandbox.get();
    ctx.splitter = rt.splitter.get();
    ctx.word_count_tolerance = o.word_tolerance;
    ctx.equation_tolerance = o.equation_tolerance;

    EngineConfig cfg;
    cfg.max_turns = o.max_turns;
    cfg.max_parse_retries = o.max_parse_retries;
    cfg.deterministic_fallback = fallback;

    TemplateSet templates = TemplateSet::builtin();
    if (auto dir = s.get(o.templates, "", "templates")) {
        TemplateSet custom = TemplateSet::from_directory(*dir);
        for (Language l : {Language::english, Language::chinese}) {
            try {
                templates.set(l, custom.get(l));
            } catch (const MissingTemplate&) {
            }
        }
    }
    rt.detector = std::make_unique<Detector>(rt.registry, ctx, cfg, std::move(templates));
    rt.backends = fallback ? nullptr : primary;
    return rt;
}

json failure_record(const DetectionInput& in, const SessionOutcome& o) {
    return json{{"input_id", in.id},
                {"error", o.error ? o.error->message : std::string("unknown error")},
                {"kind", o.error && o.error->kind == SessionError::Kind::turn_budget_exceeded ? "turn_budget_exceeded"
                                                                                              : "session_failed"},
                {"trajectory_id", o.trajectory.id}};
}

json report_json(const DetectionReport& r) {
    json j = r;
    return j;
}

// ---- commands ----

struct DetectArgs {
    std::optional<std::string> text;
    std::optional<std::string> query;
    std::optional<std::string> input_file;
    std::string id = "input";
    std::optional<std::string> task_type;
    std::optional<std::string> language;
    std::optional<std::string> record;
    std::optional<std::string> trajectory;
    bool pretty = false;
};

int cmd_detect(const DetectArgs& a, const EngineOptions& o, const Settings& s) {
    DetectionInput in;
    if (a.input_file) {
        in = input_from_json(read_json_file(*a.input_file), 1, false);
    } else {
        if (!a.text) throw ConfigError("detect needs --text or --input");
        in.id = a.id;
        in.response = *a.text;
        in.query = a.query.value_or("");
        try {
            if (a.task_type) in.task_type = parse_task_type(*a.task_type);
            if (a.language) in.language = parse_language(*a.language);
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        if (unicode::trim(in.response).empty()) throw ConfigError("--text is empty");
    }
    Runtime rt = build_runtime(o, s, 1);
    std::unique_ptr<ModelBackend> backend = rt.backends ? rt.backends(in) : nullptr;
    std::unique_ptr<ModelBackend> judge = rt.judges ? rt.judges(in) : nullptr;
    SessionOutcome out = rt.detector->run(in, backend.get(), judge.get());

    if (a.record) write_text(*a.record, dump(to_json(replay_fixture_from(in, out.trajectory)), 2) + "\n");
    if (a.trajectory) write_text(*a.trajectory, dump(to_json(out.trajectory)) + "\n");
    if (!out.ok()) {
        std::cout << dump(failure_record(in, out), a.pretty ? 2 : -1) << '\n';
        log::error("detection failed: " + out.error->message);
        return exit_item_failure;
    }
    std::cout << dump(report_json(*out.report), a.pretty ? 2 : -1) << '\n';
    return exit_ok;
}

struct BatchArgs {
    std::string dataset;
    std::string format = "qa_labeled";
    std::size_t workers = 1;
    std::string out;
    std::optional<std::string> trajectories;
};

int cmd_batch(const BatchArgs& a, const EngineOptions& o, const Settings& s) {
    Dataset data = load_dataset(a.dataset, parse_dataset_format(a.format), false);
    Runtime rt = build_runtime(o, s, a.workers);
    auto items = run_batch(data.inputs, *rt.detector, rt.backends, a.workers, rt.judges);
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.out);
    std::size_t failed = 0;
    for (const auto& item : items) {
        if (item.outcome.ok()) {
            out << dump(report_json(*item.outcome.report)) << '\n';
        } else {
            ++failed;
            out << dump(failure_record(item.input, item.outcome)) << '\n';
            log::error("input " + item.input.id + ": " + item.outcome.error->message);
        }
    }
    if (a.trajectories) {
        std::vector<Trajectory> trajs;
        for (const auto& item : items) trajs.push_back(item.outcome.trajectory);
        write_jsonl(*a.trajectories, trajs, [](const Trajectory& t) { return to_json(t); });
    }
    std::cout << "processed " << items.size() << " inputs, " << failed << " failed\n";
    return failed ? exit_item_failure : exit_ok;
}

struct SynthesizeArgs {
    std::string dataset;
    std::string format = "qa_labeled";
    std::size_t workers = 1;
    int attempts = 1;
    std::string out;
    std::optional<std::string> yield_json;
};

int cmd_synthesize(const SynthesizeArgs& a, const EngineOptions& o, const Settings& s) {
    Dataset data = load_dataset(a.dataset, parse_dataset_format(a.format), true);
    Runtime rt = build_runtime(o, s, a.workers);
    SynthesisResult r = synthesize(data.inputs, *rt.detector, rt.backends, {a.attempts, a.workers}, rt.judges);
    write_jsonl(a.out, r.trajectories, [](const Trajectory& t) { return to_json(t); });
    if (a.yield_json) write_text(*a.yield_json, dump(to_json(r.filtered.yield), 2) + "\n");
    std::cout << r.filtered.yield.table();
    return exit_ok;
}

struct FilterArgs {
    std::string in;
    std::string out;
    std::optional<std::string> quarantine;
    std::optional<std::string> registry;
    std::optional<std::string> yield_json;
};

int cmd_filter(const FilterArgs& a, const Settings& s) {
    auto registry = build_registry(a.registry, s);
    const auto trajs = load_trajectories(a.in);
    FilterResult r = filter_trajectories(trajs, *registry);
    write_jsonl(a.out, r.accepted, [](const Trajectory& t) { return to_json(t); });
    const std::string quarantine = a.quarantine.value_or(a.out + ".quarantine.jsonl");
    write_jsonl(quarantine, r.quarantined, quarantine_record);
    if (a.yield_json) write_text(*a.yield_json, dump(to_json(r.yield), 2) + "\n");
    std::cout << r.yield.table();
    for (const auto& q : r.quarantined)
        for (const auto& note : q.validation.notes) log::warn("rejected " + q.trajectory.id + ": " + note);
    return r.quarantined.empty() ? exit_ok : exit_item_failure;
}

struct ExportArgs {
    std::string in;
    std::string out;
    std::optional<std::string> registry;
};

int cmd_export(const ExportArgs& a, const Settings& s) {
    auto registry = build_registry(a.registry, s);
    const auto trajs = load_trajectories(a.in);
    std::vector<FinetuneExample> examples;
    try {
        examples = export_finetune(trajs, *registry);
    } catch (const NonAcceptedTrajectory& e) {
        log::error(e.what());
        return exit_item_failure;
    }
    write_jsonl(a.out, examples, [](const FinetuneExample& ex) { return to_json(ex); });
    std::cout << "exported " << examples.size() << " examples\n";
    return exit_ok;
}

struct EvaluateArgs {
    std::string level = "response";
    std::string dataset;
    std::optional<std::string> format;
    std::string predictions;
    std::optional<std::string> json_out;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const EvalLevel level = parse_eval_level(a.level);
    const DatasetFormat format = parse_dataset_format(
        a.format.value_or(level == EvalLevel::sentence ? "claim_labeled" : "qa_labeled"));
    const Dataset data = load_dataset(a.dataset, format, true);
    const auto preds = load_predictions(a.predictions);
    EvalReport rep = level == EvalLevel::sentence ? evaluate_sentences(data, preds) : evaluate_responses(data, preds);
    std::cout << rep.table();
    if (a.json_out) write_text(*a.json_out, dump(to_json(rep), 2) + "\n");
    if (!rep.missing.empty()) {
        log::error(std::to_string(rep.missing.size()) + " inputs have no prediction, first: " + rep.missing.front());
        return exit_item_failure;
    }
    return exit_ok;
}

int cmd_tools_list(const std::optional<std::string>& registry_file, const Settings& s) {
    auto reg = build_registry(registry_file, s);
    for (const ToolSpec* spec : reg->specs())
        std::cout << spec->signature() << " [" << to_string(spec->kind) << (spec->builtin ? "" : ", registered") << "]\n";
    return exit_ok;
}

/// Validates a spec document and appends it to the registry file.
int cmd_tools_register(const std::string& spec_file, const std::string& registry_file) {
    json doc = read_json_file(spec_file);
    std::vector<json> specs = doc.is_array() ? doc.get<std::vector<json>>() : std::vector<json>{doc};
    json stored = json::array();
    if (fs::exists(registry_file)) stored = read_json_file(registry_file);
    if (!stored.is_array()) throw ConfigError(registry_file + " must hold a JSON array");

    ToolRegistry reg = default_registry();
    for (const auto& d : stored) reg.register_tool(tool_spec_from_json(d), executor_from_json(d));
    for (const auto& d : specs) {
        reg.register_tool(tool_spec_from_json(d), executor_from_json(d));
        stored.push_back(d);
        std::cout << "registered " << d.at("name").get<std::string>() << '\n';
    }
    write_text(registry_file, dump(stored, 2) + "\n");
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hallucination detection agent: detect, synthesize trajectories, evaluate."};
    app.require_subcommand(1);
    std::optional<std::string> config_file;
    std::string log_level = "warning";
    app.add_option("--config", config_file, "Flat key = value configuration file")->check(CLI::ExistingFile);
    app.add_option("--log-level", log_level, "debug, info, warning or error")
        ->check(CLI::IsMember({"debug", "info", "warning", "error"}))
        ->capture_default_str();

    EngineOptions eng;
    DetectArgs det;
    auto* detect = app.add_subcommand("detect", "Detect hallucinations in one response");
    detect->add_option("--text", det.text, "Response text to check");
    detect->add_option("--query", det.query, "The query the response answers");
    detect->add_option("--input", det.input_file, "Input document (JSON)")->check(CLI::ExistingFile);
    detect->add_option("--id", det.id, "Input id")->capture_default_str();
    detect->add_option("--task-type", det.task_type, "knowledge_qa, conditional_generation, semantic_consistency, "
                                                     "math_solving or code_generation");
    detect->add_option("--language", det.language, "english or chinese (default: detected)");
    detect->add_option("--record", det.record, "Write a replay fixture of the session");
    detect->add_option("--trajectory", det.trajectory, "Write the session trajectory");
    detect->add_flag("--pretty", det.pretty, "Indent the JSON report");
    add_engine_options(detect, eng);

    BatchArgs bat;
    auto* batch = app.add_subcommand("batch", "Detect over a dataset");
    batch->add_option("--dataset", bat.dataset, "Dataset (JSONL)")->required()->check(CLI::ExistingFile);
    batch->add_option("--format", bat.format, "qa_labeled or claim_labeled")->capture_default_str();
    batch->add_option("--workers", bat.workers, "Concurrent sessions")->check(CLI::Range(1, 256))->capture_default_str();
    batch->add_option("--out", bat.out, "Predictions output (JSONL)")->required();
    batch->add_option("--trajectories", bat.trajectories, "Also write every trajectory (JSONL)");
    add_engine_options(batch, eng);

    SynthesizeArgs syn;
    auto* synth = app.add_subcommand("synthesize", "Generate and filter trajectories with a teacher backend");
    synth->add_option("--dataset", syn.dataset, "Labeled dataset (JSONL)")->required()->check(CLI::ExistingFile);
    synth->add_option("--format", syn.format, "qa_labeled or claim_labeled")->capture_default_str();
    synth->add_option("--workers", syn.workers, "Concurrent sessions")->check(CLI::Range(1, 256))->capture_default_str();
    synth->add_option("--attempts", syn.attempts, "Sessions per input")->check(CLI::Range(1, 10))->capture_default_str();
    synth->add_option("--out", syn.out, "Trajectory store (JSONL)")->required();
    synth->add_option("--yield-json", syn.yield_json, "Write the yield report as JSON");
    add_engine_options(synth, eng);

    FilterArgs fil;
    auto* filter = app.add_subcommand("filter", "Keep valid trajectories, quarantine the rest");
    filter->add_option("--in", fil.in, "Trajectory store (JSONL)")->required()->check(CLI::ExistingFile);
    filter->add_option("--out", fil.out, "Accepted trajectories (JSONL)")->required();
    filter->add_option("--quarantine", fil.quarantine, "Rejected trajectories with reasons (default: OUT.quarantine.jsonl)");
    filter->add_option("--registry", fil.registry, "Registered tools (JSON array)")->check(CLI::ExistingFile);
    filter->add_option("--yield-json", fil.yield_json, "Write the yield report as JSON");

    ExportArgs exp;
    auto* exportc = app.add_subcommand("export", "Export accepted trajectories as a fine-tuning corpus");
    exportc->add_option("--in", exp.in, "Accepted trajectories (JSONL)")->required()->check(CLI::ExistingFile);
    exportc->add_option("--out", exp.out, "Fine-tuning corpus (JSONL)")->required();
    exportc->add_option("--registry", exp.registry, "Registered tools (JSON array)")->check(CLI::ExistingFile);

    EvaluateArgs ev;
    auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold labels");
    evaluate->add_option("--level", ev.level, "response or sentence")
        ->check(CLI::IsMember({"response", "sentence"}))
        ->capture_default_str();
    evaluate->add_option("--dataset", ev.dataset, "Labeled dataset (JSONL)")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--format", ev.format, "qa_labeled or claim_labeled");
    evaluate->add_option("--predictions", ev.predictions, "Predictions from batch (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    evaluate->add_option("--json", ev.json_out, "Write the report as JSON");

    auto* toolsc = app.add_subcommand("tools", "List or register tools");
    toolsc->require_subcommand(1);
    std::optional<std::string> list_registry;
    auto* list = toolsc->add_subcommand("list", "Print the toolbox");
    list->add_option("--registry", list_registry, "Registered tools (JSON array)")->check(CLI::ExistingFile);
    std::string spec_file;
    std::string register_target;
    auto* reg = toolsc->add_subcommand("register", "Validate a tool spec and add it to a registry file");
    reg->add_option("spec", spec_file, "Tool spec (JSON object or array)")->required()->check(CLI::ExistingFile);
    reg->add_option("--registry", register_target, "Registry file to update")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    static constexpr std::pair<const char*, log::Level> levels[] = {
        {"debug", log::Level::debug}, {"info", log::Level::info}, {"warning", log::Level::warning}, {"error", log::Level::error}};
    for (const auto& [name, level] : levels)
        if (log_level == name) log::set_level(level);

    try {
        const Settings settings(config_file ? ConfigFile::load(*config_file) : ConfigFile{});
        if (detect->parsed()) return cmd_detect(det, eng, settings);
        if (batch->parsed()) return cmd_batch(bat, eng, settings);
        if (synth->parsed()) return cmd_synthesize(syn, eng, settings);
        if (filter->parsed()) return cmd_filter(fil, settings);
        if (exportc->parsed()) return cmd_export(exp, settings);
        if (evaluate->parsed()) return cmd_evaluate(ev);
        if (list->parsed()) return cmd_tools_list(list_registry, settings);
        if (reg->parsed()) return cmd_tools_register(spec_file, register_target);
    } catch (const ConfigError& e) {
        log::error(e.what());
        return exit_config;
    } catch (const InvalidSchema& e) {
        log::error(e.what());
        return exit_config;
    } catch (const DuplicateName& e) {
        log::error(e.what());
        return exit_config;
    } catch (const SchemaError& e) {
        log::error(e.what());
        return exit_config;
    } catch (const MissingTemplate& e) {
        log::error(e.what());
        return exit_config;
    } catch (const IoError& e) {
        log::error(e.what());
        return exit_config;
    } catch (const EmptyInput& e) {
        log::error(e.what());
        return exit_item_failure;
    } catch (const std::exception& e) {
        log::error(std::string("unexpected error: ") + e.what());
        return exit_item_failure;
    }
    return exit_config;
}
