#include <gtest/gtest.h>

#include "support.hpp"

using namespace halucheck;
using namespace halucheck::testing;

namespace {

std::string split_step(const std::string& text) { return canonical_step("Split first.", tools::split_text, {{"text", text}}); }
std::string write_step(int label, const std::string& evidence = "") {
    ArgMap args{{"label", std::int64_t{label}}};
    if (!evidence.empty()) args.set("evidence", evidence);
    return canonical_step("Store it.", tools::write_memory, std::move(args));
}
std::string answer_step() { return canonical_step("Done.", tools::get_answer, {}); }

DetectionInput input(std::string id, std::string response, TaskType task = TaskType::knowledge_qa) {
    DetectionInput in;
    in.id = std::move(id);
    in.response = std::move(response);
    in.task_type = task;
    return in;
}

std::vector<std::string> observations(const Trajectory& t) {
    std::vector<std::string> out;
    for (const auto& turn : t.turns)
        if (!turn.is_step()) out.push_back(turn.text);
    return out;
}

SentenceVerdict calc_verdict(std::string sentence, Label label, std::string evidence = "ok") {
    return {std::move(sentence), label, std::move(evidence), "calculator", false};
}

}  // namespace

// ---- session lifecycle ----

TEST(Engine, ScriptedAverageSpeedSession) {
    Rig rig;
    const Detector d = rig.detector();
    ScriptedBackend backend(load_script(fixture("average_speed_script.json")));
    const SessionOutcome o = d.run(load_input(fixture("average_speed_input.json")), &backend);
    ASSERT_TRUE(o.ok()) << o.trajectory.failure;
    EXPECT_EQ(o.report->response_label, Label::hallucinated);
    ASSERT_EQ(o.report->verdicts.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(o.report->verdicts[i].label, i == 2 ? Label::hallucinated : Label::clean) << i;
    EXPECT_EQ(o.report->verdicts[2].evidence, "3 + 0.5 + 1.5 = 5 ≠ 4 (lhs 5 ≠ rhs 4)");
    EXPECT_EQ(o.report->turns_used, 10);
    EXPECT_EQ(o.trajectory.step_count(), 10u);
    EXPECT_EQ(o.trajectory.final_label, Label::hallucinated);
    EXPECT_EQ(o.trajectory.turns.front().source, ObservationSource::initial_input);
    EXPECT_EQ(backend.remaining(), 0u);
}

TEST(Engine, PromptStartsWithInstructionAndAlternates) {
    Rig rig;
    const Detector d = rig.detector();
    std::vector<std::vector<ChatMessage>> seen;
    ScriptedBackend backend([&, turns = load_script(fixture("average_speed_script.json")), i = std::size_t{0}](
                                std::span<const ChatMessage> h) mutable {
        seen.emplace_back(h.begin(), h.end());
        return turns.at(i++);
    });
    ASSERT_TRUE(d.run(load_input(fixture("average_speed_input.json")), &backend).ok());
    for (const auto& h : seen) {
        ASSERT_EQ(h.front().role, Role::system);
        EXPECT_NE(h.front().content.find("word_count | Input: length: int, text: str"), std::string::npos);
        for (std::size_t i = 1; i < h.size(); ++i)
            EXPECT_EQ(h[i].role, i % 2 == 1 ? Role::environment : Role::agent);
        EXPECT_EQ(h.back().role, Role::environment);
    }
    EXPECT_EQ(seen[1].size(), seen[0].size() + 2);
}

TEST(Engine, ReplayReproducesAndDetectsDivergence) {
    Rig rig;
    const Detector d = rig.detector();
    const ReplayFixture f = load_replay_fixture(fixture("average_speed_replay.json"));
    ReplayBackend good(f);
    const SessionOutcome o = d.run(f.input, &good);
    ASSERT_TRUE(o.ok()) << o.trajectory.failure;
    EXPECT_EQ(replay_fixture_from(f.input, o.trajectory).turns, f.turns);

    ReplayFixture tampered = f;
    tampered.turns[3].observation = "Observation: label = pass; something else";
    ReplayBackend bad(tampered);
    const SessionOutcome b = d.run(f.input, &bad);
    ASSERT_FALSE(b.ok());
    EXPECT_EQ(b.error->kind, SessionError::Kind::session_failed);
    EXPECT_NE(b.error->message.find("diverged at turn 4"), std::string::npos);
}

TEST(Engine, TurnBudget) {
    Rig rig;
    EngineConfig cfg;
    cfg.max_turns = 6;
    const Detector d = rig.detector(cfg);
    ScriptedBackend backend([](std::span<const ChatMessage>) {
        return canonical_step("Compute.", tools::calculator, {{"formula", "1 + 1"}});
    });
    const SessionOutcome o = d.run(input("budget", "One. Two."), &backend);
    ASSERT_FALSE(o.ok());
    EXPECT_EQ(o.error->kind, SessionError::Kind::turn_budget_exceeded);
    EXPECT_EQ(o.state.turn, 6);
    EXPECT_EQ(o.trajectory.step_count(), 6u);
    EXPECT_FALSE(o.trajectory.failure.empty());
    EXPECT_NE(observations(o.trajectory)[1].find("WrongPhase"), std::string::npos);
    ScriptedBackend again([](std::span<const ChatMessage>) { return std::string("Thought: x\nAction: get_answer\nAction Input: {}"); });
    EXPECT_THROW(d.detect(input("budget", "One."), &again), TurnBudgetExceeded);
}

TEST(Engine, ParseRetriesExhausted) {
    Rig rig;
    const Detector d = rig.detector();
    ScriptedBackend backend([](std::span<const ChatMessage>) { return std::string("I think the answer is fine."); });
    const SessionOutcome o = d.run(input("garbage", "One."), &backend);
    ASSERT_FALSE(o.ok());
    EXPECT_EQ(o.error->kind, SessionError::Kind::session_failed);
    EXPECT_EQ(o.state.turn, 3);
    const auto obs = observations(o.trajectory);
    ASSERT_EQ(obs.size(), 4u);
    for (std::size_t i = 1; i < obs.size(); ++i) {
        EXPECT_EQ(o.trajectory.turns[2 * i].source, ObservationSource::error_feedback);
        EXPECT_NE(obs[i].find("MalformedStep"), std::string::npos);
        EXPECT_NE(obs[i].find("Action Input:"), std::string::npos);
    }
    ScriptedBackend again([](std::span<const ChatMessage>) { return std::string("nope"); });
    EXPECT_THROW(d.detect(input("garbage", "One."), &again), SessionFailed);
}

TEST(Engine, ParseFailureCounterResetsOnGoodTurn) {
    Rig rig;
    const Detector d = rig.detector();
    ScriptedBackend backend({"bad", "Thought: x\nAction: calculator\nAction Input: {oops}", split_step("A b."), "bad", "bad",
                             write_step(0), answer_step()});
    const SessionOutcome o = d.run(input("recover", "A b."), &backend);
    ASSERT_TRUE(o.ok()) << o.trajectory.failure;
    EXPECT_NE(observations(o.trajectory)[2].find("BadArgumentSyntax"), std::string::npos);
    EXPECT_EQ(o.report->response_label, Label::clean);
}

TEST(Engine, EarlyAnswerUnknownToolAndPhaseErrors) {
    Rig rig;
    const Detector d = rig.detector();
    ScriptedBackend backend({
        write_step(0),  // before split
        answer_step(),  // before split
        split_step("First claim. Second claim."),
        split_step("again"),  // already segmented
        canonical_step("Use calc.", "calc", {{"formula", "1"}}),  // unknown tool
        canonical_step("Update.", tools::update_memory,
                       {{"index", std::int64_t{1}}, {"label", std::int64_t{1}}, {"evidence", "x"}}),
        write_step(0, "fine"),
        answer_step(),  // one of two verified
        write_step(1),  // label 1 without evidence
        write_step(1, "contradicted"),
        write_step(0),  // all stored already
        answer_step(),
    });
    const SessionOutcome o = d.run(input("phases", "First claim. Second claim."), &backend);
    ASSERT_TRUE(o.ok()) << o.trajectory.failure;
    const auto obs = observations(o.trajectory);
    EXPECT_NE(obs[1].find("WrongPhase"), std::string::npos);
    EXPECT_NE(obs[2].find("CalledBeforeVerification"), std::string::npos);
    EXPECT_NE(obs[4].find("WrongPhase"), std::string::npos);
    EXPECT_NE(obs[5].find("UnknownTool"), std::string::npos);
    EXPECT_NE(obs[6].find("WrongPhase"), std::string::npos);
    EXPECT_NE(obs[8].find("CalledBeforeVerification"), std::string::npos);
    EXPECT_NE(obs[8].find("1 of 2"), std::string::npos);
    EXPECT_NE(obs[9].find("InvalidArguments"), std::string::npos);
    EXPECT_NE(obs[11].find("WrongPhase"), std::string::npos);
    EXPECT_EQ(o.report->response_label, Label::hallucinated);
    EXPECT_EQ(o.report->verdicts[1].evidence, "contradicted");
}

TEST(Engine, UpdateOutOfRangeIsRejected) {
    Rig rig;
    const Detector d = rig.detector();
    const auto update = [](std::int64_t index, std::int64_t label) {
        return canonical_step("Fix.", tools::update_memory, {{"index", index}, {"label", label}, {"evidence", "why"}});
    };
    ScriptedBackend backend({split_step("Only one."), write_step(0), update(2, 1), update(0, 1), update(1, 1), answer_step()});
    const SessionOutcome o = d.run(input("range", "Only one."), &backend);
    ASSERT_TRUE(o.ok());
    EXPECT_EQ(o.state.rejected_updates.size(), 2u);
    ASSERT_EQ(o.state.applied_updates.size(), 1u);
    EXPECT_NE(observations(o.trajectory)[3].find("UpdateOutOfRange"), std::string::npos);
    EXPECT_EQ(o.report->response_label, Label::hallucinated);
    EXPECT_EQ(o.report->verdicts[0].evidence, "why");
}

TEST(Engine, ToolBudgetPerSentence) {
    Rig rig;
    const Detector d = rig.detector();
    const std::string calc = canonical_step("Compute.", tools::calculator, {{"formula", "2 * 3"}});
    ScriptedBackend backend({split_step("Six. Seven."), calc, calc, calc, calc, write_step(0), answer_step()});
    const SessionOutcome o = d.run(input("tools", "Six. Seven."), &backend);
    ASSERT_TRUE(o.ok()) << o.trajectory.failure;
    EXPECT_TRUE(o.report->verdicts[0].low_confidence);
    EXPECT_EQ(o.report->verdicts[0].label, Label::clean);
    EXPECT_NE(o.report->verdicts[0].evidence.find("budget"), std::string::npos);
    EXPECT_NE(observations(o.trajectory)[5].find("BudgetExhausted"), std::string::npos);
    EXPECT_FALSE(o.report->verdicts[1].low_confidence);
}

TEST(Engine, RepeatedToolFailuresMarkUnverifiable) {
    Rig rig;
    const Detector d = rig.detector();
    const std::string bad = canonical_step("Search.", tools::web_search, {{"sentence", "qwxzv plorth"}});
    ScriptedBackend backend({split_step("Qwxzv plorth."), bad, bad, bad, answer_step()});
    const SessionOutcome o = d.run(input("unverifiable", "Qwxzv plorth."), &backend);
    ASSERT_TRUE(o.ok()) << o.trajectory.failure;
    EXPECT_TRUE(o.report->verdicts[0].low_confidence);
    EXPECT_EQ(o.report->verdicts[0].tool_used, "web_search");
}

TEST(Engine, RejectsEmptyResponseAndMissingBackend) {
    Rig rig;
    const Detector d = rig.detector();
    ScriptedBackend b({answer_step()});
    EXPECT_THROW(d.run(input("empty", "   "), &b), SchemaError);
    EXPECT_THROW(d.run(input("nobackend", "x"), nullptr), ConfigError);
    EngineConfig bad;
    bad.max_turns = 2;
    EXPECT_THROW(rig.detector(bad), ConfigError);
}

// ---- fallback policy ----

TEST(Fallback, DeterministicAndPropagatesErrors) {
    Rig rig;
    EngineConfig cfg;
    cfg.deterministic_fallback = true;
    const Detector d = rig.detector(cfg);
    const DetectionInput in = input("chain",
                                    "The total time is 3 hours + 0.5 hours + 1.5 hours = 4 hours. "
                                    "The speed is 140 km / 4 hours = 35 km/h. Twice that is 35 * 2 = 70.",
                                    TaskType::math_solving);
    const SessionOutcome a = d.run(in, nullptr);
    const SessionOutcome b = d.run(in, nullptr);
    ASSERT_TRUE(a.ok()) << a.trajectory.failure;
    EXPECT_EQ(a.trajectory, b.trajectory);
    ASSERT_EQ(a.report->verdicts.size(), 3u);
    for (const auto& v : a.report->verdicts) EXPECT_EQ(v.label, Label::hallucinated) << v.sentence;
    EXPECT_EQ(a.state.applied_updates.size(), 2u);
    EXPECT_EQ(a.report->verdicts[1].evidence, "depends on incorrect step 1 (uses 4)");
    EXPECT_EQ(a.report->verdicts[2].evidence, "depends on incorrect step 2 (uses 35)");
}

TEST(Fallback, FactsJudgedBySnippets) {
    Rig rig;
    EngineConfig cfg;
    cfg.deterministic_fallback = true;
    const Detector d = rig.detector(cfg);
    const auto clean = d.detect(input("kqa", "Canberra is the capital of Australia."), nullptr);
    EXPECT_EQ(clean.response_label, Label::clean);
    const auto wrong = d.detect(input("kqa2", "Sydney is the capital of Australia."), nullptr);
    EXPECT_EQ(wrong.response_label, Label::hallucinated);
}

TEST(Fallback, RequestedLength) {
    EXPECT_EQ(requested_length("Write a 50-word summary."), 50);
    EXPECT_EQ(requested_length("Use exactly 12 words"), 12);
    EXPECT_EQ(requested_length("写一段 30 字的介绍"), 30);
    EXPECT_FALSE(requested_length("Write a poem"));
}

// ---- reflection ----

TEST(Reflect, LocalRuleRaisesFailedChecks) {
    const std::vector<SentenceVerdict> memory{
        calc_verdict("3 + 0.5 + 1.5 = 4", Label::clean, "3 + 0.5 + 1.5 = 5 ≠ 4 (lhs 5 ≠ rhs 4)"),
        {"Write 5 words.", Label::clean, "count = 7, label = fail", "word_count", false},
        calc_verdict("1 + 1 = 2", Label::clean, "1 + 1 = 2 = 2 (lhs 2 = rhs 2)")};
    const auto updates = reflect(memory);
    ASSERT_EQ(updates.size(), 2u);
    EXPECT_EQ(updates[0].index, 1u);
    EXPECT_EQ(updates[1].index, 2u);
}

TEST(Reflect, PropagationStopsAtCorrectedValue) {
    const std::vector<SentenceVerdict> memory{calc_verdict("3 + 0.5 + 1.5 = 4", Label::hallucinated, "wrong"),
                                              calc_verdict("140 / 5 = 28", Label::clean),
                                              calc_verdict("140 / 4 = 35", Label::clean),
                                              calc_verdict("35 - 5 = 30", Label::clean),
                                              calc_verdict("2 + 2 = 4", Label::clean)};
    const auto updates = reflect(memory);
    std::vector<std::size_t> idx;
    for (const auto& u : updates) idx.push_back(u.index);
    EXPECT_EQ(idx, (std::vector<std::size_t>{3, 4}));
}

TEST(Reflect, ChineseEvidence) {
    const std::vector<SentenceVerdict> memory{calc_verdict("45 - 18 = 37", Label::hallucinated, "wrong"),
                                              calc_verdict("37 + 3 = 40", Label::clean)};
    const auto updates = reflect(memory, Language::chinese);
    ASSERT_EQ(updates.size(), 1u);
    EXPECT_EQ(updates[0].evidence, "依赖第 1 步的错误结果 37");
}

TEST(Reflect, OracleAndFixedPoint) {
    std::mt19937_64 rng(77);
    std::uniform_int_distribution<int> small(1, 9), len(0, 10);
    std::bernoulli_distribution reuse(0.5), wrong(0.2);
    for (int round = 0; round < 500; ++round) {
        std::vector<SentenceVerdict> memory;
        std::vector<std::vector<int>> operands;
        std::vector<int> claims;
        std::vector<bool> expected;
        for (int i = 0, n = len(rng); i < n; ++i) {
            const int a = !claims.empty() && reuse(rng) ? claims[rng() % claims.size()] : small(rng);
            const int b = small(rng);
            const int claim = wrong(rng) ? a + b + 1 : a + b;
            const bool initially = wrong(rng);
            memory.push_back(calc_verdict("So we get " + std::to_string(a) + " + " + std::to_string(b) + " = " +
                                              std::to_string(claim) + " apples.",
                                          initially ? Label::hallucinated : Label::clean));
            operands.push_back({a, b});
            claims.push_back(claim);
            bool flagged = initially;
            for (std::size_t k = 0; k < expected.size() && !flagged; ++k)
                if (expected[k] && (claims[k] == a || claims[k] == b)) flagged = true;
            expected.push_back(flagged);
        }
        const auto updates = reflect(memory);
        std::set<std::size_t> seen;
        for (const auto& u : updates) {
            ASSERT_GE(u.index, 1u);
            ASSERT_LE(u.index, memory.size());
            ASSERT_EQ(u.label, Label::hallucinated);
            ASSERT_EQ(memory[u.index - 1].label, Label::clean);
            ASSERT_TRUE(seen.insert(u.index).second);
        }
        std::vector<SentenceVerdict> applied = memory;
        EXPECT_TRUE(apply_updates(applied, updates).empty());
        for (std::size_t i = 0; i < applied.size(); ++i)
            ASSERT_EQ(applied[i].label == Label::hallucinated, expected[i]) << memory[i].sentence << " round " << round;
        ASSERT_TRUE(reflect(applied).empty());
    }
}

TEST(Reflect, ApplyUpdatesRejectsOutOfRange) {
    std::vector<SentenceVerdict> memory{calc_verdict("1 + 1 = 2", Label::clean)};
    const auto rejected = apply_updates(memory, {{0, Label::hallucinated, "x"}, {2, Label::hallucinated, "y"}});
    EXPECT_EQ(rejected.size(), 2u);
    EXPECT_EQ(memory[0].label, Label::clean);
}

// ---- batch ----

TEST(Batch, SortedByIdAndIndependentOfWorkers) {
    Rig rig;
    EngineConfig cfg;
    cfg.deterministic_fallback = true;
    const Detector d = rig.detector(cfg);
    std::vector<DetectionInput> inputs = load_inputs(fixture("scripted_corpus.jsonl"));
    inputs.resize(20);
    std::mt19937_64 rng(4);
    std::shuffle(inputs.begin(), inputs.end(), rng);
    const auto one = run_batch(inputs, d, nullptr, 1);
    const auto many = run_batch(inputs, d, nullptr, 4);
    ASSERT_EQ(one.size(), inputs.size());
    ASSERT_EQ(many.size(), inputs.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        if (i) {
            EXPECT_LT(one[i - 1].input.id, one[i].input.id);
        }
        EXPECT_EQ(one[i].input.id, many[i].input.id);
        EXPECT_EQ(one[i].outcome.trajectory, many[i].outcome.trajectory);
    }
}

TEST(Batch, ParallelMapPropagatesExceptions) {
    EXPECT_THROW(parallel_map<int>(8, 3,
                                   [](std::size_t i) -> int {
                                       if (i == 5) throw Error("boom");
                                       return static_cast<int>(i);
                                   }),
                 Error);
    const auto squares = parallel_map<std::size_t>(100, 7, [](std::size_t i) { return i * i; });
    for (std::size_t i = 0; i < squares.size(); ++i) EXPECT_EQ(squares[i], i * i);
}
