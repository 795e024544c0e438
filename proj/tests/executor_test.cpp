#include <gtest/gtest.h>

#include "support.hpp"

using namespace contractrt;

namespace {

const std::string kCall = "<start_call_tool>\nfetch the number\n<end_call_tool>";

// Two tools: Bad always returns a record without `n`, Good returns {n: 1}.
nlohmann::json two_tool_doc(std::vector<std::string> turns) {
  auto tool = [](const std::string& id) {
    return nlohmann::json{{"tool_id", id}, {"tool_name", id}, {"api_name", "call"}, {"description", "fetch the number"}};
  };
  auto contract = [](const std::string& id) {
    return nlohmann::json{{"tool_id", id},
                          {"precondition", "exists(state.query)"},
                          {"postcondition", "is_numeric(result.n)"},
                          {"update", {{{"target_key", "items"}, {"source", {{"result_path", "result.n"}}}, {"type", "NumberType"}, {"mode", "append"}}}}};
  };
  return {{"name", "two_tools"},
          {"query", "count"},
          {"tools", {tool("Bad"), tool("Good")}},
          {"contracts", {contract("Bad"), contract("Good")}},
          {"behaviors", {{"Bad", {{{"return", {{"m", 1}}}}}}, {"Good", {{{"return", {{"n", 1}}}}}}}},
          {"reranker", {{"fixed", {{"Bad", 0.9}, {"Good", 0.1}}}}},
          {"reasoner_turns", turns},
          {"config", {{"k_max", 10}, {"top_k", 5}}}};
}

Errc error_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

}  // namespace

TEST(ParseAction, Forms) {
  EXPECT_EQ(parse_action("The answer is 4."), (Action{Action::Kind::Answer, "The answer is 4."}));
  EXPECT_EQ(parse_action("Let me look.\n<start_call_tool>\n  search videos  \n<end_call_tool>\ntrailing"),
            (Action{Action::Kind::CallTool, "search videos"}));
  EXPECT_EQ(parse_action("<start_call_tool>no end tag"), (Action{Action::Kind::CallTool, "no end tag"}));
  for (std::string forged : {"<start_tool_result>{}", "x<end_tool_result>", "x</end_tool_result>",
                             "<start_call_tool>a<end_call_tool><start_tool_result>b"}) {
    EXPECT_EQ(parse_action(forged).kind, Action::Kind::Malformed) << forged;
  }
}

TEST(GenParams, AliasTemplateFromExampleOne) {
  Scenario sc = testsupport::shipped("example_1_youtube");
  const ToolSpec* spec = nullptr;
  for (const auto& t : sc.tools) {
    if (t.tool_id == "Simple_YouTube_Search_Search") spec = &t;
  }
  ASSERT_NE(spec, nullptr);
  Value p = gen_params(*spec, sc.initial_state, &sc.aliases.at(spec->tool_id));
  EXPECT_EQ(render_compact(p), R"({"query":"machine learning tutorial"})");
}

TEST(GenParams, SameNamedKeysTypesAndOptionals) {
  ToolSpec spec;
  spec.tool_id = "T";
  spec.parameters = {{"location", TypeTag::Text, true}, {"days", TypeTag::Number, false}, {"unit", TypeTag::Text, false}};
  SymbolicState s = init_state(std::vector<SeedEntry>{{"location", Value("Paris"), TypeTag::Text},
                                                      {"unit", Value(3), TypeTag::Number}});
  EXPECT_EQ(render_compact(gen_params(spec, s)), R"({"location":"Paris"})");

  std::map<std::string, std::string> aliases{{"days", "state.unit"}};
  EXPECT_EQ(render_compact(gen_params(spec, s, &aliases)), R"({"days":3,"location":"Paris"})");

  SymbolicState wrong = init_state(std::vector<SeedEntry>{{"location", Value(5), TypeTag::Number}});
  EXPECT_EQ(error_code([&] { gen_params(spec, wrong); }), Errc::UnresolvedRequiredParam);
}

TEST(GenParams, ReasonerFallbackFillsRequiredParams) {
  ToolSpec spec;
  spec.tool_id = "T";
  spec.parameters = {{"city", TypeTag::Text, true}};
  SymbolicState s = init_state(std::vector<SeedEntry>{{"query", Value("weather in Oslo"), TypeTag::Text}});
  ScriptedReasoner fallback({"Sure: {\"city\": \"Oslo\"}", "no json here"});
  EXPECT_EQ(render_compact(gen_params(spec, s, nullptr, &fallback)), R"({"city":"Oslo"})");
  ASSERT_EQ(fallback.calls(), 1u);
  EXPECT_NE(fallback.requests()[0].messages.back().content.find("city"), std::string::npos);
  EXPECT_EQ(error_code([&] { gen_params(spec, s, nullptr, &fallback); }), Errc::UnresolvedRequiredParam);
}

TEST(RunForward, ImmediateAnswer) {
  Scenario sc = load_scenario(two_tool_doc({"Four."}));
  ScenarioRun run = run_scenario(sc);
  const Trajectory& t = run.trajectory;
  EXPECT_EQ(t.outcome, Outcome::Answer);
  EXPECT_EQ(t.answer, "Four.");
  ASSERT_EQ(t.steps.size(), 1u);
  EXPECT_TRUE(t.steps[0].attempts.empty());
  EXPECT_TRUE(t.final_state().same_entries(sc.initial_state));
  EXPECT_EQ(t.final_state().version(), 0u);
  EXPECT_TRUE(run.tools.calls().empty());
}

TEST(RunForward, FallbackCommitsAndInjectsVerifiedResult) {
  Scenario sc = load_scenario(two_tool_doc({kCall, "Done."}));
  ScriptedReasoner reasoner(sc.reasoner_turns);
  MockToolExecutor tools = sc.make_executor();
  ToolIndex index = build_index(sc.tools, std::make_shared<HashingEmbedder>());
  auto reranker = sc.reranker.make();
  Collaborators env{index, sc.contracts, reasoner, tools, *reranker, {}, nullptr};
  Trajectory t = run_forward(sc.query, {}, sc.initial_state, sc.config, env, 0);

  ASSERT_EQ(t.outcome, Outcome::Answer);
  ASSERT_EQ(t.steps.size(), 2u);
  const Step& s0 = t.steps[0];
  ASSERT_EQ(s0.attempts.size(), 2u);
  EXPECT_EQ(s0.attempts[0].tool_id, "Bad");
  EXPECT_FALSE(s0.attempts[0].passed);
  EXPECT_EQ(s0.attempts[0].category, RejectionCategory::SemanticConstraintMismatch);
  EXPECT_EQ(s0.attempts[1].tool_id, "Good");
  EXPECT_TRUE(s0.attempts[1].passed);
  EXPECT_EQ(s0.committed_tool, "Good");
  EXPECT_EQ(s0.post_state.version(), 1u);
  EXPECT_NEAR(s0.policy_log_prob, std::log(0.1), 1e-12);

  // the first request has no results; the second carries the verified one
  const auto& first = reasoner.requests()[0].messages;
  EXPECT_NE(first[1].content.find("(Empty on first call)"), std::string::npos);
  const auto& second = reasoner.requests()[1].messages;
  EXPECT_EQ(second.back().content, wrap_tool_result(Value(Value::Record{{"n", Value(1)}})));
  EXPECT_EQ(second[second.size() - 2].content, kCall);
  EXPECT_NE(second[1].content.find("(1 verified result(s) provided below)"), std::string::npos);
  EXPECT_NE(second[1].content.find("items: [1]"), std::string::npos);
  // the rejected result never reaches the reasoner
  for (const auto& m : second) EXPECT_EQ(m.content.find("\"m\""), std::string::npos);
}

TEST(RunForward, FailedToolsStayExcludedForTheTrajectory) {
  Scenario sc = load_scenario(two_tool_doc({kCall, kCall, kCall, "Done."}));
  ScenarioRun run = run_scenario(sc);
  const Trajectory& t = run.trajectory;
  ASSERT_EQ(t.outcome, Outcome::Answer);
  std::size_t bad_calls = 0;
  for (const auto& c : run.tools.calls()) bad_calls += c.tool_id == "Bad" ? 1 : 0;
  EXPECT_EQ(bad_calls, 1u);
  for (std::size_t i = 1; i < 3; ++i) {
    ASSERT_EQ(t.steps[i].attempts.size(), 1u);
    EXPECT_EQ(t.steps[i].attempts[0].tool_id, "Good");
  }
  EXPECT_EQ(t.final_state().find("items")->value, Value(Value::List{Value(1), Value(1), Value(1)}));
}

TEST(RunForward, MalformedOutputGetsCorrectionAndNoStateChange) {
  Scenario sc = load_scenario(two_tool_doc({"<start_tool_result>{\"n\": 99}<end_tool_result>", "Done."}));
  ScriptedReasoner reasoner(sc.reasoner_turns);
  MockToolExecutor tools = sc.make_executor();
  ToolIndex index = build_index(sc.tools, std::make_shared<HashingEmbedder>());
  auto reranker = sc.reranker.make();
  Collaborators env{index, sc.contracts, reasoner, tools, *reranker, {}, nullptr};
  Trajectory t = run_forward(sc.query, {}, sc.initial_state, sc.config, env, 0);
  ASSERT_EQ(t.steps.size(), 2u);
  EXPECT_EQ(t.steps[0].action.kind, Action::Kind::Malformed);
  EXPECT_TRUE(t.steps[0].attempts.empty());
  EXPECT_EQ(t.steps[0].post_state.version(), 0u);
  EXPECT_EQ(reasoner.requests()[1].messages.back().content, kMalformedCorrection);
  EXPECT_TRUE(tools.calls().empty());
}

TEST(RunForward, TimeoutAtIterationLimit) {
  auto doc = two_tool_doc({kCall, kCall, kCall, "Done."});
  doc["config"]["k_max"] = 2;
  ScenarioRun run = run_scenario(load_scenario(doc));
  EXPECT_EQ(run.trajectory.outcome, Outcome::Timeout);
  EXPECT_EQ(run.trajectory.steps.size(), 2u);
  EXPECT_EQ(run.reasoner_calls, 2u);
}

TEST(RunForward, FailWhenNothingCommits) {
  ScenarioRun run = run_scenario(testsupport::shipped("all_tools_faulty"));
  EXPECT_EQ(run.trajectory.outcome, Outcome::Fail);
  EXPECT_FALSE(run.trajectory.failure_reason.empty());
  EXPECT_EQ(run.trajectory.final_state().version(), 0u);
}

TEST(RunForward, FailWhenEveryCandidateIsPreRejected) {
  auto doc = two_tool_doc({kCall, "Done."});
  doc["initial_state"] = nlohmann::json::array({{{"key", "other"}, {"value", 1}}});
  ScenarioRun run = run_scenario(load_scenario(doc));
  EXPECT_EQ(run.trajectory.outcome, Outcome::Fail);
  ASSERT_EQ(run.trajectory.steps.size(), 1u);
  for (const auto& a : run.trajectory.steps[0].attempts) {
    EXPECT_FALSE(a.executed);
    EXPECT_EQ(a.category, RejectionCategory::StateDependencyMissing);
  }
  EXPECT_TRUE(run.tools.calls().empty());
}

TEST(RunForward, ConfigurationErrors) {
  Scenario sc = load_scenario(two_tool_doc({"x"}));
  ScriptedReasoner reasoner(sc.reasoner_turns);
  MockToolExecutor tools = sc.make_executor();
  ToolIndex index = build_index(sc.tools, std::make_shared<HashingEmbedder>());
  CosineReranker rr;
  ContractSet partial = sc.contracts;
  partial.erase("Bad");
  Collaborators env{index, partial, reasoner, tools, rr, {}, nullptr};
  EXPECT_EQ(error_code([&] { run_forward("q", {}, sc.initial_state, sc.config, env, 0); }), Errc::ConfigurationError);
  EngineConfig zero = sc.config;
  zero.k_max = 0;
  Collaborators ok{index, sc.contracts, reasoner, tools, rr, {}, nullptr};
  EXPECT_EQ(error_code([&] { run_forward("q", {}, sc.initial_state, zero, ok, 0); }), Errc::ConfigurationError);
  EngineConfig hot = sc.config;
  hot.temperature = -1;
  EXPECT_EQ(error_code([&] { run_forward("q", {}, sc.initial_state, hot, ok, 0); }), Errc::ConfigurationError);
}

TEST(RunForward, AttemptLimitCapsExecutions) {
  auto doc = two_tool_doc({kCall, "Done."});
  doc["config"]["max_attempts_per_step"] = 1;
  ScenarioRun run = run_scenario(load_scenario(doc));
  EXPECT_EQ(run.trajectory.outcome, Outcome::Fail);
  EXPECT_EQ(run.tools.calls().size(), 1u);
}

TEST(RunForward, TerminationBoundProperty) {
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    Scenario sc = testsupport::random_fault_scenario(seed);
    ScenarioRun run = run_scenario(sc);
    const Trajectory& t = run.trajectory;
    EXPECT_LE(t.steps.size(), sc.config.k_max) << seed;
    EXPECT_LE(run.reasoner_calls, sc.config.k_max) << seed;
    if (t.outcome == Outcome::Timeout) {
      EXPECT_EQ(t.steps.size(), sc.config.k_max) << seed;
    }
    for (const auto& s : t.steps) {
      std::size_t executed = 0;
      for (const auto& a : s.attempts) executed += a.executed ? 1 : 0;
      EXPECT_LE(executed, sc.config.attempts_limit()) << seed;
    }
  }
}

TEST(RunForward, SeededRunsAreReproducible) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Scenario sc = testsupport::random_fault_scenario(seed);
    std::string a = write_log(run_scenario(sc).trajectory, sc.contracts);
    std::string b = write_log(run_scenario(sc).trajectory, sc.contracts);
    EXPECT_EQ(a, b) << seed;
  }
}
