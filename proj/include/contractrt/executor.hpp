#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/contract.hpp"
#include "contractrt/error.hpp"
#include "contractrt/llm.hpp"
#include "contractrt/message.hpp"
#include "contractrt/policy.hpp"
#include "contractrt/registry.hpp"
#include "contractrt/state.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

struct Action {
  enum class Kind { Answer, CallTool, Malformed };
  Kind kind = Kind::Answer;
  std::string text;  // answer text, call description, or the raw malformed output

  friend bool operator==(const Action&, const Action&) = default;
};

constexpr std::string_view to_string(Action::Kind k) {
  switch (k) {
    case Action::Kind::Answer: return "answer";
    case Action::Kind::CallTool: return "call_tool";
    case Action::Kind::Malformed: return "malformed";
  }
  return "answer";
}

/// Classifies one reasoner output. Result tags are reserved for the runtime,
/// so any output containing one is Malformed.
inline Action parse_action(std::string_view output) {
  if (output.find(kStartToolResult) != std::string_view::npos ||
      output.find(kEndToolResult) != std::string_view::npos ||
      output.find("</end_tool_result>") != std::string_view::npos) {
    return {Action::Kind::Malformed, std::string(output)};
  }
  auto start = output.find(kStartCallTool);
  if (start == std::string_view::npos) return {Action::Kind::Answer, std::string(output)};
  auto body = output.substr(start + kStartCallTool.size());
  auto end = body.find(kEndCallTool);
  if (end != std::string_view::npos) body = body.substr(0, end);
  return {Action::Kind::CallTool, std::string(trim(body))};
}

/// Result of one tool invocation: a value, or a transport-level error.
struct ToolOutcome {
  std::optional<Value> value;
  std::string error;

  static ToolOutcome ok(Value v) { return {std::move(v), {}}; }
  static ToolOutcome failure(std::string message) { return {std::nullopt, std::move(message)}; }
  bool has_value() const { return value.has_value(); }
};

class ToolExecutor {
 public:
  virtual ~ToolExecutor() = default;
  virtual ToolOutcome execute(const std::string& tool_id, const Value& params) = 0;
};

/// Per-tool parameter aliases. A value containing `{key}` placeholders is a
/// text template over state keys; otherwise it names a state key or a
/// `state.` path.
using ParamAliases = std::map<std::string, std::map<std::string, std::string>>;

namespace detail {

inline std::optional<Value> resolve_alias(const std::string& alias, const SymbolicState& state) {
  if (alias.find('{') == std::string::npos) {
    if (alias.rfind("state.", 0) == 0) return get_path(state, alias);
    if (const StateEntry* e = state.find(alias)) return e->value;
    return std::nullopt;
  }
  std::string out;
  std::size_t i = 0;
  while (i < alias.size()) {
    char c = alias[i];
    if (c != '{') {
      out.push_back(c);
      ++i;
      continue;
    }
    auto close = alias.find('}', i);
    if (close == std::string::npos) throw Error(Errc::ParseError, "unterminated placeholder in alias '" + alias + "'");
    std::string key = alias.substr(i + 1, close - i - 1);
    const StateEntry* e = state.find(key);
    if (e == nullptr) return std::nullopt;
    out += e->value.is_text() ? e->value.as_text() : render_compact(e->value);
    i = close + 1;
  }
  return Value(std::move(out));
}

inline std::optional<nlohmann::json> extract_json_object(std::string_view text) {
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  auto j = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

}  // namespace detail

/// Binds each schema parameter from (1) its alias, (2) a same-named state
/// key, (3) the optional reasoner fallback. Values whose tag differs from the
/// declared parameter type are not used. Optional parameters that stay
/// unresolved are omitted.
inline Value gen_params(const ToolSpec& tool, const SymbolicState& state,
                        const std::map<std::string, std::string>* aliases = nullptr, Reasoner* fallback = nullptr) {
  Value::Record params;
  std::vector<const ParameterSpec*> missing;
  for (const auto& p : tool.parameters) {
    std::optional<Value> v;
    if (aliases != nullptr) {
      auto it = aliases->find(p.name);
      if (it != aliases->end()) v = detail::resolve_alias(it->second, state);
    }
    if (!v) {
      if (const StateEntry* e = state.find(p.name)) v = e->value;
    }
    if (v && v->tag() == p.type_tag) {
      params.emplace(p.name, std::move(*v));
    } else if (p.required) {
      missing.push_back(&p);
    }
  }
  if (!missing.empty() && fallback != nullptr) {
    std::string names;
    for (const auto* p : missing) names += (names.empty() ? "" : ", ") + p->name;
    ReasonerRequest req;
    req.messages.push_back({Role::System, std::string(kSystemPrompt)});
    req.messages.push_back({Role::User, "Provide a JSON object with values for the parameters " + names +
                                            " of tool " + tool.tool_id + ".\n\n**Current State:**\n" +
                                            summarize(state)});
    auto obj = detail::extract_json_object(fallback->complete(req).text);
    std::vector<const ParameterSpec*> still_missing;
    for (const auto* p : missing) {
      if (obj && obj->contains(p->name)) {
        Value v = from_json(obj->at(p->name));
        if (v.tag() == p->type_tag) {
          params.emplace(p->name, std::move(v));
          continue;
        }
      }
      still_missing.push_back(p);
    }
    missing = std::move(still_missing);
  }
  if (!missing.empty()) {
    throw Error(Errc::UnresolvedRequiredParam,
                "tool '" + tool.tool_id + "' needs required parameter '" + missing.front()->name + "'");
  }
  return Value(std::move(params));
}

struct EngineConfig {
  std::size_t k_max = 10;
  std::size_t top_k = kDefaultTopK;
  SelectionMode selection_mode = SelectionMode::Greedy;
  double temperature = kDefaultTemperature;
  std::size_t max_attempts_per_step = 0;  // 0 means top_k
  std::size_t max_tokens = kDefaultMaxTokens;
  std::size_t summary_chars = 4000;

  std::size_t attempts_limit() const { return max_attempts_per_step == 0 ? top_k : max_attempts_per_step; }

  void validate() const {
    if (k_max == 0 || top_k == 0 || attempts_limit() == 0 || summary_chars == 0) {
      throw Error(Errc::ConfigurationError, "engine counts must be at least 1");
    }
    if (!(temperature >= 0.0)) throw Error(Errc::ConfigurationError, "temperature must be non-negative");
  }
};

inline nlohmann::json to_json(const EngineConfig& c) {
  return {{"k_max", c.k_max},
          {"top_k", c.top_k},
          {"selection_mode", std::string(to_string(c.selection_mode))},
          {"temperature", c.temperature},
          {"max_attempts_per_step", c.attempts_limit()},
          {"max_tokens", c.max_tokens},
          {"summary_chars", c.summary_chars}};
}

/// One candidate considered in a step: either a pre-rejection (never
/// executed) or an executed call with its acceptance verdict.
struct Attempt {
  std::string tool_id;
  Side phase = Side::Post;
  bool executed = false;
  Value params;
  std::optional<Value> result;
  std::string error;
  bool passed = false;
  std::optional<Predicate> failing_atom;
  std::optional<WellFormednessRule> failing_wf;
  std::optional<RejectionCategory> category;
  std::string detail;

  bool is_rejection() const { return !passed; }
};

struct CandidateRecord {
  std::string tool_id;
  double retrieval_score = 0.0;
  double rank_prob = 0.0;
  bool admissible = false;
  double policy_prob = 0.0;
};

struct Step {
  std::size_t index = 0;
  SymbolicState pre_state;
  std::string reasoning_text;
  Action action;
  std::string requirement;
  std::vector<CandidateRecord> candidates;
  std::vector<Attempt> attempts;
  std::optional<std::string> committed_tool;
  SymbolicState post_state;
  double policy_log_prob = 0.0;

  std::string pre_state_digest() const { return state_digest(pre_state); }
  std::string post_state_digest() const { return state_digest(post_state); }
};

enum class Outcome { Answer, Fail, Timeout };

constexpr std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Answer: return "answer";
    case Outcome::Fail: return "fail";
    case Outcome::Timeout: return "timeout";
  }
  return "fail";
}

inline Outcome parse_outcome(std::string_view s) {
  if (s == "answer") return Outcome::Answer;
  if (s == "fail") return Outcome::Fail;
  if (s == "timeout") return Outcome::Timeout;
  throw Error(Errc::ParseError, "unknown outcome '" + std::string(s) + "'");
}

struct Trajectory {
  std::string query;
  std::vector<Message> history;
  SymbolicState initial_state;
  std::vector<Step> steps;
  Outcome outcome = Outcome::Fail;
  std::string answer;
  std::string failure_reason;
  std::uint64_t seed = 0;
  EngineConfig config;
  std::string config_fingerprint;
  std::string embedder_fingerprint;
  std::string reranker_name;

  const SymbolicState& final_state() const { return steps.empty() ? initial_state : steps.back().post_state; }

  double total_log_prob() const {
    double sum = 0.0;
    for (const auto& s : steps) sum += s.policy_log_prob;
    return sum;
  }

  std::vector<std::string> reasoning_texts() const {
    std::vector<std::string> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.reasoning_text);
    return out;
  }
};

inline Requirement build_requirement(const std::string& query, std::span<const Message> history,
                                     const SymbolicState& state, const Trajectory& trajectory) {
  auto texts = trajectory.reasoning_texts();
  return build_requirement(query, history, state, std::span<const std::string>(texts));
}

/// Collaborators of one forward run. The index and contracts may be shared
/// between concurrent runs; reasoner and tools belong to this run.
struct Collaborators {
  const ToolIndex& index;
  const ContractSet& contracts;
  Reasoner& reasoner;
  ToolExecutor& tools;
  const Reranker& reranker;
  ParamAliases aliases;
  Reasoner* param_reasoner = nullptr;
};

inline std::string config_fingerprint(const EngineConfig& config, const std::string& embedder_fp,
                                      const std::string& reranker_name) {
  std::string bytes = to_json(config).dump() + "|" + embedder_fp + "|" + reranker_name;
  return hex64(fnv1a64(bytes));
}

inline SymbolicState default_initial_state(const std::string& query) {
  return init_state(std::vector<SeedEntry>{{"query", Value(query), TypeTag::Text}});
}

inline constexpr std::string_view kMalformedCorrection =
    "Tool results are inserted by the runtime. Do not write <start_tool_result> or <end_tool_result> "
    "yourself; either answer or request a tool with <start_call_tool>.";

namespace detail {

/// Executes the candidate phase of one CallTool step, filling `step` and
/// returning the committed result, if any.
inline std::optional<Value> run_tool_phase(Step& step, const SymbolicState& state, const EngineConfig& config,
                                           const Collaborators& env, std::set<std::string>& failed,
                                           std::mt19937_64& rng) {
  std::vector<ScoredTool> retrieved;
  try {
    retrieved = retrieve_topk(env.index, step.requirement, config.top_k);
  } catch (const Error& e) {
    if (e.code() != Errc::EmptyIndex) throw;
    return std::nullopt;
  }
  std::vector<RerankCandidate> cands;
  for (const auto& r : retrieved) cands.push_back({r.tool_id, env.index.find(r.tool_id)->embedding_text(), r.score});
  Requirement req;
  req.text = step.requirement;
  RankDistribution dist = rerank(cands, req, env.reranker);

  AdmissibleSet admissible;
  for (const auto& c : retrieved) {
    const Contract& contract = env.contracts.at(c.tool_id);
    PreconditionCheck pre = check_precondition(contract, state);
    admissible.mask[c.tool_id] = pre.holds;
    if (!pre.holds && !failed.count(c.tool_id)) {
      Attempt a;
      a.tool_id = c.tool_id;
      a.phase = Side::Pre;
      a.category = categorize_failure(Side::Pre, *pre.failing_atom, nullptr);
      a.detail = "precondition atom " + render_predicate(*pre.failing_atom) + " is false";
      a.failing_atom = std::move(pre.failing_atom);
      step.attempts.push_back(std::move(a));
    }
  }

  std::optional<RankDistribution> policy;
  try {
    policy = filter_renormalize(dist, admissible);
  } catch (const Error& e) {
    if (e.code() != Errc::NoAdmissibleTool) throw;
  }
  for (const auto& r : retrieved) {
    step.candidates.push_back({r.tool_id, r.score, dist.at(r.tool_id), admissible.admits(r.tool_id),
                               policy ? policy->at(r.tool_id) : 0.0});
  }
  if (!policy) return std::nullopt;

  std::set<std::string> remaining;
  for (const auto& id : policy->support) {
    if (admissible.admits(id) && !failed.count(id)) remaining.insert(id);
  }

  std::size_t executed = 0;
  while (!remaining.empty() && executed < config.attempts_limit()) {
    AdmissibleSet open;
    for (const auto& id : policy->support) open.mask[id] = remaining.count(id) > 0;
    std::string tool_id = sample_tool(filter_renormalize(*policy, open), rng, config.selection_mode);
    remaining.erase(tool_id);
    const Contract& contract = env.contracts.at(tool_id);
    const ToolSpec& spec = *env.index.find(tool_id);

    Attempt a;
    a.tool_id = tool_id;
    auto alias_it = env.aliases.find(tool_id);
    try {
      a.params = gen_params(spec, state, alias_it == env.aliases.end() ? nullptr : &alias_it->second,
                            env.param_reasoner);
    } catch (const Error& e) {
      if (e.code() != Errc::UnresolvedRequiredParam) throw;
      a.phase = Side::Pre;
      a.category = RejectionCategory::SchemaFormatViolation;
      a.detail = e.what();
      step.attempts.push_back(std::move(a));
      continue;
    }

    ++executed;
    a.executed = true;
    ToolOutcome out = env.tools.execute(tool_id, a.params);
    if (!out.has_value()) {
      a.error = out.error;
      a.category = RejectionCategory::EmptyNull;
      a.detail = "tool returned no result: " + out.error;
      failed.insert(tool_id);
      step.attempts.push_back(std::move(a));
      continue;
    }
    a.result = *out.value;
    AcceptanceEvent ev = check_acceptance(contract, state, *out.value);
    if (ev.passed) {
      try {
        step.post_state = apply_update(state, contract.update, *out.value, tool_id, step.index);
      } catch (const Error& e) {
        a.category = RejectionCategory::StateUpdateInconsistency;
        a.detail = std::string("update rejected: ") + e.what();
        failed.insert(tool_id);
        step.attempts.push_back(std::move(a));
        continue;
      }
      a.passed = true;
      step.committed_tool = tool_id;
      step.policy_log_prob = std::log(policy->at(tool_id));
      step.attempts.push_back(std::move(a));
      return out.value;
    }
    a.failing_atom = std::move(ev.failing_atom);
    a.failing_wf = ev.failing_wf;
    a.category = ev.category;
    a.detail = ev.detail;
    failed.insert(tool_id);
    step.attempts.push_back(std::move(a));
  }
  return std::nullopt;
}

}  // namespace detail

/// Forward execution with contract verification. Each iteration asks the
/// reasoner for an action; a tool call retrieves and reranks candidates,
/// drops those whose precondition fails, and tries the rest in policy order
/// until one result passes acceptance and is committed. Tools that fail
/// acceptance are excluded for the rest of the trajectory. The state changes
/// only through a committed update.
inline Trajectory run_forward(const std::string& query, std::span<const Message> history,
                              const SymbolicState& initial_state, const EngineConfig& config,
                              const Collaborators& env, std::uint64_t seed) {
  config.validate();
  for (const auto& [id, spec] : env.index.specs()) {
    if (!env.contracts.count(id)) throw Error(Errc::ConfigurationError, "tool '" + id + "' has no contract");
  }

  Trajectory traj;
  traj.query = query;
  traj.history.assign(history.begin(), history.end());
  traj.initial_state = initial_state;
  traj.seed = seed;
  traj.config = config;
  traj.embedder_fingerprint = env.index.embedder_fingerprint();
  traj.reranker_name = env.reranker.name();
  traj.config_fingerprint = config_fingerprint(config, traj.embedder_fingerprint, traj.reranker_name);

  std::mt19937_64 rng(seed);
  std::set<std::string> failed;
  std::vector<Message> turns;
  std::optional<Value> pending;
  std::size_t committed = 0;
  SymbolicState state = initial_state;

  for (std::size_t k = 0; k < config.k_max; ++k) {
    ReasonerRequest request;
    request.messages = build_messages(query, history, summarize(state, config.summary_chars), turns, pending, committed);
    request.temperature = config.temperature;
    request.max_tokens = config.max_tokens;
    if (pending) {
      turns.push_back({Role::User, wrap_tool_result(*pending)});
      pending.reset();
    }
    ReasonerResponse response = env.reasoner.complete(request);

    Step step;
    step.index = k;
    step.pre_state = state;
    step.post_state = state;
    step.reasoning_text = response.text;
    step.action = parse_action(response.text);

    switch (step.action.kind) {
      case Action::Kind::Answer:
        traj.steps.push_back(std::move(step));
        traj.outcome = Outcome::Answer;
        traj.answer = traj.steps.back().action.text;
        return traj;
      case Action::Kind::Malformed:
        turns.push_back({Role::Assistant, response.text});
        turns.push_back({Role::User, std::string(kMalformedCorrection)});
        traj.steps.push_back(std::move(step));
        continue;
      case Action::Kind::CallTool: break;
    }

    turns.push_back({Role::Assistant, response.text});
    traj.steps.push_back(std::move(step));
    Step& current = traj.steps.back();
    current.requirement = build_requirement(query, history, state, traj).text;
    std::optional<Value> result = detail::run_tool_phase(current, state, config, env, failed, rng);
    if (!current.committed_tool) {
      traj.outcome = Outcome::Fail;
      traj.failure_reason = "no candidate tool satisfied its contract";
      return traj;
    }
    state = current.post_state;
    pending = std::move(result);
    ++committed;
  }
  traj.outcome = Outcome::Timeout;
  traj.failure_reason = "iteration limit reached without an answer";
  return traj;
}

}  // namespace contractrt
