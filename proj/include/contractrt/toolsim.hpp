#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/contract.hpp"
#include "contractrt/error.hpp"
#include "contractrt/executor.hpp"
#include "contractrt/log.hpp"
#include "contractrt/path.hpp"
#include "contractrt/policy.hpp"
#include "contractrt/registry.hpp"
#include "contractrt/state.hpp"

namespace contractrt {

/// One scripted tool response.
struct MockOutcome {
  enum class Kind { ReturnValue, ReturnMissingField, ReturnEmptyList, ReturnNull, TransportError };
  Kind kind = Kind::ReturnValue;
  Value value;
  Path removed_path;     // ReturnMissingField, rooted at `result`
  std::string field;     // ReturnEmptyList
  std::string message;   // TransportError

  static MockOutcome returns(Value v) { return {Kind::ReturnValue, std::move(v), {}, {}, {}}; }
  static MockOutcome missing_field(Value v, const std::string& path) {
    return {Kind::ReturnMissingField, std::move(v), parse_path(path), {}, {}};
  }
  static MockOutcome empty_list(std::string field) { return {Kind::ReturnEmptyList, {}, {}, std::move(field), {}}; }
  static MockOutcome null() { return {Kind::ReturnNull, {}, {}, {}, {}}; }
  static MockOutcome transport_error(std::string msg = "connection reset") {
    return {Kind::TransportError, {}, {}, {}, std::move(msg)};
  }
};

namespace detail {

inline void erase_path(Value& v, std::span<const Segment> segs) {
  if (segs.empty()) return;
  const Segment& seg = segs.front();
  bool last = segs.size() == 1;
  if (seg.kind == Segment::Kind::Name && v.is_record()) {
    auto& rec = v.as_record();
    auto it = rec.find(seg.name);
    if (it == rec.end()) return;
    if (last) {
      rec.erase(it);
    } else {
      erase_path(it->second, segs.subspan(1));
    }
  } else if (seg.kind == Segment::Kind::Index && v.is_list()) {
    auto& list = v.as_list();
    if (seg.index >= list.size()) return;
    if (last) {
      list.erase(list.begin() + static_cast<std::ptrdiff_t>(seg.index));
    } else {
      erase_path(list[seg.index], segs.subspan(1));
    }
  }
}

}  // namespace detail

/// `v` with the value at `path` (rooted at `result`) removed; absent paths
/// leave `v` unchanged.
inline Value remove_path(Value v, const Path& path) {
  if (!path.is_result()) throw Error(Errc::MalformedPath, "removed path must start with 'result'");
  for (const auto& s : path.segments) {
    if (s.kind == Segment::Kind::Dynamic) throw Error(Errc::MalformedPath, "removed path cannot be dynamic");
  }
  detail::erase_path(v, path.segments);
  return v;
}

inline ToolOutcome realize(const MockOutcome& o) {
  switch (o.kind) {
    case MockOutcome::Kind::ReturnValue: return ToolOutcome::ok(o.value);
    case MockOutcome::Kind::ReturnMissingField: return ToolOutcome::ok(remove_path(o.value, o.removed_path));
    case MockOutcome::Kind::ReturnEmptyList: return ToolOutcome::ok(Value(Value::Record{{o.field, Value(Value::List{})}}));
    case MockOutcome::Kind::ReturnNull: return ToolOutcome::ok(Value());
    case MockOutcome::Kind::TransportError: return ToolOutcome::failure(o.message);
  }
  return ToolOutcome::failure("unreachable");
}

/// Scripted behavior of one tool. Calls past the end of the script repeat
/// its last outcome.
struct MockToolBehavior {
  std::string tool_id;
  std::vector<MockOutcome> script;
  std::size_t cursor = 0;

  ToolOutcome next() {
    if (script.empty()) throw Error(Errc::InvalidArgument, "behavior for '" + tool_id + "' has an empty script");
    const MockOutcome& o = script[std::min(cursor, script.size() - 1)];
    ++cursor;
    return realize(o);
  }
};

struct MockCall {
  std::string tool_id;
  Value params;
};

/// Deterministic tool environment. Copies are independent, which makes a
/// copy usable as a dry-run sandbox.
class MockToolExecutor final : public ToolExecutor {
 public:
  MockToolExecutor() = default;
  explicit MockToolExecutor(std::map<std::string, MockToolBehavior> behaviors) : behaviors_(std::move(behaviors)) {}

  void add(MockToolBehavior b) {
    std::string id = b.tool_id;
    behaviors_[id] = std::move(b);
  }

  ToolOutcome execute(const std::string& tool_id, const Value& params) override {
    auto it = behaviors_.find(tool_id);
    if (it == behaviors_.end()) throw Error(Errc::UnknownTool, "no mock behavior for tool '" + tool_id + "'");
    calls_.push_back({tool_id, params});
    return it->second.next();
  }

  const std::vector<MockCall>& calls() const { return calls_; }
  const std::map<std::string, MockToolBehavior>& behaviors() const { return behaviors_; }

 private:
  std::map<std::string, MockToolBehavior> behaviors_;
  std::vector<MockCall> calls_;
};

struct RerankerSpec {
  bool fixed = false;
  std::map<std::string, double> scores;
  double fallback = 0.0;

  std::unique_ptr<Reranker> make() const {
    if (!fixed) return std::make_unique<CosineReranker>();
    return std::make_unique<FixedScoreReranker>(scores, fallback);
  }
};

struct ScenarioExpectation {
  std::optional<Outcome> outcome;
  std::optional<nlohmann::json> final_state;  // canonical snapshot
  std::set<std::string> ignore_values;        // keys whose value is not compared
  std::map<RejectionCategory, std::size_t> rejections;
  std::optional<std::size_t> requests;
};

struct Scenario {
  std::string name;
  std::string query;
  std::vector<Message> history;
  SymbolicState initial_state;
  std::vector<ToolSpec> tools;
  ContractSet contracts;
  std::map<std::string, MockToolBehavior> behaviors;
  ParamAliases aliases;
  std::vector<std::string> reasoner_turns;
  RerankerSpec reranker;
  EngineConfig config;
  std::uint64_t seed = 0;
  ScenarioExpectation expected;

  MockToolExecutor make_executor() const { return MockToolExecutor(behaviors); }
};

namespace detail {

inline MockOutcome outcome_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    auto s = j.get<std::string>();
    if (s == "null") return MockOutcome::null();
    if (s == "transport_error") return MockOutcome::transport_error();
    throw Error(Errc::ParseError, "unknown behavior outcome '" + s + "'");
  }
  if (!j.is_object() || j.size() != 1) throw Error(Errc::ParseError, "behavior outcome must be a one-key object");
  const auto& [kind, body] = *j.items().begin();
  if (kind == "return") return MockOutcome::returns(from_json(body));
  if (kind == "missing_field") {
    return MockOutcome::missing_field(from_json(body.at("value")), body.at("path").get<std::string>());
  }
  if (kind == "empty_list") return MockOutcome::empty_list(body.get<std::string>());
  if (kind == "transport_error") return MockOutcome::transport_error(body.get<std::string>());
  throw Error(Errc::ParseError, "unknown behavior outcome '" + kind + "'");
}

/// A list of `{key, value, type?}` seeds in insertion order (a missing type
/// is taken from the value), or a `{key: value}` object (keys in sorted
/// order).
inline SymbolicState initial_state_from_json(const nlohmann::json& j) {
  std::vector<SeedEntry> seeds;
  if (j.is_array()) {
    for (const auto& e : j) {
      Value val = from_json(e.at("value"));
      TypeTag tag = e.contains("type") ? parse_type_tag(e.at("type").get<std::string>()) : val.tag();
      seeds.push_back({e.at("key").get<std::string>(), std::move(val), tag});
    }
  } else if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      Value val = from_json(v);
      TypeTag tag = val.tag();
      seeds.push_back({k, std::move(val), tag});
    }
  } else {
    throw Error(Errc::ParseError, "initial_state must be a list or an object");
  }
  return init_state(seeds);
}

inline void apply_config_json(EngineConfig& c, const nlohmann::json& j) {
  if (j.contains("k_max")) c.k_max = j.at("k_max").get<std::size_t>();
  if (j.contains("top_k")) c.top_k = j.at("top_k").get<std::size_t>();
  if (j.contains("selection_mode")) c.selection_mode = parse_selection_mode(j.at("selection_mode").get<std::string>());
  if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
  if (j.contains("max_attempts_per_step")) c.max_attempts_per_step = j.at("max_attempts_per_step").get<std::size_t>();
  if (j.contains("max_tokens")) c.max_tokens = j.at("max_tokens").get<std::size_t>();
  if (j.contains("summary_chars")) c.summary_chars = j.at("summary_chars").get<std::size_t>();
}

}  // namespace detail

/// Reads and links a scenario document. Every contract, behavior, alias
/// table and fixed reranker score must name a declared tool, and every tool
/// needs a contract.
inline Scenario load_scenario(const nlohmann::json& doc) {
  Scenario sc;
  try {
    sc.name = doc.at("name").get<std::string>();
    sc.query = doc.at("query").get<std::string>();
    if (doc.contains("history")) sc.history = detail::messages_from_json(doc.at("history"));
    sc.initial_state = doc.contains("initial_state") ? detail::initial_state_from_json(doc.at("initial_state"))
                                                     : default_initial_state(sc.query);
    std::vector<nlohmann::json> tool_docs = doc.at("tools").get<std::vector<nlohmann::json>>();
    sc.tools = load_tool_specs(tool_docs);
    sc.contracts = contracts_from_json(doc.at("contracts"));

    std::set<std::string> ids;
    for (const auto& t : sc.tools) ids.insert(t.tool_id);
    auto require_tool = [&](const std::string& id, const std::string& where) {
      if (!ids.count(id)) throw Error(Errc::DanglingReference, where + " names unknown tool '" + id + "'");
    };
    for (const auto& [id, _] : sc.contracts) require_tool(id, "contract");
    for (const auto& id : ids) {
      if (!sc.contracts.count(id)) throw Error(Errc::DanglingReference, "tool '" + id + "' has no contract");
    }
    if (doc.contains("behaviors")) {
      for (const auto& [id, script] : doc.at("behaviors").items()) {
        require_tool(id, "behavior");
        MockToolBehavior b;
        b.tool_id = id;
        for (const auto& o : script) b.script.push_back(detail::outcome_from_json(o));
        if (b.script.empty()) throw Error(Errc::ParseError, "behavior for '" + id + "' has an empty script");
        sc.behaviors[id] = std::move(b);
      }
    }
    if (doc.contains("param_aliases")) {
      for (const auto& [id, table] : doc.at("param_aliases").items()) {
        require_tool(id, "param_aliases");
        sc.aliases[id] = table.get<std::map<std::string, std::string>>();
      }
    }
    if (doc.contains("reasoner_turns")) {
      for (const auto& t : doc.at("reasoner_turns")) {
        if (t.is_string()) {
          sc.reasoner_turns.push_back(t.get<std::string>());
          continue;
        }
        std::size_t repeat = t.value("repeat", std::size_t{1});
        for (std::size_t i = 0; i < repeat; ++i) sc.reasoner_turns.push_back(t.at("text").get<std::string>());
      }
    }
    if (doc.contains("reranker")) {
      const auto& r = doc.at("reranker");
      if (r.is_object() && r.contains("fixed")) {
        sc.reranker.fixed = true;
        sc.reranker.scores = r.at("fixed").get<std::map<std::string, double>>();
        sc.reranker.fallback = r.value("fallback", 0.0);
        for (const auto& [id, _] : sc.reranker.scores) require_tool(id, "reranker");
      } else if (!(r.is_string() && r.get<std::string>() == "cosine")) {
        throw Error(Errc::ParseError, "reranker must be \"cosine\" or {\"fixed\": {...}}");
      }
    }
    if (doc.contains("config")) detail::apply_config_json(sc.config, doc.at("config"));
    sc.seed = doc.value("seed", std::uint64_t{0});
    if (doc.contains("expected")) {
      const auto& e = doc.at("expected");
      if (e.contains("outcome")) sc.expected.outcome = parse_outcome(e.at("outcome").get<std::string>());
      if (e.contains("final_state")) sc.expected.final_state = e.at("final_state");
      if (e.contains("ignore_values")) sc.expected.ignore_values = e.at("ignore_values").get<std::set<std::string>>();
      if (e.contains("requests")) sc.expected.requests = e.at("requests").get<std::size_t>();
      if (e.contains("rejections")) {
        for (const auto& [cat, n] : e.at("rejections").items()) sc.expected.rejections[parse_category(cat)] = n.get<std::size_t>();
      }
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, std::string("scenario document: ") + ex.what());
  }
  sc.config.validate();
  return sc;
}

inline Scenario load_scenario_text(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ParseError, "scenario is not valid JSON");
  return load_scenario(j);
}

inline Scenario load_scenario_file(const std::string& path) { return load_scenario_text(read_text_file(path)); }

/// Canonical snapshot with the values of `ignore` keys blanked, for golden
/// comparisons that pin key sets and types but not those values.
inline nlohmann::json masked_snapshot(const nlohmann::json& snapshot, const std::set<std::string>& ignore) {
  nlohmann::json out = snapshot;
  for (auto& e : out) {
    if (ignore.count(e.at("key").get<std::string>())) e["value"] = nullptr;
  }
  return out;
}

struct ScenarioRun {
  Trajectory trajectory;
  MockToolExecutor tools;
  std::size_t reasoner_calls = 0;
};

/// Runs a scenario offline: hashing embedder, the scenario's reranker,
/// scripted reasoner and mock tools.
inline ScenarioRun run_scenario(const Scenario& sc, const EngineConfig& config, std::uint64_t seed) {
  auto embedder = std::make_shared<HashingEmbedder>();
  ToolIndex index = build_index(sc.tools, embedder);
  auto reranker = sc.reranker.make();
  ScriptedReasoner reasoner(sc.reasoner_turns);
  ScenarioRun run;
  run.tools = sc.make_executor();
  Collaborators env{index, sc.contracts, reasoner, run.tools, *reranker, sc.aliases, nullptr};
  run.trajectory = run_forward(sc.query, sc.history, sc.initial_state, config, env, seed);
  run.reasoner_calls = reasoner.calls();
  return run;
}

inline ScenarioRun run_scenario(const Scenario& sc) { return run_scenario(sc, sc.config, sc.seed); }

}  // namespace contractrt
