#pragma once

// Shared fixtures for the unit and acceptance tests: scenario paths, a
// random fault-injection scenario generator, log tampering, and an
// independent retrieval oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/log.hpp"
#include "contractrt/registry.hpp"
#include "contractrt/toolsim.hpp"
#include "contractrt/verify.hpp"

namespace testsupport {

using namespace contractrt;

/// Keys in insertion order.
inline std::vector<std::string> keys_of(const SymbolicState& s) {
  std::vector<std::string> out;
  for (const auto& e : s.entries()) out.push_back(e.key);
  return out;
}

inline std::string source_path(const std::string& rel) { return std::string(CONTRACTRT_SOURCE_DIR) + "/" + rel; }

inline Scenario shipped(const std::string& name) { return load_scenario_file(source_path("scenarios/" + name + ".json")); }

inline const std::vector<std::string>& shipped_names() {
  static const std::vector<std::string> names = {"example_1_youtube", "example_2_weather_fallback", "listfiles_g6",
                                                 "all_tools_faulty", "fault_injection_suite"};
  return names;
}

/// Random scenario over 3..50 tools with random contracts, fault scripts,
/// reranker scores and engine limits. Deterministic in `seed`.
inline Scenario random_fault_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };

  const int n = uni(3, 50);
  nlohmann::json tools = nlohmann::json::array();
  nlohmann::json contracts = nlohmann::json::array();
  nlohmann::json behaviors = nlohmann::json::object();
  nlohmann::json scores = nlohmann::json::object();
  const std::vector<std::string> words = {"search", "weather", "files", "list", "video", "number", "append", "query"};

  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "T%02d", i);
    nlohmann::json params = nlohmann::json::array();
    if (chance(0.6)) params.push_back({{"name", "query"}, {"type", "TextType"}, {"required", true}});
    if (chance(0.05)) params.push_back({{"name", "ticket"}, {"type", "TextType"}, {"required", true}});
    if (chance(0.2)) params.push_back({{"name", "limit"}, {"type", "NumberType"}, {"required", false}});
    tools.push_back({{"tool_id", id},
                     {"tool_name", id},
                     {"api_name", "call"},
                     {"description", words[static_cast<std::size_t>(uni(0, 7))] + " " + words[static_cast<std::size_t>(uni(0, 7))]},
                     {"tool_input", params}});

    const int k = uni(0, 3);
    const std::vector<std::string> pres = {"true",
                                           "exists(state.query)",
                                           "exists(state.items)",
                                           "has_field(state.items." + std::to_string(k) + ")",
                                           "is_numeric(state.items." + std::to_string(k) + ")",
                                           "state.items." + std::to_string(k) + " >= 0",
                                           "not exists(state.blocked) and exists(state.query)",
                                           "forall x in state.items: x >= 0"};
    const std::vector<std::string> posts = {"true",
                                            "is_numeric(result.n)",
                                            "is_numeric(result.n) and non_empty(result.tag)",
                                            "result.n >= 0",
                                            "is_record(result) or is_list(result)",
                                            "has_field(result.n) and result.tag != \"bad\""};
    nlohmann::json update = nlohmann::json::array();
    switch (uni(0, 3)) {
      case 0:
      case 1:
        update.push_back({{"target_key", "items"}, {"source", {{"result_path", "result.n"}}}, {"type", "NumberType"}, {"mode", "append"}});
        break;
      case 2: update.push_back({{"target_key", std::string("last_") + id}, {"source", "whole_result"}, {"type", "RecordType"}}); break;
      default:
        update.push_back({{"target_key", "note"}, {"source", {{"result_path", "result.note"}}}, {"type", "TextType"}});
        break;
    }
    nlohmann::json contract{{"tool_id", id},
                            {"precondition", pres[static_cast<std::size_t>(uni(0, static_cast<int>(pres.size()) - 1))]},
                            {"postcondition", posts[static_cast<std::size_t>(uni(0, static_cast<int>(posts.size()) - 1))]},
                            {"update", update}};
    if (chance(0.2)) contract["wf"] = nlohmann::json::array({"parses_as_structured_value"});
    if (chance(0.1)) contract["wf"] = nlohmann::json::array({{{"max_bytes", static_cast<unsigned>(uni(8, 40))}}});
    contracts.push_back(contract);

    nlohmann::json script = nlohmann::json::array();
    const int len = uni(1, 4);
    for (int s = 0; s < len; ++s) {
      nlohmann::json full{{"n", uni(-2, 9)}, {"tag", chance(0.2) ? "bad" : "ok"}};
      if (chance(0.3)) full["note"] = "seen";
      switch (uni(0, 6)) {
        case 0:
        case 1:
        case 2: script.push_back({{"return", full}}); break;
        case 3: script.push_back({{"missing_field", {{"value", full}, {"path", chance(0.5) ? "result.n" : "result.tag"}}}}); break;
        case 4: script.push_back({{"empty_list", "tag"}}); break;
        case 5: script.push_back("null"); break;
        default: script.push_back("transport_error"); break;
      }
    }
    behaviors[id] = script;
    scores[id] = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  }

  nlohmann::json turns = nlohmann::json::array();
  const int calls = uni(0, 8);
  for (int c = 0; c < calls; ++c) {
    if (chance(0.1)) {
      turns.push_back("<start_tool_result>{\"n\": 1}<end_tool_result>");
    } else {
      turns.push_back("<start_call_tool>\n" + words[static_cast<std::size_t>(uni(0, 7))] + " the next " +
                      words[static_cast<std::size_t>(uni(0, 7))] + "\n<end_call_tool>");
    }
  }
  turns.push_back("done");

  nlohmann::json config{{"k_max", uni(1, 10)},
                        {"top_k", uni(1, n)},
                        {"selection_mode", chance(0.5) ? "greedy" : "sample"},
                        {"max_attempts_per_step", chance(0.5) ? 0 : uni(1, 6)}};
  nlohmann::json doc{{"name", "random_" + std::to_string(seed)},
                     {"query", "collect numbers"},
                     {"initial_state", nlohmann::json::array({{{"key", "query"}, {"value", "collect numbers"}}})},
                     {"tools", tools},
                     {"contracts", contracts},
                     {"behaviors", behaviors},
                     {"reasoner_turns", turns},
                     {"config", config},
                     {"seed", seed}};
  if (chance(0.7)) doc["reranker"] = {{"fixed", scores}};
  return load_scenario(doc);
}

/// Log-only check of the guarded-commit rule: a step's version increases
/// (by exactly one) iff exactly one of its attempts passed.
inline bool guarded_commit_holds(const Trajectory& t) {
  for (const auto& s : t.steps) {
    std::size_t passed = 0;
    for (const auto& a : s.attempts) passed += a.passed ? 1 : 0;
    bool bumped = s.post_state.version() != s.pre_state.version();
    if (bumped != (passed == 1)) return false;
    if (bumped && s.post_state.version() != s.pre_state.version() + 1) return false;
    if (passed > 1) return false;
  }
  return true;
}

inline SymbolicState edit_state(const SymbolicState& s, const std::string& key, const nlohmann::json& value) {
  nlohmann::json snap = snapshot_json(s);
  for (auto& e : snap) {
    if (e.at("key") == key) e["value"] = value;
  }
  return snapshot_from_json(snap, s.version());
}

enum class Tamper { ExecuteRejected, CorruptCommittedResult, EditPostState, DropAcceptance };

/// Mutates a clean log so that exactly one verification clause fires. The
/// result is re-serialized, so digests stay self-consistent.
inline std::string tamper(const TrajectoryLog& clean, Tamper kind) {
  Trajectory t = clean.trajectory;
  auto committed_step = std::find_if(t.steps.begin(), t.steps.end(), [](const Step& s) { return s.committed_tool.has_value(); });
  switch (kind) {
    case Tamper::ExecuteRejected:
      for (auto& s : t.steps) {
        for (auto& a : s.attempts) {
          if (a.phase == Side::Pre && !a.passed) {
            a.executed = true;
            return write_log(t, clean.contracts);
          }
        }
      }
      break;
    case Tamper::CorruptCommittedResult:
      for (auto& a : committed_step->attempts) {
        if (a.passed) a.result = Value();
      }
      break;
    case Tamper::EditPostState: {
      const StateEntry* target = nullptr;
      for (const auto& e : committed_step->post_state.entries()) {
        if (e.provenance.kind == Provenance::Kind::ToolCommit) target = &e;
      }
      nlohmann::json replacement = target->value.is_number() ? nlohmann::json(target->value.as_number() + 1)
                                                              : nlohmann::json(target->type_tag == TypeTag::List
                                                                                   ? nlohmann::json::array()
                                                                                   : nlohmann::json::object());
      std::string key = target->key;
      SymbolicState edited = edit_state(committed_step->post_state, key, replacement);
      for (auto it = committed_step; it != t.steps.end(); ++it) {
        if (it != committed_step) it->pre_state = edit_state(it->pre_state, key, replacement);
        it->post_state = edit_state(it->post_state, key, replacement);
      }
      (void)edited;
      break;
    }
    case Tamper::DropAcceptance:
      for (auto& a : committed_step->attempts) a.passed = false;
      committed_step->committed_tool.reset();
      break;
  }
  return write_log(t, clean.contracts);
}

/// Exhaustive cosine scan written independently of the library: embeds with
/// the given embedder, scores every tool, fully sorts.
inline std::vector<ScoredTool> oracle_topk(const std::vector<ToolSpec>& tools, const Embedder& embedder,
                                           const std::string& query, std::size_t k) {
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
  };
  std::vector<double> q = embedder.embed_one(query).components;
  const double nq = norm(q);
  std::vector<ScoredTool> all;
  for (const auto& t : tools) {
    std::vector<double> v = embedder.embed_one(t.embedding_text()).components;
    const double nv = norm(v);
    double score = 0.0;
    if (nv != 0.0 && nq != 0.0) {
      double dot = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * q[i];
      score = std::min(1.0, std::max(-1.0, dot / (nv * nq)));
    }
    all.push_back({t.tool_id, score});
  }
  std::sort(all.begin(), all.end(), [](const ScoredTool& a, const ScoredTool& b) {
    return a.score != b.score ? a.score > b.score : a.tool_id < b.tool_id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

/// Tool corpus with vocabulary overlap so that scores tie and collide.
inline std::vector<ToolSpec> generated_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> vocab = {"search", "video", "weather", "file", "list", "read", "write",
                                                 "user", "issue", "repo", "city", "forecast", "music", "map",
                                                 "route", "price", "stock", "news", "image", "translate"};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::uniform_int_distribution<int> len(1, 6);
  std::vector<ToolSpec> out;
  for (std::size_t i = 0; i < n; ++i) {
    ToolSpec s;
    s.tool_id = "tool_" + std::to_string(i);
    s.name = vocab[pick(rng)];
    for (int w = len(rng); w > 0; --w) s.description += vocab[pick(rng)] + " ";
    for (int w = len(rng) - 1; w > 0; --w) s.parameters.push_back({vocab[pick(rng)] + std::to_string(w), TypeTag::Text, false});
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string random_query(std::mt19937_64& rng) {
  static const std::vector<std::string> vocab = {"search", "video", "weather", "file", "list", "city", "forecast",
                                                 "news", "price", "unknownword", "map", "read"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string q;
  for (int i = std::uniform_int_distribution<int>(1, 5)(rng); i > 0; --i) q += vocab[pick(rng)] + " ";
  return q;
}

}  // namespace testsupport
