#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/contract.hpp"
#include "contractrt/error.hpp"
#include "contractrt/executor.hpp"
#include "contractrt/state.hpp"

// Trajectory log: line-delimited JSON. One header record (run inputs and the
// contract set), one record per step, one footer record.

namespace contractrt {

inline constexpr std::string_view kLogFormat = "contractrt-trajectory/1";

namespace detail {

template <class T, class F>
nlohmann::json optional_json(const std::optional<T>& v, F&& f) {
  return v ? nlohmann::json(f(*v)) : nlohmann::json(nullptr);
}

inline nlohmann::json messages_json(std::span<const Message> msgs) {
  auto arr = nlohmann::json::array();
  for (const auto& m : msgs) arr.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  return arr;
}

inline std::vector<Message> messages_from_json(const nlohmann::json& arr) {
  std::vector<Message> out;
  for (const auto& m : arr) out.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
  return out;
}

inline nlohmann::json attempt_json(const Attempt& a) {
  return {{"tool_id", a.tool_id},
          {"phase", std::string(to_string(a.phase))},
          {"executed", a.executed},
          {"params", to_json(a.params)},
          {"result", optional_json(a.result, [](const Value& v) { return to_json(v); })},
          {"error", a.error},
          {"passed", a.passed},
          {"failing_atom", optional_json(a.failing_atom, [](const Predicate& p) { return render_predicate(p); })},
          {"failing_wf", optional_json(a.failing_wf, [](const WellFormednessRule& r) { return to_json(r); })},
          {"category", optional_json(a.category, [](RejectionCategory c) { return std::string(to_string(c)); })},
          {"detail", a.detail}};
}

inline Attempt attempt_from_json(const nlohmann::json& j) {
  Attempt a;
  a.tool_id = j.at("tool_id").get<std::string>();
  std::string phase = j.at("phase").get<std::string>();
  if (phase != "pre" && phase != "post") throw Error(Errc::LogCorrupt, "unknown attempt phase '" + phase + "'");
  a.phase = phase == "pre" ? Side::Pre : Side::Post;
  a.executed = j.at("executed").get<bool>();
  a.params = from_json(j.at("params"));
  if (!j.at("result").is_null()) a.result = from_json(j.at("result"));
  a.error = j.at("error").get<std::string>();
  a.passed = j.at("passed").get<bool>();
  if (!j.at("failing_atom").is_null()) a.failing_atom = parse_predicate(j.at("failing_atom").get<std::string>());
  if (!j.at("failing_wf").is_null()) a.failing_wf = wf_rule_from_json(j.at("failing_wf"));
  if (!j.at("category").is_null()) a.category = parse_category(j.at("category").get<std::string>());
  a.detail = j.at("detail").get<std::string>();
  return a;
}

inline EngineConfig config_from_json(const nlohmann::json& j) {
  EngineConfig c;
  c.k_max = j.at("k_max").get<std::size_t>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.selection_mode = parse_selection_mode(j.at("selection_mode").get<std::string>());
  c.temperature = j.at("temperature").get<double>();
  c.max_attempts_per_step = j.at("max_attempts_per_step").get<std::size_t>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.summary_chars = j.at("summary_chars").get<std::size_t>();
  return c;
}

inline SymbolicState checked_state(const nlohmann::json& snapshot, std::uint64_t version, const std::string& digest,
                                   const std::string& what) {
  SymbolicState s = snapshot_from_json(snapshot, version);
  if (state_digest(s) != digest) throw Error(Errc::LogCorrupt, what + " digest does not match its snapshot");
  return s;
}

}  // namespace detail

inline nlohmann::json header_record(const Trajectory& t, const ContractSet& contracts) {
  auto cs = nlohmann::json::array();
  for (const auto& [id, c] : contracts) cs.push_back(to_json(c));
  return {{"record", "header"},
          {"format", std::string(kLogFormat)},
          {"query", t.query},
          {"history", detail::messages_json(t.history)},
          {"seed", t.seed},
          {"config", to_json(t.config)},
          {"config_fingerprint", t.config_fingerprint},
          {"embedder", t.embedder_fingerprint},
          {"reranker", t.reranker_name},
          {"initial_version", t.initial_state.version()},
          {"initial_state_digest", state_digest(t.initial_state)},
          {"initial_state", snapshot_json(t.initial_state)},
          {"contracts", cs}};
}

// A fallback can commit a tool that had zero mass under the step policy;
// its log probability is -inf, written as the string "-inf".
inline nlohmann::json log_prob_json(double lp) {
  if (std::isinf(lp) && lp < 0) return "-inf";
  return lp;
}

inline double log_prob_from_json(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "-inf") return -std::numeric_limits<double>::infinity();
  return j.get<double>();
}

inline nlohmann::json step_record(const Step& s) {
  auto cands = nlohmann::json::array();
  auto mask = nlohmann::json::object();
  for (const auto& c : s.candidates) {
    cands.push_back({{"tool_id", c.tool_id},
                     {"retrieval_score", c.retrieval_score},
                     {"rank_prob", c.rank_prob},
                     {"admissible", c.admissible},
                     {"policy_prob", c.policy_prob}});
    mask[c.tool_id] = c.admissible;
  }
  auto attempts = nlohmann::json::array();
  for (const auto& a : s.attempts) attempts.push_back(detail::attempt_json(a));
  return {{"record", "step"},
          {"index", s.index},
          {"pre_version", s.pre_state.version()},
          {"pre_state_digest", s.pre_state_digest()},
          {"pre_state", snapshot_json(s.pre_state)},
          {"reasoning_text", s.reasoning_text},
          {"action", {{"kind", std::string(to_string(s.action.kind))}, {"text", s.action.text}}},
          {"requirement", s.requirement},
          {"candidates", cands},
          {"admissible_mask", mask},
          {"attempts", attempts},
          {"committed_tool", s.committed_tool ? nlohmann::json(*s.committed_tool) : nlohmann::json(nullptr)},
          {"post_version", s.post_state.version()},
          {"post_state_digest", s.post_state_digest()},
          {"post_state", snapshot_json(s.post_state)},
          {"policy_log_prob", log_prob_json(s.policy_log_prob)}};
}

inline nlohmann::json footer_record(const Trajectory& t) {
  return {{"record", "footer"},
          {"outcome", std::string(to_string(t.outcome))},
          {"answer", t.answer},
          {"failure_reason", t.failure_reason},
          {"steps", t.steps.size()},
          {"config_fingerprint", t.config_fingerprint},
          {"total_log_prob", log_prob_json(t.total_log_prob())}};
}

inline std::string write_log(const Trajectory& t, const ContractSet& contracts) {
  std::string out = header_record(t, contracts).dump() + "\n";
  for (const auto& s : t.steps) out += step_record(s).dump() + "\n";
  out += footer_record(t).dump() + "\n";
  return out;
}

struct TrajectoryLog {
  Trajectory trajectory;
  ContractSet contracts;
};

/// Parses a log and checks its internal consistency: record order, state
/// digests, and the footer's step count. Any defect raises LogCorrupt.
inline TrajectoryLog read_log(std::string_view text) {
  std::vector<nlohmann::json> records;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(Errc::LogCorrupt, "line " + std::to_string(line_no) + " is not a JSON object");
    }
    records.push_back(std::move(j));
  }
  if (records.empty()) throw Error(Errc::LogCorrupt, "empty log");

  TrajectoryLog log;
  Trajectory& t = log.trajectory;
  try {
    const auto& h = records.front();
    if (h.value("record", "") != "header" || h.value("format", "") != kLogFormat) {
      throw Error(Errc::LogCorrupt, "log does not start with a header record");
    }
    if (records.back().value("record", "") != "footer") throw Error(Errc::LogCorrupt, "log has no footer record");
    t.query = h.at("query").get<std::string>();
    t.history = detail::messages_from_json(h.at("history"));
    t.seed = h.at("seed").get<std::uint64_t>();
    t.config = detail::config_from_json(h.at("config"));
    t.config_fingerprint = h.at("config_fingerprint").get<std::string>();
    t.embedder_fingerprint = h.at("embedder").get<std::string>();
    t.reranker_name = h.at("reranker").get<std::string>();
    t.initial_state = detail::checked_state(h.at("initial_state"), h.at("initial_version").get<std::uint64_t>(),
                                            h.at("initial_state_digest").get<std::string>(), "initial state");
    log.contracts = contracts_from_json(h.at("contracts"));

    for (std::size_t i = 1; i + 1 < records.size(); ++i) {
      const auto& r = records[i];
      if (r.value("record", "") != "step") throw Error(Errc::LogCorrupt, "record " + std::to_string(i) + " is not a step");
      Step s;
      s.index = r.at("index").get<std::size_t>();
      std::string tag = "step " + std::to_string(s.index);
      s.pre_state = detail::checked_state(r.at("pre_state"), r.at("pre_version").get<std::uint64_t>(),
                                          r.at("pre_state_digest").get<std::string>(), tag + " pre-state");
      s.post_state = detail::checked_state(r.at("post_state"), r.at("post_version").get<std::uint64_t>(),
                                           r.at("post_state_digest").get<std::string>(), tag + " post-state");
      s.reasoning_text = r.at("reasoning_text").get<std::string>();
      const auto& act = r.at("action");
      std::string kind = act.at("kind").get<std::string>();
      if (kind == "answer") {
        s.action.kind = Action::Kind::Answer;
      } else if (kind == "call_tool") {
        s.action.kind = Action::Kind::CallTool;
      } else if (kind == "malformed") {
        s.action.kind = Action::Kind::Malformed;
      } else {
        throw Error(Errc::LogCorrupt, tag + " has unknown action kind '" + kind + "'");
      }
      s.action.text = act.at("text").get<std::string>();
      s.requirement = r.at("requirement").get<std::string>();
      for (const auto& c : r.at("candidates")) {
        s.candidates.push_back({c.at("tool_id").get<std::string>(), c.at("retrieval_score").get<double>(),
                                c.at("rank_prob").get<double>(), c.at("admissible").get<bool>(),
                                c.at("policy_prob").get<double>()});
      }
      for (const auto& a : r.at("attempts")) s.attempts.push_back(detail::attempt_from_json(a));
      if (!r.at("committed_tool").is_null()) s.committed_tool = r.at("committed_tool").get<std::string>();
      s.policy_log_prob = log_prob_from_json(r.at("policy_log_prob"));
      t.steps.push_back(std::move(s));
    }

    const auto& f = records.back();
    t.outcome = parse_outcome(f.at("outcome").get<std::string>());
    t.answer = f.at("answer").get<std::string>();
    t.failure_reason = f.at("failure_reason").get<std::string>();
    if (f.at("steps").get<std::size_t>() != t.steps.size()) {
      throw Error(Errc::LogCorrupt, "footer step count disagrees with the step records");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::LogCorrupt, std::string("malformed log record: ") + ex.what());
  } catch (const Error& e) {
    if (e.code() == Errc::LogCorrupt) throw;
    throw Error(Errc::LogCorrupt, e.what());
  }
  return log;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::InvalidArgument, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline TrajectoryLog read_log_file(const std::string& path) { return read_log(read_text_file(path)); }

}  // namespace contractrt
