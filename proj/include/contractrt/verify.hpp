#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/contract.hpp"
#include "contractrt/error.hpp"
#include "contractrt/executor.hpp"
#include "contractrt/state.hpp"

namespace contractrt {

enum class ViolationClause { PreViolated, PostViolated, UpdateMismatch, PhantomStateChange };

constexpr std::string_view to_string(ViolationClause c) {
  switch (c) {
    case ViolationClause::PreViolated: return "PreViolated";
    case ViolationClause::PostViolated: return "PostViolated";
    case ViolationClause::UpdateMismatch: return "UpdateMismatch";
    case ViolationClause::PhantomStateChange: return "PhantomStateChange";
  }
  return "";
}

struct Violation {
  std::size_t step_index = 0;
  ViolationClause clause = ViolationClause::PreViolated;
  std::string detail;
};

struct SafetyVerdict {
  std::vector<Violation> violations;

  bool safe() const { return violations.empty(); }
  bool has(ViolationClause c) const {
    for (const auto& v : violations) {
      if (v.clause == c) return true;
    }
    return false;
  }
};

namespace detail {

inline bool same_state(const SymbolicState& a, const SymbolicState& b) {
  return a.version() == b.version() && a.same_entries(b);
}

}  // namespace detail

/// Re-derives every step from the recorded pre-states and results alone:
/// executed attempts must satisfy their precondition, the committed result
/// must pass acceptance, the recorded post-state must equal the recomputed
/// update, and a step without an accepted attempt must leave the state
/// untouched. Safe iff no step violates any clause.
inline SafetyVerdict verify_trajectory(const Trajectory& t, const ContractSet& contracts) {
  SafetyVerdict verdict;
  auto flag = [&](std::size_t k, ViolationClause c, std::string d) { verdict.violations.push_back({k, c, std::move(d)}); };

  const SymbolicState* prev = &t.initial_state;
  for (const Step& s : t.steps) {
    const std::size_t k = s.index;
    if (!detail::same_state(s.pre_state, *prev)) {
      flag(k, ViolationClause::PhantomStateChange, "pre-state differs from the state the previous step left");
    }
    prev = &s.post_state;

    std::vector<const Attempt*> accepted;
    for (const Attempt& a : s.attempts) {
      if (a.passed) accepted.push_back(&a);
      if (!a.executed) continue;
      auto it = contracts.find(a.tool_id);
      if (it == contracts.end()) {
        flag(k, ViolationClause::PreViolated, "tool '" + a.tool_id + "' executed without a contract");
        continue;
      }
      PreconditionCheck pre = check_precondition(it->second, s.pre_state);
      if (!pre.holds) {
        flag(k, ViolationClause::PreViolated,
             "tool '" + a.tool_id + "' executed while " + render_predicate(*pre.failing_atom) + " is false");
      }
    }

    bool changed = !detail::same_state(s.pre_state, s.post_state);
    if (accepted.empty()) {
      if (changed) flag(k, ViolationClause::PhantomStateChange, "state changed without an accepted attempt");
      if (s.committed_tool) flag(k, ViolationClause::PostViolated, "commit of '" + *s.committed_tool + "' has no accepted attempt");
      continue;
    }
    if (accepted.size() > 1) {
      flag(k, ViolationClause::PostViolated, "more than one accepted attempt in a step");
      continue;
    }
    const Attempt& a = *accepted.front();
    if (!s.committed_tool || *s.committed_tool != a.tool_id) {
      flag(k, ViolationClause::PostViolated, "accepted attempt of '" + a.tool_id + "' is not the committed tool");
      continue;
    }
    auto it = contracts.find(a.tool_id);
    if (it == contracts.end() || !a.executed || !a.result) {
      flag(k, ViolationClause::PostViolated, "accepted attempt of '" + a.tool_id + "' has no contract or result");
      continue;
    }
    AcceptanceEvent ev = check_acceptance(it->second, s.pre_state, *a.result);
    if (!ev.passed) {
      flag(k, ViolationClause::PostViolated, "recorded acceptance of '" + a.tool_id + "' does not hold: " + ev.detail);
      continue;
    }
    try {
      SymbolicState expected = apply_update(s.pre_state, it->second.update, *a.result, a.tool_id, k);
      if (!detail::same_state(expected, s.post_state)) {
        flag(k, ViolationClause::UpdateMismatch, "recorded post-state differs from the recomputed update");
      }
    } catch (const Error& e) {
      flag(k, ViolationClause::UpdateMismatch, std::string("update cannot be recomputed: ") + e.what());
    }
  }
  return verdict;
}

inline nlohmann::json to_json(const SafetyVerdict& v) {
  auto arr = nlohmann::json::array();
  for (const auto& x : v.violations) {
    arr.push_back({{"step", x.step_index}, {"clause", std::string(to_string(x.clause))}, {"detail", x.detail}});
  }
  return {{"safe", v.safe()}, {"violations", arr}};
}

/// Sandbox for pointwise wp evaluation. The executor should be a copy that
/// can be called without side effects on the real run.
struct WpProbe {
  ToolExecutor& tools;
  const ToolSpec& spec;
  const std::map<std::string, std::string>* aliases = nullptr;
};

/// Without a probe: the precondition alone (a static under-approximation of
/// wp(t, true)). With a probe: precondition, then one dry-run execution whose
/// result must pass well-formedness and the postcondition.
inline bool check_admissible(const std::string& tool_id, const ContractSet& contracts, const SymbolicState& state,
                             std::optional<WpProbe> probe = std::nullopt) {
  auto it = contracts.find(tool_id);
  if (it == contracts.end()) throw Error(Errc::UnknownTool, "no contract for tool '" + tool_id + "'");
  if (!check_precondition(it->second, state).holds) return false;
  if (!probe) return true;
  Value params;
  try {
    params = gen_params(probe->spec, state, probe->aliases);
  } catch (const Error& e) {
    if (e.code() == Errc::UnresolvedRequiredParam) return false;
    throw;
  }
  ToolOutcome out = probe->tools.execute(tool_id, params);
  if (!out.has_value()) return false;
  return check_acceptance(it->second, state, *out.value).passed;
}

struct RejectionReport {
  std::map<RejectionCategory, std::size_t> totals;
  std::size_t subtotal_pre = 0;
  std::size_t subtotal_post = 0;
  std::size_t requests = 0;
  std::size_t trajectories = 0;

  std::size_t rejections() const { return subtotal_pre + subtotal_post; }
  std::size_t count(RejectionCategory c) const {
    auto it = totals.find(c);
    return it == totals.end() ? 0 : it->second;
  }
  double rate(std::size_t n) const { return requests == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(requests); }
  double combined_rate() const { return rate(rejections()); }
};

/// Every attempt is one tool-calling request, whether it was pruned by its
/// precondition or executed. Each rejected attempt is counted once, under
/// its category.
inline RejectionReport build_rejection_report(std::span<const Trajectory> trajectories) {
  RejectionReport r;
  for (auto c : kAllCategories) r.totals[c] = 0;
  for (const auto& t : trajectories) {
    ++r.trajectories;
    for (const auto& s : t.steps) {
      for (const auto& a : s.attempts) {
        ++r.requests;
        if (a.passed) continue;
        if (!a.category) {
          throw Error(Errc::LogCorrupt, "rejected attempt of '" + a.tool_id + "' in step " + std::to_string(s.index) +
                                            " has no category");
        }
        ++r.totals[*a.category];
        if (side_of(*a.category) == Side::Pre) {
          ++r.subtotal_pre;
        } else {
          ++r.subtotal_post;
        }
      }
    }
  }
  return r;
}

inline RejectionReport build_rejection_report(const std::vector<Trajectory>& trajectories) {
  return build_rejection_report(std::span<const Trajectory>(trajectories));
}

inline nlohmann::json to_json(const RejectionReport& r) {
  nlohmann::json cats = nlohmann::json::object();
  for (auto c : kAllCategories) {
    cats[std::string(to_string(c))] = {{"phase", std::string(to_string(side_of(c)))}, {"count", r.count(c)},
                                       {"rate", r.rate(r.count(c))}};
  }
  return {{"trajectories", r.trajectories},
          {"requests", r.requests},
          {"categories", cats},
          {"subtotal_pre", r.subtotal_pre},
          {"subtotal_post", r.subtotal_post},
          {"rejections", r.rejections()},
          {"pre_rate", r.rate(r.subtotal_pre)},
          {"post_rate", r.rate(r.subtotal_post)},
          {"combined_rate", r.combined_rate()}};
}

namespace detail {

inline std::string_view category_label(RejectionCategory c) {
  switch (c) {
    case RejectionCategory::ValueEntityHallucination: return "Value/Entity Hallucination";
    case RejectionCategory::SchemaFormatViolation: return "Schema & Format Violation";
    case RejectionCategory::StateDependencyMissing: return "State Dependency Missing";
    case RejectionCategory::EmptyNull: return "Empty/Null";
    case RejectionCategory::SemanticConstraintMismatch: return "Semantic Constraint Mismatch";
    case RejectionCategory::StateUpdateInconsistency: return "State Update Inconsistency";
  }
  return "";
}

inline std::string table_row(std::string_view phase, std::string_view label, std::size_t n, double rate) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-22s %-32s %6zu %7.1f%%\n", std::string(phase).c_str(), std::string(label).c_str(),
                n, rate * 100.0);
  return buf;
}

}  // namespace detail

/// Plain-text table: one block per verification phase with three
/// sub-categories and a subtotal, then the combined rate.
inline std::string render_report_table(const RejectionReport& r) {
  std::string rule(72, '-');
  std::string out;
  char head[160];
  std::snprintf(head, sizeof head, "%-22s %-32s %6s %8s\n", "Verification Phase", "Error Sub-category", "Count", "Rate");
  out += head + rule + "\n";
  const std::pair<Side, std::string_view> phases[] = {{Side::Pre, "Pre-condition {P}"}, {Side::Post, "Post-condition {Q}"}};
  for (const auto& [side, name] : phases) {
    bool first = true;
    for (auto c : kAllCategories) {
      if (side_of(c) != side) continue;
      out += detail::table_row(first ? name : "", detail::category_label(c), r.count(c), r.rate(r.count(c)));
      first = false;
    }
    std::size_t sub = side == Side::Pre ? r.subtotal_pre : r.subtotal_post;
    out += detail::table_row("", side == Side::Pre ? "Subtotal {P} Rejections" : "Subtotal {Q} Rejections", sub,
                             r.rate(sub));
    out += rule + "\n";
  }
  out += detail::table_row("Total", "Combined Rejection Rate", r.rejections(), r.combined_rate());
  char tail[96];
  std::snprintf(tail, sizeof tail, "Requests: %zu   Trajectories: %zu\n", r.requests, r.trajectories);
  out += tail;
  return out;
}

}  // namespace contractrt
