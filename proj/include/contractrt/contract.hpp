#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/error.hpp"
#include "contractrt/predicate.hpp"
#include "contractrt/state.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

struct WellFormednessRule {
  enum class Kind { ParsesAsStructuredValue, MaxBytes, RequiredOutermostTag };
  Kind kind = Kind::ParsesAsStructuredValue;
  std::size_t limit = 0;
  TypeTag tag = TypeTag::Record;

  static WellFormednessRule structured() { return {}; }
  static WellFormednessRule max_bytes(std::size_t n) { return {Kind::MaxBytes, n, TypeTag::Record}; }
  static WellFormednessRule outermost(TypeTag t) { return {Kind::RequiredOutermostTag, 0, t}; }

  /// A structured value is a Record or List; MaxBytes measures the compact
  /// JSON rendering.
  bool holds(const Value& result) const {
    switch (kind) {
      case Kind::ParsesAsStructuredValue: return result.is_record() || result.is_list();
      case Kind::MaxBytes: return render_compact(result).size() <= limit;
      case Kind::RequiredOutermostTag: return result.tag() == tag;
    }
    return false;
  }

  friend bool operator==(const WellFormednessRule&, const WellFormednessRule&) = default;
};

inline nlohmann::json to_json(const WellFormednessRule& r) {
  switch (r.kind) {
    case WellFormednessRule::Kind::ParsesAsStructuredValue: return "parses_as_structured_value";
    case WellFormednessRule::Kind::MaxBytes: return {{"max_bytes", r.limit}};
    case WellFormednessRule::Kind::RequiredOutermostTag:
      return {{"required_outermost_tag", std::string(to_string(r.tag))}};
  }
  return nullptr;
}

inline WellFormednessRule wf_rule_from_json(const nlohmann::json& j) {
  if (j.is_string() && j.get<std::string>() == "parses_as_structured_value") return WellFormednessRule::structured();
  if (j.is_object() && j.size() == 1) {
    if (j.contains("max_bytes")) {
      const auto& n = j.at("max_bytes");
      if (!n.is_number_unsigned() || n.get<std::size_t>() == 0) {
        throw Error(Errc::ParseError, "max_bytes must be a positive integer");
      }
      return WellFormednessRule::max_bytes(n.get<std::size_t>());
    }
    if (j.contains("required_outermost_tag")) {
      return WellFormednessRule::outermost(parse_type_tag(j.at("required_outermost_tag").get<std::string>()));
    }
  }
  throw Error(Errc::ParseError, "unknown well-formedness rule " + j.dump());
}

inline std::string describe(const WellFormednessRule& r) { return to_json(r).dump(); }

enum class Side { Pre, Post };

constexpr std::string_view to_string(Side s) { return s == Side::Pre ? "pre" : "post"; }

enum class RejectionCategory {
  ValueEntityHallucination,
  SchemaFormatViolation,
  StateDependencyMissing,
  EmptyNull,
  SemanticConstraintMismatch,
  StateUpdateInconsistency,
};

inline constexpr std::array<RejectionCategory, 6> kAllCategories{
    RejectionCategory::ValueEntityHallucination, RejectionCategory::SchemaFormatViolation,
    RejectionCategory::StateDependencyMissing,   RejectionCategory::EmptyNull,
    RejectionCategory::SemanticConstraintMismatch, RejectionCategory::StateUpdateInconsistency,
};

constexpr std::string_view to_string(RejectionCategory c) {
  switch (c) {
    case RejectionCategory::ValueEntityHallucination: return "ValueEntityHallucination";
    case RejectionCategory::SchemaFormatViolation: return "SchemaFormatViolation";
    case RejectionCategory::StateDependencyMissing: return "StateDependencyMissing";
    case RejectionCategory::EmptyNull: return "EmptyNull";
    case RejectionCategory::SemanticConstraintMismatch: return "SemanticConstraintMismatch";
    case RejectionCategory::StateUpdateInconsistency: return "StateUpdateInconsistency";
  }
  return "";
}

constexpr Side side_of(RejectionCategory c) {
  switch (c) {
    case RejectionCategory::ValueEntityHallucination:
    case RejectionCategory::SchemaFormatViolation:
    case RejectionCategory::StateDependencyMissing: return Side::Pre;
    default: return Side::Post;
  }
}

inline RejectionCategory parse_category(std::string_view name) {
  for (auto c : kAllCategories) {
    if (to_string(c) == name) return c;
  }
  throw Error(Errc::ParseError, "unknown rejection category '" + std::string(name) + "'");
}

/// Maps a failed check to its rejection bucket.
///
/// Pre side: presence atoms (exists, has_field, non_empty, or a forall whose
/// list is missing) mean a missing state dependency; type atoms mean a
/// schema/format violation; comparisons and anything else mean the call was
/// grounded on a value the state does not hold.
/// Post side: a null or absent result and non_empty failures are empty/null
/// results; every other postcondition failure is a semantic mismatch.
/// StateUpdateInconsistency is assigned by the executor when the update
/// operator fails after a passed postcondition, never here.
inline RejectionCategory categorize_failure(Side side, const Predicate& failing_atom, const Value* result) {
  using K = Predicate::Kind;
  if (side == Side::Pre) {
    switch (failing_atom.kind) {
      case K::Exists:
      case K::HasField:
      case K::NonEmpty:
      case K::ForAll: return RejectionCategory::StateDependencyMissing;
      case K::IsList:
      case K::IsNumeric:
      case K::IsText:
      case K::IsRecord: return RejectionCategory::SchemaFormatViolation;
      default: return RejectionCategory::ValueEntityHallucination;
    }
  }
  if (result == nullptr || result->is_null() || failing_atom.kind == K::NonEmpty) {
    return RejectionCategory::EmptyNull;
  }
  return RejectionCategory::SemanticConstraintMismatch;
}

/// Hoare triple {precondition} tool {postcondition} plus well-formedness
/// rules and the state update applied on acceptance.
struct Contract {
  std::string tool_id;
  Predicate precondition;
  Predicate postcondition;
  std::vector<WellFormednessRule> wf_rules;
  UpdateSpec update;

  void validate() const {
    if (tool_id.empty()) throw Error(Errc::InvalidArgument, "contract tool_id is empty");
    validate_predicate(precondition, PredicateRole::Precondition);
    validate_predicate(postcondition, PredicateRole::Postcondition);
    update.validate();
  }
};

namespace detail {

inline nlohmann::json assignment_to_json(const Assignment& a) {
  nlohmann::json j;
  j["target_key"] = a.target_key;
  switch (a.source) {
    case Assignment::SourceKind::WholeResult: j["source"] = "whole_result"; break;
    case Assignment::SourceKind::ResultPath: j["source"] = {{"result_path", render_path(a.path)}}; break;
    case Assignment::SourceKind::Literal: j["source"] = {{"literal", to_json(a.literal)}}; break;
  }
  j["type"] = std::string(to_string(a.type_tag));
  j["mode"] = a.mode == Assignment::Mode::Set ? "set" : "append";
  return j;
}

inline Assignment assignment_from_json(const nlohmann::json& j) {
  Assignment a;
  a.target_key = j.at("target_key").get<std::string>();
  const auto& src = j.at("source");
  if (src.is_string() && src.get<std::string>() == "whole_result") {
    a.source = Assignment::SourceKind::WholeResult;
  } else if (src.is_object() && src.contains("result_path")) {
    a.source = Assignment::SourceKind::ResultPath;
    a.path = parse_path(src.at("result_path").get<std::string>());
  } else if (src.is_object() && src.contains("literal")) {
    a.source = Assignment::SourceKind::Literal;
    a.literal = from_json(src.at("literal"));
  } else {
    throw Error(Errc::ParseError, "unknown update source " + src.dump());
  }
  a.type_tag = parse_type_tag(j.at("type").get<std::string>());
  std::string mode = j.value("mode", std::string("set"));
  if (mode == "set") {
    a.mode = Assignment::Mode::Set;
  } else if (mode == "append") {
    a.mode = Assignment::Mode::Append;
  } else {
    throw Error(Errc::ParseError, "unknown update mode '" + mode + "'");
  }
  return a;
}

}  // namespace detail

inline nlohmann::json to_json(const Contract& c) {
  nlohmann::json j;
  j["tool_id"] = c.tool_id;
  j["precondition"] = render_predicate(c.precondition);
  j["postcondition"] = render_predicate(c.postcondition);
  auto wf = nlohmann::json::array();
  for (const auto& r : c.wf_rules) wf.push_back(to_json(r));
  j["wf"] = wf;
  auto upd = nlohmann::json::array();
  for (const auto& a : c.update.assignments) upd.push_back(detail::assignment_to_json(a));
  j["update"] = upd;
  return j;
}

/// Reads one contract document and runs static validation.
inline Contract contract_from_json(const nlohmann::json& j) {
  Contract c;
  try {
    c.tool_id = j.at("tool_id").get<std::string>();
    c.precondition = parse_predicate(j.value("precondition", std::string("true")));
    c.postcondition = parse_predicate(j.value("postcondition", std::string("true")));
    if (j.contains("wf")) {
      for (const auto& r : j.at("wf")) c.wf_rules.push_back(wf_rule_from_json(r));
    }
    if (j.contains("update")) {
      for (const auto& a : j.at("update")) c.update.assignments.push_back(detail::assignment_from_json(a));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, std::string("contract document: ") + ex.what());
  }
  c.validate();
  return c;
}

using ContractSet = std::map<std::string, Contract>;

inline ContractSet contracts_from_json(const nlohmann::json& arr) {
  ContractSet out;
  for (const auto& doc : arr) {
    Contract c = contract_from_json(doc);
    std::string id = c.tool_id;
    if (!out.emplace(id, std::move(c)).second) {
      throw Error(Errc::DuplicateToolId, "two contracts for tool '" + id + "'");
    }
  }
  return out;
}

/// Binary acceptance verdict for one executed tool result.
struct AcceptanceEvent {
  std::string tool_id;
  bool passed = false;
  Side side = Side::Post;
  std::optional<Predicate> failing_atom;
  std::optional<WellFormednessRule> failing_wf;
  std::optional<RejectionCategory> category;
  std::string detail;
};

struct PreconditionCheck {
  bool holds = true;
  std::optional<Predicate> failing_atom;
};

inline PreconditionCheck check_precondition(const Contract& contract, const SymbolicState& state) {
  Evaluation e = evaluate_predicate(contract.precondition, state, nullptr);
  return {e.holds, std::move(e.failing_atom)};
}

/// Well-formedness first, then the postcondition over (state, result).
/// Never touches `state`.
inline AcceptanceEvent check_acceptance(const Contract& contract, const SymbolicState& state, const Value& result) {
  AcceptanceEvent ev;
  ev.tool_id = contract.tool_id;
  for (const auto& rule : contract.wf_rules) {
    if (!rule.holds(result)) {
      ev.failing_wf = rule;
      ev.category = result.is_null() ? RejectionCategory::EmptyNull : RejectionCategory::SemanticConstraintMismatch;
      ev.detail = "well-formedness rule " + describe(rule) + " violated";
      return ev;
    }
  }
  Evaluation e = evaluate_predicate(contract.postcondition, state, &result);
  if (!e.holds) {
    ev.category = categorize_failure(Side::Post, *e.failing_atom, &result);
    ev.detail = "postcondition atom " + render_predicate(*e.failing_atom) + " is false";
    ev.failing_atom = std::move(e.failing_atom);
    return ev;
  }
  ev.passed = true;
  return ev;
}

}  // namespace contractrt
