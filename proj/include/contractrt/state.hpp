#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/error.hpp"
#include "contractrt/path.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

struct Provenance {
  enum class Kind { InitialContext, ToolCommit };
  Kind kind = Kind::InitialContext;
  std::string tool_id;
  std::size_t step_index = 0;

  static Provenance initial() { return {}; }
  static Provenance commit(std::string tool, std::size_t step) {
    return {Kind::ToolCommit, std::move(tool), step};
  }

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct StateEntry {
  std::string key;
  Value value;
  TypeTag type_tag = TypeTag::Null;
  Provenance provenance;

  bool conforms() const { return !key.empty() && value.tag() == type_tag; }

  friend bool operator==(const StateEntry&, const StateEntry&) = default;
};

struct SeedEntry {
  std::string key;
  Value value;
  TypeTag type_tag;
};

struct Assignment {
  enum class SourceKind { ResultPath, Literal, WholeResult };
  enum class Mode { Set, Append };

  std::string target_key;
  SourceKind source = SourceKind::WholeResult;
  Path path;  // ResultPath only; rooted at `result`
  Value literal;
  TypeTag type_tag = TypeTag::Null;
  Mode mode = Mode::Set;
};

struct UpdateSpec {
  std::vector<Assignment> assignments;

  /// Throws MalformedPath / InvalidArgument on an ill-formed assignment.
  void validate() const {
    for (const auto& a : assignments) {
      if (a.target_key.empty()) throw Error(Errc::InvalidArgument, "update target_key is empty");
      if (a.source == Assignment::SourceKind::ResultPath && !a.path.is_result()) {
        throw Error(Errc::MalformedPath, "update source path must start with 'result': " + render_path(a.path));
      }
    }
  }
};

class SymbolicState;
SymbolicState init_state(std::span<const SeedEntry> seeds);
SymbolicState apply_update(const SymbolicState& state, const UpdateSpec& spec, const Value& result,
                           const std::string& tool_id, std::size_t step_index);
SymbolicState snapshot_from_json(const nlohmann::json& arr, std::uint64_t version = 0);

/// Immutable typed key/value store. Entries keep insertion order; a key
/// appears at most once. New states are only produced by `init_state`,
/// `apply_update` and `read_snapshot`.
class SymbolicState {
 public:
  SymbolicState() = default;

  std::uint64_t version() const { return version_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<StateEntry>& entries() const { return entries_; }

  const StateEntry* find(std::string_view key) const {
    auto it = index_.find(std::string(key));
    return it == index_.end() ? nullptr : &entries_[it->second];
  }
  bool contains(std::string_view key) const { return find(key) != nullptr; }

  std::vector<std::string> sorted_keys() const {
    std::vector<std::string> keys;
    keys.reserve(index_.size());
    for (const auto& [k, _] : index_) keys.push_back(k);
    return keys;
  }

  /// Key uniqueness plus tag/value agreement for every entry.
  bool conforms() const {
    if (index_.size() != entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (!entries_[i].conforms()) return false;
      auto it = index_.find(entries_[i].key);
      if (it == index_.end() || it->second != i) return false;
    }
    return true;
  }

  /// Entry-wise equality, ignoring insertion order and version.
  bool same_entries(const SymbolicState& other) const {
    if (size() != other.size()) return false;
    for (const auto& e : entries_) {
      const StateEntry* o = other.find(e.key);
      if (o == nullptr || !(*o == e)) return false;
    }
    return true;
  }

 private:
  friend SymbolicState init_state(std::span<const SeedEntry> seeds);
  friend SymbolicState apply_update(const SymbolicState&, const UpdateSpec&, const Value&, const std::string&,
                                    std::size_t);
  friend SymbolicState snapshot_from_json(const nlohmann::json& arr, std::uint64_t version);

  void insert(StateEntry entry) {
    if (entry.key.empty()) throw Error(Errc::InvalidArgument, "state key must be non-empty");
    if (entry.value.tag() != entry.type_tag) {
      throw Error(Errc::TypeMismatch, "entry '" + entry.key + "' tagged " + std::string(to_string(entry.type_tag)) +
                                          " holds " + std::string(to_string(entry.value.tag())));
    }
    if (entry.value.depth() > kDefaultMaxValueDepth) {
      throw Error(Errc::DepthExceeded, "entry '" + entry.key + "' exceeds nesting depth");
    }
    auto [it, inserted] = index_.emplace(entry.key, entries_.size());
    if (inserted) {
      entries_.push_back(std::move(entry));
    } else {
      entries_[it->second] = std::move(entry);
    }
  }

  std::vector<StateEntry> entries_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t version_ = 0;
};

inline SymbolicState init_state(std::span<const SeedEntry> seeds) {
  SymbolicState s;
  for (const auto& seed : seeds) {
    if (s.contains(seed.key)) throw Error(Errc::DuplicateKey, "duplicate seed key '" + seed.key + "'");
    s.insert({seed.key, seed.value, seed.type_tag, Provenance::initial()});
  }
  return s;
}

inline SymbolicState init_state(const std::vector<SeedEntry>& seeds) {
  return init_state(std::span<const SeedEntry>(seeds));
}

/// Resolves `segments` against the state: the first segment names the entry,
/// the rest descend into its value.
template <class DynamicResolver>
const Value* lookup_in_state(const SymbolicState& state, std::span<const Segment> segments,
                             DynamicResolver&& resolve_dynamic) {
  if (segments.empty()) return nullptr;
  const Segment& head = segments.front();
  const StateEntry* entry = nullptr;
  switch (head.kind) {
    case Segment::Kind::Name: entry = state.find(head.name); break;
    case Segment::Kind::Index: entry = state.find(std::to_string(head.index)); break;
    case Segment::Kind::Dynamic: {
      const Value* key = resolve_dynamic(*head.dynamic);
      if (key != nullptr && key->is_text()) entry = state.find(key->as_text());
      break;
    }
  }
  if (entry == nullptr) return nullptr;
  return descend(&entry->value, segments.subspan(1), resolve_dynamic);
}

/// Value at a `state.` path, or nullptr when absent. Bracketed segments may
/// only refer to other `state.` paths.
inline const Value* get_path(const SymbolicState& state, const Path& path) {
  if (!path.is_state() || path.segments.empty()) {
    throw Error(Errc::MalformedPath, "expected a 'state.<key>' path, got '" + render_path(path) + "'");
  }
  struct Resolver {
    const SymbolicState& st;
    const Value* operator()(const Path& p) const {
      if (!p.is_state()) return nullptr;
      return lookup_in_state(st, p.segments, *this);
    }
  };
  Resolver r{state};
  return lookup_in_state(state, path.segments, r);
}

inline std::optional<Value> get_path(const SymbolicState& state, std::string_view path_text) {
  const Value* v = get_path(state, parse_path(path_text));
  if (v == nullptr) return std::nullopt;
  return *v;
}

/// Functional update: applies every assignment in order to a copy of `state`.
/// The caller is responsible for having accepted `result` first.
inline SymbolicState apply_update(const SymbolicState& state, const UpdateSpec& spec, const Value& result,
                                  const std::string& tool_id, std::size_t step_index) {
  spec.validate();
  SymbolicState next = state;
  for (const auto& a : spec.assignments) {
    Value extracted;
    switch (a.source) {
      case Assignment::SourceKind::WholeResult: extracted = result; break;
      case Assignment::SourceKind::Literal: extracted = a.literal; break;
      case Assignment::SourceKind::ResultPath: {
        struct Resolver {
          const SymbolicState& st;
          const Value& res;
          const Value* operator()(const Path& p) const {
            if (p.is_state()) return lookup_in_state(st, p.segments, *this);
            if (p.is_result()) return descend(&res, p.segments, *this);
            return nullptr;
          }
        };
        Resolver r{state, result};
        const Value* v = descend(&result, a.path.segments, r);
        if (v == nullptr) throw Error(Errc::ResultPathAbsent, render_path(a.path) + " is absent from the result");
        extracted = *v;
        break;
      }
    }
    if (extracted.tag() != a.type_tag) {
      throw Error(Errc::TypeMismatch, "assignment to '" + a.target_key + "' expects " +
                                          std::string(to_string(a.type_tag)) + " but got " +
                                          std::string(to_string(extracted.tag())));
    }
    if (a.mode == Assignment::Mode::Set) {
      next.insert({a.target_key, std::move(extracted), a.type_tag, Provenance::commit(tool_id, step_index)});
    } else {
      Value::List list;
      if (const StateEntry* existing = next.find(a.target_key)) {
        if (!existing->value.is_list()) {
          throw Error(Errc::AppendToNonList, "cannot append to non-list entry '" + a.target_key + "'");
        }
        list = existing->value.as_list();
      }
      list.push_back(std::move(extracted));
      next.insert({a.target_key, Value(std::move(list)), TypeTag::List, Provenance::commit(tool_id, step_index)});
    }
  }
  next.version_ = state.version_ + 1;
  return next;
}

namespace detail {

inline constexpr std::string_view kToolCommitPrefix = "ToolCommit:";

inline std::string_view utf8_safe_prefix(std::string_view s, std::size_t n) {
  if (n >= s.size()) return s;
  while (n > 0 && (static_cast<unsigned char>(s[n]) & 0xC0) == 0x80) --n;
  return s.substr(0, n);
}

}  // namespace detail

/// Canonical snapshot: entries sorted by key, each
/// `{key, type, value, provenance, step}`.
inline nlohmann::json snapshot_json(const SymbolicState& state) {
  auto arr = nlohmann::json::array();
  for (const auto& key : state.sorted_keys()) {
    const StateEntry& e = *state.find(key);
    nlohmann::json obj;
    obj["key"] = e.key;
    obj["type"] = std::string(to_string(e.type_tag));
    obj["value"] = to_json(e.value);
    if (e.provenance.kind == Provenance::Kind::InitialContext) {
      obj["provenance"] = "InitialContext";
      obj["step"] = nullptr;
    } else {
      obj["provenance"] = std::string(detail::kToolCommitPrefix) + e.provenance.tool_id;
      obj["step"] = e.provenance.step_index;
    }
    arr.push_back(std::move(obj));
  }
  return arr;
}

inline std::string write_snapshot(const SymbolicState& state) { return snapshot_json(state).dump(2) + "\n"; }

inline SymbolicState snapshot_from_json(const nlohmann::json& arr, std::uint64_t version) {
  if (!arr.is_array()) throw Error(Errc::ParseError, "state snapshot must be a list");
  SymbolicState s;
  for (const auto& obj : arr) {
    if (!obj.is_object() || !obj.contains("key") || !obj.contains("type") || !obj.contains("value")) {
      throw Error(Errc::ParseError, "snapshot entry needs key, type and value");
    }
    StateEntry e;
    e.key = obj.at("key").get<std::string>();
    e.type_tag = parse_type_tag(obj.at("type").get<std::string>());
    e.value = from_json(obj.at("value"));
    std::string prov = obj.value("provenance", std::string("InitialContext"));
    if (prov.rfind(detail::kToolCommitPrefix, 0) == 0) {
      e.provenance.kind = Provenance::Kind::ToolCommit;
      e.provenance.tool_id = prov.substr(detail::kToolCommitPrefix.size());
      if (!obj.contains("step") || !obj.at("step").is_number_unsigned()) {
        throw Error(Errc::ParseError, "ToolCommit entry '" + e.key + "' needs a step index");
      }
      e.provenance.step_index = obj.at("step").get<std::size_t>();
    } else if (prov != "InitialContext") {
      throw Error(Errc::ParseError, "unknown provenance '" + prov + "'");
    }
    if (s.contains(e.key)) throw Error(Errc::DuplicateKey, "duplicate snapshot key '" + e.key + "'");
    s.insert(std::move(e));
  }
  s.version_ = version;
  return s;
}

inline SymbolicState read_snapshot(std::string_view text, std::uint64_t version = 0) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, std::string("state snapshot: ") + ex.what());
  }
  return snapshot_from_json(j, version);
}

/// Content digest over the canonical snapshot and the version counter.
inline std::string state_digest(const SymbolicState& state) {
  std::string bytes = snapshot_json(state).dump();
  bytes += "#v";
  bytes += std::to_string(state.version());
  return hex64(fnv1a64(bytes));
}

/// `key: value` per line in insertion order; Text values are written raw.
/// The result never exceeds `max_chars` bytes; truncation ends in "...".
inline std::string summarize(const SymbolicState& state, std::size_t max_chars = 4000) {
  if (max_chars == 0) throw Error(Errc::InvalidArgument, "max_chars must be positive");
  std::string out;
  for (const auto& e : state.entries()) {
    if (!out.empty()) out += '\n';
    out += e.key;
    out += ": ";
    out += e.value.is_text() ? e.value.as_text() : render_compact(e.value);
  }
  if (out.size() <= max_chars) return out;
  constexpr std::string_view kEllipsis = "...";
  if (max_chars <= kEllipsis.size()) return std::string(detail::utf8_safe_prefix(kEllipsis, max_chars));
  std::string cut(detail::utf8_safe_prefix(out, max_chars - kEllipsis.size()));
  cut += kEllipsis;
  return cut;
}

}  // namespace contractrt
