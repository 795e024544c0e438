#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/error.hpp"

namespace contractrt {

inline constexpr int kDefaultMaxValueDepth = 32;

enum class TypeTag { Null, Bool, Number, Text, List, Record };

constexpr std::string_view to_string(TypeTag tag) {
  switch (tag) {
    case TypeTag::Null: return "NullType";
    case TypeTag::Bool: return "BoolType";
    case TypeTag::Number: return "NumberType";
    case TypeTag::Text: return "TextType";
    case TypeTag::List: return "ListType";
    case TypeTag::Record: return "RecordType";
  }
  return "NullType";
}

inline TypeTag parse_type_tag(std::string_view name) {
  for (auto tag : {TypeTag::Null, TypeTag::Bool, TypeTag::Number, TypeTag::Text, TypeTag::List,
                   TypeTag::Record}) {
    if (to_string(tag) == name) return tag;
  }
  throw Error(Errc::ParseError, "unknown type tag '" + std::string(name) + "'");
}

/// Structured data model shared by state entries and tool results.
///
/// Numbers are IEEE-754 doubles throughout; integer-looking JSON numbers are
/// read as doubles and written back without a fractional part.
class Value {
 public:
  using List = std::vector<Value>;
  using Record = std::map<std::string, Value>;

  Value() = default;
  Value(std::nullptr_t) {}
  Value(bool b) : data_(b) {}
  Value(double d) : data_(d) {}
  Value(int i) : data_(static_cast<double>(i)) {}
  Value(std::int64_t i) : data_(static_cast<double>(i)) {}
  Value(std::string s) : data_(std::move(s)) {}
  Value(const char* s) : data_(std::string(s)) {}
  Value(List l) : data_(std::move(l)) {}
  Value(Record r) : data_(std::move(r)) {}

  TypeTag tag() const { return static_cast<TypeTag>(data_.index()); }

  bool is_null() const { return tag() == TypeTag::Null; }
  bool is_bool() const { return tag() == TypeTag::Bool; }
  bool is_number() const { return tag() == TypeTag::Number; }
  bool is_text() const { return tag() == TypeTag::Text; }
  bool is_list() const { return tag() == TypeTag::List; }
  bool is_record() const { return tag() == TypeTag::Record; }

  bool as_bool() const { return std::get<bool>(data_); }
  double as_number() const { return std::get<double>(data_); }
  const std::string& as_text() const { return std::get<std::string>(data_); }
  const List& as_list() const { return std::get<List>(data_); }
  List& as_list() { return std::get<List>(data_); }
  const Record& as_record() const { return std::get<Record>(data_); }
  Record& as_record() { return std::get<Record>(data_); }

  /// Member lookup on a Record; nullptr for other tags or missing keys.
  const Value* find(const std::string& key) const {
    if (!is_record()) return nullptr;
    const auto& rec = as_record();
    auto it = rec.find(key);
    return it == rec.end() ? nullptr : &it->second;
  }

  /// Nesting depth; scalars have depth 1.
  int depth() const {
    int inner = 0;
    if (is_list()) {
      for (const auto& v : as_list()) inner = std::max(inner, v.depth());
    } else if (is_record()) {
      for (const auto& [k, v] : as_record()) inner = std::max(inner, v.depth());
    }
    return inner + 1;
  }

  friend bool operator==(const Value& a, const Value& b) { return a.data_ == b.data_; }

 private:
  std::variant<std::monostate, bool, double, std::string, List, Record> data_;
};

namespace detail {

inline nlohmann::json number_to_json(double d) {
  if (!std::isfinite(d)) {
    throw Error(Errc::TypeMismatch, "non-finite number cannot be serialized");
  }
  constexpr double kExactIntLimit = 9007199254740992.0;  // 2^53
  if (d == std::trunc(d) && std::fabs(d) <= kExactIntLimit && !(d == 0.0 && std::signbit(d))) {
    return static_cast<std::int64_t>(d);
  }
  return d;
}

}  // namespace detail

inline nlohmann::json to_json(const Value& v) {
  switch (v.tag()) {
    case TypeTag::Null: return nullptr;
    case TypeTag::Bool: return v.as_bool();
    case TypeTag::Number: return detail::number_to_json(v.as_number());
    case TypeTag::Text: return v.as_text();
    case TypeTag::List: {
      auto arr = nlohmann::json::array();
      for (const auto& e : v.as_list()) arr.push_back(to_json(e));
      return arr;
    }
    case TypeTag::Record: {
      auto obj = nlohmann::json::object();
      for (const auto& [k, e] : v.as_record()) obj[k] = to_json(e);
      return obj;
    }
  }
  return nullptr;
}

inline Value from_json(const nlohmann::json& j, int max_depth = kDefaultMaxValueDepth) {
  if (max_depth <= 0) throw Error(Errc::DepthExceeded, "value nesting exceeds configured depth");
  switch (j.type()) {
    case nlohmann::json::value_t::null: return Value();
    case nlohmann::json::value_t::boolean: return Value(j.get<bool>());
    case nlohmann::json::value_t::number_integer: return Value(static_cast<double>(j.get<std::int64_t>()));
    case nlohmann::json::value_t::number_unsigned: return Value(static_cast<double>(j.get<std::uint64_t>()));
    case nlohmann::json::value_t::number_float: return Value(j.get<double>());
    case nlohmann::json::value_t::string: return Value(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      Value::List list;
      list.reserve(j.size());
      for (const auto& e : j) list.push_back(from_json(e, max_depth - 1));
      return Value(std::move(list));
    }
    case nlohmann::json::value_t::object: {
      Value::Record rec;
      for (auto it = j.begin(); it != j.end(); ++it) rec.emplace(it.key(), from_json(it.value(), max_depth - 1));
      return Value(std::move(rec));
    }
    default: throw Error(Errc::ParseError, "unsupported JSON value kind");
  }
}

/// Compact JSON rendering used in logs, prompts and summaries.
inline std::string render_compact(const Value& v) { return to_json(v).dump(); }

/// 64-bit FNV-1a; stable across platforms.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace contractrt
