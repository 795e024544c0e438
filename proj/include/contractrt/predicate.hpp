#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/error.hpp"
#include "contractrt/path.hpp"
#include "contractrt/state.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

inline constexpr int kDefaultMaxPredicateDepth = 64;

enum class CompareOp { Eq, Ne, Lt, Le, Gt, Ge };

constexpr std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "==";
    case CompareOp::Ne: return "!=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
  }
  return "==";
}

/// First-order predicate over the `state.` and `result.` namespaces plus
/// `forall` binders.
struct Predicate {
  enum class Kind {
    True,
    False,
    Exists,
    HasField,
    IsList,
    IsNumeric,
    IsText,
    IsRecord,
    NonEmpty,
    Compare,
    ForAll,
    And,
    Or,
    Not,
  };

  Kind kind = Kind::True;
  Path path;  // atom argument, Compare left side, or ForAll list
  CompareOp op = CompareOp::Eq;
  std::variant<Value, Path> rhs;
  std::string binder;
  std::vector<Predicate> children;  // And/Or operands, Not operand, ForAll body

  static Predicate truth() { return {}; }
  static Predicate falsity() { return make(Kind::False); }
  static Predicate exists(std::string key) { return atom(Kind::Exists, Path{std::string(kStateRoot), {Segment::member(std::move(key))}}); }
  static Predicate atom(Kind k, Path p) {
    Predicate out = make(k);
    out.path = std::move(p);
    return out;
  }
  static Predicate compare(Path lhs, CompareOp op, std::variant<Value, Path> rhs) {
    Predicate out = make(Kind::Compare);
    out.path = std::move(lhs);
    out.op = op;
    out.rhs = std::move(rhs);
    return out;
  }
  static Predicate forall(std::string binder, Path list, Predicate body) {
    Predicate out = make(Kind::ForAll);
    out.binder = std::move(binder);
    out.path = std::move(list);
    out.children.push_back(std::move(body));
    return out;
  }
  static Predicate conj(std::vector<Predicate> ps) { return group(Kind::And, std::move(ps)); }
  static Predicate disj(std::vector<Predicate> ps) { return group(Kind::Or, std::move(ps)); }
  static Predicate negate(Predicate p) {
    Predicate out = make(Kind::Not);
    out.children.push_back(std::move(p));
    return out;
  }

  bool is_atom() const { return kind != Kind::And && kind != Kind::Or && kind != Kind::Not && kind != Kind::ForAll; }

  int depth() const {
    int inner = 0;
    for (const auto& c : children) inner = std::max(inner, c.depth());
    return inner + 1;
  }

  friend bool operator==(const Predicate& a, const Predicate& b) {
    return a.kind == b.kind && a.path == b.path && a.op == b.op && a.binder == b.binder &&
           a.children == b.children && (a.kind != Kind::Compare || a.rhs == b.rhs);
  }

 private:
  static Predicate make(Kind k) {
    Predicate p;
    p.kind = k;
    return p;
  }
  static Predicate group(Kind k, std::vector<Predicate> ps) {
    Predicate out = make(k);
    out.children = std::move(ps);
    return out;
  }
};

namespace detail {

struct AtomKeyword {
  std::string_view word;
  Predicate::Kind kind;
};

inline constexpr std::array<AtomKeyword, 7> kAtomKeywords{{
    {"exists", Predicate::Kind::Exists},
    {"has_field", Predicate::Kind::HasField},
    {"is_list", Predicate::Kind::IsList},
    {"is_numeric", Predicate::Kind::IsNumeric},
    {"is_text", Predicate::Kind::IsText},
    {"is_record", Predicate::Kind::IsRecord},
    {"non_empty", Predicate::Kind::NonEmpty},
}};

inline std::string_view atom_keyword(Predicate::Kind k) {
  for (const auto& a : kAtomKeywords) {
    if (a.kind == k) return a.word;
  }
  return "";
}

inline bool is_reserved_word(std::string_view w) {
  static const std::set<std::string_view> kReserved = {"and",   "or",   "not",   "forall", "in",
                                                       "true",  "false", "null", "state",  "result"};
  if (kReserved.count(w)) return true;
  for (const auto& a : kAtomKeywords) {
    if (a.word == w) return true;
  }
  return false;
}

class PredicateParser {
 public:
  PredicateParser(std::string_view text, int max_depth) : sc_(text), max_depth_(max_depth) {}

  Predicate parse() {
    sc_.skip_ws();
    if (sc_.at_end()) sc_.fail("empty predicate");
    Predicate p = disjunction(1);
    sc_.skip_ws();
    if (!sc_.at_end()) sc_.fail("unexpected input");
    return p;
  }

 private:
  void enter(int depth) {
    if (depth > max_depth_) sc_.fail("predicate nesting exceeds depth limit");
  }

  /// Peeks at the next identifier without consuming it.
  std::string peek_word() {
    sc_.skip_ws();
    std::size_t save = sc_.pos();
    if (!is_ident_start(sc_.peek())) return {};
    std::string w = sc_.identifier();
    sc_.set_pos(save);
    return w;
  }

  bool accept_word(std::string_view w) {
    if (peek_word() != w) return false;
    sc_.identifier();
    return true;
  }

  void expect_char(char c) {
    sc_.skip_ws();
    if (sc_.get() != c) {
      sc_.set_pos(sc_.pos() == 0 ? 0 : sc_.pos() - 1);
      sc_.fail(std::string("expected '") + c + "'");
    }
  }

  Predicate disjunction(int depth) {
    enter(depth);
    std::vector<Predicate> items;
    items.push_back(conjunction(depth + 1));
    while (accept_word("or")) items.push_back(conjunction(depth + 1));
    if (items.size() == 1) return std::move(items.front());
    return Predicate::disj(std::move(items));
  }

  Predicate conjunction(int depth) {
    enter(depth);
    std::vector<Predicate> items;
    items.push_back(unary(depth + 1));
    while (accept_word("and")) items.push_back(unary(depth + 1));
    if (items.size() == 1) return std::move(items.front());
    return Predicate::conj(std::move(items));
  }

  Predicate unary(int depth) {
    enter(depth);
    if (accept_word("not")) return Predicate::negate(unary(depth + 1));
    if (accept_word("forall")) {
      sc_.skip_ws();
      std::string binder = sc_.identifier();
      if (is_reserved_word(binder)) sc_.fail("'" + binder + "' cannot be used as a binder name");
      if (!accept_word("in")) sc_.fail("expected 'in'");
      sc_.skip_ws();
      Path list = parse_path_at(sc_);
      expect_char(':');
      return Predicate::forall(std::move(binder), std::move(list), disjunction(depth + 1));
    }
    return primary(depth + 1);
  }

  Predicate primary(int depth) {
    enter(depth);
    sc_.skip_ws();
    if (sc_.peek() == '(') {
      sc_.get();
      Predicate inner = disjunction(depth + 1);
      expect_char(')');
      return inner;
    }
    std::string word = peek_word();
    if (word.empty()) sc_.fail("expected predicate");
    if (word == "true" || word == "false") {
      sc_.identifier();
      return word == "true" ? Predicate::truth() : Predicate::falsity();
    }
    for (const auto& a : kAtomKeywords) {
      if (a.word != word) continue;
      std::size_t save = sc_.pos();
      sc_.identifier();
      sc_.skip_ws();
      if (sc_.peek() != '(') {
        sc_.set_pos(save);
        break;
      }
      sc_.get();
      sc_.skip_ws();
      std::size_t arg_pos = sc_.pos();
      Path p = parse_path_at(sc_);
      expect_char(')');
      if (a.kind == Predicate::Kind::Exists &&
          (!p.is_state() || p.segments.size() != 1 || p.segments[0].kind != Segment::Kind::Name)) {
        sc_.set_pos(arg_pos);
        sc_.fail("exists() takes a single 'state.<key>' argument");
      }
      return Predicate::atom(a.kind, std::move(p));
    }
    if (is_reserved_word(word) && word != "state" && word != "result") sc_.fail("unexpected keyword '" + word + "'");
    Path lhs = parse_path_at(sc_);
    CompareOp op = comparison_op();
    return Predicate::compare(std::move(lhs), op, operand());
  }

  CompareOp comparison_op() {
    sc_.skip_ws();
    if (sc_.consume("==")) return CompareOp::Eq;
    if (sc_.consume("!=")) return CompareOp::Ne;
    if (sc_.consume("<=")) return CompareOp::Le;
    if (sc_.consume(">=")) return CompareOp::Ge;
    if (sc_.consume("<")) return CompareOp::Lt;
    if (sc_.consume(">")) return CompareOp::Gt;
    if (sc_.consume("=")) return CompareOp::Eq;
    sc_.fail("expected comparison operator");
  }

  std::variant<Value, Path> operand() {
    sc_.skip_ws();
    char c = sc_.peek();
    if (c == '"') return Value(sc_.quoted());
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return Value(number());
    std::string word = peek_word();
    if (word == "true" || word == "false") {
      sc_.identifier();
      return Value(word == "true");
    }
    if (word == "null") {
      sc_.identifier();
      return Value();
    }
    if (word.empty()) sc_.fail("expected literal or path");
    return parse_path_at(sc_);
  }

  double number() {
    std::size_t start = sc_.pos();
    if (sc_.peek() == '-') sc_.get();
    auto digits = [&] {
      std::size_t n = 0;
      while (std::isdigit(static_cast<unsigned char>(sc_.peek()))) {
        sc_.get();
        ++n;
      }
      return n;
    };
    if (digits() == 0) sc_.fail("malformed number");
    if (sc_.peek() == '.') {
      sc_.get();
      if (digits() == 0) sc_.fail("malformed number");
    }
    if (sc_.peek() == 'e' || sc_.peek() == 'E') {
      sc_.get();
      if (sc_.peek() == '+' || sc_.peek() == '-') sc_.get();
      if (digits() == 0) sc_.fail("malformed number");
    }
    std::string token(sc_.text().substr(start, sc_.pos() - start));
    auto j = nlohmann::json::parse(token, nullptr, false);
    if (j.is_discarded() || !j.is_number()) {
      sc_.set_pos(start);
      sc_.fail("malformed number");
    }
    return j.get<double>();
  }

  Scanner sc_;
  int max_depth_;
};

inline std::string render_literal(const Value& v) {
  switch (v.tag()) {
    case TypeTag::Text: return quote(v.as_text());
    case TypeTag::Number: return number_to_json(v.as_number()).dump();
    case TypeTag::Bool: return v.as_bool() ? "true" : "false";
    case TypeTag::Null: return "null";
    default: throw Error(Errc::InvalidArgument, "only scalar literals can be rendered in predicates");
  }
}

inline void render_into(const Predicate& p, std::string& out);

inline void render_child(const Predicate& child, bool parenthesize, std::string& out) {
  if (parenthesize) out += '(';
  render_into(child, out);
  if (parenthesize) out += ')';
}

inline void render_into(const Predicate& p, std::string& out) {
  using K = Predicate::Kind;
  switch (p.kind) {
    case K::True: out += "true"; return;
    case K::False: out += "false"; return;
    case K::Exists:
    case K::HasField:
    case K::IsList:
    case K::IsNumeric:
    case K::IsText:
    case K::IsRecord:
    case K::NonEmpty:
      out += atom_keyword(p.kind);
      out += '(';
      out += render_path(p.path);
      out += ')';
      return;
    case K::Compare:
      out += render_path(p.path);
      out += ' ';
      out += to_string(p.op);
      out += ' ';
      if (std::holds_alternative<Path>(p.rhs)) {
        out += render_path(std::get<Path>(p.rhs));
      } else {
        out += render_literal(std::get<Value>(p.rhs));
      }
      return;
    case K::ForAll:
      out += "forall ";
      out += p.binder;
      out += " in ";
      out += render_path(p.path);
      out += ": ";
      render_into(p.children.at(0), out);
      return;
    case K::And:
    case K::Or: {
      if (p.children.empty()) {
        out += p.kind == K::And ? "true" : "false";
        return;
      }
      const char* sep = p.kind == K::And ? " and " : " or ";
      for (std::size_t i = 0; i < p.children.size(); ++i) {
        if (i > 0) out += sep;
        const auto& c = p.children[i];
        bool parens = c.kind == K::Or || c.kind == K::ForAll || (c.kind == K::And && p.kind == K::And);
        render_child(c, parens, out);
      }
      return;
    }
    case K::Not: {
      out += "not ";
      const auto& c = p.children.at(0);
      render_child(c, c.kind == K::And || c.kind == K::Or || c.kind == K::ForAll, out);
      return;
    }
  }
}

}  // namespace detail

/// Parses the predicate surface syntax (see docs/predicate_grammar.md).
inline Predicate parse_predicate(std::string_view source, int max_depth = kDefaultMaxPredicateDepth) {
  return detail::PredicateParser(source, max_depth).parse();
}

inline std::string render_predicate(const Predicate& p) {
  std::string out;
  detail::render_into(p, out);
  return out;
}

enum class PredicateRole { Precondition, Postcondition };

namespace detail {

inline void check_path_scope(const Path& path, PredicateRole role, const std::vector<std::string>& bound) {
  if (path.is_result()) {
    if (role == PredicateRole::Precondition) {
      throw Error(Errc::NamespaceViolation, "precondition reads '" + render_path(path) + "'");
    }
  } else if (path.is_binder()) {
    if (std::find(bound.begin(), bound.end(), path.root) == bound.end()) {
      throw Error(Errc::BinderUnbound, "'" + path.root + "' is not bound by an enclosing forall");
    }
  }
  for (const auto& seg : path.segments) {
    if (seg.kind == Segment::Kind::Dynamic) check_path_scope(*seg.dynamic, role, bound);
  }
}

inline void check_scope(const Predicate& p, PredicateRole role, std::vector<std::string>& bound) {
  using K = Predicate::Kind;
  switch (p.kind) {
    case K::True:
    case K::False: return;
    case K::Compare:
      check_path_scope(p.path, role, bound);
      if (std::holds_alternative<Path>(p.rhs)) check_path_scope(std::get<Path>(p.rhs), role, bound);
      return;
    case K::ForAll:
      check_path_scope(p.path, role, bound);
      if (is_reserved_word(p.binder) || !is_identifier(p.binder)) {
        throw Error(Errc::SyntaxError, "invalid binder name '" + p.binder + "'");
      }
      bound.push_back(p.binder);
      check_scope(p.children.at(0), role, bound);
      bound.pop_back();
      return;
    case K::And:
    case K::Or:
    case K::Not:
      for (const auto& c : p.children) check_scope(c, role, bound);
      return;
    default: check_path_scope(p.path, role, bound); return;
  }
}

}  // namespace detail

/// Static validation: namespace restriction, binder scoping and depth.
/// Preconditions may only read `state.`; postconditions may also read
/// `result.`. Throws NamespaceViolation, BinderUnbound or DepthExceeded.
inline void validate_predicate(const Predicate& p, PredicateRole role,
                               int max_depth = kDefaultMaxPredicateDepth) {
  if (p.depth() > max_depth) throw Error(Errc::DepthExceeded, "predicate deeper than " + std::to_string(max_depth));
  std::vector<std::string> bound;
  detail::check_scope(p, role, bound);
}

/// Outcome of evaluating a predicate; when false, `failing_atom` is the first
/// sub-predicate responsible under left-to-right evaluation.
struct Evaluation {
  bool holds = true;
  std::optional<Predicate> failing_atom;
};

namespace detail {

struct Scope {
  const SymbolicState& state;
  const Value* result;
  std::vector<std::pair<std::string, const Value*>> bindings;

  const Value* binding(const std::string& name) const {
    for (auto it = bindings.rbegin(); it != bindings.rend(); ++it) {
      if (it->first == name) return it->second;
    }
    return nullptr;
  }

  const Value* operator()(const Path& p) const { return resolve(p); }

  const Value* resolve(const Path& p) const {
    if (p.is_state()) return lookup_in_state(state, p.segments, *this);
    if (p.is_result()) return result == nullptr ? nullptr : descend(result, p.segments, *this);
    const Value* base = binding(p.root);
    return base == nullptr ? nullptr : descend(base, p.segments, *this);
  }
};

inline bool compare_values(const Value& a, CompareOp op, const Value& b) {
  switch (op) {
    case CompareOp::Eq: return a == b;
    case CompareOp::Ne: return !(a == b);
    default: break;
  }
  int cmp = 0;
  if (a.is_number() && b.is_number()) {
    double x = a.as_number(), y = b.as_number();
    cmp = x < y ? -1 : (x > y ? 1 : 0);
  } else if (a.is_text() && b.is_text()) {
    int c = a.as_text().compare(b.as_text());
    cmp = c < 0 ? -1 : (c > 0 ? 1 : 0);
  } else {
    return false;
  }
  switch (op) {
    case CompareOp::Lt: return cmp < 0;
    case CompareOp::Le: return cmp <= 0;
    case CompareOp::Gt: return cmp > 0;
    case CompareOp::Ge: return cmp >= 0;
    default: return false;
  }
}

inline bool non_empty(const Value& v) {
  switch (v.tag()) {
    case TypeTag::Null: return false;
    case TypeTag::Text: return !v.as_text().empty();
    case TypeTag::List: return !v.as_list().empty();
    case TypeTag::Record: return !v.as_record().empty();
    default: return true;
  }
}

inline Evaluation fail_with(const Predicate& p) { return {false, p}; }

inline Evaluation evaluate(const Predicate& p, Scope& scope) {
  using K = Predicate::Kind;
  auto atom_result = [&](bool ok) { return ok ? Evaluation{} : fail_with(p); };
  switch (p.kind) {
    case K::True: return {};
    case K::False: return fail_with(p);
    case K::Exists:
    case K::HasField: return atom_result(scope.resolve(p.path) != nullptr);
    case K::IsList: {
      const Value* v = scope.resolve(p.path);
      return atom_result(v && v->is_list());
    }
    case K::IsNumeric: {
      const Value* v = scope.resolve(p.path);
      return atom_result(v && v->is_number());
    }
    case K::IsText: {
      const Value* v = scope.resolve(p.path);
      return atom_result(v && v->is_text());
    }
    case K::IsRecord: {
      const Value* v = scope.resolve(p.path);
      return atom_result(v && v->is_record());
    }
    case K::NonEmpty: {
      const Value* v = scope.resolve(p.path);
      return atom_result(v && non_empty(*v));
    }
    case K::Compare: {
      const Value* lhs = scope.resolve(p.path);
      const Value* rhs = std::holds_alternative<Path>(p.rhs) ? scope.resolve(std::get<Path>(p.rhs))
                                                            : &std::get<Value>(p.rhs);
      return atom_result(lhs && rhs && compare_values(*lhs, p.op, *rhs));
    }
    case K::ForAll: {
      const Value* list = scope.resolve(p.path);
      if (list == nullptr || !list->is_list()) return fail_with(p);
      for (const auto& element : list->as_list()) {
        scope.bindings.emplace_back(p.binder, &element);
        Evaluation e = evaluate(p.children.at(0), scope);
        scope.bindings.pop_back();
        if (!e.holds) return e;
      }
      return {};
    }
    case K::And:
      for (const auto& c : p.children) {
        Evaluation e = evaluate(c, scope);
        if (!e.holds) return e;
      }
      return {};
    case K::Or: {
      std::optional<Evaluation> first_failure;
      for (const auto& c : p.children) {
        Evaluation e = evaluate(c, scope);
        if (e.holds) return e;
        if (!first_failure) first_failure = std::move(e);
      }
      return first_failure ? std::move(*first_failure) : fail_with(p);
    }
    case K::Not: {
      Evaluation inner = evaluate(p.children.at(0), scope);
      return inner.holds ? fail_with(p) : Evaluation{};
    }
  }
  return fail_with(p);
}

}  // namespace detail

/// Two-valued evaluation; absent paths make atoms false.
inline Evaluation evaluate_predicate(const Predicate& p, const SymbolicState& state, const Value* result,
                                     const std::map<std::string, Value>& bindings = {}) {
  detail::Scope scope{state, result, {}};
  for (const auto& [name, v] : bindings) scope.bindings.emplace_back(name, &v);
  return detail::evaluate(p, scope);
}

inline bool eval_predicate(const Predicate& p, const SymbolicState& state, const Value* result,
                           const std::map<std::string, Value>& bindings = {}) {
  return evaluate_predicate(p, state, result, bindings).holds;
}

}  // namespace contractrt
