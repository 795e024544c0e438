#include <gtest/gtest.h>

#include <random>

#include "contractrt/predicate.hpp"

using namespace contractrt;

namespace {

using K = Predicate::Kind;

// ---- independent interpreter over plain JSON -------------------------------

struct OracleScope {
  const nlohmann::json& state;
  const nlohmann::json* result;
  std::vector<std::pair<std::string, const nlohmann::json*>> binds;
};

const nlohmann::json* oracle_resolve(const Path& p, const OracleScope& sc);

const nlohmann::json* oracle_step(const nlohmann::json* cur, const Segment& seg, const OracleScope& sc, bool at_state_root) {
  if (cur == nullptr) return nullptr;
  std::string key;
  std::optional<std::size_t> index;
  switch (seg.kind) {
    case Segment::Kind::Name: key = seg.name; break;
    case Segment::Kind::Index: index = seg.index; break;
    case Segment::Kind::Dynamic: {
      const nlohmann::json* k = oracle_resolve(*seg.dynamic, sc);
      if (k == nullptr) return nullptr;
      if (k->is_string()) {
        key = k->get<std::string>();
      } else if (k->is_number() && !at_state_root) {
        double d = k->get<double>();
        if (d < 0 || d != std::floor(d) || d > 1e15) return nullptr;
        index = static_cast<std::size_t>(d);
      } else {
        return nullptr;
      }
      break;
    }
  }
  if (index) {
    if (cur->is_array()) return *index < cur->size() ? &(*cur)[*index] : nullptr;
    key = std::to_string(*index);
  }
  if (!cur->is_object()) return nullptr;
  auto it = cur->find(key);
  return it == cur->end() ? nullptr : &*it;
}

const nlohmann::json* oracle_resolve(const Path& p, const OracleScope& sc) {
  const nlohmann::json* cur = nullptr;
  if (p.root == "state") {
    if (p.segments.empty()) return nullptr;
    cur = &sc.state;
  } else if (p.root == "result") {
    cur = sc.result;
  } else {
    for (auto it = sc.binds.rbegin(); it != sc.binds.rend(); ++it) {
      if (it->first == p.root) {
        cur = it->second;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < p.segments.size(); ++i) cur = oracle_step(cur, p.segments[i], sc, p.root == "state" && i == 0);
  return cur;
}

bool oracle_non_empty(const nlohmann::json& j) {
  if (j.is_null()) return false;
  if (j.is_string()) return !j.get<std::string>().empty();
  if (j.is_array() || j.is_object()) return !j.empty();
  return true;
}

bool oracle_compare(const nlohmann::json& a, CompareOp op, const nlohmann::json& b) {
  if (op == CompareOp::Eq) return a == b;
  if (op == CompareOp::Ne) return a != b;
  bool nums = a.is_number() && b.is_number();
  bool texts = a.is_string() && b.is_string();
  if (!nums && !texts) return false;
  bool lt = nums ? a.get<double>() < b.get<double>() : a.get<std::string>() < b.get<std::string>();
  bool gt = nums ? a.get<double>() > b.get<double>() : a.get<std::string>() > b.get<std::string>();
  switch (op) {
    case CompareOp::Lt: return lt;
    case CompareOp::Le: return !gt;
    case CompareOp::Gt: return gt;
    case CompareOp::Ge: return !lt;
    default: return false;
  }
}

// Returns the responsible sub-predicate on failure, nullptr on success.
const Predicate* oracle_eval(const Predicate& p, OracleScope& sc) {
  auto atom = [&](bool ok) { return ok ? nullptr : &p; };
  switch (p.kind) {
    case K::True: return nullptr;
    case K::False: return &p;
    case K::Exists:
    case K::HasField: return atom(oracle_resolve(p.path, sc) != nullptr);
    case K::IsList: { auto v = oracle_resolve(p.path, sc); return atom(v && v->is_array()); }
    case K::IsNumeric: { auto v = oracle_resolve(p.path, sc); return atom(v && v->is_number()); }
    case K::IsText: { auto v = oracle_resolve(p.path, sc); return atom(v && v->is_string()); }
    case K::IsRecord: { auto v = oracle_resolve(p.path, sc); return atom(v && v->is_object()); }
    case K::NonEmpty: { auto v = oracle_resolve(p.path, sc); return atom(v && oracle_non_empty(*v)); }
    case K::Compare: {
      auto l = oracle_resolve(p.path, sc);
      nlohmann::json lit;
      const nlohmann::json* r = nullptr;
      if (std::holds_alternative<Path>(p.rhs)) {
        r = oracle_resolve(std::get<Path>(p.rhs), sc);
      } else {
        lit = to_json(std::get<Value>(p.rhs));
        r = &lit;
      }
      return atom(l && r && oracle_compare(*l, p.op, *r));
    }
    case K::ForAll: {
      auto list = oracle_resolve(p.path, sc);
      if (!list || !list->is_array()) return &p;
      for (const auto& e : *list) {
        sc.binds.emplace_back(p.binder, &e);
        const Predicate* f = oracle_eval(p.children[0], sc);
        sc.binds.pop_back();
        if (f) return f;
      }
      return nullptr;
    }
    case K::And:
      for (const auto& c : p.children) {
        if (auto f = oracle_eval(c, sc)) return f;
      }
      return nullptr;
    case K::Or: {
      const Predicate* first = nullptr;
      for (const auto& c : p.children) {
        auto f = oracle_eval(c, sc);
        if (!f) return nullptr;
        if (!first) first = f;
      }
      return first ? first : &p;
    }
    case K::Not: return oracle_eval(p.children[0], sc) ? nullptr : &p;
  }
  return &p;
}

// ---- generators -------------------------------------------------------------

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int pick(int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); }
  bool coin(int percent) { return pick(100) < percent; }

  nlohmann::json value(int depth) {
    switch (pick(depth > 0 ? 8 : 5)) {
      case 0: return nullptr;
      case 1: return pick(2) == 1;
      case 2: return pick(7) - 3;
      case 3: return std::vector<std::string>{"x", "y", "", "a"}[static_cast<std::size_t>(pick(4))];
      case 4: return (pick(9) - 4) / 2.0;
      case 5:
      case 6: {
        auto arr = nlohmann::json::array();
        for (int i = pick(4); i > 0; --i) arr.push_back(value(depth - 1));
        return arr;
      }
      default: {
        auto obj = nlohmann::json::object();
        for (int i = pick(4); i > 0; --i) obj[std::vector<std::string>{"x", "y", "a", "0"}[static_cast<std::size_t>(pick(4))]] = value(depth - 1);
        return obj;
      }
    }
  }

  nlohmann::json state_doc() {
    nlohmann::json doc = nlohmann::json::object();
    for (std::string k : {"a", "b", "c", "x"}) {
      if (coin(80)) doc[k] = value(3);
    }
    return doc;
  }

  Segment segment(const std::vector<std::string>& binders, int depth) {
    switch (pick(depth < 1 ? 6 : 4)) {
      case 0:
      case 1: return Segment::member(std::vector<std::string>{"x", "y", "a", "b"}[static_cast<std::size_t>(pick(4))]);
      case 2:
      case 3: return Segment::at(static_cast<std::size_t>(pick(3)));
      default: return Segment::lookup(path(binders, depth + 1, false));
    }
  }

  Path path(const std::vector<std::string>& binders, int depth = 0, bool allow_result = true) {
    Path p;
    int r = pick(10);
    if (!binders.empty() && r < 3) {
      p.root = binders[static_cast<std::size_t>(pick(static_cast<int>(binders.size())))];
    } else if (allow_result && r < 5) {
      p.root = "result";
    } else {
      p.root = "state";
      p.segments.push_back(Segment::member(std::vector<std::string>{"a", "b", "c", "x", "zz"}[static_cast<std::size_t>(pick(5))]));
    }
    for (int i = pick(3); i > 0; --i) p.segments.push_back(segment(binders, depth));
    return p;
  }

  Value literal() {
    switch (pick(5)) {
      case 0: return Value(pick(7) - 3);
      case 1: return Value((pick(9) - 4) / 2.0);
      case 2: return Value(std::vector<std::string>{"x", "y", "", "a b\"c"}[static_cast<std::size_t>(pick(4))]);
      case 3: return Value(pick(2) == 1);
      default: return Value();
    }
  }

  Predicate predicate(int depth, std::vector<std::string>& binders) {
    int r = pick(depth <= 0 ? 9 : 14);
    if (r < 7) {
      static const K atoms[] = {K::Exists, K::HasField, K::IsList, K::IsNumeric, K::IsText, K::IsRecord, K::NonEmpty};
      if (r == 0) return Predicate::exists(std::vector<std::string>{"a", "b", "c", "x", "zz"}[static_cast<std::size_t>(pick(5))]);
      return Predicate::atom(atoms[r], path(binders));
    }
    if (r == 7) {
      auto op = static_cast<CompareOp>(pick(6));
      if (coin(40)) return Predicate::compare(path(binders), op, path(binders));
      return Predicate::compare(path(binders), op, literal());
    }
    if (r == 8) return coin(50) ? Predicate::truth() : Predicate::falsity();
    if (r == 9) return Predicate::negate(predicate(depth - 1, binders));
    if (r == 10) {
      std::string b = binders.size() % 2 == 0 ? "v" + std::to_string(binders.size()) : "item";
      Path list = path(binders);
      binders.push_back(b);
      Predicate body = predicate(depth - 1, binders);
      binders.pop_back();
      return Predicate::forall(b, std::move(list), std::move(body));
    }
    std::vector<Predicate> kids;
    for (int i = 2 + pick(2); i > 0; --i) kids.push_back(predicate(depth - 1, binders));
    return r < 12 ? Predicate::conj(std::move(kids)) : Predicate::disj(std::move(kids));
  }
};

SymbolicState state_from_doc(const nlohmann::json& doc) {
  std::vector<SeedEntry> seeds;
  for (const auto& [k, v] : doc.items()) {
    Value val = from_json(v);
    TypeTag t = val.tag();
    seeds.push_back({k, std::move(val), t});
  }
  return init_state(seeds);
}

Errc parse_error_code(const std::string& text) {
  try {
    parse_predicate(text);
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

}  // namespace

TEST(PredicateParser, ParsesTheContractDsl) {
  Predicate p = parse_predicate(
      "has_field(result.results) and is_list(result.results) and "
      "forall video in result.results: has_field(video.title) and has_field(video.url)");
  ASSERT_EQ(p.kind, K::And);
  ASSERT_EQ(p.children.size(), 3u);
  const Predicate& fa = p.children[2];
  ASSERT_EQ(fa.kind, K::ForAll);
  EXPECT_EQ(fa.binder, "video");
  // the quantifier body extends to the end
  EXPECT_EQ(fa.children[0].kind, K::And);
  EXPECT_EQ(fa.children[0].children.size(), 2u);
}

TEST(PredicateParser, PrecedenceNotOverAndOverOr) {
  Predicate p = parse_predicate("not exists(state.a) and exists(state.b) or exists(state.c)");
  ASSERT_EQ(p.kind, K::Or);
  ASSERT_EQ(p.children[0].kind, K::And);
  EXPECT_EQ(p.children[0].children[0].kind, K::Not);
}

TEST(PredicateParser, ComparisonsAndLiterals) {
  Predicate p = parse_predicate("result.n >= -2.5 and result.tag != \"a\\\"b\" and result.x == null and result.y = true");
  ASSERT_EQ(p.children.size(), 4u);
  EXPECT_EQ(p.children[0].op, CompareOp::Ge);
  EXPECT_EQ(std::get<Value>(p.children[0].rhs), Value(-2.5));
  EXPECT_EQ(std::get<Value>(p.children[1].rhs), Value("a\"b"));
  EXPECT_EQ(std::get<Value>(p.children[2].rhs), Value());
  EXPECT_EQ(p.children[3].op, CompareOp::Eq);
  Predicate q = parse_predicate("result == state.fs[state.cwd]");
  ASSERT_TRUE(std::holds_alternative<Path>(q.rhs));
  EXPECT_EQ(render_path(std::get<Path>(q.rhs)), "state.fs[state.cwd]");
}

TEST(PredicateParser, SyntaxErrors) {
  for (std::string bad : {"", "exists(", "exists(state.a", "and exists(state.a)", "exists(state.a) and", "forall in x: true",
                          "forall x state.l: true", "forall and in state.l: true", "state.a ~ 3", "frobnicate(state.a)",
                          "(exists(state.a)", "exists(state.a))", "state.a == \"unterminated"}) {
    EXPECT_EQ(parse_error_code(bad), Errc::SyntaxError) << bad;
  }
}

TEST(PredicateParser, ErrorsCarryPosition) {
  try {
    parse_predicate("exists(state.a) and\n  bogus(");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(PredicateParser, DepthLimit) {
  std::string deep;
  for (int i = 0; i < 80; ++i) deep += "not ";
  deep += "true";
  EXPECT_NE(parse_error_code(deep), Errc::InvalidArgument);
  EXPECT_NO_THROW(parse_predicate(deep, 200));
}

TEST(PredicateParser, RenderParseRoundTripProperty) {
  Gen g(2024);
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::string> binders;
    Predicate p = g.predicate(4, binders);
    std::string text = render_predicate(p);
    Predicate back = parse_predicate(text);
    ASSERT_TRUE(back == p) << text << "\n  re-rendered: " << render_predicate(back);
    EXPECT_EQ(render_predicate(back), text);
  }
}

TEST(PredicateEval, MatchesIndependentInterpreter) {
  Gen g(77);
  int held = 0;
  for (int i = 0; i < 3000; ++i) {
    nlohmann::json doc = g.state_doc();
    SymbolicState state = state_from_doc(doc);
    nlohmann::json result_doc = g.value(3);
    Value result = from_json(result_doc);
    std::vector<std::string> binders;
    Predicate p = g.predicate(3, binders);

    OracleScope sc{doc, &result_doc, {}};
    const Predicate* expected = oracle_eval(p, sc);
    Evaluation got = evaluate_predicate(p, state, &result);
    ASSERT_EQ(got.holds, expected == nullptr) << render_predicate(p) << "\nstate " << doc.dump() << "\nresult "
                                              << result_doc.dump();
    if (expected) {
      ASSERT_TRUE(got.failing_atom.has_value());
      EXPECT_TRUE(*got.failing_atom == *expected) << render_predicate(p) << "\n  got " << render_predicate(*got.failing_atom)
                                                 << "\n  want " << render_predicate(*expected);
    }
    held += got.holds ? 1 : 0;
  }
  // the generator should exercise both verdicts
  EXPECT_GT(held, 300);
  EXPECT_LT(held, 2700);
}

TEST(PredicateEval, AbsentResultMakesResultAtomsFalse) {
  SymbolicState s = state_from_doc({{"a", 1}});
  EXPECT_FALSE(eval_predicate(parse_predicate("has_field(result.x)"), s, nullptr));
  EXPECT_TRUE(eval_predicate(parse_predicate("not has_field(result.x)"), s, nullptr));
}

TEST(PredicateEval, DynamicSegments) {
  SymbolicState s = state_from_doc({{"cwd", "/repo"}, {"fs", {{"/repo", {"a", "b"}}}}});
  EXPECT_TRUE(eval_predicate(parse_predicate("has_field(state.fs[state.cwd])"), s, nullptr));
  Value listing(Value::List{Value("a"), Value("b")});
  EXPECT_TRUE(eval_predicate(parse_predicate("result == state.fs[state.cwd]"), s, &listing));
  Value other(Value::List{Value("a")});
  EXPECT_FALSE(eval_predicate(parse_predicate("result == state.fs[state.cwd]"), s, &other));
}

TEST(PredicateEval, FailingAtomRules) {
  SymbolicState s = state_from_doc({{"a", 1}});
  Value r(Value::Record{{"temperature", Value(72)}, {"condition", Value("sunny")}});
  auto failing = [&](const std::string& text) {
    Evaluation e = evaluate_predicate(parse_predicate(text), s, &r);
    return e.holds ? std::string("<holds>") : render_predicate(*e.failing_atom);
  };
  EXPECT_EQ(failing("has_field(result.temperature) and has_field(result.humidity) and is_text(result.nope)"),
            "has_field(result.humidity)");
  EXPECT_EQ(failing("has_field(result.x) or is_text(result.temperature)"), "has_field(result.x)");
  EXPECT_EQ(failing("not has_field(result.condition)"), "not has_field(result.condition)");
  EXPECT_EQ(failing("forall v in result.list: true"), "forall v in result.list: true");
  EXPECT_EQ(failing("false"), "false");
  EXPECT_EQ(failing("has_field(result.condition) or true"), "<holds>");
}

TEST(PredicateEval, ForAllOverEmptyListHolds) {
  SymbolicState s = state_from_doc({{"l", nlohmann::json::array()}});
  EXPECT_TRUE(eval_predicate(parse_predicate("forall x in state.l: false"), s, nullptr));
}

TEST(PredicateEval, OrderingOnlyBetweenLikeScalars) {
  SymbolicState s = state_from_doc({{"n", 3}, {"t", "b"}, {"l", {1}}});
  EXPECT_TRUE(eval_predicate(parse_predicate("state.n < 4 and state.t > \"a\""), s, nullptr));
  EXPECT_FALSE(eval_predicate(parse_predicate("state.n < \"4\""), s, nullptr));
  EXPECT_FALSE(eval_predicate(parse_predicate("state.l >= state.l"), s, nullptr));
  EXPECT_TRUE(eval_predicate(parse_predicate("state.l == state.l"), s, nullptr));
}

TEST(PredicateValidate, NamespaceAndBinders) {
  auto code = [](const std::string& text, PredicateRole role) {
    try {
      validate_predicate(parse_predicate(text), role);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::InvalidArgument;
  };
  EXPECT_EQ(code("has_field(result.x)", PredicateRole::Precondition), Errc::NamespaceViolation);
  EXPECT_EQ(code("state.a == state.b[result.k]", PredicateRole::Precondition), Errc::NamespaceViolation);
  EXPECT_EQ(code("has_field(result.x)", PredicateRole::Postcondition), Errc::InvalidArgument);
  EXPECT_EQ(code("has_field(v.title)", PredicateRole::Postcondition), Errc::BinderUnbound);
  EXPECT_EQ(code("forall v in result.l: has_field(v.title)", PredicateRole::Postcondition), Errc::InvalidArgument);
  EXPECT_EQ(code("(forall v in result.l: true) and has_field(v.x)", PredicateRole::Postcondition), Errc::BinderUnbound);

  Predicate deep = Predicate::truth();
  for (int i = 0; i < 70; ++i) deep = Predicate::negate(deep);
  try {
    validate_predicate(deep, PredicateRole::Postcondition);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DepthExceeded);
  }
}
