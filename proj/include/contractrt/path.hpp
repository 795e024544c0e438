#pragma once

#include <cctype>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contractrt/error.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

inline constexpr std::string_view kStateRoot = "state";
inline constexpr std::string_view kResultRoot = "result";

struct Path;

/// One step of a path: a member name, a list index, or a bracketed path whose
/// value (Text or non-negative integral Number) selects the member at run time.
struct Segment {
  enum class Kind { Name, Index, Dynamic };
  Kind kind = Kind::Name;
  std::string name;
  std::size_t index = 0;
  std::shared_ptr<const Path> dynamic;

  static Segment member(std::string n) { return {Kind::Name, std::move(n), 0, nullptr}; }
  static Segment at(std::size_t i) { return {Kind::Index, {}, i, nullptr}; }
  static Segment lookup(Path p);
};

/// `root(.segment | [path])*`, where root is `state`, `result`, or a binder.
struct Path {
  std::string root;
  std::vector<Segment> segments;

  bool is_state() const { return root == kStateRoot; }
  bool is_result() const { return root == kResultRoot; }
  bool is_binder() const { return !is_state() && !is_result(); }
};

inline Segment Segment::lookup(Path p) {
  return {Kind::Dynamic, {}, 0, std::make_shared<const Path>(std::move(p))};
}

inline bool operator==(const Path& a, const Path& b);

inline bool operator==(const Segment& a, const Segment& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Segment::Kind::Name: return a.name == b.name;
    case Segment::Kind::Index: return a.index == b.index;
    case Segment::Kind::Dynamic: return *a.dynamic == *b.dynamic;
  }
  return false;
}

inline bool operator==(const Path& a, const Path& b) {
  return a.root == b.root && a.segments == b.segments;
}

namespace detail {

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

inline bool is_identifier(std::string_view s) {
  if (s.empty() || !is_ident_start(s.front())) return false;
  for (char c : s) {
    if (!is_ident_char(c)) return false;
  }
  return true;
}

/// Character cursor shared by the path and predicate parsers.
class Scanner {
 public:
  explicit Scanner(std::string_view text, Errc errc = Errc::SyntaxError) : text_(text), errc_(errc) {}

  std::string_view text() const { return text_; }
  std::size_t pos() const { return pos_; }
  void set_pos(std::size_t p) { pos_ = p; }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }
  char get() { return at_end() ? '\0' : text_[pos_++]; }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }

  bool consume(std::string_view tok) {
    if (text_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  std::string identifier() {
    if (!is_ident_start(peek())) fail("expected identifier");
    std::size_t start = pos_;
    while (!at_end() && is_ident_char(peek())) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  /// Double-quoted string with `\"`, `\\`, `\n`, `\t` escapes.
  std::string quoted() {
    if (get() != '"') fail("expected '\"'");
    std::string out;
    while (true) {
      if (at_end()) fail("unterminated string");
      char c = get();
      if (c == '"') break;
      if (c == '\\') {
        char e = get();
        switch (e) {
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          default: fail("bad escape in string");
        }
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& message) const {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) {
      if (text_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(errc_, message + " at line " + std::to_string(line) + ", column " + std::to_string(col));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  Errc errc_;
};

inline std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  out.push_back('"');
  return out;
}

inline Path parse_path_at(Scanner& sc, int depth = 0) {
  if (depth > 16) sc.fail("path nesting too deep");
  Path path;
  path.root = sc.identifier();
  while (true) {
    if (sc.peek() == '.') {
      sc.get();
      char c = sc.peek();
      if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t idx = 0;
        while (std::isdigit(static_cast<unsigned char>(sc.peek()))) {
          idx = idx * 10 + static_cast<std::size_t>(sc.get() - '0');
          if (idx > (std::size_t{1} << 40)) sc.fail("list index too large");
        }
        path.segments.push_back(Segment::at(idx));
      } else if (c == '"') {
        path.segments.push_back(Segment::member(sc.quoted()));
      } else {
        path.segments.push_back(Segment::member(sc.identifier()));
      }
    } else if (sc.peek() == '[') {
      sc.get();
      sc.skip_ws();
      Path inner = parse_path_at(sc, depth + 1);
      sc.skip_ws();
      if (sc.get() != ']') sc.fail("expected ']'");
      path.segments.push_back(Segment::lookup(std::move(inner)));
    } else {
      break;
    }
  }
  return path;
}

}  // namespace detail

/// Parses a complete path expression; trailing characters are an error.
inline Path parse_path(std::string_view text) {
  detail::Scanner sc(text, Errc::MalformedPath);
  sc.skip_ws();
  Path p = detail::parse_path_at(sc);
  sc.skip_ws();
  if (!sc.at_end()) sc.fail("unexpected trailing characters in path");
  return p;
}

inline std::string render_path(const Path& p) {
  std::string out = p.root;
  for (const auto& seg : p.segments) {
    switch (seg.kind) {
      case Segment::Kind::Name:
        out += '.';
        out += detail::is_identifier(seg.name) ? seg.name : detail::quote(seg.name);
        break;
      case Segment::Kind::Index:
        out += '.';
        out += std::to_string(seg.index);
        break;
      case Segment::Kind::Dynamic:
        out += '[';
        out += render_path(*seg.dynamic);
        out += ']';
        break;
    }
  }
  return out;
}

/// Walks `segments` from `base`. `resolve_dynamic(const Path&)` must return
/// the value a bracketed segment refers to, or nullptr when absent.
template <class DynamicResolver>
const Value* descend(const Value* base, std::span<const Segment> segments, DynamicResolver&& resolve_dynamic) {
  const Value* cur = base;
  for (const auto& seg : segments) {
    if (cur == nullptr) return nullptr;
    switch (seg.kind) {
      case Segment::Kind::Name:
        cur = cur->find(seg.name);
        break;
      case Segment::Kind::Index:
        if (cur->is_list()) {
          const auto& list = cur->as_list();
          cur = seg.index < list.size() ? &list[seg.index] : nullptr;
        } else {
          cur = cur->find(std::to_string(seg.index));
        }
        break;
      case Segment::Kind::Dynamic: {
        const Value* key = resolve_dynamic(*seg.dynamic);
        if (key == nullptr) return nullptr;
        if (key->is_text()) {
          cur = cur->find(key->as_text());
        } else if (key->is_number()) {
          double d = key->as_number();
          if (d < 0 || d != std::trunc(d) || d > 1e15) return nullptr;
          auto idx = static_cast<std::size_t>(d);
          if (cur->is_list()) {
            const auto& list = cur->as_list();
            cur = idx < list.size() ? &list[idx] : nullptr;
          } else {
            cur = cur->find(std::to_string(idx));
          }
        } else {
          return nullptr;
        }
        break;
      }
    }
  }
  return cur;
}

}  // namespace contractrt
