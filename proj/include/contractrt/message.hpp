#pragma once

#include <string>
#include <string_view>

#include "contractrt/error.hpp"

namespace contractrt {

enum class Role { System, User, Assistant };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

inline Role parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(Errc::ParseError, "unknown message role '" + std::string(s) + "'");
}

struct Message {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const Message&, const Message&) = default;
};

// Control tokens exchanged with the reasoner.
inline constexpr std::string_view kStartCallTool = "<start_call_tool>";
inline constexpr std::string_view kEndCallTool = "<end_call_tool>";
inline constexpr std::string_view kStartToolResult = "<start_tool_result>";
inline constexpr std::string_view kEndToolResult = "<end_tool_result>";

inline std::string_view trim(std::string_view s) {
  const char* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

/// Text following the last `<start_call_tool>` up to `<end_call_tool>` (or
/// the end), trimmed; empty when the token is absent.
inline std::string latest_call_description(std::string_view text) {
  auto start = text.rfind(kStartCallTool);
  if (start == std::string_view::npos) return {};
  auto body = text.substr(start + kStartCallTool.size());
  auto end = body.find(kEndCallTool);
  if (end != std::string_view::npos) body = body.substr(0, end);
  return std::string(trim(body));
}

}  // namespace contractrt
