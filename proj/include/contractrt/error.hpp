#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace contractrt {

enum class Errc {
  DuplicateKey,
  TypeMismatch,
  MalformedPath,
  ResultPathAbsent,
  AppendToNonList,
  DepthExceeded,
  SyntaxError,
  NamespaceViolation,
  BinderUnbound,
  ParseError,
  DuplicateToolId,
  EmbedderFailure,
  EmptyIndex,
  RerankerFailure,
  NoAdmissibleTool,
  EmptyDistribution,
  UnresolvedRequiredParam,
  ConfigurationError,
  LogCorrupt,
  UnknownTool,
  DanglingReference,
  ScriptExhausted,
  PreconditionViolation,
  Transport,
  Auth,
  RateLimit,
  InvalidArgument,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::DuplicateKey: return "DuplicateKey";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::MalformedPath: return "MalformedPath";
    case Errc::ResultPathAbsent: return "ResultPathAbsent";
    case Errc::AppendToNonList: return "AppendToNonList";
    case Errc::DepthExceeded: return "DepthExceeded";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::NamespaceViolation: return "NamespaceViolation";
    case Errc::BinderUnbound: return "BinderUnbound";
    case Errc::ParseError: return "ParseError";
    case Errc::DuplicateToolId: return "DuplicateToolId";
    case Errc::EmbedderFailure: return "EmbedderFailure";
    case Errc::EmptyIndex: return "EmptyIndex";
    case Errc::RerankerFailure: return "RerankerFailure";
    case Errc::NoAdmissibleTool: return "NoAdmissibleTool";
    case Errc::EmptyDistribution: return "EmptyDistribution";
    case Errc::UnresolvedRequiredParam: return "UnresolvedRequiredParam";
    case Errc::ConfigurationError: return "ConfigurationError";
    case Errc::LogCorrupt: return "LogCorrupt";
    case Errc::UnknownTool: return "UnknownTool";
    case Errc::DanglingReference: return "DanglingReference";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::PreconditionViolation: return "PreconditionViolation";
    case Errc::Transport: return "Transport";
    case Errc::Auth: return "Auth";
    case Errc::RateLimit: return "RateLimit";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// All library failures surface as this exception; `code()` identifies the
/// failure kind so callers can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace contractrt
