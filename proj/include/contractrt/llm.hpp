#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contractrt/error.hpp"
#include "contractrt/message.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

/// System prompt sent as the first message of every reasoning request.
/// Must stay byte-identical to prompts/system_prompt.txt.
inline constexpr std::string_view kSystemPrompt = R"PROMPT(You are a helpful assistant that can use tools to answer user questions.

You have access to a set of tools and a symbolic state that tracks verified facts.

**Important Control Tokens:**
- When you need to use a tool, output: `<start_call_tool>`
- After tool results are provided, they will be wrapped in:
  `<start_tool_result>...</end_tool_result>`
- When you finish using tools, output: `<end_call_tool>`

**State Information:**
The current symbolic state contains verified facts. Use this information to:
1. Check if you have enough information to answer directly
2. Determine what information is missing and needs to be retrieved via tools
3. Understand what tools can be called based on the current state

**Tool Calling Process:**
1. Think about what information you need
2. Output `<start_call_tool>` followed by a brief description of what you need
3. Wait for tool results
4. Continue reasoning with the new information
5. Repeat if needed, or provide the final answer

**CRITICAL: When Tools Fail - Keep Trying!**
- If a tool call fails, DO NOT give up immediately. Consider:
  * Try a different tool that might provide similar information
  * Try the same tool with different parameters
  * Try alternative approaches or search strategies
  * Think about what other information sources might help
- Only provide a final answer when you are CONFIDENT you have:
  * Successfully retrieved the necessary information, OR
  * Exhausted all reasonable tool options and can provide a helpful answer
    based on available information
- Do NOT end reasoning prematurely just because one tool failed
- Be persistent and creative in finding alternative solutions

**Output Format:**
- If you can answer directly: Provide the answer without `<start_call_tool>`
- If you need tools: Output `<start_call_tool>` followed by your reasoning
  about what tool to use
- If tools fail: Think about alternatives and try again with
  `<start_call_tool>`
)PROMPT";

inline constexpr std::string_view kTaskInstructions =
    "Think step by step. If you need to use tools, output `<start_call_tool>`\n"
    "followed by a description of what you need.\n"
    "If a tool fails, think about alternative approaches and try other tools\n"
    "before giving up.\n"
    "Only provide the final answer when you are CONFIDENT you have enough\n"
    "information or have exhausted all reasonable options.";

inline constexpr double kDefaultTemperature = 0.2;
inline constexpr std::size_t kDefaultMaxTokens = 1024;

struct ReasonerRequest {
  std::vector<Message> messages;
  double temperature = kDefaultTemperature;
  std::size_t max_tokens = kDefaultMaxTokens;

  void validate() const {
    if (messages.empty()) throw Error(Errc::PreconditionViolation, "reasoner request has no messages");
    if (messages.front().role != Role::System) {
      throw Error(Errc::PreconditionViolation, "first message must be the system prompt");
    }
  }
};

struct ReasonerResponse {
  std::string text;
  std::string finish_reason;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

class Reasoner {
 public:
  virtual ~Reasoner() = default;
  virtual ReasonerResponse complete(const ReasonerRequest& request) = 0;
};

/// Replays canned assistant turns in call order.
class ScriptedReasoner final : public Reasoner {
 public:
  explicit ScriptedReasoner(std::vector<std::string> turns) : turns_(std::move(turns)) {}

  ReasonerResponse complete(const ReasonerRequest& request) override {
    request.validate();
    if (cursor_ >= turns_.size()) {
      throw Error(Errc::ScriptExhausted, "scripted reasoner has no turn " + std::to_string(cursor_ + 1));
    }
    requests_.push_back(request);
    ReasonerResponse r;
    r.text = turns_[cursor_++];
    r.finish_reason = "stop";
    return r;
  }

  std::size_t calls() const { return cursor_; }
  const std::vector<ReasonerRequest>& requests() const { return requests_; }

 private:
  std::vector<std::string> turns_;
  std::size_t cursor_ = 0;
  std::vector<ReasonerRequest> requests_;
};

inline std::string wrap_tool_result(const Value& result) {
  return std::string(kStartToolResult) + "\n" + render_compact(result) + "\n" + std::string(kEndToolResult);
}

/// Assembles one reasoning request: system prompt, prior dialogue `history`,
/// the state/query user message, the turns already exchanged in this
/// trajectory, and finally `pending_result` wrapped in result tags.
/// `committed_results` counts the results verified so far in the trajectory.
inline std::vector<Message> build_messages(const std::string& query, std::span<const Message> history,
                                           const std::string& state_summary, std::span<const Message> prior_turns,
                                           const std::optional<Value>& pending_result = std::nullopt,
                                           std::size_t committed_results = 0) {
  std::vector<Message> out;
  out.push_back({Role::System, std::string(kSystemPrompt)});
  out.insert(out.end(), history.begin(), history.end());

  std::string user = "**Current State:**\n";
  user += state_summary.empty() ? "(empty)" : state_summary;
  user += "\n\n**Tool Results:**\n";
  if (committed_results == 0 && !pending_result) {
    user += "(Empty on first call)";
  } else {
    std::size_t n = std::max<std::size_t>(committed_results, 1);
    user += "(" + std::to_string(n) + " verified result(s) provided below)";
  }
  user += "\n\n**User Query:** " + query + "\n\n**Your Task:**\n";
  user += kTaskInstructions;
  out.push_back({Role::User, std::move(user)});

  out.insert(out.end(), prior_turns.begin(), prior_turns.end());
  if (pending_result) out.push_back({Role::User, wrap_tool_result(*pending_result)});
  return out;
}

}  // namespace contractrt
