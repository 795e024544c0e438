#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "contractrt/error.hpp"
#include "contractrt/message.hpp"
#include "contractrt/registry.hpp"
#include "contractrt/state.hpp"

namespace contractrt {

struct RequirementOrigin {
  std::string query_digest;
  std::vector<std::string> state_keys;
  std::string last_reasoning_excerpt;

  bool empty() const { return query_digest.empty() && state_keys.empty() && last_reasoning_excerpt.empty(); }
};

struct Requirement {
  std::string text;
  RequirementOrigin origin;
};

/// Fixed template: the query, the sorted state keys, then the description of
/// the most recent tool call found in `reasoning_turns` (newest last) or in
/// the assistant turns of `history`.
inline Requirement build_requirement(const std::string& query, std::span<const Message> history,
                                     const SymbolicState& state, std::span<const std::string> reasoning_turns) {
  Requirement req;
  if (!query.empty()) req.origin.query_digest = hex64(fnv1a64(query));
  req.origin.state_keys = state.sorted_keys();
  for (auto it = reasoning_turns.rbegin(); it != reasoning_turns.rend() && req.origin.last_reasoning_excerpt.empty();
       ++it) {
    req.origin.last_reasoning_excerpt = latest_call_description(*it);
  }
  for (auto it = history.rbegin(); it != history.rend() && req.origin.last_reasoning_excerpt.empty(); ++it) {
    if (it->role == Role::Assistant) req.origin.last_reasoning_excerpt = latest_call_description(it->content);
  }

  req.text = "query: " + query + "\nstate keys: ";
  for (std::size_t i = 0; i < req.origin.state_keys.size(); ++i) {
    if (i > 0) req.text += ", ";
    req.text += req.origin.state_keys[i];
  }
  if (!req.origin.last_reasoning_excerpt.empty()) req.text += "\ncall: " + req.origin.last_reasoning_excerpt;
  return req;
}

struct RerankCandidate {
  std::string tool_id;
  std::string document;
  double retrieval_score = 0.0;
};

class Reranker {
 public:
  virtual ~Reranker() = default;
  virtual std::string name() const = 0;
  /// One raw score per candidate, in candidate order.
  virtual std::vector<double> score(const std::string& requirement, std::span<const RerankCandidate> candidates) const = 0;
};

/// Passes the retrieval cosine through unchanged.
class CosineReranker final : public Reranker {
 public:
  std::string name() const override { return "cosine-passthrough"; }
  std::vector<double> score(const std::string&, std::span<const RerankCandidate> candidates) const override {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) out.push_back(c.retrieval_score);
    return out;
  }
};

/// Scripted scores keyed by tool id; unknown tools get `fallback`.
class FixedScoreReranker final : public Reranker {
 public:
  explicit FixedScoreReranker(std::map<std::string, double> scores, double fallback = 0.0)
      : scores_(std::move(scores)), fallback_(fallback) {}

  std::string name() const override {
    std::string n = "fixed";
    for (const auto& [id, s] : scores_) n += ";" + id + "=" + nlohmann::json(s).dump();
    return n;
  }

  std::vector<double> score(const std::string&, std::span<const RerankCandidate> candidates) const override {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
      auto it = scores_.find(c.tool_id);
      out.push_back(it == scores_.end() ? fallback_ : it->second);
    }
    return out;
  }

 private:
  std::map<std::string, double> scores_;
  double fallback_;
};

/// Probability mass over tool ids; `support` keeps candidate order.
struct RankDistribution {
  std::vector<std::string> support;
  std::map<std::string, double> scores;

  double at(const std::string& id) const {
    auto it = scores.find(id);
    return it == scores.end() ? 0.0 : it->second;
  }

  double total() const {
    double sum = 0.0;
    for (const auto& id : support) sum += at(id);
    return sum;
  }

  bool valid(double tol = 1e-9) const {
    if (support.size() != scores.size()) return false;
    for (const auto& id : support) {
      auto it = scores.find(id);
      if (it == scores.end() || !(it->second >= 0.0)) return false;
    }
    return std::fabs(total() - 1.0) <= tol;
  }
};

/// Raw scores -> distribution: shift by the minimum only when some score is
/// negative, then divide by the sum. All-zero scores become uniform.
inline RankDistribution normalize_scores(std::span<const std::string> ids, std::span<const double> raw) {
  if (ids.empty()) throw Error(Errc::EmptyDistribution, "no candidates to normalize");
  if (ids.size() != raw.size()) throw Error(Errc::RerankerFailure, "reranker returned wrong number of scores");
  double lo = 0.0;
  for (double s : raw) {
    if (!std::isfinite(s)) throw Error(Errc::RerankerFailure, "non-finite reranker score");
    lo = std::min(lo, s);
  }
  std::vector<double> shifted(raw.begin(), raw.end());
  double sum = 0.0;
  for (double& s : shifted) {
    s -= lo;
    sum += s;
  }
  RankDistribution d;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (d.scores.count(ids[i])) throw Error(Errc::InvalidArgument, "duplicate candidate '" + ids[i] + "'");
    d.support.push_back(ids[i]);
    d.scores[ids[i]] = sum > 0.0 ? shifted[i] / sum : 1.0 / static_cast<double>(ids.size());
  }
  return d;
}

inline RankDistribution rerank(std::span<const RerankCandidate> candidates, const Requirement& requirement,
                               const Reranker& reranker) {
  if (candidates.empty()) throw Error(Errc::EmptyDistribution, "rerank needs at least one candidate");
  std::vector<double> raw = reranker.score(requirement.text, candidates);
  std::vector<std::string> ids;
  ids.reserve(candidates.size());
  for (const auto& c : candidates) ids.push_back(c.tool_id);
  return normalize_scores(ids, raw);
}

/// Admissibility mask over the candidate set (precondition holds).
struct AdmissibleSet {
  std::map<std::string, bool> mask;

  bool admits(const std::string& id) const {
    auto it = mask.find(id);
    return it != mask.end() && it->second;
  }
};

/// Zeroes inadmissible tools and renormalizes the rest. If every admissible
/// tool has zero mass the admissible tools share the mass uniformly.
inline RankDistribution filter_renormalize(const RankDistribution& dist, const AdmissibleSet& admissible) {
  if (admissible.mask.size() != dist.support.size()) {
    throw Error(Errc::InvalidArgument, "mask and distribution cover different tools");
  }
  double sum = 0.0;
  std::size_t admitted = 0;
  for (const auto& id : dist.support) {
    if (!admissible.mask.count(id)) throw Error(Errc::InvalidArgument, "mask lacks tool '" + id + "'");
    if (admissible.admits(id)) {
      sum += dist.at(id);
      ++admitted;
    }
  }
  if (admitted == 0) throw Error(Errc::NoAdmissibleTool, "no candidate satisfies its precondition");
  RankDistribution out;
  out.support = dist.support;
  for (const auto& id : dist.support) {
    double p = 0.0;
    if (admissible.admits(id)) p = sum > 0.0 ? dist.at(id) / sum : 1.0 / static_cast<double>(admitted);
    out.scores[id] = p;
  }
  return out;
}

enum class SelectionMode { Greedy, Sample };

constexpr std::string_view to_string(SelectionMode m) { return m == SelectionMode::Greedy ? "greedy" : "sample"; }

inline SelectionMode parse_selection_mode(std::string_view s) {
  if (s == "greedy") return SelectionMode::Greedy;
  if (s == "sample") return SelectionMode::Sample;
  throw Error(Errc::InvalidArgument, "unknown selection mode '" + std::string(s) + "'");
}

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Argmax with ascending tool_id tie-break.
inline std::string greedy_tool(const RankDistribution& dist) {
  const std::string* best = nullptr;
  double best_p = 0.0;
  for (const auto& id : dist.support) {
    double p = dist.at(id);
    if (p <= 0.0) continue;
    if (best == nullptr || p > best_p || (p == best_p && id < *best)) {
      best = &id;
      best_p = p;
    }
  }
  if (best == nullptr) throw Error(Errc::EmptyDistribution, "distribution has no positive mass");
  return *best;
}

/// Draws a tool with positive mass; greedy mode returns the argmax.
inline std::string sample_tool(const RankDistribution& dist, std::mt19937_64& rng,
                               SelectionMode mode = SelectionMode::Sample) {
  if (mode == SelectionMode::Greedy) return greedy_tool(dist);
  double total = 0.0;
  const std::string* last_positive = nullptr;
  for (const auto& id : dist.support) {
    double p = dist.at(id);
    if (p > 0.0) {
      total += p;
      last_positive = &id;
    }
  }
  if (last_positive == nullptr) throw Error(Errc::EmptyDistribution, "distribution has no positive mass");
  double u = unit_draw(rng) * total;
  double cum = 0.0;
  for (const auto& id : dist.support) {
    double p = dist.at(id);
    if (p <= 0.0) continue;
    cum += p;
    if (u < cum) return id;
  }
  return *last_positive;
}

inline std::string sample_tool(const RankDistribution& dist, std::uint64_t seed,
                               SelectionMode mode = SelectionMode::Sample) {
  std::mt19937_64 rng(seed);
  return sample_tool(dist, rng, mode);
}

}  // namespace contractrt
