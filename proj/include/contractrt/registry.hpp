#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "contractrt/error.hpp"
#include "contractrt/value.hpp"

namespace contractrt {

inline constexpr std::size_t kDefaultTopK = 10;

struct ParameterSpec {
  std::string name;
  TypeTag type_tag = TypeTag::Text;
  bool required = false;
};

struct ToolSpec {
  std::string tool_id;
  std::string name;
  std::string api_name;
  std::string category;
  std::string description;
  std::vector<ParameterSpec> parameters;
  std::string docs;

  /// Text the index embeds for this tool.
  std::string embedding_text() const {
    std::string text = name + "\n" + description + "\n" + docs + "\n";
    for (std::size_t i = 0; i < parameters.size(); ++i) {
      if (i > 0) text += ' ';
      text += parameters[i].name;
    }
    return text;
  }
};

namespace detail {

inline std::string id_fragment(std::string_view s) {
  std::string out;
  for (char c : s) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

}  // namespace detail

/// Reads one tool document: `{tool_id?, tool_name, api_name, category,
/// description, docs, tool_input: [{name, type, required}]}`. Without an
/// explicit tool_id the id is `<tool_name>_<api_name>` with non-alphanumerics
/// replaced by underscores.
inline ToolSpec tool_spec_from_json(const nlohmann::json& j) {
  try {
    ToolSpec spec;
    spec.name = j.value("tool_name", std::string());
    spec.api_name = j.value("api_name", std::string());
    spec.category = j.value("category", std::string());
    spec.description = j.value("description", std::string());
    spec.docs = j.value("docs", std::string());
    if (j.contains("tool_id")) {
      spec.tool_id = j.at("tool_id").get<std::string>();
    } else {
      spec.tool_id = detail::id_fragment(spec.name) + "_" + detail::id_fragment(spec.api_name);
    }
    if (spec.tool_id.empty() || spec.tool_id == "_") throw Error(Errc::ParseError, "tool document without an id");
    if (spec.name.empty()) spec.name = spec.tool_id;
    std::set<std::string> seen;
    if (j.contains("tool_input")) {
      for (const auto& p : j.at("tool_input")) {
        ParameterSpec param;
        param.name = p.at("name").get<std::string>();
        param.type_tag = parse_type_tag(p.value("type", std::string("TextType")));
        param.required = p.value("required", false);
        if (!seen.insert(param.name).second) {
          throw Error(Errc::ParseError, "tool '" + spec.tool_id + "' repeats parameter '" + param.name + "'");
        }
        spec.parameters.push_back(std::move(param));
      }
    }
    return spec;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ParseError, std::string("tool document: ") + ex.what());
  }
}

inline nlohmann::json to_json(const ToolSpec& spec) {
  nlohmann::json j;
  j["tool_id"] = spec.tool_id;
  j["tool_name"] = spec.name;
  j["api_name"] = spec.api_name;
  j["category"] = spec.category;
  j["description"] = spec.description;
  j["docs"] = spec.docs;
  auto params = nlohmann::json::array();
  for (const auto& p : spec.parameters) {
    params.push_back({{"name", p.name}, {"type", std::string(to_string(p.type_tag))}, {"required", p.required}});
  }
  j["tool_input"] = params;
  return j;
}

inline std::vector<ToolSpec> load_tool_specs(std::span<const nlohmann::json> documents) {
  std::vector<ToolSpec> specs;
  std::set<std::string> ids;
  for (const auto& doc : documents) {
    ToolSpec spec = tool_spec_from_json(doc);
    if (!ids.insert(spec.tool_id).second) {
      throw Error(Errc::DuplicateToolId, "tool id '" + spec.tool_id + "' appears twice");
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

inline std::vector<ToolSpec> load_tool_specs(const std::vector<nlohmann::json>& documents) {
  return load_tool_specs(std::span<const nlohmann::json>(documents));
}

struct EmbeddingVector {
  std::vector<double> components;

  std::size_t dimension() const { return components.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::string fingerprint() const = 0;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const = 0;

  EmbeddingVector embed_one(const std::string& text) const {
    auto out = embed(std::span<const std::string>(&text, 1));
    if (out.size() != 1) throw Error(Errc::EmbedderFailure, "embedder returned wrong number of vectors");
    return std::move(out.front());
  }
};

/// Feature-hashed token counts, L2-normalized. Tokens are maximal runs of
/// ASCII letters and digits, lowercased; each token adds 1 to bucket
/// `fnv1a64(token) % dimension`.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 64) : dim_(dimension) {
    if (dim_ == 0) throw Error(Errc::InvalidArgument, "embedding dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }
  std::string fingerprint() const override { return "hashing-fnv1a-" + std::to_string(dim_); }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_text(t));
    return out;
  }

  static std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
      auto uc = static_cast<unsigned char>(c);
      if (uc < 0x80 && std::isalnum(uc)) {
        cur.push_back(static_cast<char>(std::tolower(uc)));
      } else if (!cur.empty()) {
        tokens.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
  }

 private:
  EmbeddingVector embed_text(std::string_view text) const {
    EmbeddingVector v;
    v.components.assign(dim_, 0.0);
    for (const auto& tok : tokenize(text)) v.components[fnv1a64(tok) % dim_] += 1.0;
    double norm_sq = 0.0;
    for (double c : v.components) norm_sq += c * c;
    if (norm_sq > 0.0) {
      double norm = std::sqrt(norm_sq);
      for (double& c : v.components) c /= norm;
    }
    return v;
  }

  std::size_t dim_;
};

inline double vector_norm(const EmbeddingVector& v) {
  double sum = 0.0;
  for (double c : v.components) sum += c * c;
  return std::sqrt(sum);
}

/// Cosine similarity given precomputed norms; zero vectors score 0.
inline double cosine_with_norms(const EmbeddingVector& a, double norm_a, const EmbeddingVector& b, double norm_b) {
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.components.size(); ++i) dot += a.components[i] * b.components[i];
  double c = dot / (norm_a * norm_b);
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) throw Error(Errc::InvalidArgument, "dimension mismatch");
  return cosine_with_norms(a, vector_norm(a), b, vector_norm(b));
}

struct ScoredTool {
  std::string tool_id;
  double score = 0.0;

  friend bool operator==(const ScoredTool&, const ScoredTool&) = default;
};

/// Immutable embedding index over a tool set; safe for concurrent readers.
class ToolIndex {
 public:
  const std::map<std::string, ToolSpec>& specs() const { return specs_; }
  const std::map<std::string, EmbeddingVector>& vectors() const { return vectors_; }
  const std::string& embedder_fingerprint() const { return fingerprint_; }
  std::size_t size() const { return specs_.size(); }
  bool empty() const { return specs_.empty(); }
  const Embedder& embedder() const { return *embedder_; }

  const ToolSpec* find(const std::string& tool_id) const {
    auto it = specs_.find(tool_id);
    return it == specs_.end() ? nullptr : &it->second;
  }

 private:
  friend ToolIndex build_index(std::span<const ToolSpec>, std::shared_ptr<const Embedder>);
  friend std::vector<ScoredTool> retrieve_topk(const ToolIndex&, const std::string&, std::size_t);

  std::map<std::string, ToolSpec> specs_;
  std::map<std::string, EmbeddingVector> vectors_;
  std::map<std::string, double> norms_;
  std::string fingerprint_;
  std::shared_ptr<const Embedder> embedder_;
};

inline ToolIndex build_index(std::span<const ToolSpec> specs, std::shared_ptr<const Embedder> embedder) {
  if (!embedder) throw Error(Errc::InvalidArgument, "no embedder");
  std::vector<std::string> texts;
  texts.reserve(specs.size());
  for (const auto& s : specs) texts.push_back(s.embedding_text());
  std::vector<EmbeddingVector> vecs = texts.empty() ? std::vector<EmbeddingVector>{} : embedder->embed(texts);
  if (vecs.size() != specs.size()) throw Error(Errc::EmbedderFailure, "embedder returned wrong number of vectors");

  ToolIndex index;
  index.fingerprint_ = embedder->fingerprint();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& v = vecs[i];
    if (v.dimension() != embedder->dimension()) {
      throw Error(Errc::EmbedderFailure, "vector for '" + specs[i].tool_id + "' has dimension " +
                                             std::to_string(v.dimension()));
    }
    for (double c : v.components) {
      if (!std::isfinite(c)) throw Error(Errc::EmbedderFailure, "non-finite embedding component");
    }
    if (!index.specs_.emplace(specs[i].tool_id, specs[i]).second) {
      throw Error(Errc::DuplicateToolId, "tool id '" + specs[i].tool_id + "' appears twice");
    }
    index.norms_[specs[i].tool_id] = vector_norm(v);
    index.vectors_[specs[i].tool_id] = v;
  }
  index.embedder_ = std::move(embedder);
  return index;
}

inline ToolIndex build_index(const std::vector<ToolSpec>& specs, std::shared_ptr<const Embedder> embedder) {
  return build_index(std::span<const ToolSpec>(specs), std::move(embedder));
}

/// Exhaustive cosine scan. Ordered by descending similarity, ties by
/// ascending tool_id; returns min(k, |index|) entries.
inline std::vector<ScoredTool> retrieve_topk(const ToolIndex& index, const std::string& requirement,
                                             std::size_t k = kDefaultTopK) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be at least 1");
  if (index.empty()) throw Error(Errc::EmptyIndex, "cannot retrieve from an empty index");
  EmbeddingVector query = index.embedder_->embed_one(requirement);
  if (query.dimension() != index.embedder_->dimension()) {
    throw Error(Errc::EmbedderFailure, "query vector has wrong dimension");
  }
  double query_norm = vector_norm(query);

  std::vector<ScoredTool> scored;
  scored.reserve(index.size());
  for (const auto& [id, vec] : index.vectors_) {
    scored.push_back({id, cosine_with_norms(vec, index.norms_.at(id), query, query_norm)});
  }
  auto better = [](const ScoredTool& a, const ScoredTool& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tool_id < b.tool_id;
  };
  std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  scored.resize(n);
  return scored;
}

}  // namespace contractrt
