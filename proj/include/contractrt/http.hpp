#pragma once

// HTTP clients for the external services: an OpenAI-compatible chat
// completion endpoint, an embedding endpoint, a rerank endpoint and a tool
// gateway. Define CPPHTTPLIB_OPENSSL_SUPPORT before including to reach
// https endpoints.

#include <chrono>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "contractrt/error.hpp"
#include "contractrt/executor.hpp"
#include "contractrt/llm.hpp"
#include "contractrt/policy.hpp"
#include "contractrt/registry.hpp"

namespace contractrt {

struct Endpoint {
  std::string url;  // scheme://host[:port]/path
  std::string api_key;
  std::string model;
  int timeout_seconds = 60;
  int max_attempts = 3;
  int backoff_ms = 500;  // doubled after each failed attempt

  bool configured() const { return !url.empty(); }
};

/// Fills unset fields of `e` from `<prefix>_URL`, `<prefix>_KEY`,
/// `<prefix>_MODEL`. Existing values win.
inline Endpoint endpoint_from_env(const std::string& prefix, Endpoint e = {}) {
  auto get = [&](const char* suffix) -> std::optional<std::string> {
    const char* v = std::getenv((prefix + suffix).c_str());
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  if (e.url.empty()) e.url = get("_URL").value_or("");
  if (e.api_key.empty()) e.api_key = get("_KEY").value_or("");
  if (e.model.empty()) e.model = get("_MODEL").value_or("");
  return e;
}

namespace detail {

struct SplitUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

inline SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(Errc::ConfigurationError, "endpoint URL needs a scheme: '" + url + "'");
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

struct HttpReply {
  int status = 0;
  std::string body;
};

/// One POST. Connection failures raise Transport.
inline HttpReply post_json(const Endpoint& ep, const std::string& path_suffix, const nlohmann::json& body) {
  SplitUrl u = split_url(ep.url);
  httplib::Client cli(u.origin);
  cli.set_connection_timeout(ep.timeout_seconds, 0);
  cli.set_read_timeout(ep.timeout_seconds, 0);
  cli.set_write_timeout(ep.timeout_seconds, 0);
  httplib::Headers headers;
  if (!ep.api_key.empty()) headers.emplace("Authorization", "Bearer " + ep.api_key);
  auto res = cli.Post(u.path + path_suffix, headers, body.dump(), "application/json");
  if (!res) throw Error(Errc::Transport, "request to " + ep.url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

inline Errc classify_status(int status) {
  if (status == 401 || status == 403) return Errc::Auth;
  if (status == 429) return Errc::RateLimit;
  return Errc::Transport;
}

/// POST with bounded exponential backoff. Auth failures and non-retryable
/// client errors surface immediately.
inline nlohmann::json post_with_retry(const Endpoint& ep, const nlohmann::json& body, const std::string& path_suffix = "") {
  int delay = ep.backoff_ms;
  std::optional<Error> last;
  const int attempts = std::max(1, ep.max_attempts);
  for (int i = 0; i < attempts; ++i) {
    if (i > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
    HttpReply r;
    try {
      r = post_json(ep, path_suffix, body);
    } catch (const Error& e) {
      last = e;
      continue;
    }
    if (r.status >= 200 && r.status < 300) {
      auto j = nlohmann::json::parse(r.body, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::Transport, "response from " + ep.url + " is not JSON");
      return j;
    }
    Error e(classify_status(r.status), "HTTP " + std::to_string(r.status) + " from " + ep.url);
    if (e.code() != Errc::RateLimit && r.status < 500) throw e;
    last = e;
  }
  throw *last;
}

}  // namespace detail

/// OpenAI-compatible chat completion client.
class HttpReasoner final : public Reasoner {
 public:
  explicit HttpReasoner(Endpoint ep) : ep_(std::move(ep)) {
    if (!ep_.configured()) throw Error(Errc::ConfigurationError, "reasoner endpoint URL is not set");
  }

  static nlohmann::json request_body(const ReasonerRequest& request, const std::string& model) {
    auto msgs = nlohmann::json::array();
    for (const auto& m : request.messages) msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    nlohmann::json body{{"messages", msgs}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
    if (!model.empty()) body["model"] = model;
    return body;
  }

  static ReasonerResponse parse_response(const nlohmann::json& j) {
    try {
      const auto& choice = j.at("choices").at(0);
      ReasonerResponse r;
      const auto& content = choice.at("message").at("content");
      r.text = content.is_null() ? std::string() : content.get<std::string>();
      if (choice.contains("finish_reason") && choice.at("finish_reason").is_string()) {
        r.finish_reason = choice.at("finish_reason").get<std::string>();
      }
      if (j.contains("usage") && j.at("usage").is_object()) {
        r.prompt_tokens = j.at("usage").value("prompt_tokens", std::size_t{0});
        r.completion_tokens = j.at("usage").value("completion_tokens", std::size_t{0});
      }
      return r;
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::Transport, std::string("unexpected chat completion shape: ") + ex.what());
    }
  }

  ReasonerResponse complete(const ReasonerRequest& request) override {
    request.validate();
    return parse_response(detail::post_with_retry(ep_, request_body(request, ep_.model)));
  }

 private:
  Endpoint ep_;
};

/// Embedding endpoint: `{"input": [...]}` answered by either
/// `{"data": [{"index", "embedding"}]}` or `{"embeddings": [[...]]}`.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(Endpoint ep, std::size_t dimension) : ep_(std::move(ep)), dim_(dimension) {
    if (!ep_.configured()) throw Error(Errc::ConfigurationError, "embedding endpoint URL is not set");
    if (dim_ == 0) throw Error(Errc::ConfigurationError, "embedding dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }
  std::string fingerprint() const override {
    return "http:" + ep_.url + ":" + ep_.model + ":" + std::to_string(dim_);
  }

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
    nlohmann::json body{{"input", std::vector<std::string>(texts.begin(), texts.end())}};
    if (!ep_.model.empty()) body["model"] = ep_.model;
    nlohmann::json j;
    try {
      j = detail::post_with_retry(ep_, body);
    } catch (const Error& e) {
      throw Error(Errc::EmbedderFailure, e.what());
    }
    std::vector<EmbeddingVector> out(texts.size());
    try {
      if (j.contains("data")) {
        const auto& data = j.at("data");
        if (data.size() != texts.size()) throw Error(Errc::EmbedderFailure, "embedding count mismatch");
        for (std::size_t i = 0; i < data.size(); ++i) {
          std::size_t slot = data[i].value("index", i);
          if (slot >= out.size()) throw Error(Errc::EmbedderFailure, "embedding index out of range");
          out[slot].components = data[i].at("embedding").get<std::vector<double>>();
        }
      } else {
        const auto& embs = j.at("embeddings");
        if (embs.size() != texts.size()) throw Error(Errc::EmbedderFailure, "embedding count mismatch");
        for (std::size_t i = 0; i < embs.size(); ++i) out[i].components = embs[i].get<std::vector<double>>();
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::EmbedderFailure, std::string("unexpected embedding shape: ") + ex.what());
    }
    for (const auto& v : out) {
      if (v.dimension() != dim_) throw Error(Errc::EmbedderFailure, "embedding has dimension " + std::to_string(v.dimension()));
    }
    return out;
  }

 private:
  Endpoint ep_;
  std::size_t dim_;
};

/// Rerank endpoint: `{"query", "documents"}` answered by `{"scores": [...]}`
/// or `{"results": [{"index", "relevance_score"}]}`.
class HttpReranker final : public Reranker {
 public:
  explicit HttpReranker(Endpoint ep) : ep_(std::move(ep)) {
    if (!ep_.configured()) throw Error(Errc::ConfigurationError, "rerank endpoint URL is not set");
  }

  std::string name() const override { return "http:" + ep_.url + ":" + ep_.model; }

  std::vector<double> score(const std::string& requirement, std::span<const RerankCandidate> candidates) const override {
    std::vector<std::string> docs;
    for (const auto& c : candidates) docs.push_back(c.document);
    nlohmann::json body{{"query", requirement}, {"documents", docs}};
    if (!ep_.model.empty()) body["model"] = ep_.model;
    nlohmann::json j;
    try {
      j = detail::post_with_retry(ep_, body);
    } catch (const Error& e) {
      throw Error(Errc::RerankerFailure, e.what());
    }
    std::vector<double> out(candidates.size(), 0.0);
    try {
      if (j.contains("scores")) {
        out = j.at("scores").get<std::vector<double>>();
      } else {
        std::vector<bool> seen(candidates.size(), false);
        for (const auto& r : j.at("results")) {
          std::size_t i = r.at("index").get<std::size_t>();
          if (i >= out.size() || seen[i]) throw Error(Errc::RerankerFailure, "bad rerank result index");
          seen[i] = true;
          out[i] = r.at("relevance_score").get<double>();
        }
        for (bool s : seen) {
          if (!s) throw Error(Errc::RerankerFailure, "rerank results do not cover every candidate");
        }
      }
    } catch (const nlohmann::json::exception& ex) {
      throw Error(Errc::RerankerFailure, std::string("unexpected rerank shape: ") + ex.what());
    }
    if (out.size() != candidates.size()) throw Error(Errc::RerankerFailure, "rerank score count mismatch");
    return out;
  }

 private:
  Endpoint ep_;
};

/// Tool gateway: POST `<url>/<tool_id>` with the parameter record as body;
/// a 2xx JSON body is the result. Anything else is a failed call, never an
/// exception, so the engine can move on to the next candidate.
class HttpToolExecutor final : public ToolExecutor {
 public:
  explicit HttpToolExecutor(Endpoint ep) : ep_(std::move(ep)) {
    if (!ep_.configured()) throw Error(Errc::ConfigurationError, "tool endpoint URL is not set");
    ep_.max_attempts = 1;
  }

  ToolOutcome execute(const std::string& tool_id, const Value& params) override {
    try {
      detail::HttpReply r = detail::post_json(ep_, "/" + tool_id, to_json(params));
      if (r.status < 200 || r.status >= 300) return ToolOutcome::failure("HTTP " + std::to_string(r.status));
      auto j = nlohmann::json::parse(r.body, nullptr, false);
      if (j.is_discarded()) return ToolOutcome::failure("response is not JSON");
      return ToolOutcome::ok(from_json(j));
    } catch (const Error& e) {
      return ToolOutcome::failure(e.what());
    }
  }

 private:
  Endpoint ep_;
};

}  // namespace contractrt
