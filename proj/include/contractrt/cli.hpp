#pragma once

// Command-line front end: run, validate, replay, report. Each command is a
// function over streams so it can be driven in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <glob.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "contractrt/contract.hpp"
#include "contractrt/error.hpp"
#include "contractrt/executor.hpp"
#include "contractrt/http.hpp"
#include "contractrt/log.hpp"
#include "contractrt/registry.hpp"
#include "contractrt/toolsim.hpp"
#include "contractrt/verify.hpp"

#ifndef CONTRACTRT_DEFAULT_SCENARIO_DIR
#define CONTRACTRT_DEFAULT_SCENARIO_DIR "scenarios"
#endif

namespace contractrt::cli {

namespace fs = std::filesystem;

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFail = 2;
inline constexpr int kExitTimeout = 3;
inline constexpr int kExitUnsafe = 2;

inline int exit_code(Outcome o) {
  switch (o) {
    case Outcome::Answer: return kExitOk;
    case Outcome::Fail: return kExitFail;
    case Outcome::Timeout: return kExitTimeout;
  }
  return kExitError;
}

/// Flags as given; unset optionals fall through to env, then the config file.
struct RunFlags {
  std::string scenario;
  std::string query;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> k;
  std::optional<std::size_t> kmax;
  std::string out;
  bool dry_run_wp = false;
  std::string scenarios_dir;
  std::string tools_dir;
  std::string contracts_dir;
};

/// Fully resolved run settings.
struct CliConfig {
  EngineConfig engine;
  std::optional<std::uint64_t> seed;
  Endpoint llm;
  Endpoint embedding;
  std::size_t embedding_dimension = 0;
  Endpoint rerank;
  Endpoint tools;
  std::string scenarios_dir;
  std::string tools_dir;
  std::string contracts_dir;
};

namespace detail {

inline std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

inline std::size_t parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(Errc::ConfigurationError, what + " must be a non-negative integer, got '" + s + "'");
  }
}

inline Endpoint endpoint_from_file(const nlohmann::json& j) {
  Endpoint e;
  e.url = j.value("url", std::string());
  e.api_key = j.value("key", std::string());
  e.model = j.value("model", std::string());
  e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
  e.max_attempts = j.value("max_attempts", e.max_attempts);
  e.backoff_ms = j.value("backoff_ms", e.backoff_ms);
  return e;
}

/// Overlays `over` onto `base` field by field where `over` is set.
inline Endpoint overlay(Endpoint base, const Endpoint& over) {
  if (!over.url.empty()) base.url = over.url;
  if (!over.api_key.empty()) base.api_key = over.api_key;
  if (!over.model.empty()) base.model = over.model;
  return base;
}

}  // namespace detail

/// Merges, lowest to highest precedence: `base` engine settings (a
/// scenario's own), the config file, CONTRACTRT_* environment variables,
/// then flags.
inline CliConfig resolve_config(const RunFlags& flags, const EngineConfig& base = {}) {
  CliConfig c;
  c.engine = base;
  nlohmann::json file = nlohmann::json::object();
  if (!flags.config_path.empty()) {
    file = nlohmann::json::parse(read_text_file(flags.config_path), nullptr, false);
    if (file.is_discarded() || !file.is_object()) {
      throw Error(Errc::ConfigurationError, "config file '" + flags.config_path + "' is not a JSON object");
    }
  }
  try {
    if (file.contains("engine")) contractrt::detail::apply_config_json(c.engine, file.at("engine"));
    if (file.contains("seed")) c.seed = file.at("seed").get<std::uint64_t>();
    if (file.contains("llm")) c.llm = detail::endpoint_from_file(file.at("llm"));
    if (file.contains("embedding")) {
      c.embedding = detail::endpoint_from_file(file.at("embedding"));
      c.embedding_dimension = file.at("embedding").value("dimension", std::size_t{0});
    }
    if (file.contains("rerank")) c.rerank = detail::endpoint_from_file(file.at("rerank"));
    if (file.contains("tool_gateway")) c.tools = detail::endpoint_from_file(file.at("tool_gateway"));
    c.scenarios_dir = file.value("scenarios_dir", std::string());
    c.tools_dir = file.value("tools_dir", std::string());
    c.contracts_dir = file.value("contracts_dir", std::string());
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::ConfigurationError, std::string("config file: ") + ex.what());
  }

  // Environment.
  if (auto v = detail::env("CONTRACTRT_SEED")) c.seed = detail::parse_count(*v, "CONTRACTRT_SEED");
  if (auto v = detail::env("CONTRACTRT_MODE")) c.engine.selection_mode = parse_selection_mode(*v);
  if (auto v = detail::env("CONTRACTRT_K")) c.engine.top_k = detail::parse_count(*v, "CONTRACTRT_K");
  if (auto v = detail::env("CONTRACTRT_KMAX")) c.engine.k_max = detail::parse_count(*v, "CONTRACTRT_KMAX");
  c.llm = detail::overlay(c.llm, endpoint_from_env("CONTRACTRT_LLM"));
  c.embedding = detail::overlay(c.embedding, endpoint_from_env("CONTRACTRT_EMBED"));
  if (auto v = detail::env("CONTRACTRT_EMBED_DIM")) c.embedding_dimension = detail::parse_count(*v, "CONTRACTRT_EMBED_DIM");
  c.rerank = detail::overlay(c.rerank, endpoint_from_env("CONTRACTRT_RERANK"));
  c.tools = detail::overlay(c.tools, endpoint_from_env("CONTRACTRT_TOOL"));
  if (auto v = detail::env("CONTRACTRT_SCENARIOS")) c.scenarios_dir = *v;

  // Flags.
  if (flags.seed) c.seed = flags.seed;
  if (flags.mode) c.engine.selection_mode = parse_selection_mode(*flags.mode);
  if (flags.k) c.engine.top_k = *flags.k;
  if (flags.kmax) c.engine.k_max = *flags.kmax;
  if (!flags.scenarios_dir.empty()) c.scenarios_dir = flags.scenarios_dir;
  if (!flags.tools_dir.empty()) c.tools_dir = flags.tools_dir;
  if (!flags.contracts_dir.empty()) c.contracts_dir = flags.contracts_dir;
  if (c.scenarios_dir.empty()) c.scenarios_dir = CONTRACTRT_DEFAULT_SCENARIO_DIR;

  try {
    c.engine.validate();
  } catch (const Error& e) {
    throw Error(Errc::ConfigurationError, e.what());
  }
  return c;
}

/// A direct path if it exists, else `<dir>/<name>` or `<dir>/<name>.json`.
inline std::string locate_scenario(const std::string& name, const std::string& dir) {
  if (fs::is_regular_file(name)) return name;
  for (const auto& candidate : {fs::path(dir) / name, fs::path(dir) / (name + ".json")}) {
    if (fs::is_regular_file(candidate)) return candidate.string();
  }
  throw Error(Errc::InvalidArgument, "scenario '" + name + "' not found (searched " + dir + ")");
}

/// Reads every `*.json` file under `dir`, in path order. A file holds one
/// document or an array of documents.
inline std::vector<std::pair<std::string, nlohmann::json>> read_json_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::InvalidArgument, "'" + dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::pair<std::string, nlohmann::json>> out;
  for (const auto& f : files) {
    auto j = nlohmann::json::parse(read_text_file(f.string()), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::ParseError, f.string() + " is not valid JSON");
    if (j.is_array()) {
      for (auto& d : j) out.emplace_back(f.string(), std::move(d));
    } else {
      out.emplace_back(f.string(), std::move(j));
    }
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& text) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::InvalidArgument, "cannot write '" + path + "'");
  f << text;
}

inline void print_outcome(const Trajectory& t, std::ostream& out) {
  out << "outcome: " << to_string(t.outcome) << "\n";
  out << "steps: " << t.steps.size() << "\n";
  if (t.outcome == Outcome::Answer) {
    out << "answer:\n" << t.answer << "\n";
  } else {
    out << "reason: " << t.failure_reason << "\n";
  }
}

inline int dry_run_wp(const Scenario& sc, std::ostream& out) {
  out << "tool_id\tprecondition\twp_probe\n";
  for (const auto& spec : sc.tools) {
    bool pre = check_admissible(spec.tool_id, sc.contracts, sc.initial_state);
    MockToolExecutor sandbox = sc.make_executor();
    auto alias = sc.aliases.find(spec.tool_id);
    bool wp = false;
    if (sandbox.behaviors().count(spec.tool_id)) {
      wp = check_admissible(spec.tool_id, sc.contracts, sc.initial_state,
                            WpProbe{sandbox, spec, alias == sc.aliases.end() ? nullptr : &alias->second});
    }
    out << spec.tool_id << "\t" << (pre ? "holds" : "fails") << "\t" << (wp ? "admissible" : "inadmissible") << "\n";
  }
  return kExitOk;
}

inline int run_live(const RunFlags& flags, const CliConfig& c, std::ostream& out, std::ostream& err) {
  if (c.tools_dir.empty() || c.contracts_dir.empty()) {
    err << "error: live runs need --tools and --contracts (or tools_dir/contracts_dir in the config file)\n";
    return kExitError;
  }
  std::vector<nlohmann::json> tool_docs;
  for (auto& [_, d] : read_json_dir(c.tools_dir)) tool_docs.push_back(std::move(d));
  std::vector<ToolSpec> specs = load_tool_specs(tool_docs);
  auto contract_docs = nlohmann::json::array();
  for (auto& [_, d] : read_json_dir(c.contracts_dir)) contract_docs.push_back(std::move(d));
  ContractSet contracts = contracts_from_json(contract_docs);

  std::shared_ptr<const Embedder> embedder;
  if (c.embedding.configured()) {
    embedder = std::make_shared<HttpEmbedder>(c.embedding, c.embedding_dimension);
  } else {
    embedder = std::make_shared<HashingEmbedder>();
  }
  std::unique_ptr<Reranker> reranker;
  if (c.rerank.configured()) {
    reranker = std::make_unique<HttpReranker>(c.rerank);
  } else {
    reranker = std::make_unique<CosineReranker>();
  }
  HttpReasoner reasoner(c.llm);
  HttpToolExecutor tools(c.tools);
  ToolIndex index = build_index(specs, embedder);
  Collaborators env{index, contracts, reasoner, tools, *reranker, {}, &reasoner};
  Trajectory t = run_forward(flags.query, {}, default_initial_state(flags.query), c.engine, env, c.seed.value_or(0));
  write_file(flags.out.empty() ? "live.trajectory.jsonl" : flags.out, write_log(t, contracts));
  print_outcome(t, out);
  return exit_code(t.outcome);
}

inline int cmd_run(const RunFlags& flags, std::ostream& out, std::ostream& err) {
  try {
    if (flags.scenario.empty() == flags.query.empty()) {
      err << "error: give exactly one of --scenario or --query\n";
      return kExitError;
    }
    if (!flags.query.empty()) return run_live(flags, resolve_config(flags), out, err);

    CliConfig probe = resolve_config(flags);
    Scenario sc = load_scenario_file(locate_scenario(flags.scenario, probe.scenarios_dir));
    CliConfig c = resolve_config(flags, sc.config);
    if (flags.dry_run_wp) return dry_run_wp(sc, out);
    ScenarioRun run = run_scenario(sc, c.engine, c.seed.value_or(sc.seed));
    std::string path = flags.out.empty() ? sc.name + ".trajectory.jsonl" : flags.out;
    write_file(path, write_log(run.trajectory, sc.contracts));
    print_outcome(run.trajectory, out);
    out << "log: " << path << "\n";
    return exit_code(run.trajectory.outcome);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

/// One diagnostic per violation; success iff every contract parses, names a
/// known tool and passes static validation.
inline int cmd_validate(const std::string& contracts_dir, const std::string& tools_dir, std::ostream& out,
                        std::ostream& err) {
  std::size_t problems = 0;
  auto report = [&](const std::string& where, const std::string& what) {
    ++problems;
    err << where << ": " << what << "\n";
  };
  std::set<std::string> tool_ids;
  try {
    for (const auto& [file, doc] : read_json_dir(tools_dir)) {
      try {
        ToolSpec s = tool_spec_from_json(doc);
        if (!tool_ids.insert(s.tool_id).second) {
          report(file, std::string(to_string(Errc::DuplicateToolId)) + ": tool id '" + s.tool_id + "' appears twice");
        }
      } catch (const Error& e) {
        report(file, e.what());
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  std::size_t checked = 0;
  std::set<std::string> contract_ids;
  try {
    for (const auto& [file, doc] : read_json_dir(contracts_dir)) {
      ++checked;
      try {
        Contract c = contract_from_json(doc);
        if (!tool_ids.count(c.tool_id)) {
          report(file, std::string(to_string(Errc::DanglingReference)) + ": contract names unknown tool '" + c.tool_id + "'");
        }
        if (!contract_ids.insert(c.tool_id).second) {
          report(file, std::string(to_string(Errc::DuplicateToolId)) + ": second contract for '" + c.tool_id + "'");
        }
      } catch (const Error& e) {
        report(file, e.what());
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  if (problems > 0) return kExitError;
  out << "ok: " << checked << " contract(s) over " << tool_ids.size() << " tool(s)\n";
  return kExitOk;
}

inline int cmd_replay(const std::string& log_path, std::ostream& out, std::ostream& err) {
  TrajectoryLog log;
  try {
    log = read_log_file(log_path);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  SafetyVerdict v = verify_trajectory(log.trajectory, log.contracts);
  if (v.safe()) {
    out << "safe: " << log.trajectory.steps.size() << " step(s) verified\n";
    return kExitOk;
  }
  out << "unsafe: " << v.violations.size() << " violation(s)\n";
  for (const auto& x : v.violations) out << "  step " << x.step_index << " " << to_string(x.clause) << ": " << x.detail << "\n";
  return kExitUnsafe;
}

/// Glob patterns and plain paths, de-duplicated, sorted.
inline std::vector<std::string> expand_patterns(const std::vector<std::string>& patterns) {
  std::set<std::string> found;
  for (const auto& p : patterns) {
    glob_t g{};
    if (::glob(p.c_str(), 0, nullptr, &g) == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) {
        if (fs::is_regular_file(g.gl_pathv[i])) found.insert(g.gl_pathv[i]);
      }
    }
    ::globfree(&g);
  }
  return {found.begin(), found.end()};
}

inline int cmd_report(const std::vector<std::string>& patterns, const std::string& out_path, std::ostream& out,
                      std::ostream& err) {
  std::vector<std::string> files = expand_patterns(patterns);
  if (files.empty()) {
    err << "error: no trajectory logs match\n";
    return kExitError;
  }
  std::vector<Trajectory> trajectories;
  try {
    for (const auto& f : files) trajectories.push_back(read_log_file(f).trajectory);
    RejectionReport r = build_rejection_report(trajectories);
    out << render_report_table(r);
    std::string doc = to_json(r).dump(2) + "\n";
    if (out_path.empty()) {
      out << doc;
    } else {
      write_file(out_path, doc);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}

/// Parses argv and dispatches.
inline int main_entry(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Contract-verified tool execution runtime"};
  app.require_subcommand(1);

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "run a scenario or a live query");
  run_cmd->add_option("--scenario", run.scenario, "scenario name or path");
  run_cmd->add_option("--query", run.query, "live query (needs HTTP endpoints)");
  run_cmd->add_option("--config", run.config_path, "JSON config file");
  run_cmd->add_option("--seed", run.seed, "RNG seed");
  run_cmd->add_option("--mode", run.mode, "greedy|sample")->check(CLI::IsMember({"greedy", "sample"}));
  run_cmd->add_option("--k", run.k, "retrieval top-k");
  run_cmd->add_option("--kmax", run.kmax, "iteration limit");
  run_cmd->add_option("--out", run.out, "trajectory log path");
  run_cmd->add_flag("--dry-run-wp", run.dry_run_wp, "probe wp(t, true) for each tool on the initial state and exit");
  run_cmd->add_option("--scenarios-dir", run.scenarios_dir, "directory searched for scenario names");
  run_cmd->add_option("--tools", run.tools_dir, "tool documents directory (live mode)");
  run_cmd->add_option("--contracts", run.contracts_dir, "contract documents directory (live mode)");

  std::string contracts_dir, tools_dir;
  auto* validate_cmd = app.add_subcommand("validate", "statically check contract files");
  validate_cmd->add_option("--contracts", contracts_dir, "contract documents directory")->required();
  validate_cmd->add_option("--tools", tools_dir, "tool documents directory")->required();

  std::string log_path;
  auto* replay_cmd = app.add_subcommand("replay", "re-verify a trajectory log");
  replay_cmd->add_option("log", log_path, "trajectory log")->required();

  std::vector<std::string> patterns;
  std::string report_out;
  auto* report_cmd = app.add_subcommand("report", "rejection breakdown over trajectory logs");
  report_cmd->add_option("logs", patterns, "log paths or glob patterns")->required();
  report_cmd->add_option("--out", report_out, "write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  if (*run_cmd) return cmd_run(run, out, err);
  if (*validate_cmd) return cmd_validate(contracts_dir, tools_dir, out, err);
  if (*replay_cmd) return cmd_replay(log_path, out, err);
  return cmd_report(patterns, report_out, out, err);
}

}  // namespace contractrt::cli
