#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spolab/envbed.hpp"
#include "spolab/errors.hpp"
#include "spolab/rng.hpp"
#include "spolab/schedsim.hpp"
#include "spolab/trainloop.hpp"

namespace spolab::config {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << contents;
}

inline nlohmann::json parse_json(const std::string& text,
                                 const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": invalid JSON: " + e.what());
  }
}

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  return parse_json(read_file(path), path.string());
}

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const char* what) {
  if (!j.contains(key))
    throw ParseError(std::string(what) + ": missing field", key);
  return j[key];
}

inline double get_number(const nlohmann::json& j, const char* key,
                         const char* what) {
  const auto& v = require(j, key, what);
  if (!v.is_number()) throw ParseError(std::string(what) + ": not a number", key);
  return v.get<double>();
}

inline double get_number_or(const nlohmann::json& j, const char* key,
                            double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ParseError("not a number", key);
  return j[key].get<double>();
}

inline std::int64_t get_int_or(const nlohmann::json& j, const char* key,
                               std::int64_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw ParseError("not an integer", key);
  return j[key].get<std::int64_t>();
}

inline bool get_bool_or(const nlohmann::json& j, const char* key,
                        bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_boolean()) throw ParseError("not a boolean", key);
  return j[key].get<bool>();
}

}  // namespace detail

// ---- environment fixtures ----
//
// Schema: {M, K, q | generator, seed, drift?}. `q` is an explicit M x K
// matrix; `generator` materializes one deterministically from `seed`.
// Generators:
//   easy_hard_mix: a block of near-hopeless prompts, a block with one
//     high-payoff action, and a medium remainder; attainable success spans
//     roughly [0.05, 0.95].
//   uniform: every cell i.i.d. U[lo, hi].

inline std::vector<std::vector<double>> generate_easy_hard_mix(
    std::size_t m, std::size_t k, std::uint64_t seed, const nlohmann::json& g) {
  double hard_fraction = detail::get_number_or(g, "hard_fraction", 0.45);
  double easy_fraction = detail::get_number_or(g, "easy_fraction", 0.45);
  if (hard_fraction < 0 || easy_fraction < 0 ||
      hard_fraction + easy_fraction > 1.0)
    throw ParseError("easy_hard_mix: fractions must be >= 0 and sum to <= 1");
  double hard_lo = detail::get_number_or(g, "hard_lo", 0.02);
  double hard_hi = detail::get_number_or(g, "hard_hi", 0.08);
  double easy_best_lo = detail::get_number_or(g, "easy_best_lo", 0.90);
  double easy_best_hi = detail::get_number_or(g, "easy_best_hi", 0.98);
  double easy_other_lo = detail::get_number_or(g, "easy_other_lo", 0.10);
  double easy_other_hi = detail::get_number_or(g, "easy_other_hi", 0.25);
  double med_best_lo = detail::get_number_or(g, "med_best_lo", 0.50);
  double med_best_hi = detail::get_number_or(g, "med_best_hi", 0.70);
  double med_other_lo = detail::get_number_or(g, "med_other_lo", 0.15);
  double med_other_hi = detail::get_number_or(g, "med_other_hi", 0.35);

  std::size_t n_hard = static_cast<std::size_t>(
      std::llround(hard_fraction * static_cast<double>(m)));
  std::size_t n_easy = static_cast<std::size_t>(
      std::llround(easy_fraction * static_cast<double>(m)));
  n_hard = std::min(n_hard, m);
  n_easy = std::min(n_easy, m - n_hard);

  rng::Rng r(seed);
  std::vector<std::vector<double>> q(m, std::vector<double>(k, 0.0));
  for (std::size_t x = 0; x < m; ++x) {
    if (x < n_hard) {
      for (std::size_t a = 0; a < k; ++a) q[x][a] = r.uniform(hard_lo, hard_hi);
    } else {
      bool easy = x < n_hard + n_easy;
      std::size_t best = r.index(k);
      for (std::size_t a = 0; a < k; ++a) {
        if (a == best)
          q[x][a] = easy ? r.uniform(easy_best_lo, easy_best_hi)
                         : r.uniform(med_best_lo, med_best_hi);
        else
          q[x][a] = easy ? r.uniform(easy_other_lo, easy_other_hi)
                         : r.uniform(med_other_lo, med_other_hi);
      }
    }
  }
  return q;
}

inline std::vector<std::vector<double>> generate_uniform_q(
    std::size_t m, std::size_t k, std::uint64_t seed, const nlohmann::json& g) {
  double lo = detail::get_number_or(g, "lo", 0.05);
  double hi = detail::get_number_or(g, "hi", 0.95);
  if (!(lo >= 0.0 && lo <= hi && hi <= 1.0))
    throw ParseError("uniform generator: need 0 <= lo <= hi <= 1");
  rng::Rng r(seed);
  std::vector<std::vector<double>> q(m, std::vector<double>(k, 0.0));
  for (auto& row : q)
    for (double& v : row) v = r.uniform(lo, hi);
  return q;
}

inline env::BernoulliEnv load_env_fixture(const nlohmann::json& j) {
  const char* what = "env fixture";
  auto m = static_cast<std::size_t>(detail::get_number(j, "M", what));
  auto k = static_cast<std::size_t>(detail::get_number(j, "K", what));
  if (m < 1 || k < 1) throw ParseError("env fixture: M and K must be >= 1");

  std::vector<std::vector<double>> q;
  if (j.contains("q")) {
    const auto& qj = j["q"];
    if (!qj.is_array() || qj.size() != m)
      throw ParseError("env fixture: q must be an M-row array", "q");
    for (const auto& row : qj) {
      if (!row.is_array() || row.size() != k)
        throw ParseError("env fixture: q rows must have K entries", "q");
      q.push_back(row.get<std::vector<double>>());
    }
  } else if (j.contains("generator")) {
    const auto& g = j["generator"];
    auto seed = static_cast<std::uint64_t>(
        detail::get_int_or(j, "seed", 0));
    std::string kind = detail::require(g, "kind", what).get<std::string>();
    if (kind == "easy_hard_mix")
      q = generate_easy_hard_mix(m, k, seed, g);
    else if (kind == "uniform")
      q = generate_uniform_q(m, k, seed, g);
    else
      throw ParseError("env fixture: unknown generator kind: " + kind, "kind");
  } else {
    throw ParseError("env fixture: need q or generator", "q");
  }

  std::optional<env::DriftSpec> drift;
  if (j.contains("drift")) {
    const auto& d = j["drift"];
    drift = env::DriftSpec{detail::get_number(d, "amplitude", "drift"),
                           detail::get_number(d, "period", "drift")};
  }
  return env::BernoulliEnv(std::move(q), drift);
}

inline env::BernoulliEnv load_env_file(const std::filesystem::path& path) {
  return load_env_fixture(load_json_file(path));
}

// Fixture path resolution: absolute paths pass through; otherwise
// SPOLAB_FIXTURES (when set) is the root, falling back to base_dir.
inline std::filesystem::path resolve_fixture_path(
    const std::string& spec, const std::filesystem::path& base_dir) {
  std::filesystem::path p(spec);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("SPOLAB_FIXTURES")) {
    std::filesystem::path candidate = std::filesystem::path(root) / p;
    if (std::filesystem::exists(candidate)) return candidate;
  }
  return base_dir / p;
}

// ---- run configs ----

struct LoadedRunConfig {
  train::RunConfig run;
  std::string env_spec;  // as written in the config
};

inline LoadedRunConfig load_run_config(const nlohmann::json& j) {
  const char* what = "run config";
  LoadedRunConfig out;
  out.run.algorithm = train::parse_algorithm(
      detail::require(j, "algorithm", what).get<std::string>());
  out.run.iterations = static_cast<std::size_t>(
      detail::get_number(j, "iterations", what));
  out.run.batch_size = static_cast<std::size_t>(
      detail::get_number(j, "batch_size", what));
  out.run.group_size =
      static_cast<std::size_t>(detail::get_int_or(j, "group_size", 8));
  out.run.seed = static_cast<std::uint64_t>(detail::get_int_or(j, "seed", 0));
  out.env_spec = detail::require(j, "env", what).get<std::string>();

  if (j.contains("tracker")) {
    const auto& t = j["tracker"];
    out.run.tracker_params.d_half = detail::get_number_or(t, "d_half", 0.1);
    out.run.tracker_params.rho_min = detail::get_number_or(t, "rho_min", 0.875);
    out.run.tracker_params.rho_max = detail::get_number_or(t, "rho_max", 0.96);
  }
  if (j.contains("init"))
    out.run.init_samples = static_cast<std::size_t>(
        detail::get_int_or(j["init"], "n0", 8));
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    out.run.explore_bonus = detail::get_number_or(s, "explore_bonus", 0.05);
    out.run.sample_with_replacement = detail::get_bool_or(s, "replacement", false);
  }
  if (j.contains("optim")) {
    const auto& o = j["optim"];
    out.run.clip.learning_rate = detail::get_number_or(o, "lr", 0.1);
    out.run.clip.eps_low = detail::get_number_or(o, "eps_low", 0.2);
    out.run.clip.eps_high = detail::get_number_or(o, "eps_high", 0.28);
    out.run.clip.updates_per_rollout = static_cast<std::size_t>(
        detail::get_int_or(o, "updates_per_rollout", 8));
    out.run.clip.minibatch_size =
        static_cast<std::size_t>(detail::get_int_or(o, "minibatch", 0));
  }
  if (j.contains("bspo")) {
    const auto& b = j["bspo"];
    out.run.bspo_repeat =
        static_cast<std::size_t>(detail::get_int_or(b, "repeat", 1));
    out.run.bspo_oversample = detail::get_number_or(b, "oversample", 0.0);
  }
  if (j.contains("grpo"))
    out.run.grpo_eps = detail::get_number_or(j["grpo"], "eps", 1e-6);

  out.run.validate();
  return out;
}

// Round-trip of a run config back to JSON, used for manifest echoes.
inline nlohmann::json run_config_json(const train::RunConfig& cfg,
                                      const std::string& env_spec) {
  return {
      {"algorithm", train::algorithm_name(cfg.algorithm)},
      {"iterations", cfg.iterations},
      {"batch_size", cfg.batch_size},
      {"group_size", cfg.group_size},
      {"seed", cfg.seed},
      {"env", env_spec},
      {"tracker",
       {{"d_half", cfg.tracker_params.d_half},
        {"rho_min", cfg.tracker_params.rho_min},
        {"rho_max", cfg.tracker_params.rho_max}}},
      {"init", {{"n0", cfg.init_samples}}},
      {"sampler",
       {{"explore_bonus", cfg.explore_bonus},
        {"replacement", cfg.sample_with_replacement}}},
      {"optim",
       {{"lr", cfg.clip.learning_rate},
        {"eps_low", cfg.clip.eps_low},
        {"eps_high", cfg.clip.eps_high},
        {"updates_per_rollout", cfg.clip.updates_per_rollout},
        {"minibatch", cfg.clip.minibatch_size}}},
      {"bspo",
       {{"repeat", cfg.bspo_repeat}, {"oversample", cfg.bspo_oversample}}},
      {"grpo", {{"eps", cfg.grpo_eps}}},
  };
}

// ---- scheduler configs ----

inline sched::LatencyModel load_latency_model(const nlohmann::json& j) {
  const char* what = "latency model";
  sched::LatencyModel model;
  std::string kind = detail::require(j, "kind", what).get<std::string>();
  if (kind == "fixed_list") {
    model.kind = sched::LatencyModel::Kind::fixed_list;
    const auto& secs = detail::require(j, "seconds", what);
    if (!secs.is_array())
      throw ParseError("latency model: seconds must be an array", "seconds");
    model.list = secs.get<std::vector<double>>();
  } else if (kind == "lognormal") {
    model.kind = sched::LatencyModel::Kind::lognormal;
    model.mu = detail::get_number(j, "mu", what);
    model.sigma = detail::get_number(j, "sigma", what);
  } else if (kind == "uniform") {
    model.kind = sched::LatencyModel::Kind::uniform;
    model.lo = detail::get_number(j, "lo", what);
    model.hi = detail::get_number(j, "hi", what);
  } else {
    throw ParseError("latency model: unknown kind: " + kind, "kind");
  }
  model.validate();
  return model;
}

inline sched::ScenarioConfig load_sched_config(const nlohmann::json& j) {
  const char* what = "sched config";
  sched::ScenarioConfig cfg;
  cfg.latency = load_latency_model(detail::require(j, "latency", what));
  cfg.group_size =
      static_cast<std::size_t>(detail::get_number(j, "group_size", what));
  cfg.groups_launched =
      static_cast<std::size_t>(detail::get_number(j, "groups_launched", what));
  cfg.groups_needed =
      static_cast<std::size_t>(detail::get_number(j, "groups_needed", what));
  cfg.pool = static_cast<std::size_t>(detail::get_number(j, "pool", what));
  cfg.take = static_cast<std::size_t>(detail::get_number(j, "take", what));
  cfg.seed = static_cast<std::uint64_t>(detail::get_int_or(j, "seed", 0));
  cfg.validate();
  return cfg;
}

inline nlohmann::json sched_config_json(const sched::ScenarioConfig& cfg) {
  nlohmann::json latency;
  switch (cfg.latency.kind) {
    case sched::LatencyModel::Kind::fixed_list:
      latency = {{"kind", "fixed_list"}, {"seconds", cfg.latency.list}};
      break;
    case sched::LatencyModel::Kind::lognormal:
      latency = {{"kind", "lognormal"},
                 {"mu", cfg.latency.mu},
                 {"sigma", cfg.latency.sigma}};
      break;
    case sched::LatencyModel::Kind::uniform:
      latency = {{"kind", "uniform"}, {"lo", cfg.latency.lo}, {"hi", cfg.latency.hi}};
      break;
  }
  return {{"latency", latency},
          {"group_size", cfg.group_size},
          {"groups_launched", cfg.groups_launched},
          {"groups_needed", cfg.groups_needed},
          {"pool", cfg.pool},
          {"take", cfg.take},
          {"seed", cfg.seed}};
}

}  // namespace spolab::config
