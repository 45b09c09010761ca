#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "spolab/errors.hpp"

namespace spolab::tracker {

// Hyperparameters of the KL-adaptive forgetting schedule.
//
// d_half is the KL divergence (nats) at which the discount halves before
// clamping. The default 0.1 puts per-iteration policy shifts of order
// 1e-3..1e-1 nats inside the [rho_min, rho_max] clamp band.
struct TrackerParams {
  double d_half = 0.1;
  double rho_min = 0.875;
  double rho_max = 0.96;

  void validate() const {
    if (!(d_half > 0.0)) throw std::domain_error("tracker: d_half must be > 0");
    if (!(rho_min > 0.0 && rho_min < rho_max && rho_max <= 1.0))
      throw std::domain_error("tracker: need 0 < rho_min < rho_max <= 1");
  }

  // Equilibrium pseudo-count mass 1/(1 - rho_min); also the offline-init
  // effective sample size N0.
  double equilibrium_mass() const { return 1.0 / (1.0 - rho_min); }
};

// Beta posterior over one prompt's success probability, plus the policy
// version that last acted on the prompt.
struct TrackerState {
  std::int64_t prompt_id = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::int64_t last_acted_version = 0;

  double value() const { return alpha / (alpha + beta); }
  double effective_mass() const { return alpha + beta; }
};

// rho = clamp(2^(-d / d_half), rho_min, rho_max) for KL divergence d >= 0.
// Monotonically non-increasing in d; d = +inf clamps to rho_min.
inline double forgetting_factor(double d, const TrackerParams& params) {
  params.validate();
  if (std::isnan(d) || d < 0.0)
    throw std::domain_error("forgetting_factor: KL divergence must be >= 0");
  return std::clamp(std::exp2(-d / params.d_half), params.rho_min,
                    params.rho_max);
}

// Discounted conjugate update for a binary outcome:
//   alpha' = rho * alpha + r,  beta' = rho * beta + (1 - r).
inline TrackerState update_binary(TrackerState s, double r, double rho) {
  if (r != 0.0 && r != 1.0)
    throw std::domain_error(
        "update_binary: reward must be 0 or 1 (use update_general)");
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::domain_error("update_binary: rho must be in (0, 1]");
  s.alpha = rho * s.alpha + r;
  s.beta = rho * s.beta + (1.0 - r);
  return s;
}

struct EmaState {
  double value = 0.5;
  double n_eff = 1.0;
};

// Adaptive-EMA form of the same update, valid for real-valued rewards:
//   eta = 1 / (rho * n_eff + 1),  v' = v + eta * (r - v).
// Seeded with (value, n_eff) = (alpha/(alpha+beta), alpha+beta) this tracks
// update_binary exactly.
inline EmaState update_general(double v_prev, double n_eff_prev, double r,
                               double rho) {
  if (!(n_eff_prev > 0.0))
    throw std::domain_error("update_general: n_eff must be > 0");
  double n = rho * n_eff_prev;
  double eta = 1.0 / (n + 1.0);
  return {v_prev + eta * (r - v_prev), n + 1.0};
}

// Offline initialization from n0 Monte Carlo outcomes: the point estimate
// successes/n0 is installed with the equilibrium mass N0 = 1/(1 - rho_min)
// so the first online updates see no transient in alpha + beta.
inline TrackerState init_from_samples(std::int64_t successes, std::int64_t n0,
                                      const TrackerParams& params,
                                      std::int64_t prompt_id = 0) {
  params.validate();
  if (n0 < 1) throw std::domain_error("init_from_samples: n0 must be >= 1");
  if (successes < 0 || successes > n0)
    throw std::domain_error("init_from_samples: successes must be in [0, n0]");
  double v0 = static_cast<double>(successes) / static_cast<double>(n0);
  double n0_mass = params.equilibrium_mass();
  return {prompt_id, n0_mass * v0, n0_mass * (1.0 - v0), 0};
}

// Uniform prior with equilibrium mass; used for prompts never observed
// offline and for the no-init ablation.
inline TrackerState uniform_prior(const TrackerParams& params,
                                  std::int64_t prompt_id = 0) {
  params.validate();
  double half = 0.5 * params.equilibrium_mass();
  return {prompt_id, half, half, 0};
}

inline constexpr int kSnapshotSchemaVersion = 1;

inline nlohmann::json snapshot_json(std::span<const TrackerState> states) {
  nlohmann::json prompts = nlohmann::json::array();
  for (const auto& s : states) {
    prompts.push_back({{"id", s.prompt_id},
                       {"alpha", s.alpha},
                       {"beta", s.beta},
                       {"last_acted_version", s.last_acted_version}});
  }
  return {{"schema_version", kSnapshotSchemaVersion},
          {"prompts", std::move(prompts)}};
}

// Versioned JSON snapshot. Doubles round-trip bit-exactly through the
// serializer, so restore(snapshot(S)) == S.
inline std::string snapshot(std::span<const TrackerState> states) {
  return snapshot_json(states).dump(2) + "\n";
}

inline std::vector<TrackerState> restore_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("tracker snapshot: not a JSON object");
  if (!j.contains("schema_version"))
    throw ParseError("tracker snapshot: missing field", "schema_version");
  if (!j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != kSnapshotSchemaVersion)
    throw ParseError("tracker snapshot: unsupported schema_version",
                     "schema_version");
  if (!j.contains("prompts") || !j["prompts"].is_array())
    throw ParseError("tracker snapshot: missing field", "prompts");

  std::vector<TrackerState> out;
  out.reserve(j["prompts"].size());
  for (const auto& p : j["prompts"]) {
    TrackerState s;
    for (const char* key : {"id", "alpha", "beta", "last_acted_version"}) {
      if (!p.contains(key))
        throw ParseError("tracker snapshot: prompt entry missing field", key);
    }
    s.prompt_id = p["id"].get<std::int64_t>();
    s.alpha = p["alpha"].get<double>();
    s.beta = p["beta"].get<double>();
    s.last_acted_version = p["last_acted_version"].get<std::int64_t>();
    if (s.alpha < 0.0 || s.beta < 0.0 || !(s.alpha + s.beta > 0.0))
      throw ParseError("tracker snapshot: invalid Beta parameters", "alpha");
    out.push_back(s);
  }
  return out;
}

inline std::vector<TrackerState> restore(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("tracker snapshot: invalid JSON: ") + e.what());
  }
  return restore_json(j);
}

}  // namespace spolab::tracker
