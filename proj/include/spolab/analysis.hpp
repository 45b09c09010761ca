#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spolab/advantage.hpp"
#include "spolab/rng.hpp"

namespace spolab::analysis {

// Expected number of rollouts until a prompt with success probability p has
// produced both a success and a failure: 1/(p(1-p)) - 1. Diverges at the
// endpoints, which is exactly the cost blow-up of resample-until-informative
// schemes on mastered or hopeless prompts.
inline double expected_dynamic_samples(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error(
        "expected_dynamic_samples: diverges unless 0 < p < 1");
  return 1.0 / (p * (1.0 - p)) - 1.0;
}

// Probability that a group of G i.i.d. binary outcomes is degenerate:
// Z_G(p) = p^G + (1-p)^G.
inline double degeneracy_prob(double p, int group_size) {
  if (group_size < 1)
    throw std::domain_error("degeneracy_prob: group size must be >= 1");
  if (std::isnan(p) || p < 0.0 || p > 1.0)
    throw std::domain_error("degeneracy_prob: p must be in [0, 1]");
  return std::pow(p, group_size) + std::pow(1.0 - p, group_size);
}

struct VarianceRatioParams {
  int group_size = 8;
  double n_eff = 8.0;   // tracker pseudo-count mass
  double p = 0.5;       // prompt success probability
  double psi_g = 0.0;   // excess variance of per-group standardization
  double psi_b = 0.0;   // excess variance of batch-level standardization

  void validate() const {
    if (group_size < 2)
      throw std::domain_error("variance_ratio: group size must be >= 2");
    if (!(p > 0.0 && p < 1.0))
      throw std::domain_error("variance_ratio: p must be in (0, 1)");
    if (psi_g < 0.0 || psi_b < 0.0)
      throw std::domain_error("variance_ratio: psi terms must be >= 0");
    if (!(n_eff > 0.0))
      throw std::domain_error("variance_ratio: n_eff must be > 0");
  }
};

struct VarianceRatioBreakdown {
  double baseline_noise = 0.0;
  double information_loss = 0.0;
  double normalization_noise = 0.0;
  double ratio = 0.0;
};

// Group-based over stream-based gradient-variance ratio, factored into
// baseline noise, degenerate-group information loss, and normalization
// noise:
//   (1 + 1/G) / (1 + 1/(n_eff + 1)) * 1/(1 - Z_G(p)) * (1 + psi_g)/(1 + psi_b)
inline VarianceRatioBreakdown variance_ratio_terms(const VarianceRatioParams& vp) {
  vp.validate();
  double z = degeneracy_prob(vp.p, vp.group_size);
  if (z >= 1.0)
    throw std::domain_error("variance_ratio: degeneracy probability is 1");
  VarianceRatioBreakdown out;
  out.baseline_noise = (1.0 + 1.0 / static_cast<double>(vp.group_size)) /
                       (1.0 + 1.0 / (vp.n_eff + 1.0));
  out.information_loss = 1.0 / (1.0 - z);
  out.normalization_noise = (1.0 + vp.psi_g) / (1.0 + vp.psi_b);
  out.ratio = out.baseline_noise * out.information_loss * out.normalization_noise;
  return out;
}

inline double variance_ratio(const VarianceRatioParams& vp) {
  return variance_ratio_terms(vp).ratio;
}

struct SignalDiagnostics {
  double degenerate_ratio = 0.0;  // fraction of samples in degenerate groups
  double nz_ratio_tight = 0.0;    // fraction |A| <= 1e-4
  double nz_ratio_loose = 0.0;    // fraction |A| <= 0.02
  double var_raw = 0.0;           // population variance of raw rewards
  double var_spo = 0.0;           // population variance of stream advantages
  std::optional<double> var_grpo_effective;  // over non-degenerate groups only
};

inline constexpr double kNzTight = 1e-4;
inline constexpr double kNzLoose = 0.02;

// Signal-efficiency diagnostics over one batch: rewards and group_ids
// describe the group view (parallel arrays), stream_raw_advantages the
// stream view. var_grpo_effective is empty when every group is degenerate;
// callers must surface that explicitly rather than printing 0.
inline SignalDiagnostics signal_diagnostics(
    std::span<const double> stream_raw_advantages,
    std::span<const double> rewards, std::span<const std::size_t> group_ids) {
  if (rewards.size() != group_ids.size())
    throw std::domain_error("signal_diagnostics: rewards/group_ids length mismatch");
  if (rewards.empty() || stream_raw_advantages.empty())
    throw std::domain_error("signal_diagnostics: empty sample set");

  SignalDiagnostics out;
  std::size_t tight = 0, loose = 0;
  for (double a : stream_raw_advantages) {
    if (std::abs(a) <= kNzTight) ++tight;
    if (std::abs(a) <= kNzLoose) ++loose;
  }
  out.nz_ratio_tight = static_cast<double>(tight) / stream_raw_advantages.size();
  out.nz_ratio_loose = static_cast<double>(loose) / stream_raw_advantages.size();
  out.var_spo = advantage::batch_stats(stream_raw_advantages).std;
  out.var_spo *= out.var_spo;
  out.var_raw = advantage::batch_stats(rewards).std;
  out.var_raw *= out.var_raw;

  // Group pass: membership, degeneracy, and centered advantages.
  std::size_t max_gid = 0;
  for (std::size_t g : group_ids) max_gid = std::max(max_gid, g);
  std::vector<double> gsum(max_gid + 1, 0.0);
  std::vector<std::size_t> gcount(max_gid + 1, 0);
  std::vector<bool> gdegen(max_gid + 1, true);
  std::vector<double> gfirst(max_gid + 1, 0.0);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    std::size_t g = group_ids[i];
    if (gcount[g] == 0)
      gfirst[g] = rewards[i];
    else if (rewards[i] != gfirst[g])
      gdegen[g] = false;
    gsum[g] += rewards[i];
    ++gcount[g];
  }
  std::size_t degen_samples = 0;
  std::vector<double> effective;
  effective.reserve(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    std::size_t g = group_ids[i];
    if (gdegen[g]) {
      ++degen_samples;
    } else {
      effective.push_back(rewards[i] - gsum[g] / static_cast<double>(gcount[g]));
    }
  }
  out.degenerate_ratio = static_cast<double>(degen_samples) / rewards.size();
  if (!effective.empty()) {
    double sd = advantage::batch_stats(effective).std;
    out.var_grpo_effective = sd * sd;
  }
  return out;
}

// ---- Monte Carlo validators (the brute-force side of the closed forms) ----

// Mean number of Bernoulli(p) draws until both outcomes have been seen.
inline double mc_expected_dynamic_samples(double p, std::size_t trials,
                                          rng::Rng& rng) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("mc_expected_dynamic_samples: need 0 < p < 1");
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    bool seen_success = false, seen_failure = false;
    std::size_t n = 0;
    while (!(seen_success && seen_failure)) {
      ++n;
      if (rng.bernoulli(p))
        seen_success = true;
      else
        seen_failure = true;
    }
    total += static_cast<double>(n);
  }
  return total / static_cast<double>(trials);
}

// Fraction of simulated groups whose G outcomes are identical.
inline double mc_degeneracy_freq(double p, int group_size, std::size_t groups,
                                 rng::Rng& rng) {
  std::size_t degenerate = 0;
  for (std::size_t t = 0; t < groups; ++t) {
    bool first = rng.bernoulli(p);
    bool same = true;
    for (int i = 1; i < group_size; ++i)
      if (rng.bernoulli(p) != first) same = false;
    if (same) ++degenerate;
  }
  return static_cast<double>(degenerate) / static_cast<double>(groups);
}

// Simulation estimate of psi_G: the excess variance of per-group
// standardization over true-sigma standardization, conditional on the group
// being non-degenerate. No closed form is assumed.
inline double estimate_group_norm_excess(double p, int group_size,
                                         std::size_t groups, rng::Rng& rng) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("estimate_group_norm_excess: need 0 < p < 1");
  double sigma_true = std::sqrt(p * (1.0 - p));
  std::vector<double> rewards(group_size);
  std::vector<double> group_std, true_std;
  for (std::size_t t = 0; t < groups; ++t) {
    for (int i = 0; i < group_size; ++i)
      rewards[i] = rng.bernoulli(p) ? 1.0 : 0.0;
    auto st = advantage::batch_stats(rewards);
    if (st.std == 0.0) continue;
    for (int i = 0; i < group_size; ++i) {
      double centered = rewards[i] - st.mean;
      group_std.push_back(centered / st.std);
      true_std.push_back(centered / sigma_true);
    }
  }
  if (group_std.empty())
    throw std::domain_error("estimate_group_norm_excess: all groups degenerate");
  auto vg = advantage::batch_stats(group_std);
  auto vt = advantage::batch_stats(true_std);
  return (vg.std * vg.std) / (vt.std * vt.std) - 1.0;
}

struct ValidationRow {
  std::string name;
  double expected = 0.0;
  double observed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Closed-form vs. Monte Carlo check table backing `analyze validate`.
inline std::vector<ValidationRow> run_validators(std::size_t trials,
                                                 std::uint64_t seed) {
  std::vector<ValidationRow> rows;
  std::uint64_t counter = 0;
  for (double p : {0.1, 0.5}) {
    rng::Rng r(rng::derive_seed(seed, rng::kValidate, counter++));
    ValidationRow row;
    row.name = "expected_dynamic_samples p=" + std::to_string(p);
    row.expected = expected_dynamic_samples(p);
    row.observed = mc_expected_dynamic_samples(p, trials, r);
    row.tolerance = 0.02 * row.expected;
    row.pass = std::abs(row.observed - row.expected) <= row.tolerance;
    rows.push_back(row);
  }
  for (double p : {0.1, 0.5, 0.9}) {
    for (int g : {4, 8, 16}) {
      rng::Rng r(rng::derive_seed(seed, rng::kValidate, counter++));
      ValidationRow row;
      row.name = "degeneracy_prob p=" + std::to_string(p) +
                 " G=" + std::to_string(g);
      row.expected = degeneracy_prob(p, g);
      row.observed = mc_degeneracy_freq(p, g, trials, r);
      row.tolerance =
          3.0 * std::sqrt(row.expected * (1.0 - row.expected) /
                          static_cast<double>(trials));
      row.pass = std::abs(row.observed - row.expected) <= row.tolerance;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace spolab::analysis
