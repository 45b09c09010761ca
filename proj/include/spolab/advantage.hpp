#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace spolab::advantage {

// One stream record: a single (prompt, action, reward) rollout plus the
// baseline read before the tracker update and the advantage values derived
// from it. normalized_advantage stays NaN until the batch is closed.
struct Sample {
  std::int64_t prompt_id = 0;
  int action_id = 0;
  double reward = 0.0;
  double baseline_value = 0.0;
  double old_log_prob = 0.0;
  double raw_advantage = 0.0;
  double normalized_advantage = std::numeric_limits<double>::quiet_NaN();

  bool has_normalized() const { return !std::isnan(normalized_advantage); }
};

struct BatchStats {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

inline double raw_advantage(double reward, double baseline_pre_update) {
  return reward - baseline_pre_update;
}

inline BatchStats batch_stats(std::span<const double> values) {
  BatchStats st;
  st.count = values.size();
  if (st.count == 0) return st;
  double sum = 0.0;
  for (double v : values) sum += v;
  st.mean = sum / static_cast<double>(st.count);
  double ss = 0.0;
  for (double v : values) {
    double d = v - st.mean;
    ss += d * d;
  }
  st.std = std::sqrt(ss / static_cast<double>(st.count));
  return st;
}

struct NormalizedBatch {
  std::vector<double> advantages;
  BatchStats stats;
  bool degenerate = false;  // sigma was exactly 0; outputs are all zero
};

// Batch-wide standardization (A - mu) / sigma with population sigma. A zero
// sigma yields an all-zero batch flagged degenerate instead of failing, so
// pathological early batches do not kill a run.
inline NormalizedBatch normalize_global(std::span<const double> advantages) {
  if (advantages.size() < 2)
    throw std::domain_error("normalize_global: need at least 2 advantages");
  NormalizedBatch out;
  out.stats = batch_stats(advantages);
  out.advantages.resize(advantages.size());
  if (out.stats.std == 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < advantages.size(); ++i)
    out.advantages[i] = (advantages[i] - out.stats.mean) / out.stats.std;
  return out;
}

// Group-mean baseline with sigma normalization: (r_i - mu_G) / (sigma_G + eps).
// A degenerate group (sigma_G = 0) maps to all zeros.
inline std::vector<double> grpo_advantages(std::span<const double> group_rewards,
                                           double eps = 1e-6) {
  if (group_rewards.size() < 2)
    throw std::domain_error("grpo_advantages: group size must be >= 2");
  BatchStats st = batch_stats(group_rewards);
  std::vector<double> out(group_rewards.size());
  double denom = st.std + eps;
  for (std::size_t i = 0; i < group_rewards.size(); ++i) {
    double centered = group_rewards[i] - st.mean;
    out[i] = (denom == 0.0) ? 0.0 : centered / denom;
  }
  return out;
}

// Leave-one-out baseline: A_i = r_i - mean of the other G-1 rewards.
inline std::vector<double> rloo_advantages(std::span<const double> group_rewards) {
  std::size_t g = group_rewards.size();
  if (g < 2) throw std::domain_error("rloo_advantages: group size must be >= 2");
  double sum = 0.0;
  for (double r : group_rewards) sum += r;
  std::vector<double> out(g);
  for (std::size_t i = 0; i < g; ++i)
    out[i] = group_rewards[i] - (sum - group_rewards[i]) / static_cast<double>(g - 1);
  return out;
}

// True iff all rewards in the group are identical (exact comparison; rewards
// are binary in RLVR mode).
inline bool is_degenerate(std::span<const double> group_rewards) {
  if (group_rewards.empty())
    throw std::domain_error("is_degenerate: empty group");
  for (double r : group_rewards)
    if (r != group_rewards.front()) return false;
  return true;
}

}  // namespace spolab::advantage
