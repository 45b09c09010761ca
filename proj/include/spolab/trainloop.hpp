#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spolab/advantage.hpp"
#include "spolab/analysis.hpp"
#include "spolab/envbed.hpp"
#include "spolab/errors.hpp"
#include "spolab/optimizer.hpp"
#include "spolab/rng.hpp"
#include "spolab/sampler.hpp"
#include "spolab/textio.hpp"
#include "spolab/tracker.hpp"

namespace spolab::train {

enum class Algorithm {
  spo,
  grpo,
  rloo,
  spo_no_baseline,
  spo_no_init,
  spo_uniform_sampling,
  bspo,
};

inline bool is_group_algorithm(Algorithm a) {
  return a == Algorithm::grpo || a == Algorithm::rloo;
}

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::spo: return "spo";
    case Algorithm::grpo: return "grpo";
    case Algorithm::rloo: return "rloo";
    case Algorithm::spo_no_baseline: return "spo_no_baseline";
    case Algorithm::spo_no_init: return "spo_no_init";
    case Algorithm::spo_uniform_sampling: return "spo_uniform_sampling";
    case Algorithm::bspo: return "bspo";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (Algorithm a : {Algorithm::spo, Algorithm::grpo, Algorithm::rloo,
                      Algorithm::spo_no_baseline, Algorithm::spo_no_init,
                      Algorithm::spo_uniform_sampling, Algorithm::bspo})
    if (s == algorithm_name(a)) return a;
  throw ConfigError("unknown algorithm: " + s);
}

struct RunConfig {
  Algorithm algorithm = Algorithm::spo;
  std::size_t batch_size = 256;  // total samples per iteration
  std::size_t group_size = 8;    // group algorithms only
  std::size_t iterations = 300;
  std::uint64_t seed = 0;
  tracker::TrackerParams tracker_params;
  std::size_t init_samples = 8;  // n0 for offline initialization
  optim::ClipParams clip;
  double explore_bonus = 0.05;
  bool sample_with_replacement = false;
  std::size_t bspo_repeat = 1;
  double bspo_oversample = 0.0;  // extra prompt fraction launched per batch
  double grpo_eps = 1e-6;

  void validate() const {
    if (iterations < 1) throw ConfigError("config: iterations must be >= 1");
    if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (is_group_algorithm(algorithm)) {
      if (group_size < 2) throw ConfigError("config: group_size must be >= 2");
      if (batch_size % group_size != 0)
        throw ConfigError("config: batch_size must be divisible by group_size");
    } else {
      if (batch_size < 2)
        throw ConfigError("config: stream algorithms need batch_size >= 2");
      if (algorithm == Algorithm::bspo) {
        if (bspo_repeat < 1)
          throw ConfigError("config: bspo repeat factor must be >= 1");
        if (batch_size % bspo_repeat != 0)
          throw ConfigError("config: batch_size must be divisible by bspo repeat");
        if (bspo_oversample < 0.0)
          throw ConfigError("config: bspo oversample ratio must be >= 0");
      }
      if (!(explore_bonus > 0.0))
        throw ConfigError("config: sampler.explore_bonus must be > 0");
      tracker_params.validate();
      if (init_samples < 1) throw ConfigError("config: init n0 must be >= 1");
    }
    if (grpo_eps < 0.0) throw ConfigError("config: grpo eps must be >= 0");
    try {
      clip.validate();
    } catch (const std::domain_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
};

// One CSV row per training iteration.
struct IterationMetrics {
  std::int64_t iter = 0;
  double expected_reward = 0.0;  // exact J(theta) after this iteration's update
  double adv_var_raw = 0.0;      // population variance of raw advantages
  double degenerate_ratio = 0.0;
  double nz_ratio_tight = 0.0;   // fraction |A| <= 1e-4
  double nz_ratio_loose = 0.0;   // fraction |A| <= 0.02
  double tracker_mse = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples_generated = 0;
  std::size_t samples_contributing = 0;
};

inline constexpr const char* kMetricsCsvHeader =
    "iter,J,adv_var_raw,degenerate_ratio,nz_ratio_1e-4,nz_ratio_0.02,"
    "tracker_mse,samples,contributing";

inline std::string metrics_csv(std::span<const IterationMetrics> rows) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += textio::format_i64(r.iter);
    out += ',';
    out += textio::format_double(r.expected_reward);
    out += ',';
    out += textio::format_double(r.adv_var_raw);
    out += ',';
    out += textio::format_double(r.degenerate_ratio);
    out += ',';
    out += textio::format_double(r.nz_ratio_tight);
    out += ',';
    out += textio::format_double(r.nz_ratio_loose);
    out += ',';
    out += textio::format_double(r.tracker_mse);
    out += ',';
    out += textio::format_u64(r.samples_generated);
    out += ',';
    out += textio::format_u64(r.samples_contributing);
    out += '\n';
  }
  return out;
}

struct RunResult {
  std::vector<IterationMetrics> metrics;
  env::PolicyTable policy;
  std::vector<tracker::TrackerState> tracker;  // empty for group algorithms
};

// Batch observer for instrumentation; receives the closed batch each
// iteration, after normalization and before the policy update.
using BatchObserver =
    std::function<void(std::int64_t, std::span<const advantage::Sample>)>;

// Offline tracker initialization: n0 rollouts per prompt under the given
// policy, point estimate installed at the equilibrium mass.
inline std::vector<tracker::TrackerState> offline_init(
    const env::BernoulliEnv& environment, const env::PolicyTable& policy,
    const tracker::TrackerParams& params, std::size_t n0, std::uint64_t seed) {
  rng::Rng r(seed);
  std::vector<tracker::TrackerState> states;
  states.reserve(environment.prompts());
  for (std::size_t x = 0; x < environment.prompts(); ++x) {
    std::int64_t successes = 0;
    for (std::size_t k = 0; k < n0; ++k) {
      auto action = env::act(policy, x, r);
      successes += environment.reward(x, static_cast<std::size_t>(action.action), r);
    }
    states.push_back(tracker::init_from_samples(
        successes, static_cast<std::int64_t>(n0), params,
        static_cast<std::int64_t>(x)));
  }
  return states;
}

namespace detail {

inline std::vector<std::size_t> uniform_without_replacement(std::size_t n,
                                                            std::size_t k,
                                                            rng::Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace detail

// Runs the configured algorithm against one environment and policy.
//
// Stream algorithms follow the single-stream loop: prioritized prompt
// sampling from pre-iteration tracker values, one rollout per stream, raw
// advantage against the baseline read before that stream's tracker update,
// KL-adaptive tracker update inside the rollout loop, global batch
// normalization, then minibatched clipped-surrogate ascent.
//
// bspo repeats each sampled prompt `bspo_repeat` times as independent
// streams sharing the tracker; every repeat reads the same pre-batch
// baseline, and the tracker is updated once per stream in order. With
// oversampling, extra prompts are launched but only the first batch_size
// streams (round-robin over prompts) complete; the rest are terminated
// early, never observe a reward, and count only as generated work.
//
// Group algorithms sample batch_size/group_size prompts uniformly, roll a
// full group per prompt, and use per-group baselines; degenerate groups
// contribute exact zeros.
inline RunResult run(const RunConfig& cfg, env::BernoulliEnv environment,
                     env::PolicyTable policy,
                     std::optional<std::vector<tracker::TrackerState>>
                         tracker_init = std::nullopt,
                     const BatchObserver& on_batch = {}) {
  cfg.validate();
  const std::size_t m = environment.prompts();
  if (policy.prompts != m || policy.actions != environment.actions())
    throw ConfigError("train: policy shape does not match environment");

  const bool group_mode = is_group_algorithm(cfg.algorithm);
  const std::size_t repeat =
      cfg.algorithm == Algorithm::bspo ? cfg.bspo_repeat : 1;

  std::size_t prompts_per_iter = 0;
  std::size_t launched_prompts = 0;
  if (group_mode) {
    prompts_per_iter = cfg.batch_size / cfg.group_size;
    if (prompts_per_iter > m)
      throw ConfigError("train: batch needs more prompts than the environment has");
  } else {
    prompts_per_iter = cfg.batch_size / repeat;
    launched_prompts = static_cast<std::size_t>(std::ceil(
        static_cast<double>(prompts_per_iter) * (1.0 + cfg.bspo_oversample)));
    launched_prompts = std::max(launched_prompts, prompts_per_iter);
    if (!cfg.sample_with_replacement && launched_prompts > m)
      throw ConfigError(
          "train: batch needs more prompts than the environment has "
          "(enable sampler.replacement or shrink the batch)");
  }

  std::vector<tracker::TrackerState> states;
  std::vector<std::vector<double>> last_rows;
  if (!group_mode) {
    if (tracker_init) {
      states = std::move(*tracker_init);
      if (states.size() != m)
        throw ConfigError("train: tracker snapshot prompt count mismatch");
      for (std::size_t x = 0; x < m; ++x)
        if (states[x].prompt_id != static_cast<std::int64_t>(x))
          throw ConfigError("train: tracker snapshot ids must be 0..M-1 in order");
    } else if (cfg.algorithm == Algorithm::spo_no_init) {
      states.reserve(m);
      for (std::size_t x = 0; x < m; ++x)
        states.push_back(tracker::uniform_prior(cfg.tracker_params,
                                                static_cast<std::int64_t>(x)));
    } else {
      states = offline_init(environment, policy, cfg.tracker_params,
                            cfg.init_samples,
                            rng::derive_seed(cfg.seed, rng::kInit));
    }
    last_rows.resize(m);
    for (std::size_t x = 0; x < m; ++x) last_rows[x] = policy.row_probs(x);
  }

  RunResult result;
  result.metrics.reserve(cfg.iterations);

  std::vector<advantage::Sample> batch;
  for (std::int64_t iter = 1; iter <= static_cast<std::int64_t>(cfg.iterations);
       ++iter) {
    environment.apply_drift(iter);
    rng::Rng rs(rng::derive_seed(cfg.seed, rng::kPromptSampling,
                                 static_cast<std::uint64_t>(iter)));
    rng::Rng ra(rng::derive_seed(cfg.seed, rng::kAction,
                                 static_cast<std::uint64_t>(iter)));
    rng::Rng rr(rng::derive_seed(cfg.seed, rng::kReward,
                                 static_cast<std::uint64_t>(iter)));

    batch.clear();
    std::size_t generated = 0;
    std::size_t degenerate_samples = 0;

    if (group_mode) {
      std::vector<std::size_t> prompts =
          detail::uniform_without_replacement(m, prompts_per_iter, rs);
      std::vector<double> rewards(cfg.group_size);
      for (std::size_t x : prompts) {
        std::size_t base_index = batch.size();
        for (std::size_t j = 0; j < cfg.group_size; ++j) {
          auto action = env::act(policy, x, ra);
          int r = environment.reward(x, static_cast<std::size_t>(action.action), rr);
          rewards[j] = static_cast<double>(r);
          advantage::Sample s;
          s.prompt_id = static_cast<std::int64_t>(x);
          s.action_id = action.action;
          s.reward = static_cast<double>(r);
          s.old_log_prob = action.log_prob;
          batch.push_back(s);
        }
        std::vector<double> norm =
            cfg.algorithm == Algorithm::grpo
                ? advantage::grpo_advantages(rewards, cfg.grpo_eps)
                : advantage::rloo_advantages(rewards);
        double mean =
            std::accumulate(rewards.begin(), rewards.end(), 0.0) /
            static_cast<double>(cfg.group_size);
        bool degenerate = advantage::is_degenerate(rewards);
        if (degenerate) degenerate_samples += cfg.group_size;
        for (std::size_t j = 0; j < cfg.group_size; ++j) {
          advantage::Sample& s = batch[base_index + j];
          if (cfg.algorithm == Algorithm::grpo) {
            s.baseline_value = mean;
            s.raw_advantage = s.reward - mean;
          } else {
            s.baseline_value = s.reward - norm[j];  // leave-one-out mean
            s.raw_advantage = norm[j];
          }
          s.normalized_advantage = norm[j];
        }
      }
      generated = batch.size();
    } else {
      std::vector<std::size_t> chosen;
      if (cfg.algorithm == Algorithm::spo_uniform_sampling) {
        sampler::SamplingWeights uniform;
        uniform.weights.assign(m, 1.0);
        uniform.total = static_cast<double>(m);
        chosen = sampler::sample_batch(uniform, launched_prompts, rs,
                                       cfg.sample_with_replacement);
      } else {
        std::vector<double> values(m);
        for (std::size_t x = 0; x < m; ++x) values[x] = states[x].value();
        auto weights = sampler::compute_weights(values, cfg.explore_bonus);
        chosen = sampler::sample_batch(weights, launched_prompts, rs,
                                       cfg.sample_with_replacement);
      }

      std::vector<double> prebatch_value;
      if (cfg.algorithm == Algorithm::bspo) {
        prebatch_value.resize(m, 0.0);
        for (std::size_t x : chosen) prebatch_value[x] = states[x].value();
      }

      const bool no_baseline = cfg.algorithm == Algorithm::spo_no_baseline;
      generated = chosen.size() * repeat;
      std::size_t stream_index = 0;
      for (std::size_t round = 0; round < repeat; ++round) {
        for (std::size_t pi = 0;
             pi < chosen.size() && stream_index < cfg.batch_size;
             ++pi, ++stream_index) {
          std::size_t x = chosen[pi];
          auto action = env::act(policy, x, ra);
          int r = environment.reward(x, static_cast<std::size_t>(action.action), rr);
          double pre_update = cfg.algorithm == Algorithm::bspo
                                  ? prebatch_value[x]
                                  : states[x].value();
          double baseline = no_baseline ? 0.0 : pre_update;
          advantage::Sample s;
          s.prompt_id = static_cast<std::int64_t>(x);
          s.action_id = action.action;
          s.reward = static_cast<double>(r);
          s.baseline_value = baseline;
          s.old_log_prob = action.log_prob;
          s.raw_advantage = advantage::raw_advantage(s.reward, baseline);
          batch.push_back(s);

          std::vector<double> current = policy.row_probs(x);
          double divergence = env::row_kl(current, last_rows[x]);
          double rho = tracker::forgetting_factor(divergence, cfg.tracker_params);
          states[x] = tracker::update_binary(states[x], s.reward, rho);
          states[x].last_acted_version = policy.version;
          last_rows[x] = std::move(current);
        }
      }

      std::vector<double> raw(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i)
        raw[i] = batch[i].raw_advantage;
      auto norm = advantage::normalize_global(raw);
      for (std::size_t i = 0; i < batch.size(); ++i)
        batch[i].normalized_advantage = norm.advantages[i];
    }

    if (on_batch) on_batch(iter, batch);

    IterationMetrics row;
    row.iter = iter;
    {
      std::vector<double> raw(batch.size());
      std::size_t tight = 0, loose = 0, contributing = 0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        raw[i] = batch[i].raw_advantage;
        double a = std::abs(raw[i]);
        if (a <= analysis::kNzTight) ++tight;
        if (a <= analysis::kNzLoose) ++loose;
        double signal = group_mode ? batch[i].normalized_advantage : raw[i];
        if (signal != 0.0) ++contributing;
      }
      auto st = advantage::batch_stats(raw);
      row.adv_var_raw = st.std * st.std;
      row.nz_ratio_tight = static_cast<double>(tight) / batch.size();
      row.nz_ratio_loose = static_cast<double>(loose) / batch.size();
      row.degenerate_ratio =
          static_cast<double>(degenerate_samples) / batch.size();
      row.samples_generated = generated;
      row.samples_contributing = contributing;
    }

    rng::Rng rsh(rng::derive_seed(cfg.seed, rng::kShuffle,
                                  static_cast<std::uint64_t>(iter)));
    optim::minibatch_update(policy, batch, cfg.clip, rsh);

    row.expected_reward = env::expected_reward(environment, policy);
    if (!group_mode) {
      double mse = 0.0;
      for (std::size_t x = 0; x < m; ++x) {
        double d = states[x].value() - env::true_value(environment, policy, x);
        mse += d * d;
      }
      row.tracker_mse = mse / static_cast<double>(m);
    }
    result.metrics.push_back(row);
  }

  result.policy = std::move(policy);
  result.tracker = std::move(states);
  return result;
}

inline RunResult run_spo(const RunConfig& cfg, env::BernoulliEnv environment,
                         env::PolicyTable policy,
                         std::optional<std::vector<tracker::TrackerState>>
                             tracker_init = std::nullopt,
                         const BatchObserver& on_batch = {}) {
  if (is_group_algorithm(cfg.algorithm) || cfg.algorithm == Algorithm::bspo)
    throw ConfigError("run_spo: config selects a non-stream algorithm");
  return run(cfg, std::move(environment), std::move(policy),
             std::move(tracker_init), on_batch);
}

inline RunResult run_grpo(const RunConfig& cfg, env::BernoulliEnv environment,
                          env::PolicyTable policy,
                          const BatchObserver& on_batch = {}) {
  if (!is_group_algorithm(cfg.algorithm))
    throw ConfigError("run_grpo: config selects a stream algorithm");
  return run(cfg, std::move(environment), std::move(policy), std::nullopt,
             on_batch);
}

inline RunResult run_bspo(const RunConfig& cfg, env::BernoulliEnv environment,
                          env::PolicyTable policy,
                          std::optional<std::vector<tracker::TrackerState>>
                              tracker_init = std::nullopt,
                          const BatchObserver& on_batch = {}) {
  if (cfg.algorithm != Algorithm::bspo)
    throw ConfigError("run_bspo: config does not select bspo");
  return run(cfg, std::move(environment), std::move(policy),
             std::move(tracker_init), on_batch);
}

}  // namespace spolab::train
