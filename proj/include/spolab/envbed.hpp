#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "spolab/rng.hpp"

namespace spolab::env {

// Bounded sinusoidal perturbation of the success matrix, applied at
// iteration boundaries. Each cell gets a fixed phase offset so the field
// does not drift in lockstep.
struct DriftSpec {
  double amplitude = 0.0;
  double period = 0.0;  // iterations per cycle; must be > 0 when active
};

// Synthetic verifiable-reward environment: M prompts, K atomic actions, and
// a known success probability q[x][a] for every pair. Everything downstream
// of a rollout (values, gradients) has a closed form against q.
class BernoulliEnv {
 public:
  BernoulliEnv(std::vector<std::vector<double>> q,
               std::optional<DriftSpec> drift = std::nullopt)
      : drift_(drift) {
    if (q.empty() || q.front().empty())
      throw std::domain_error("BernoulliEnv: need at least 1 prompt and 1 action");
    prompts_ = q.size();
    actions_ = q.front().size();
    base_.reserve(prompts_ * actions_);
    for (const auto& row : q) {
      if (row.size() != actions_)
        throw std::domain_error("BernoulliEnv: ragged q matrix");
      for (double v : row) {
        if (std::isnan(v) || v < 0.0 || v > 1.0)
          throw std::domain_error("BernoulliEnv: q outside [0, 1]");
        base_.push_back(v);
      }
    }
    if (drift_ && !(drift_->period > 0.0))
      throw std::domain_error("BernoulliEnv: drift period must be > 0");
    q_ = base_;
  }

  std::size_t prompts() const { return prompts_; }
  std::size_t actions() const { return actions_; }
  bool has_drift() const { return drift_.has_value(); }

  double q(std::size_t x, std::size_t a) const { return q_[x * actions_ + a]; }

  // Recomputes q from the base matrix for iteration t; no-op when static.
  void apply_drift(std::int64_t t) {
    if (!drift_) return;
    double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < q_.size(); ++i) {
      double phase = two_pi * static_cast<double>(i) / static_cast<double>(q_.size());
      double v = base_[i] + drift_->amplitude *
                                std::sin(two_pi * static_cast<double>(t) /
                                             drift_->period + phase);
      q_[i] = std::clamp(v, 0.0, 1.0);
    }
  }

  int reward(std::size_t x, std::size_t a, rng::Rng& rng) const {
    return rng.bernoulli(q(x, a)) ? 1 : 0;
  }

 private:
  std::size_t prompts_ = 0;
  std::size_t actions_ = 0;
  std::vector<double> base_;
  std::vector<double> q_;
  std::optional<DriftSpec> drift_;
};

// Tabular softmax policy: one logit row per prompt. version increments on
// every parameter update step.
struct PolicyTable {
  std::size_t prompts = 0;
  std::size_t actions = 0;
  std::vector<double> logits;  // row-major prompts x actions
  std::int64_t version = 0;

  static PolicyTable uniform(std::size_t prompts, std::size_t actions) {
    PolicyTable p;
    p.prompts = prompts;
    p.actions = actions;
    p.logits.assign(prompts * actions, 0.0);
    return p;
  }

  double& logit(std::size_t x, std::size_t a) { return logits[x * actions + a]; }
  double logit(std::size_t x, std::size_t a) const { return logits[x * actions + a]; }

  std::span<const double> row(std::size_t x) const {
    return {logits.data() + x * actions, actions};
  }

  std::vector<double> row_probs(std::size_t x) const {
    auto r = row(x);
    double mx = *std::max_element(r.begin(), r.end());
    std::vector<double> p(actions);
    double sum = 0.0;
    for (std::size_t a = 0; a < actions; ++a) {
      p[a] = std::exp(r[a] - mx);
      sum += p[a];
    }
    for (double& v : p) v /= sum;
    return p;
  }

  double log_prob(std::size_t x, std::size_t a) const {
    auto r = row(x);
    double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double v : r) sum += std::exp(v - mx);
    return r[a] - mx - std::log(sum);
  }
};

struct ActionSample {
  int action = 0;
  double log_prob = 0.0;
};

// Samples an action from the softmax row and records its log probability at
// sampling time.
inline ActionSample act(const PolicyTable& policy, std::size_t x, rng::Rng& rng) {
  std::vector<double> p = policy.row_probs(x);
  double u = rng.uniform01();
  double acc = 0.0;
  std::size_t pick = p.size() - 1;
  for (std::size_t a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u < acc) {
      pick = a;
      break;
    }
  }
  return {static_cast<int>(pick), policy.log_prob(x, pick)};
}

// V_pi(x) = sum_a pi(a|x) q[x][a], exact.
inline double true_value(const BernoulliEnv& env, const PolicyTable& policy,
                         std::size_t x) {
  std::vector<double> p = policy.row_probs(x);
  double v = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) v += p[a] * env.q(x, a);
  return v;
}

// J(theta) under the uniform prompt distribution.
inline double expected_reward(const BernoulliEnv& env, const PolicyTable& policy) {
  double sum = 0.0;
  for (std::size_t x = 0; x < env.prompts(); ++x)
    sum += true_value(env, policy, x);
  return sum / static_cast<double>(env.prompts());
}

// Exact policy gradient via softmax calculus:
//   dJ/dtheta[x][a] = P(x) * pi(a|x) * (q[x][a] - V_pi(x)),  P(x) = 1/M.
inline std::vector<double> analytic_policy_gradient(const BernoulliEnv& env,
                                                    const PolicyTable& policy) {
  std::vector<double> g(env.prompts() * env.actions(), 0.0);
  double px = 1.0 / static_cast<double>(env.prompts());
  for (std::size_t x = 0; x < env.prompts(); ++x) {
    std::vector<double> p = policy.row_probs(x);
    double v = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) v += p[a] * env.q(x, a);
    for (std::size_t a = 0; a < p.size(); ++a)
      g[x * env.actions() + a] = px * p[a] * (env.q(x, a) - v);
  }
  return g;
}

// KL(pa || pb) over one action row, in nats. Infinite when pb lacks support
// where pa has mass.
inline double row_kl(std::span<const double> pa, std::span<const double> pb) {
  if (pa.size() != pb.size())
    throw std::domain_error("row_kl: mismatched action counts");
  double d = 0.0;
  for (std::size_t a = 0; a < pa.size(); ++a) {
    if (pa[a] == 0.0) continue;
    if (pb[a] == 0.0) return std::numeric_limits<double>::infinity();
    d += pa[a] * std::log(pa[a] / pb[a]);
  }
  return std::max(d, 0.0);  // clamp tiny negative rounding residue
}

inline double policy_kl(const PolicyTable& a, const PolicyTable& b,
                        std::size_t x) {
  std::vector<double> pa = a.row_probs(x);
  std::vector<double> pb = b.row_probs(x);
  return row_kl(pa, pb);
}

}  // namespace spolab::env
