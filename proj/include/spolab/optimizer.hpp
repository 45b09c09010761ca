#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "spolab/advantage.hpp"
#include "spolab/envbed.hpp"
#include "spolab/rng.hpp"

namespace spolab::optim {

// Clipped-surrogate hyperparameters. The asymmetric band (eps_high >
// eps_low) leaves more room on the upside of the ratio.
struct ClipParams {
  double eps_low = 0.2;
  double eps_high = 0.28;
  double learning_rate = 0.1;
  std::size_t updates_per_rollout = 8;
  std::size_t minibatch_size = 0;  // 0: dataset_size / updates_per_rollout

  void validate() const {
    if (!(eps_low > 0.0 && eps_low < 1.0 && eps_high > 0.0 && eps_high < 1.0))
      throw std::domain_error("clip: eps_low and eps_high must be in (0, 1)");
    if (learning_rate < 0.0)
      throw std::domain_error("clip: learning_rate must be >= 0");
  }
};

// min(ratio * adv, clamp(ratio, 1 - eps_low, 1 + eps_high) * adv).
inline double clip_objective(double ratio, double adv, const ClipParams& p) {
  p.validate();
  if (!(ratio > 0.0))
    throw std::domain_error("clip_objective: ratio must be > 0");
  double clipped = std::clamp(ratio, 1.0 - p.eps_low, 1.0 + p.eps_high);
  return std::min(ratio * adv, clipped * adv);
}

struct SurrogateResult {
  double loss = 0.0;
  std::vector<double> gradient;  // dLoss/dlogits, same shape as policy.logits
};

// Loss only; shares the objective with surrogate_and_gradient and is what
// finite-difference checks probe.
inline double surrogate_loss(const env::PolicyTable& policy,
                             std::span<const advantage::Sample> samples,
                             const ClipParams& p) {
  p.validate();
  if (samples.empty())
    throw std::domain_error("surrogate_loss: empty sample set");
  double acc = 0.0;
  for (const auto& s : samples) {
    if (!s.has_normalized())
      throw std::logic_error("surrogate_loss: sample lacks normalized advantage");
    double lp = policy.log_prob(static_cast<std::size_t>(s.prompt_id),
                                static_cast<std::size_t>(s.action_id));
    double ratio = std::exp(lp - s.old_log_prob);
    double adv = s.normalized_advantage;
    double clipped = std::clamp(ratio, 1.0 - p.eps_low, 1.0 + p.eps_high);
    acc += std::min(ratio * adv, clipped * adv);
  }
  return -acc / static_cast<double>(samples.size());
}

// Mean clipped-surrogate loss and its exact gradient. A sample whose min
// picks the clamped term contributes zero gradient; when the ratio sits
// inside the clip band both terms coincide and the usual ratio * adv *
// grad-log-prob flows through.
inline SurrogateResult surrogate_and_gradient(
    const env::PolicyTable& policy, std::span<const advantage::Sample> samples,
    const ClipParams& p) {
  p.validate();
  if (samples.empty())
    throw std::domain_error("surrogate_and_gradient: empty sample set");
  SurrogateResult res;
  res.gradient.assign(policy.logits.size(), 0.0);
  double inv_n = 1.0 / static_cast<double>(samples.size());
  double acc = 0.0;
  for (const auto& s : samples) {
    if (!s.has_normalized())
      throw std::logic_error(
          "surrogate_and_gradient: sample lacks normalized advantage");
    auto x = static_cast<std::size_t>(s.prompt_id);
    auto a = static_cast<std::size_t>(s.action_id);
    std::vector<double> probs = policy.row_probs(x);
    double lp = policy.log_prob(x, a);
    double ratio = std::exp(lp - s.old_log_prob);
    double adv = s.normalized_advantage;
    double clipped = std::clamp(ratio, 1.0 - p.eps_low, 1.0 + p.eps_high);
    double surr_free = ratio * adv;
    double surr_clip = clipped * adv;
    acc += std::min(surr_free, surr_clip);
    double dobj_dlp;
    if (surr_free <= surr_clip)
      dobj_dlp = surr_free;  // d(ratio * adv)/dlp = ratio * adv
    else
      dobj_dlp = (clipped == ratio) ? surr_free : 0.0;
    if (dobj_dlp == 0.0) continue;
    // dlp/dlogit[x][a'] = delta(a' == a) - pi(a'|x)
    double* grow = res.gradient.data() + x * policy.actions;
    for (std::size_t ap = 0; ap < policy.actions; ++ap)
      grow[ap] -= inv_n * dobj_dlp * ((ap == a ? 1.0 : 0.0) - probs[ap]);
  }
  res.loss = -acc * inv_n;
  return res;
}

// updates_per_rollout gradient-ascent steps over shuffled minibatches of the
// rollout dataset. Reshuffles when an epoch is exhausted; the tail chunk of
// an epoch may be short. Deterministic given the rng.
inline void minibatch_update(env::PolicyTable& policy,
                             std::span<const advantage::Sample> dataset,
                             const ClipParams& p, rng::Rng& rng) {
  p.validate();
  if (dataset.empty())
    throw std::domain_error("minibatch_update: empty dataset");
  if (p.learning_rate == 0.0 || p.updates_per_rollout == 0) return;
  std::size_t n = dataset.size();
  std::size_t m = p.minibatch_size ? std::min(p.minibatch_size, n)
                                   : std::max<std::size_t>(1, n / p.updates_per_rollout);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t pos = n;  // force shuffle before the first step
  std::vector<advantage::Sample> mb;
  mb.reserve(m);
  for (std::size_t step = 0; step < p.updates_per_rollout; ++step) {
    if (pos >= n) {
      rng.shuffle(order);
      pos = 0;
    }
    std::size_t take = std::min(m, n - pos);
    mb.clear();
    for (std::size_t i = 0; i < take; ++i) mb.push_back(dataset[order[pos + i]]);
    pos += take;
    SurrogateResult res = surrogate_and_gradient(policy, mb, p);
    for (std::size_t i = 0; i < policy.logits.size(); ++i)
      policy.logits[i] -= p.learning_rate * res.gradient[i];
    ++policy.version;
  }
}

}  // namespace spolab::optim
