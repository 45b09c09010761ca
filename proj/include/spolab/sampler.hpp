#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "spolab/rng.hpp"

namespace spolab::sampler {

// Unnormalized prompt-selection weights. Every weight carries at least the
// exploration bonus, so no prompt's sampling probability can collapse to 0.
struct SamplingWeights {
  std::vector<double> weights;
  double total = 0.0;

  std::vector<double> probabilities() const {
    std::vector<double> p(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) p[i] = weights[i] / total;
    return p;
  }
};

// w_i = sqrt(v_i (1 - v_i)) + explore_bonus: the estimated Bernoulli
// standard deviation of each prompt plus a floor. Maximal at v = 0.5,
// symmetric under v -> 1 - v.
inline SamplingWeights compute_weights(std::span<const double> values,
                                       double explore_bonus = 0.05) {
  if (!(explore_bonus > 0.0))
    throw std::domain_error("compute_weights: explore_bonus must be > 0");
  SamplingWeights out;
  out.weights.reserve(values.size());
  for (double v : values) {
    if (std::isnan(v) || v < 0.0 || v > 1.0)
      throw std::domain_error("compute_weights: value outside [0, 1]");
    out.weights.push_back(std::sqrt(v * (1.0 - v)) + explore_bonus);
  }
  out.total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  return out;
}

inline std::size_t weighted_draw(std::span<const double> weights, double total,
                                 rng::Rng& rng) {
  double u = rng.uniform01() * total;
  double acc = 0.0;
  std::size_t last_positive = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = i;
    if (u < acc) return i;
  }
  if (last_positive == weights.size())
    throw std::domain_error("weighted_draw: no positive weight");
  return last_positive;  // u landed on accumulated rounding slack
}

// Draw batch_size prompt indices. Without replacement (the default), each
// draw removes the chosen prompt and renormalizes the rest.
inline std::vector<std::size_t> sample_batch(const SamplingWeights& weights,
                                             std::size_t batch_size,
                                             rng::Rng& rng,
                                             bool with_replacement = false) {
  std::size_t n = weights.weights.size();
  if (!with_replacement && batch_size > n)
    throw std::domain_error(
        "sample_batch: batch_size exceeds population in without-replacement mode");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  if (with_replacement) {
    for (std::size_t k = 0; k < batch_size; ++k)
      out.push_back(weighted_draw(weights.weights, weights.total, rng));
    return out;
  }
  std::vector<double> w(weights.weights);
  for (std::size_t k = 0; k < batch_size; ++k) {
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::size_t pick = weighted_draw(w, total, rng);
    out.push_back(pick);
    w[pick] = 0.0;
  }
  return out;
}

}  // namespace spolab::sampler
