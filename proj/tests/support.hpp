#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace testsupport {

inline double binomial_sigma(double p, std::size_t n) {
  return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

inline bool within_3sigma(double observed_freq, double p, std::size_t n) {
  return std::abs(observed_freq - p) <= 3.0 * binomial_sigma(p, n);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_variance(std::span<const double> v) {
  double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

// Pearson chi-square statistic against expected probabilities.
inline double chi_square(std::span<const std::size_t> counts,
                         std::span<const double> probs, std::size_t n) {
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double expected = probs[i] * static_cast<double>(n);
    double d = static_cast<double>(counts[i]) - expected;
    stat += d * d / expected;
  }
  return stat;
}

}  // namespace testsupport
