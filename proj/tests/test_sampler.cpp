#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <vector>

#include "spolab/rng.hpp"
#include "spolab/sampler.hpp"
#include "support.hpp"

using namespace spolab;

TEST_CASE("weights follow the Bernoulli std plus bonus", "[sampler]") {
  auto w = sampler::compute_weights(std::vector<double>{0.0, 0.5, 1.0}, 0.05);
  REQUIRE(w.weights.size() == 3);
  CHECK(w.weights[0] == Catch::Approx(0.05).margin(1e-15));
  CHECK(w.weights[1] == Catch::Approx(0.55).margin(1e-15));
  CHECK(w.weights[2] == Catch::Approx(0.05).margin(1e-15));

  auto p = w.probabilities();
  CHECK(p[0] == Catch::Approx(1.0 / 13.0).margin(1e-15));
  CHECK(p[1] == Catch::Approx(11.0 / 13.0).margin(1e-15));
  CHECK(p[2] == Catch::Approx(1.0 / 13.0).margin(1e-15));

  // all-equal values give a uniform distribution
  auto flat = sampler::compute_weights(std::vector<double>(7, 0.5)).probabilities();
  for (double v : flat) CHECK(v == Catch::Approx(1.0 / 7.0).margin(1e-12));

  CHECK_THROWS_AS(sampler::compute_weights(std::vector<double>{1.1}),
                  std::domain_error);
  CHECK_THROWS_AS(sampler::compute_weights(std::vector<double>{0.5}, 0.0),
                  std::domain_error);
}

TEST_CASE("weight function shape", "[sampler]") {
  rng::Rng r(3);
  auto weight = [](double v) {
    return sampler::compute_weights(std::vector<double>{v}).weights[0];
  };
  for (int i = 0; i < 200; ++i) {
    double v = r.uniform(0.0, 1.0);
    CHECK(weight(v) == Catch::Approx(weight(1.0 - v)).margin(1e-12));
    CHECK(weight(v) <= weight(0.5) + 1e-15);
    CHECK(weight(v) >= weight(0.0) - 1e-15);
    CHECK(weight(v) >= 0.05);  // bonus is a floor on every weight
  }
}

TEST_CASE("batch sampling determinism and bounds", "[sampler]") {
  auto w = sampler::compute_weights(std::vector<double>{0.1, 0.4, 0.9, 0.5});

  rng::Rng a(42), b(42);
  auto batch_a = sampler::sample_batch(w, 3, a);
  auto batch_b = sampler::sample_batch(w, 3, b);
  CHECK(batch_a == batch_b);

  // without replacement: no duplicates, full draw covers everyone
  rng::Rng c(1);
  auto all = sampler::sample_batch(w, 4, c);
  std::vector<std::size_t> sorted(all);
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3});

  rng::Rng d(2);
  CHECK_THROWS_AS(sampler::sample_batch(w, 5, d), std::domain_error);
  auto with = sampler::sample_batch(w, 12, d, true);
  CHECK(with.size() == 12);

  sampler::SamplingWeights lone;
  lone.weights = {1.0};
  lone.total = 1.0;
  rng::Rng e(3);
  CHECK(sampler::sample_batch(lone, 1, e) == std::vector<std::size_t>{1 - 1});
}

TEST_CASE("draw frequencies match the weight distribution", "[sampler]") {
  auto w = sampler::compute_weights(std::vector<double>{0.0, 0.5, 1.0}, 0.05);
  auto p = w.probabilities();
  constexpr std::size_t kDraws = 100000;
  std::array<std::size_t, 3> counts{};
  rng::Rng r(913);
  for (std::size_t i = 0; i < kDraws; ++i)
    ++counts[sampler::sample_batch(w, 1, r)[0]];

  for (std::size_t i = 0; i < 3; ++i)
    CHECK(testsupport::within_3sigma(
        static_cast<double>(counts[i]) / kDraws, p[i], kDraws));

  // chi-square at alpha = 0.01, df = 2: critical value -2 ln(0.01)
  double stat = testsupport::chi_square(
      std::vector<std::size_t>(counts.begin(), counts.end()),
      std::vector<double>(p.begin(), p.end()), kDraws);
  CHECK(stat < 9.210340371976184);
}

TEST_CASE("every prompt keeps a floor probability", "[sampler]") {
  std::vector<double> values{0.0, 1.0, 0.5, 0.999, 0.001};
  auto w = sampler::compute_weights(values, 0.05);
  auto p = w.probabilities();
  double floor = 0.05 / w.total;
  for (double v : p) CHECK(v >= floor - 1e-15);
}
