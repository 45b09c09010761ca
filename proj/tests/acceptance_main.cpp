// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "spolab/advantage.hpp"
#include "spolab/analysis.hpp"
#include "spolab/config.hpp"
#include "spolab/envbed.hpp"
#include "spolab/optimizer.hpp"
#include "spolab/rng.hpp"
#include "spolab/sampler.hpp"
#include "spolab/schedsim.hpp"
#include "spolab/tracker.hpp"
#include "spolab/trainloop.hpp"

namespace fs = std::filesystem;
using namespace spolab;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kFixtures = SPOLAB_FIXTURE_DIR;
const std::string kBin = SPOLAB_BIN_PATH;

int failures = 0;

void report(int idx, bool pass, const std::string& name, double seconds,
            double limit_seconds, const std::string& detail) {
  bool in_budget = seconds < limit_seconds;
  bool ok = pass && in_budget;
  std::printf("[criterion %2d] %s  %s  (%s; %.2fs of %.0fs budget)\n", idx,
              ok ? "PASS" : "FAIL", name.c_str(), detail.c_str(), seconds,
              limit_seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename Body>
void criterion(int idx, const std::string& name, double limit_seconds,
               Body body) {
  auto start = Clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  double seconds = std::chrono::duration<double>(Clock::now() - start).count();
  report(idx, pass, name, seconds, limit_seconds, detail);
}

train::RunConfig fixture_run_config(const std::string& file) {
  return config::load_run_config(config::load_json_file(kFixtures / file)).run;
}

env::BernoulliEnv easyhard_env() {
  return config::load_env_file(kFixtures / "env_easyhard.json");
}

double optimal_expected_reward(const env::BernoulliEnv& e) {
  double total = 0.0;
  for (std::size_t x = 0; x < e.prompts(); ++x) {
    double best = 0.0;
    for (std::size_t a = 0; a < e.actions(); ++a) best = std::max(best, e.q(x, a));
    total += best;
  }
  return total / static_cast<double>(e.prompts());
}

// ---- criterion bodies ----

bool c1_tracker_equivalence(std::string& detail) {
  tracker::TrackerParams params;
  rng::Rng r(101);
  double worst = 0.0;
  for (int seq = 0; seq < 1000; ++seq) {
    double v0 = r.uniform(0.0, 1.0);
    double mass = r.uniform(0.5, 30.0);
    tracker::TrackerState s{0, mass * v0, mass * (1.0 - v0), 0};
    double v = s.value(), n_eff = s.effective_mass();
    for (int t = 0; t < 200; ++t) {
      double reward = r.bernoulli(0.5) ? 1.0 : 0.0;
      double rho = r.uniform(params.rho_min, params.rho_max);
      s = tracker::update_binary(s, reward, rho);
      auto e = tracker::update_general(v, n_eff, reward, rho);
      v = e.value;
      n_eff = e.n_eff;
      worst = std::max(worst, std::abs(s.value() - v));
      if (worst > 1e-12) break;
    }
    if (worst > 1e-12) break;
  }
  detail = "max |v_beta - v_ema| = " + textio::format_double(worst);
  return worst <= 1e-12;
}

bool c2_initialization(std::string& detail) {
  tracker::TrackerParams params;  // rho_min = 0.875
  auto s = tracker::init_from_samples(6, 8, params);
  detail = "N0 = " + textio::format_double(params.equilibrium_mass()) +
           ", alpha = " + textio::format_double(s.alpha) +
           ", beta = " + textio::format_double(s.beta);
  return params.equilibrium_mass() == 8.0 && s.alpha == 6.0 && s.beta == 2.0;
}

bool c3_gradient_check(std::string& detail) {
  optim::ClipParams params;  // eps_low 0.2, eps_high 0.28
  const double h = 1e-6;
  rng::Rng seeds(2718);
  double worst_rel = 0.0;
  int clipped = 0;
  for (int instance = 0; instance < 20; ++instance) {
    auto behavior = env::PolicyTable::uniform(5, 3);
    rng::Rng noise(seeds.next());
    for (double& v : behavior.logits) v += noise.uniform(-1.0, 1.0);

    rng::Rng rollout(seeds.next());
    std::vector<advantage::Sample> samples;
    for (int i = 0; i < 32; ++i) {
      std::size_t x = rollout.index(5);
      auto action = env::act(behavior, x, rollout);
      advantage::Sample s;
      s.prompt_id = static_cast<std::int64_t>(x);
      s.action_id = action.action;
      s.old_log_prob = action.log_prob;
      s.normalized_advantage = rollout.uniform(-1.5, 1.5);
      samples.push_back(s);
    }
    auto policy = behavior;
    rng::Rng bump(seeds.next());
    for (double& v : policy.logits) v += bump.uniform(-0.4, 0.4);

    for (const auto& s : samples) {
      double ratio = std::exp(policy.log_prob(
                         static_cast<std::size_t>(s.prompt_id),
                         static_cast<std::size_t>(s.action_id)) -
                     s.old_log_prob);
      if (ratio < 1.0 - params.eps_low || ratio > 1.0 + params.eps_high)
        ++clipped;
    }

    auto res = optim::surrogate_and_gradient(policy, samples, params);
    for (std::size_t i = 0; i < policy.logits.size(); ++i) {
      auto plus = policy;
      auto minus = policy;
      plus.logits[i] += h;
      minus.logits[i] -= h;
      double fd = (optim::surrogate_loss(plus, samples, params) -
                   optim::surrogate_loss(minus, samples, params)) /
                  (2.0 * h);
      double g = res.gradient[i];
      if (std::abs(g) > 1e-8)
        worst_rel = std::max(
            worst_rel, std::abs(fd - g) / std::max(std::abs(fd), std::abs(g)));
    }
  }
  detail = "max relative error = " + textio::format_double(worst_rel) + ", " +
           std::to_string(clipped) + " clipped samples";
  return worst_rel <= 1e-5 && clipped > 0;
}

bool c4_unbiasedness(std::string& detail) {
  std::vector<std::vector<double>> q{{0.15, 0.8, 0.45},
                                     {0.6, 0.35, 0.2},
                                     {0.9, 0.1, 0.5},
                                     {0.3, 0.4, 0.3},
                                     {0.05, 0.55, 0.75}};
  env::BernoulliEnv environment(q);
  auto policy = env::PolicyTable::uniform(5, 3);
  rng::Rng noise(17);
  for (double& v : policy.logits) v += noise.uniform(-0.5, 0.5);

  tracker::TrackerParams params;
  auto states = train::offline_init(environment, policy, params, 64,
                                    rng::derive_seed(900, rng::kInit));

  constexpr std::size_t kSamples = 100000;
  std::size_t coords = policy.logits.size();
  std::vector<double> sum(coords, 0.0), sumsq(coords, 0.0);
  rng::Rng r(424242);
  for (std::size_t s = 0; s < kSamples; ++s) {
    std::size_t x = r.index(5);
    auto action = env::act(policy, x, r);
    double reward = environment.reward(x, static_cast<std::size_t>(action.action), r);
    double b = states[x].value();  // pre-update baseline, action independent
    auto probs = policy.row_probs(x);
    for (std::size_t a = 0; a < 3; ++a) {
      double g = (reward - b) *
                 ((a == static_cast<std::size_t>(action.action) ? 1.0 : 0.0) -
                  probs[a]);
      sum[x * 3 + a] += g;
      sumsq[x * 3 + a] += g * g;
    }
  }
  auto analytic = env::analytic_policy_gradient(environment, policy);
  double worst_z = 0.0;
  for (std::size_t i = 0; i < coords; ++i) {
    double mean = sum[i] / kSamples;
    double var = sumsq[i] / kSamples - mean * mean;
    double se = std::sqrt(var / kSamples);
    worst_z = std::max(worst_z, std::abs(mean - analytic[i]) / (se + 1e-300));
  }
  detail = "max |z| = " + textio::format_double(worst_z) + " over " +
           std::to_string(coords) + " coordinates";
  return worst_z <= 4.0;
}

bool c5_variance_reduction(std::string& detail) {
  auto environment = easyhard_env();
  auto cfg = fixture_run_config("spo_easyhard.json");
  auto nb_cfg = cfg;
  nb_cfg.algorithm = train::Algorithm::spo_no_baseline;
  auto policy =
      env::PolicyTable::uniform(environment.prompts(), environment.actions());

  auto spo = train::run(cfg, environment, policy);
  auto nb = train::run(nb_cfg, environment, policy);
  double var_spo = 0.0, var_nb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 49; i < spo.metrics.size(); ++i, ++n) {
    var_spo += spo.metrics[i].adv_var_raw;
    var_nb += nb.metrics[i].adv_var_raw;
  }
  var_spo /= static_cast<double>(n);
  var_nb /= static_cast<double>(n);
  detail = "mean var " + textio::format_double(var_spo) + " vs no-baseline " +
           textio::format_double(var_nb) + " (ratio " +
           textio::format_double(var_spo / var_nb) + ", need <= 0.7)";
  return var_spo <= 0.7 * var_nb;
}

bool c6_dynamic_sampling_cost(std::string& detail) {
  double closed = analysis::expected_dynamic_samples(0.1);
  bool decimals_ok = std::abs(closed - 10.11) < 0.005;
  rng::Rng r(rng::derive_seed(77, rng::kValidate, 0));
  double mc = analysis::mc_expected_dynamic_samples(0.1, 1000000, r);
  bool mc_ok = std::abs(mc - closed) <= 0.02 * closed;
  detail = "closed form " + textio::format_double(closed) + ", Monte Carlo " +
           textio::format_double(mc);
  return decimals_ok && mc_ok;
}

bool c7_degeneracy(std::string& detail) {
  std::uint64_t counter = 0;
  double worst_z = 0.0;
  for (double p : {0.1, 0.5, 0.9}) {
    for (int g : {4, 8, 16}) {
      rng::Rng r(rng::derive_seed(500, rng::kValidate, counter++));
      double freq = analysis::mc_degeneracy_freq(p, g, 100000, r);
      double z = analysis::degeneracy_prob(p, g);
      double sigma = std::sqrt(z * (1.0 - z) / 100000.0);
      worst_z = std::max(worst_z, std::abs(freq - z) / sigma);
    }
  }
  analysis::VarianceRatioParams vp;
  vp.group_size = 8;
  vp.p = 0.9;
  vp.n_eff = 1e15;
  double il = analysis::variance_ratio_terms(vp).information_loss;
  bool il_ok = std::abs(il - 1.7559) <= 1e-3;
  detail = "max MC |z| = " + textio::format_double(worst_z) +
           ", information-loss factor " + textio::format_double(il);
  return worst_z <= 3.0 && il_ok;
}

bool c8_signal_efficiency(std::string& detail) {
  auto environment = easyhard_env();
  auto grpo_cfg = fixture_run_config("grpo_easyhard.json");
  auto spo_cfg = fixture_run_config("spo_easyhard.json");
  auto policy =
      env::PolicyTable::uniform(environment.prompts(), environment.actions());

  auto grpo = train::run(grpo_cfg, environment, policy);
  double max_deg_100 = 0.0;
  std::int64_t first_cross = -1;
  for (std::size_t i = 0; i < 100 && i < grpo.metrics.size(); ++i) {
    max_deg_100 = std::max(max_deg_100, grpo.metrics[i].degenerate_ratio);
    if (first_cross < 0 && grpo.metrics[i].degenerate_ratio > 0.5)
      first_cross = grpo.metrics[i].iter;
  }

  auto spo = train::run(spo_cfg, environment, policy);
  double max_nz = 0.0;
  for (const auto& m : spo.metrics) max_nz = std::max(max_nz, m.nz_ratio_tight);

  detail = "grpo degenerate first exceeds 0.5 at iter " +
           std::to_string(first_cross) + ", spo max nz(1e-4) = " +
           textio::format_double(max_nz);
  return first_cross > 0 && max_nz < 0.1;
}

bool c9_scheduler(std::string& detail) {
  auto det = config::load_sched_config(
      config::load_json_file(kFixtures / "sched_deterministic.json"));
  double det_speedup = sched::run_scenario(det, 0).speedup;

  sched::ScenarioConfig constant = det;
  constant.latency.kind = sched::LatencyModel::Kind::fixed_list;
  constant.latency.list.assign(48, 7.0);
  constant.group_size = 8;
  constant.groups_launched = 6;
  constant.groups_needed = 3;
  constant.pool = 48;
  constant.take = 24;
  double flat_speedup = sched::run_scenario(constant, 1).speedup;

  auto heavy = config::load_sched_config(
      config::load_json_file(kFixtures / "sched_heavytail.json"));
  std::vector<double> speedups;
  speedups.reserve(1000);
  bool dominated = true;
  for (std::uint64_t rep = 0; rep < 1000; ++rep) {
    auto o = sched::run_scenario(heavy,
        rng::derive_seed(heavy.seed, rng::kLatency, rep));
    speedups.push_back(o.speedup);
    dominated &= o.groupfree.makespan <= o.group.makespan;
  }
  std::nth_element(speedups.begin(), speedups.begin() + 500, speedups.end());
  double median = speedups[500];

  detail = "deterministic " + textio::format_double(det_speedup) +
           ", constant " + textio::format_double(flat_speedup) + ", median " +
           textio::format_double(median) + ", dominance " +
           (dominated ? "holds" : "violated");
  return det_speedup == 2.5 && flat_speedup == 1.0 && median >= 2.0 &&
         median <= 6.0 && dominated;
}

bool c10_learning(std::string& detail) {
  auto environment = easyhard_env();
  double target = 0.95 * optimal_expected_reward(environment);
  auto spo_cfg = fixture_run_config("spo_easyhard.json");
  auto grpo_cfg = fixture_run_config("grpo_easyhard.json");
  auto policy =
      env::PolicyTable::uniform(environment.prompts(), environment.actions());

  std::string parts;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    spo_cfg.seed = seed;
    grpo_cfg.seed = seed;
    auto nb_cfg = spo_cfg;
    nb_cfg.algorithm = train::Algorithm::spo_no_baseline;

    auto spo = train::run(spo_cfg, environment, policy);
    auto grpo = train::run(grpo_cfg, environment, policy);
    auto nb = train::run(nb_cfg, environment, policy);

    bool reached = false;
    for (const auto& m : spo.metrics) reached |= m.expected_reward >= target;
    double j_spo = spo.metrics.back().expected_reward;
    double j_grpo = grpo.metrics.back().expected_reward;
    double j_nb = nb.metrics.back().expected_reward;
    bool ok = reached && j_spo >= j_nb && j_spo >= j_grpo;
    parts += " seed" + std::to_string(seed) + (ok ? "+" : "-") + " J=" +
             textio::format_double(j_spo);
    if (!ok) {
      detail = "failed at seed " + std::to_string(seed) + ": reached=" +
               (reached ? "yes" : "no") + " J spo/grpo/nb " +
               textio::format_double(j_spo) + "/" +
               textio::format_double(j_grpo) + "/" + textio::format_double(j_nb);
      return false;
    }
  }
  detail = "target " + textio::format_double(target) + ";" + parts;
  return true;
}

bool c11_sampler(std::string& detail) {
  auto w = sampler::compute_weights(std::vector<double>{0.0, 0.5, 1.0}, 0.05);
  auto p = w.probabilities();
  double err = std::max({std::abs(p[0] - 1.0 / 13.0),
                         std::abs(p[1] - 11.0 / 13.0),
                         std::abs(p[2] - 1.0 / 13.0)});
  bool exact = err <= 1e-15;  // exact up to double rounding

  constexpr std::size_t kDraws = 100000;
  std::vector<std::size_t> counts(3, 0);
  rng::Rng r(913);
  for (std::size_t i = 0; i < kDraws; ++i)
    ++counts[sampler::sample_batch(w, 1, r)[0]];
  double stat = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double expected = p[i] * kDraws;
    double d = static_cast<double>(counts[i]) - expected;
    stat += d * d / expected;
  }
  bool chi_ok = stat < 9.210340371976184;  // chi-square(2), alpha = 0.01
  detail = "probability error " + textio::format_double(err) +
           ", chi-square " + textio::format_double(stat) + " (crit 9.2103)";
  return exact && chi_ok;
}

int run_quiet(const std::string& cmd) {
  return std::system((cmd + " > /dev/null 2>&1").c_str());
}

bool c12_determinism(std::string& detail) {
  fs::path work = fs::temp_directory_path() / "spolab-acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // small but real train invocation against the shipped fixture environment
  nlohmann::json cfg = {
      {"algorithm", "spo"},
      {"iterations", 25},
      {"batch_size", 64},
      {"seed", 9},
      {"env", fs::absolute(kFixtures / "env_easyhard.json").string()},
      {"optim", {{"lr", 8.0}, {"minibatch", 8}}},
  };
  config::write_file(work / "run.json", cfg.dump(2));

  if (run_quiet(kBin + " train --config " + (work / "run.json").string() +
                " --out " + (work / "a").string()) != 0) {
    detail = "train invocation failed";
    return false;
  }
  if (run_quiet(kBin + " train --config " + (work / "a" / "manifest.json").string() +
                " --out " + (work / "b").string()) != 0) {
    detail = "train re-run from manifest failed";
    return false;
  }
  bool train_ok = config::read_file(work / "a" / "metrics.csv") ==
                  config::read_file(work / "b" / "metrics.csv");

  if (run_quiet(kBin + " sched --config " +
                (kFixtures / "sched_heavytail.json").string() +
                " --replications 50 --out " + (work / "s.csv").string()) != 0) {
    detail = "sched invocation failed";
    return false;
  }
  if (run_quiet(kBin + " sched --config " + (work / "s.csv.manifest.json").string() +
                " --out " + (work / "s2.csv").string()) != 0) {
    detail = "sched re-run from manifest failed";
    return false;
  }
  bool sched_ok =
      config::read_file(work / "s.csv") == config::read_file(work / "s2.csv");

  fs::remove_all(work);
  detail = std::string("train csv ") + (train_ok ? "identical" : "differs") +
           ", sched csv " + (sched_ok ? "identical" : "differs");
  return train_ok && sched_ok;
}

}  // namespace

int main() {
  std::printf("spolab acceptance suite\n");

  criterion(1, "tracker Beta/EMA equivalence over 1000x200 random sequences",
            1.0, c1_tracker_equivalence);
  criterion(2, "offline init lands exactly on N0=8, alpha=6, beta=2", 1.0,
            c2_initialization);
  criterion(3, "clipped-surrogate gradient vs central differences (20 instances)",
            5.0, c3_gradient_check);
  criterion(4, "baseline-subtracted gradient unbiasedness over 1e5 samples",
            30.0, c4_unbiasedness);
  criterion(5, "stream baseline cuts raw-advantage variance to <= 0.7x", 60.0,
            c5_variance_reduction);
  criterion(6, "dynamic-sampling cost at p=0.1 (closed form + 1e6-trial MC)",
            10.0, c6_dynamic_sampling_cost);
  criterion(7, "degeneracy probability grid vs MC, information-loss factor",
            20.0, c7_degeneracy);
  criterion(8, "group degeneracy exceeds 0.5 in 100 iters; stream near-zeros stay rare",
            120.0, c8_signal_efficiency);
  criterion(9, "batch-assembly speedups: 2.5 exact, 1.0 constant, heavy-tail median",
            30.0, c9_scheduler);
  criterion(10, "learning outcome on 3 seeds: >= 0.95x optimal J, beats ablation and groups",
            300.0, c10_learning);
  criterion(11, "prioritized weights {1/13, 11/13, 1/13} and chi-square draw test",
            5.0, c11_sampler);
  criterion(12, "byte-identical CSVs when re-running train/sched from manifests",
            120.0, c12_determinism);

  std::printf("%d of 12 criteria passed\n", 12 - failures);
  return failures;
}
