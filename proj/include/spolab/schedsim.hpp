#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spolab/rng.hpp"

namespace spolab::sched {

// Rollout latency distribution. fixed_list replays the given seconds in
// order; lognormal draws exp(mu + sigma * N(0,1)); uniform draws U[lo, hi].
struct LatencyModel {
  enum class Kind { fixed_list, lognormal, uniform };

  Kind kind = Kind::lognormal;
  std::vector<double> list;  // fixed_list
  double mu = 0.0;           // lognormal: mean of log-latency
  double sigma = 1.0;        // lognormal: std of log-latency
  double lo = 0.0;           // uniform bounds
  double hi = 1.0;

  void validate() const {
    switch (kind) {
      case Kind::fixed_list:
        if (list.empty())
          throw std::domain_error("latency model: empty fixed list");
        for (double v : list)
          if (!(v > 0.0))
            throw std::domain_error("latency model: latencies must be > 0");
        break;
      case Kind::lognormal:
        if (!(sigma >= 0.0))
          throw std::domain_error("latency model: sigma must be >= 0");
        break;
      case Kind::uniform:
        if (!(lo > 0.0 && hi >= lo))
          throw std::domain_error("latency model: need 0 < lo <= hi");
        break;
    }
  }

  std::vector<double> draw(std::size_t n, rng::Rng& rng) const {
    validate();
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      switch (kind) {
        case Kind::fixed_list:
          if (i >= list.size())
            throw std::domain_error("latency model: fixed list too short");
          out.push_back(list[i]);
          break;
        case Kind::lognormal:
          out.push_back(rng.lognormal(mu, sigma));
          break;
        case Kind::uniform:
          out.push_back(rng.uniform(lo, hi));
          break;
      }
    }
    return out;
  }
};

struct RolloutTask {
  std::int64_t id = 0;
  std::int64_t group = -1;  // -1: group-free
  double latency = 0.0;
  double start = 0.0;

  double completion() const { return start + latency; }
};

// Outcome of assembling one training batch under one strategy. All tasks
// start at t = 0 (infinite parallelism); the batch closes at `makespan` and
// everything still running is cancelled.
//
// wasted counts unused-group work plus idle wait inside used groups
// (inclusive accounting); wasted_exclusive is the idle wait alone, for the
// accounting that does not charge unused groups.
struct ScenarioReport {
  std::string strategy;
  std::size_t batch_target = 0;   // samples the batch needed
  std::size_t tasks_launched = 0;
  double makespan = 0.0;
  double wasted = 0.0;
  double wasted_exclusive = 0.0;
  double speedup_vs_reference = 1.0;
};

// Group strategy: launch every group at t = 0, wait until groups_needed
// groups are fully complete. A group completes at the max of its member
// latencies; the batch closes at the groups_needed-th fastest group
// completion, and unused groups are cancelled there.
inline ScenarioReport group_batch_makespan(
    const std::vector<std::vector<double>>& groups, std::size_t groups_needed) {
  if (groups_needed == 0 || groups.size() < groups_needed)
    throw std::domain_error("group_batch_makespan: need 1 <= needed <= launched");
  std::size_t g = groups.front().size();
  for (const auto& grp : groups) {
    if (grp.empty()) throw std::domain_error("group_batch_makespan: empty group");
    if (grp.size() != g)
      throw std::domain_error("group_batch_makespan: groups must share one size");
    for (double v : grp)
      if (!(v > 0.0))
        throw std::domain_error("group_batch_makespan: latencies must be > 0");
  }

  std::vector<double> completions;
  completions.reserve(groups.size());
  for (const auto& grp : groups)
    completions.push_back(*std::max_element(grp.begin(), grp.end()));
  std::vector<double> sorted = completions;
  std::nth_element(sorted.begin(), sorted.begin() + (groups_needed - 1),
                   sorted.end());
  double makespan = sorted[groups_needed - 1];

  // Used groups: the groups_needed fastest (ties broken by index order).
  std::vector<std::size_t> idx(groups.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return completions[a] < completions[b];
  });
  std::vector<bool> used(groups.size(), false);
  for (std::size_t k = 0; k < groups_needed; ++k) used[idx[k]] = true;

  double idle_wait = 0.0, unused_work = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (used[i]) {
      for (double v : groups[i]) idle_wait += completions[i] - v;
    } else {
      for (double v : groups[i]) unused_work += std::min(v, makespan);
    }
  }

  ScenarioReport rep;
  rep.strategy = "group";
  rep.batch_target = groups_needed * g;
  rep.tasks_launched = groups.size() * g;
  rep.makespan = makespan;
  rep.wasted_exclusive = idle_wait;
  rep.wasted = idle_wait + unused_work;
  return rep;
}

// Group-free strategy: launch the whole pool at t = 0 and keep the first
// `take` finishers. The batch closes at the take-th order statistic; the
// abandoned tasks are cancelled there and their partial work is the waste.
inline ScenarioReport groupfree_batch_makespan(std::span<const double> pool,
                                               std::size_t take) {
  if (take == 0 || take > pool.size())
    throw std::domain_error("groupfree_batch_makespan: need 1 <= take <= pool");
  for (double v : pool)
    if (!(v > 0.0))
      throw std::domain_error("groupfree_batch_makespan: latencies must be > 0");

  std::vector<double> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  double makespan = sorted[take - 1];
  double wasted = 0.0;
  for (std::size_t i = take; i < sorted.size(); ++i)
    wasted += std::min(sorted[i], makespan);

  ScenarioReport rep;
  rep.strategy = "groupfree";
  rep.batch_target = take;
  rep.tasks_launched = pool.size();
  rep.makespan = makespan;
  rep.wasted = wasted;
  rep.wasted_exclusive = wasted;
  return rep;
}

struct ScenarioConfig {
  LatencyModel latency;
  std::size_t group_size = 8;
  std::size_t groups_launched = 6;
  std::size_t groups_needed = 3;
  std::size_t pool = 48;
  std::size_t take = 24;
  std::uint64_t seed = 0;

  void validate() const {
    latency.validate();
    if (group_size == 0 || groups_needed == 0 ||
        groups_launched < groups_needed)
      throw std::domain_error("scenario: need launched >= needed >= 1");
    if (take == 0 || take > pool)
      throw std::domain_error("scenario: need 1 <= take <= pool");
  }
};

struct ScenarioOutcome {
  ScenarioReport group;
  ScenarioReport groupfree;
  double speedup = 1.0;  // group makespan / group-free makespan
};

// One seeded task set for a scenario: everything starts at t = 0, tasks are
// assigned to groups in draw order, and the first `pool` tasks double as the
// group-free pool.
inline std::vector<RolloutTask> draw_tasks(const ScenarioConfig& cfg,
                                           std::uint64_t replication_seed) {
  cfg.validate();
  std::size_t n_draw = std::max(cfg.groups_launched * cfg.group_size, cfg.pool);
  rng::Rng rng(replication_seed);
  std::vector<double> draws = cfg.latency.draw(n_draw, rng);
  std::vector<RolloutTask> tasks;
  tasks.reserve(n_draw);
  for (std::size_t i = 0; i < n_draw; ++i) {
    std::int64_t group = i < cfg.groups_launched * cfg.group_size
                             ? static_cast<std::int64_t>(i / cfg.group_size)
                             : -1;
    tasks.push_back({static_cast<std::int64_t>(i), group, draws[i], 0.0});
  }
  return tasks;
}

// Runs both strategies against one seeded latency draw. Both see the same
// task multiset (the pool is a prefix of the group draw when smaller); with
// matched batch sizes (take <= groups_needed * group_size) the group-free
// makespan can never exceed the group-based one.
inline ScenarioOutcome run_scenario(const ScenarioConfig& cfg,
                                    std::uint64_t replication_seed) {
  std::vector<RolloutTask> tasks = draw_tasks(cfg, replication_seed);

  std::vector<std::vector<double>> groups(cfg.groups_launched);
  std::vector<double> pool;
  pool.reserve(cfg.pool);
  for (const auto& t : tasks) {
    if (t.group >= 0)
      groups[static_cast<std::size_t>(t.group)].push_back(t.latency);
    if (static_cast<std::size_t>(t.id) < cfg.pool) pool.push_back(t.completion());
  }

  ScenarioOutcome out;
  out.group = group_batch_makespan(groups, cfg.groups_needed);
  out.groupfree = groupfree_batch_makespan(pool, cfg.take);
  out.speedup = out.group.makespan / out.groupfree.makespan;
  out.group.speedup_vs_reference = 1.0;
  out.groupfree.speedup_vs_reference = out.speedup;
  return out;
}

}  // namespace spolab::sched
