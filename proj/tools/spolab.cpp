// spolab: synthetic-bandit laboratory for single-stream policy optimization.
//
// Subcommands: train, sched, analyze, compare, init-tracker. Every run is
// deterministic given --seed; file-producing commands drop a manifest that
// reproduces the run bit-exactly.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "spolab/analysis.hpp"
#include "spolab/config.hpp"
#include "spolab/envbed.hpp"
#include "spolab/errors.hpp"
#include "spolab/rng.hpp"
#include "spolab/schedsim.hpp"
#include "spolab/textio.hpp"
#include "spolab/tracker.hpp"
#include "spolab/trainloop.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spolab;

namespace {

constexpr const char* kToolVersion = "spolab 0.1.0";
constexpr int kManifestVersion = 1;

std::string hash_file(const fs::path& path) {
  return textio::fnv1a_hex(config::read_file(path));
}

struct TrainInvocation {
  train::RunConfig run;
  std::string env_spec;
  fs::path env_path;
  std::optional<fs::path> tracker_init;
};

// A manifest pins the files it read; refuse to "reproduce" against changed
// fixtures.
void verify_manifest_hashes(const json& manifest) {
  if (!manifest.contains("fixture_hashes")) return;
  for (auto it = manifest["fixture_hashes"].begin();
       it != manifest["fixture_hashes"].end(); ++it) {
    fs::path path(it.key());
    if (!fs::exists(path))
      throw ConfigError("manifest fixture missing: " + path.string());
    if (hash_file(path) != it.value().get<std::string>())
      throw ConfigError("manifest fixture changed since the original run: " +
                        path.string());
  }
}

// Accepts either a run config or a manifest from a previous run; a manifest
// re-runs with its embedded config and seed.
TrainInvocation load_train_invocation(const fs::path& config_path,
                                      std::optional<std::uint64_t> seed_override,
                                      std::optional<fs::path> tracker_override) {
  json j = config::load_json_file(config_path);
  fs::path base_dir = fs::absolute(config_path).parent_path();

  TrainInvocation inv;
  if (j.contains("manifest_version")) {
    if (!j.contains("command") || j["command"].get<std::string>() != "train")
      throw ConfigError("manifest was not produced by `train`");
    verify_manifest_hashes(j);
    auto loaded = config::load_run_config(j.at("config"));
    inv.run = loaded.run;
    inv.env_spec = loaded.env_spec;
    if (j.contains("tracker_init") && !j["tracker_init"].is_null())
      inv.tracker_init = fs::path(j["tracker_init"].get<std::string>());
  } else {
    auto loaded = config::load_run_config(j);
    inv.run = loaded.run;
    inv.env_spec = loaded.env_spec;
  }
  if (seed_override) inv.run.seed = *seed_override;
  if (tracker_override) inv.tracker_init = tracker_override;

  inv.env_path = config::resolve_fixture_path(inv.env_spec, base_dir);
  if (!fs::exists(inv.env_path))
    throw ConfigError("environment fixture not found: " + inv.env_path.string());
  return inv;
}

void write_manifest(const fs::path& manifest_path, const std::string& command,
                    const fs::path& config_path, const fs::path& out_path,
                    const json& config_echo,
                    const std::map<std::string, std::string>& fixture_hashes,
                    std::uint64_t seed, const json& extra = json::object()) {
  json manifest = {
      {"manifest_version", kManifestVersion},
      {"tool_version", kToolVersion},
      {"command", command},
      {"config_path", fs::absolute(config_path).string()},
      {"out", fs::absolute(out_path).string()},
      {"seed", seed},
      {"config", config_echo},
      {"fixture_hashes", fixture_hashes},
  };
  for (auto it = extra.begin(); it != extra.end(); ++it)
    manifest[it.key()] = it.value();
  config::write_file(manifest_path, manifest.dump(2) + "\n");
}

int cmd_train(const fs::path& config_path, std::optional<std::uint64_t> seed,
              const fs::path& out_dir, std::optional<fs::path> tracker_path) {
  auto inv = load_train_invocation(config_path, seed, tracker_path);
  auto environment = config::load_env_file(inv.env_path);
  auto policy =
      env::PolicyTable::uniform(environment.prompts(), environment.actions());

  std::optional<std::vector<tracker::TrackerState>> init;
  if (inv.tracker_init)
    init = tracker::restore(config::read_file(*inv.tracker_init));

  auto result = train::run(inv.run, environment, policy, std::move(init));

  fs::create_directories(out_dir);
  config::write_file(out_dir / "metrics.csv", train::metrics_csv(result.metrics));

  std::map<std::string, std::string> hashes;
  hashes[fs::absolute(inv.env_path).string()] = hash_file(inv.env_path);
  json extra = {{"tracker_init", nullptr}};
  if (inv.tracker_init) {
    extra["tracker_init"] = fs::absolute(*inv.tracker_init).string();
    hashes[fs::absolute(*inv.tracker_init).string()] = hash_file(*inv.tracker_init);
  }
  // embed the resolved fixture path so a manifest re-run needs no search path
  write_manifest(out_dir / "manifest.json", "train", config_path, out_dir,
                 config::run_config_json(inv.run,
                                         fs::absolute(inv.env_path).string()),
                 hashes, inv.run.seed, extra);

  const auto& last = result.metrics.back();
  std::cout << "algorithm " << train::algorithm_name(inv.run.algorithm)
            << ", iterations " << result.metrics.size() << ", final J "
            << textio::format_double(last.expected_reward) << "\n"
            << "wrote " << (out_dir / "metrics.csv").string() << "\n";
  return 0;
}

int cmd_sched(const fs::path& config_path, std::optional<std::uint64_t> seed,
              const fs::path& out_csv, std::size_t replications,
              unsigned threads) {
  json j = config::load_json_file(config_path);
  sched::ScenarioConfig cfg;
  if (j.contains("manifest_version")) {
    if (!j.contains("command") || j["command"].get<std::string>() != "sched")
      throw ConfigError("manifest was not produced by `sched`");
    verify_manifest_hashes(j);
    cfg = config::load_sched_config(j.at("config"));
    if (j.contains("replications"))
      replications = j["replications"].get<std::size_t>();
  } else {
    cfg = config::load_sched_config(j);
  }
  if (seed) cfg.seed = *seed;
  if (replications == 0) throw ConfigError("sched: replications must be >= 1");

  std::vector<sched::ScenarioOutcome> outcomes(replications);
  auto worker = [&](unsigned offset, unsigned stride) {
    for (std::size_t rep = offset; rep < replications; rep += stride)
      outcomes[rep] = sched::run_scenario(
          cfg, rng::derive_seed(cfg.seed, rng::kLatency, rep));
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back(worker, t, threads);
    for (auto& th : pool) th.join();
  }

  std::string csv = "replication,strategy,makespan,wasted,speedup\n";
  std::vector<double> speedups;
  speedups.reserve(replications);
  for (std::size_t rep = 0; rep < replications; ++rep) {
    const auto& o = outcomes[rep];
    for (const sched::ScenarioReport* r : {&o.group, &o.groupfree}) {
      csv += textio::format_u64(rep);
      csv += ',';
      csv += r->strategy;
      csv += ',';
      csv += textio::format_double(r->makespan);
      csv += ',';
      csv += textio::format_double(r->wasted);
      csv += ',';
      csv += textio::format_double(o.speedup);
      csv += '\n';
    }
    speedups.push_back(o.speedup);
  }
  if (out_csv.has_parent_path()) fs::create_directories(out_csv.parent_path());
  config::write_file(out_csv, csv);

  write_manifest(fs::path(out_csv.string() + ".manifest.json"), "sched",
                 config_path, out_csv, config::sched_config_json(cfg), {},
                 cfg.seed, {{"replications", replications}});

  std::nth_element(speedups.begin(), speedups.begin() + speedups.size() / 2,
                   speedups.end());
  std::cout << "replications " << replications << ", median speedup "
            << textio::format_double(speedups[speedups.size() / 2]) << "\n"
            << "wrote " << out_csv.string() << "\n";
  return 0;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError("metrics CSV: missing column", name);
  }
};

CsvTable read_csv(const fs::path& path) {
  std::istringstream in(config::read_file(path));
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  if (table.header.empty()) throw ParseError("empty CSV: " + path.string());
  return table;
}

int cmd_compare(const fs::path& spo_dir, const fs::path& grpo_dir,
                std::optional<fs::path> out_dir) {
  auto spo = read_csv(spo_dir / "metrics.csv");
  auto grpo = read_csv(grpo_dir / "metrics.csv");
  std::size_t spo_iter = spo.column("iter"), grpo_iter = grpo.column("iter");
  std::size_t spo_j = spo.column("J"), grpo_j = grpo.column("J");
  std::size_t spo_deg = spo.column("degenerate_ratio");
  std::size_t grpo_deg = grpo.column("degenerate_ratio");
  std::size_t spo_var = spo.column("adv_var_raw");
  std::size_t grpo_var = grpo.column("adv_var_raw");

  std::map<std::string, const std::vector<std::string>*> grpo_by_iter;
  for (const auto& row : grpo.rows) grpo_by_iter[row[grpo_iter]] = &row;

  std::string joined =
      "iter,J_spo,J_grpo,adv_var_raw_spo,adv_var_raw_grpo,"
      "degenerate_ratio_spo,degenerate_ratio_grpo\n";
  double final_j_spo = 0.0, final_j_grpo = 0.0;
  double mean_deg_spo = 0.0, mean_deg_grpo = 0.0;
  std::size_t joined_rows = 0;
  for (const auto& row : spo.rows) {
    auto it = grpo_by_iter.find(row[spo_iter]);
    if (it == grpo_by_iter.end()) continue;
    const auto& g = *it->second;
    joined += row[spo_iter];
    joined += ',';
    joined += row[spo_j];
    joined += ',';
    joined += g[grpo_j];
    joined += ',';
    joined += row[spo_var];
    joined += ',';
    joined += g[grpo_var];
    joined += ',';
    joined += row[spo_deg];
    joined += ',';
    joined += g[grpo_deg];
    joined += '\n';
    final_j_spo = std::stod(row[spo_j]);
    final_j_grpo = std::stod(g[grpo_j]);
    mean_deg_spo += std::stod(row[spo_deg]);
    mean_deg_grpo += std::stod(g[grpo_deg]);
    ++joined_rows;
  }
  if (joined_rows == 0) throw ConfigError("compare: no overlapping iterations");
  mean_deg_spo /= static_cast<double>(joined_rows);
  mean_deg_grpo /= static_cast<double>(joined_rows);

  if (out_dir) {
    fs::create_directories(*out_dir);
    config::write_file(*out_dir / "compare.csv", joined);
    std::map<std::string, std::string> hashes = {
        {fs::absolute(spo_dir / "metrics.csv").string(),
         hash_file(spo_dir / "metrics.csv")},
        {fs::absolute(grpo_dir / "metrics.csv").string(),
         hash_file(grpo_dir / "metrics.csv")},
    };
    write_manifest(*out_dir / "manifest.json", "compare", spo_dir, *out_dir,
                   {{"spo", fs::absolute(spo_dir).string()},
                    {"grpo", fs::absolute(grpo_dir).string()}},
                   hashes, 0);
  }

  std::cout << "final J: spo " << textio::format_double(final_j_spo) << ", grpo "
            << textio::format_double(final_j_grpo) << ", delta "
            << textio::format_double(final_j_spo - final_j_grpo) << "\n"
            << "mean degenerate ratio: spo "
            << textio::format_double(mean_deg_spo) << ", grpo "
            << textio::format_double(mean_deg_grpo) << ", delta "
            << textio::format_double(mean_deg_spo - mean_deg_grpo) << "\n";
  if (out_dir)
    std::cout << "wrote " << (*out_dir / "compare.csv").string() << "\n";
  return 0;
}

int cmd_init_tracker(const fs::path& env_path, std::size_t n0, double rho_min,
                     std::uint64_t seed, const fs::path& out_path) {
  auto environment = config::load_env_file(env_path);
  auto policy =
      env::PolicyTable::uniform(environment.prompts(), environment.actions());
  tracker::TrackerParams params;
  params.rho_min = rho_min;
  params.validate();
  if (n0 < 1) throw ConfigError("init-tracker: n0 must be >= 1");

  auto states = train::offline_init(environment, policy, params, n0,
                                    rng::derive_seed(seed, rng::kInit));
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  config::write_file(out_path, tracker::snapshot(states));

  write_manifest(fs::path(out_path.string() + ".manifest.json"), "init-tracker",
                 env_path, out_path,
                 {{"env", fs::absolute(env_path).string()},
                  {"n0", n0},
                  {"rho_min", rho_min}},
                 {{fs::absolute(env_path).string(), hash_file(env_path)}}, seed);

  std::cout << "initialized " << states.size() << " prompts from " << n0
            << " samples each\nwrote " << out_path.string() << "\n";
  return 0;
}

int cmd_analyze_validate(std::size_t trials, std::uint64_t seed) {
  auto rows = analysis::run_validators(trials, seed);
  bool all_pass = true;
  std::cout << "check,expected,observed,tolerance,result\n";
  for (const auto& row : rows) {
    std::cout << row.name << ',' << textio::format_double(row.expected) << ','
              << textio::format_double(row.observed) << ','
              << textio::format_double(row.tolerance) << ','
              << (row.pass ? "PASS" : "FAIL") << "\n";
    all_pass &= row.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-bandit lab for single-stream policy optimization"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "run a training configuration");
  std::string train_config, train_out, train_tracker;
  std::int64_t train_seed = -1;
  unsigned train_threads = 1;
  train_cmd->add_option("--config", train_config, "run config or manifest JSON")
      ->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--seed", train_seed, "master seed override");
  train_cmd->add_option("--tracker-init", train_tracker,
                        "tracker snapshot to load instead of online init");
  train_cmd->add_option("--threads", train_threads,
                        "reserved; the training loop is sequential");

  // sched
  auto* sched_cmd =
      app.add_subcommand("sched", "simulate rollout batch assembly");
  std::string sched_config, sched_out;
  std::int64_t sched_seed = -1;
  std::size_t replications = 100;
  unsigned sched_threads = 1;
  sched_cmd->add_option("--config", sched_config, "scenario config or manifest")
      ->required();
  sched_cmd->add_option("--out", sched_out, "output CSV path")->required();
  sched_cmd->add_option("--replications", replications, "seeded replications");
  sched_cmd->add_option("--seed", sched_seed, "master seed override");
  sched_cmd->add_option("--threads", sched_threads,
                        "parallel replications (deterministic)");

  // analyze
  auto* analyze_cmd =
      app.add_subcommand("analyze", "closed-form quantities and validators");
  analyze_cmd->require_subcommand(1);
  auto* en_cmd = analyze_cmd->add_subcommand(
      "en", "expected rollouts until both outcomes are seen");
  double en_p = 0.5;
  en_cmd->add_option("--p", en_p, "success probability")->required();
  auto* zg_cmd =
      analyze_cmd->add_subcommand("zg", "degenerate-group probability");
  double zg_p = 0.5;
  int zg_g = 8;
  zg_cmd->add_option("--p", zg_p, "success probability")->required();
  zg_cmd->add_option("--g", zg_g, "group size")->required();
  auto* ratio_cmd =
      analyze_cmd->add_subcommand("ratio", "variance-ratio decomposition");
  std::string ratio_config;
  ratio_cmd->add_option("--config", ratio_config,
                        "JSON with group_size, n_eff, p, psi_g, psi_b")
      ->required();
  auto* validate_cmd = analyze_cmd->add_subcommand(
      "validate", "Monte Carlo checks of the closed forms");
  std::size_t validate_trials = 100000;
  std::uint64_t validate_seed = 0;
  validate_cmd->add_option("--trials", validate_trials, "trials per check");
  validate_cmd->add_option("--seed", validate_seed, "master seed");

  // compare
  auto* compare_cmd =
      app.add_subcommand("compare", "join two training runs and report deltas");
  std::string compare_spo, compare_grpo, compare_out;
  compare_cmd->add_option("--spo", compare_spo, "spo run directory")->required();
  compare_cmd->add_option("--grpo", compare_grpo, "reference run directory")
      ->required();
  compare_cmd->add_option("--out", compare_out, "output directory");

  // init-tracker
  auto* init_cmd = app.add_subcommand(
      "init-tracker", "offline tracker estimation against a fixture");
  std::string init_env, init_out;
  std::size_t init_n0 = 8;
  double init_rho_min = 0.875;
  std::uint64_t init_seed = 0;
  init_cmd->add_option("--env", init_env, "environment fixture")->required();
  init_cmd->add_option("--out", init_out, "snapshot output path")->required();
  init_cmd->add_option("--n0", init_n0, "samples per prompt");
  init_cmd->add_option("--rho-min", init_rho_min,
                       "forgetting floor fixing the equilibrium mass");
  init_cmd->add_option("--seed", init_seed, "master seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  try {
    if (*train_cmd) {
      std::optional<std::uint64_t> seed;
      if (train_seed >= 0) seed = static_cast<std::uint64_t>(train_seed);
      std::optional<fs::path> tracker_path;
      if (!train_tracker.empty()) tracker_path = fs::path(train_tracker);
      return cmd_train(train_config, seed, train_out, tracker_path);
    }
    if (*sched_cmd) {
      std::optional<std::uint64_t> seed;
      if (sched_seed >= 0) seed = static_cast<std::uint64_t>(sched_seed);
      return cmd_sched(sched_config, seed, sched_out, replications,
                       sched_threads);
    }
    if (*analyze_cmd) {
      if (*en_cmd) {
        std::cout << textio::format_double(
                         analysis::expected_dynamic_samples(en_p))
                  << "\n";
        return 0;
      }
      if (*zg_cmd) {
        std::cout << textio::format_double(analysis::degeneracy_prob(zg_p, zg_g))
                  << "\n";
        return 0;
      }
      if (*ratio_cmd) {
        json j = config::load_json_file(ratio_config);
        analysis::VarianceRatioParams vp;
        vp.group_size = j.value("group_size", 8);
        vp.n_eff = j.value("n_eff", 8.0);
        vp.p = j.value("p", 0.5);
        vp.psi_g = j.value("psi_g", 0.0);
        vp.psi_b = j.value("psi_b", 0.0);
        auto terms = analysis::variance_ratio_terms(vp);
        std::cout << "baseline_noise "
                  << textio::format_double(terms.baseline_noise) << "\n"
                  << "information_loss "
                  << textio::format_double(terms.information_loss) << "\n"
                  << "normalization_noise "
                  << textio::format_double(terms.normalization_noise) << "\n"
                  << "ratio " << textio::format_double(terms.ratio) << "\n";
        return 0;
      }
      if (*validate_cmd) return cmd_analyze_validate(validate_trials, validate_seed);
    }
    if (*compare_cmd) {
      std::optional<fs::path> out;
      if (!compare_out.empty()) out = fs::path(compare_out);
      return cmd_compare(compare_spo, compare_grpo, out);
    }
    if (*init_cmd)
      return cmd_init_tracker(init_env, init_n0, init_rho_min, init_seed,
                              init_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
