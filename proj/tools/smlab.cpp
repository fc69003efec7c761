// smlab command-line entry point.
//
//   smlab train     --config PATH [--seed N] [--out DIR] [--steps N] [--resume CKPT]
//   smlab ablate    --config PATH [--modes full,no_w,no_m] [--sweep 32-4,128-16] [--seeds 0,1,2]
//   smlab mnir-map  --checkpoint CKPT [--config PATH] [--csv FILE]
//   smlab eval      --checkpoint CKPT [--episodes E]
//   smlab probe-repeat --checkpoint CKPT [--probes 50]
//   smlab verify    [variance|hebbian|blocking|gradcheck|attention|mnir|memory|stream_std|all]
//
// Exit codes: 0 ok, 1 other error, 2 config error, 3 numeric abort, 4 verification failure.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "smlab/harness.hpp"
#include "smlab/verification.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::uint64_t> steps;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "config file (section.key = value)");
  if (config_required) c->required();
  cmd->add_option("--seed", f.seed, "override run.seed");
  cmd->add_option("--out", f.out, "override run.out_dir");
  cmd->add_option("--steps", f.steps, "override run.total_steps");
  cmd->add_option("--set", f.set, "extra override, key=value (repeatable)");
}

smlab::ExperimentConfig resolve(const CommonFlags& f) {
  smlab::ExperimentConfig c = f.config.empty() ? smlab::ExperimentConfig{} : smlab::load_config(f.config);
  for (const auto& kv : f.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw smlab::ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) c.run.seed = *f.seed;
  if (!f.out.empty()) c.run.out_dir = f.out;
  if (f.steps) c.run.total_steps = *f.steps;
  c.validate();
  return c;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (ch != ' ') {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SG+SM intrinsic-motivation lab"};
  app.require_subcommand(1);

  CommonFlags train_f;
  std::string resume;
  bool quiet = false;
  auto* train = app.add_subcommand("train", "run the rollout/update loop");
  add_common(train, train_f, false);
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_flag("--quiet", quiet, "no progress lines on stderr");

  CommonFlags abl_f;
  std::string modes = "full,no_w,no_m", sweep, seeds = "0,1,2,3,4";
  auto* ablate = app.add_subcommand("ablate", "compare SM modes and N-d settings over seeds");
  add_common(ablate, abl_f, false);
  ablate->add_option("--modes", modes, "comma-separated sm modes (may be empty)");
  ablate->add_option("--sweep", sweep, "comma-separated N-d pairs, e.g. 32-4,128-16,1024-64");
  ablate->add_option("--seeds", seeds, "comma-separated seeds");
  ablate->add_flag("--quiet", quiet);

  std::string ckpt, csv, map_config;
  std::uint64_t episode_seed = 1;
  auto* map = app.add_subcommand("mnir-map", "per-cell MNIR over a scripted scan of every floor cell");
  map->add_option("--checkpoint", ckpt)->required();
  map->add_option("--config", map_config, "expected environment; must match the checkpoint");
  map->add_option("--csv", csv, "output file (default stdout)");
  map->add_option("--episode-seed", episode_seed);

  int episodes = 20;
  auto* eval = app.add_subcommand("eval", "greedy rollouts from a checkpoint");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--episodes", episodes);
  eval->add_option("--episode-seed", episode_seed);

  int probes = 50;
  auto* probe = app.add_subcommand("probe-repeat", "MNIR of a key sighting shown twice per probe episode");
  probe->add_option("--checkpoint", ckpt)->required();
  probe->add_option("--probes", probes);
  probe->add_option("--episode-seed", episode_seed);

  std::string which = "all";
  auto* verify = app.add_subcommand("verify", "run numerical checks; exit 4 if any fails");
  verify->add_option("which", which);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      smlab::TrainOptions opt;
      opt.resume = resume;
      opt.quiet = quiet;
      const auto cfg = resolve(train_f);
      const auto s = smlab::train(cfg, opt);
      std::cout << nlohmann::json{{"global_step", s.global_step},
                                  {"iterations", s.iterations},
                                  {"episodes", s.episodes},
                                  {"final_mean_return", s.final_mean_return},
                                  {"final_watch_rate", s.final_watch_rate},
                                  {"checkpoint", s.final_checkpoint}}
                       .dump()
                << '\n';
    } else if (*ablate) {
      smlab::TrainOptions opt;
      opt.quiet = quiet;
      const auto cfg = resolve(abl_f);
      std::vector<std::uint64_t> seed_list;
      for (const auto& s : split(seeds)) seed_list.push_back(std::stoull(s));
      if (seed_list.empty()) throw smlab::ConfigError("--seeds is empty");
      const auto variants = smlab::ablation_variants(cfg, split(modes), split(sweep));
      if (variants.empty()) throw smlab::ConfigError("nothing to run: no modes and no sweep");
      const auto rows = smlab::ablate(cfg, variants, seed_list, opt);
      std::filesystem::create_directories(cfg.run.out_dir);
      std::ofstream(std::filesystem::path(cfg.run.out_dir) / "ablation.json") << smlab::ablation_json(rows).dump(2);
      std::cout << smlab::ablation_table(rows);
    } else if (*map) {
      const auto ck = smlab::Checkpoint::load(ckpt);
      std::optional<smlab::ExperimentConfig> expected;
      if (!map_config.empty()) expected = smlab::load_config(map_config);
      const auto t = smlab::trainer_from_checkpoint(ck, expected ? &*expected : nullptr);
      const auto cells = smlab::mnir_map(t, episode_seed);
      const std::string out = smlab::mnir_csv(cells);
      if (csv.empty()) std::cout << out;
      else std::ofstream(csv) << out;
    } else if (*eval) {
      const auto t = smlab::trainer_from_checkpoint(smlab::Checkpoint::load(ckpt));
      const auto r = t.evaluate(episodes, episode_seed);
      std::cout << nlohmann::json{{"episodes", episodes},
                                  {"mean_return", r.mean_return},
                                  {"success_rate", r.success_rate},
                                  {"watch_rate", r.watch_rate}}
                       .dump()
                << '\n';
    } else if (*probe) {
      const auto t = smlab::trainer_from_checkpoint(smlab::Checkpoint::load(ckpt));
      const auto r = smlab::repeated_surprise_probe(t, probes, episode_seed);
      std::cout << nlohmann::json{{"probes", r.probes},
                                  {"second_lower", r.second_lower},
                                  {"fraction", r.fraction()},
                                  {"first_mnir", r.first},
                                  {"second_mnir", r.second}}
                       .dump()
                << '\n';
    } else if (*verify) {
      std::vector<std::string> names = which == "all" ? smlab::verify::check_names() : std::vector<std::string>{which};
      bool ok = true;
      for (const auto& n : names) {
        const auto v = smlab::verify::run_check(n);
        std::cout << v.to_json() << '\n' << std::flush;
        if (!v.pass) {
          std::cerr << "FAILED: " << v.name << '\n';
          ok = false;
        }
      }
      return ok ? 0 : 4;
    }
  } catch (const smlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const smlab::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
