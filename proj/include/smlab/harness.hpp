#pragma once

// Experiment orchestration behind the CLI: training runs with metrics and
// checkpoints, ablation sweeps, greedy evaluation and MNIR analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smlab/checkpoint.hpp"
#include "smlab/config.hpp"
#include "smlab/env.hpp"
#include "smlab/reward.hpp"
#include "smlab/trainer.hpp"

namespace smlab {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path) { return ExperimentConfig::parse(read_file(path)); }

inline nlohmann::json metrics_json(const IterationReport& r) {
  return {{"global_step", r.global_step},
          {"iteration", r.iteration},
          {"mean_return", r.mean_return},
          {"episodes", r.episodes},
          {"L_SG", r.losses.l_sg},
          {"L_M", r.losses.l_m},
          {"L_W", r.losses.l_w},
          {"policy_loss", r.losses.policy},
          {"value_loss", r.losses.value},
          {"entropy", r.losses.entropy},
          {"approx_kl", r.losses.approx_kl},
          {"r_i_mean", r.r_i_mean},
          {"r_i_norm_mean", r.r_i_norm_mean},
          {"r_std", r.r_std},
          {"watch_rate", r.watch_rate},
          {"wall_time_s", r.wall_time_s}};
}

struct TrainSummary {
  std::uint64_t global_step = 0;
  std::uint64_t iterations = 0;
  std::uint64_t episodes = 0;
  double final_mean_return = 0.0;
  double final_watch_rate = 0.0;  // mean over the last 10 logged iterations
  std::string final_checkpoint;
};

struct TrainOptions {
  std::string resume;        // checkpoint path, empty for a fresh run
  bool quiet = false;
  std::ostream* log = &std::cerr;
  // Deterministic metrics: leaves wall_time_s out of the stream.
  bool omit_wall_time = false;
};

template <class T>
TrainSummary train_run(const ExperimentConfig& cfg, const TrainOptions& opt = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path dir(cfg.run.out_dir);
  fs::create_directories(dir);
  Trainer<T> trainer(cfg);
  if (!opt.resume.empty()) trainer.load_checkpoint(Checkpoint::load(opt.resume));
  {
    std::ofstream c(dir / "config.txt");
    c << cfg.to_text();
  }
  std::ofstream metrics(dir / "metrics.jsonl", opt.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw ConfigError("cannot write metrics in " + dir.string());

  std::vector<double> watch_tail;
  const auto save = [&](const fs::path& p, const TrainSummary* s) {
    Checkpoint ck = trainer.to_checkpoint();
    if (s) {
      ck.meta["final_mean_return"] = s->final_mean_return;
      ck.meta["final_watch_rate"] = s->final_watch_rate;
    }
    ck.save(p.string());
  };
  while (!trainer.finished()) {
    const IterationReport r = trainer.iterate();
    watch_tail.push_back(r.watch_rate);
    if (watch_tail.size() > 10) watch_tail.erase(watch_tail.begin());
    if (r.iteration % static_cast<std::uint64_t>(cfg.run.log_interval) == 0 || trainer.finished()) {
      auto j = metrics_json(r);
      if (opt.omit_wall_time) j.erase("wall_time_s");
      metrics << j.dump() << '\n' << std::flush;
      if (!opt.quiet && opt.log) {
        *opt.log << "step " << r.global_step << " iter " << r.iteration << " return " << r.mean_return
                 << " episodes " << r.episodes << " L_SG " << r.losses.l_sg << " L_M " << r.losses.l_m << " L_W "
                 << r.losses.l_w << " watch " << r.watch_rate << '\n';
      }
    }
    if (cfg.run.checkpoint_interval > 0 &&
        r.iteration % static_cast<std::uint64_t>(cfg.run.checkpoint_interval) == 0) {
      save(dir / "checkpoint.json", nullptr);
    }
  }
  TrainSummary s;
  s.global_step = trainer.global_step();
  s.iterations = trainer.iteration();
  s.episodes = trainer.episodes();
  s.final_mean_return = trainer.mean_recent_return();
  for (double w : watch_tail) s.final_watch_rate += w / static_cast<double>(watch_tail.size());
  s.final_checkpoint = (dir / "final.json").string();
  save(s.final_checkpoint, &s);
  return s;
}

inline TrainSummary train(const ExperimentConfig& cfg, const TrainOptions& opt = {}) {
  return cfg.run.precision == 32 ? train_run<float>(cfg, opt) : train_run<double>(cfg, opt);
}

// Reuses a finished run whose final checkpoint carries the same config.
inline std::optional<TrainSummary> cached_run(const ExperimentConfig& cfg) {
  const auto path = std::filesystem::path(cfg.run.out_dir) / "final.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  const Checkpoint ck = Checkpoint::load(path.string());
  if (ck.meta.value("config", "") != cfg.to_text() || !ck.meta.contains("final_mean_return")) return std::nullopt;
  TrainSummary s;
  s.global_step = ck.meta.at("global_step").get<std::uint64_t>();
  s.iterations = ck.meta.at("iteration").get<std::uint64_t>();
  s.episodes = ck.meta.at("episodes").get<std::uint64_t>();
  s.final_mean_return = ck.meta.at("final_mean_return").get<double>();
  s.final_watch_rate = ck.meta.at("final_watch_rate").get<double>();
  s.final_checkpoint = path.string();
  return s;
}

// ------------------------------------------------------------------ ablate

struct Quartiles {
  double q1 = 0.0, median = 0.0, q3 = 0.0;
};

// Linear interpolation between order statistics.
inline Quartiles quartiles(std::vector<double> x) {
  if (x.empty()) throw UsageError("quartiles: empty sample");
  std::sort(x.begin(), x.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

struct AblationVariant {
  std::string label;
  std::string mode;
  int n_slots = 128;
  int slot_dim = 16;
};

struct AblationRow {
  AblationVariant variant;
  std::vector<std::uint64_t> seeds;
  std::vector<double> returns;
  std::vector<double> watch_rates;
  Quartiles ret;
  Quartiles watch;
};

// "32-4" -> (32, 4)
inline std::pair<int, int> parse_nd(const std::string& s) {
  const auto dash = s.find('-');
  try {
    if (dash == std::string::npos) throw std::invalid_argument(s);
    return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
  } catch (const std::logic_error&) {
    throw ConfigError("sweep entries look like N-d, got '" + s + "'");
  }
}

inline std::vector<AblationVariant> ablation_variants(const ExperimentConfig& base, const std::vector<std::string>& modes,
                                                      const std::vector<std::string>& sweep) {
  std::vector<AblationVariant> out;
  for (const auto& m : modes) {
    parse_sm_mode(m);
    out.push_back({m, m, base.sm.n_slots, base.sm.slot_dim});
  }
  for (const auto& s : sweep) {
    const auto [n, d] = parse_nd(s);
    out.push_back({base.sm.mode + "/" + s, base.sm.mode, n, d});
  }
  return out;
}

inline std::vector<AblationRow> ablate(const ExperimentConfig& base, const std::vector<AblationVariant>& variants,
                                       const std::vector<std::uint64_t>& seeds, const TrainOptions& opt = {}) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v;
    for (const auto seed : seeds) {
      ExperimentConfig c = base;
      c.sm.mode = v.mode;
      c.sm.n_slots = v.n_slots;
      c.sm.slot_dim = v.slot_dim;
      c.run.seed = seed;
      std::string label = v.label;
      std::replace(label.begin(), label.end(), '/', '_');
      c.run.out_dir = (std::filesystem::path(base.run.out_dir) / label / ("seed_" + std::to_string(seed))).string();
      const auto cached = cached_run(c);
      const TrainSummary s = cached ? *cached : train(c, opt);
      row.seeds.push_back(seed);
      row.returns.push_back(s.final_mean_return);
      row.watch_rates.push_back(s.final_watch_rate);
    }
    row.ret = quartiles(row.returns);
    row.watch = quartiles(row.watch_rates);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"variant", r.variant.label},
                   {"mode", r.variant.mode},
                   {"n_slots", r.variant.n_slots},
                   {"slot_dim", r.variant.slot_dim},
                   {"seeds", r.seeds},
                   {"final_mean_return", r.returns},
                   {"final_watch_rate", r.watch_rates},
                   {"median_return", r.ret.median},
                   {"iqr_return", {r.ret.q1, r.ret.q3}},
                   {"median_watch_rate", r.watch.median},
                   {"iqr_watch_rate", {r.watch.q1, r.watch.q3}}});
  }
  return out;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,mode,N,d,seeds,median_return,q1_return,q3_return,median_watch_rate\n";
  for (const auto& r : rows) {
    os << r.variant.label << ',' << r.variant.mode << ',' << r.variant.n_slots << ',' << r.variant.slot_dim << ','
       << r.seeds.size() << ',' << r.ret.median << ',' << r.ret.q1 << ',' << r.ret.q3 << ',' << r.watch.median << '\n';
  }
  return os.str();
}

// -------------------------------------------------------------- analysis

// Rebuilds a trainer from a checkpoint. When `expected` is given, its env and
// model settings must agree with the checkpoint's.
inline Trainer<double> trainer_from_checkpoint(const Checkpoint& ck, const ExperimentConfig* expected = nullptr) {
  ExperimentConfig c = ExperimentConfig::parse(ck.meta.at("config").get<std::string>());
  if (expected) {
    const auto& e = *expected;
    if (e.env.name != c.env.name || e.env.grid_size != c.env.grid_size || e.run.seed != c.run.seed ||
        e.env.maze_per_episode != c.env.maze_per_episode) {
      throw ConfigError("checkpoint was trained on a different environment");
    }
  }
  c.ppo.actors = 1;  // analysis needs no rollout actors
  Trainer<double> t(c);
  t.load_checkpoint(ck);
  return t;
}

struct MnirCell {
  int index = 0;
  Pos pos;
  std::string kind;
  double r_i = 0.0;
  double mnir = 0.0;
};

inline std::string cell_kind(Cell c) {
  switch (c) {
    case Cell::key: return "key";
    case Cell::goal: return "goal";
    default: return "floor";
  }
}

// Scans every floor cell (row-major, heading `dir`) through one fresh episodic
// memory and MNIR-normalizes the intrinsic rewards over the scan.
inline std::vector<MnirCell> mnir_map(const Trainer<double>& t, std::uint64_t episode_seed, Dir dir = Dir::east) {
  auto env = make_env(t.config().env_config());
  env->reset(episode_seed);
  std::vector<ScanPoint> pts;
  for (const Pos p : env->floor_cells()) pts.push_back({p, dir});
  const auto obs = env->scripted_scan(pts);
  const auto r = t.probe_rewards(obs);
  const auto m = mnir(r);
  std::vector<MnirCell> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.push_back({static_cast<int>(i), pts[i].pos, cell_kind(env->cell(pts[i].pos)), r[i], m[i]});
  }
  return out;
}

inline std::string mnir_csv(const std::vector<MnirCell>& cells) {
  std::ostringstream os;
  os.precision(17);
  os << "cell,x,y,mnir,kind,r_i\n";
  for (const auto& c : cells) {
    os << c.index << ',' << c.pos.x << ',' << c.pos.y << ',' << c.mnir << ',' << c.kind << ',' << c.r_i << '\n';
  }
  return os.str();
}

struct SelectivityResult {
  double key_mnir = 0.0;
  double median_floor_mnir = 0.0;
  bool key_above_median = false;
};

inline SelectivityResult key_selectivity(const std::vector<MnirCell>& cells) {
  SelectivityResult s;
  std::vector<double> floor;
  bool found = false;
  for (const auto& c : cells) {
    if (c.kind == "key") {
      s.key_mnir = c.mnir;
      found = true;
    }
    floor.push_back(c.mnir);
  }
  if (!found) throw UsageError("mnir map has no key cell");
  s.median_floor_mnir = quartiles(floor).median;
  s.key_above_median = s.key_mnir > s.median_floor_mnir;
  return s;
}

struct RepeatProbeResult {
  int probes = 0;
  int second_lower = 0;
  std::vector<double> first;
  std::vector<double> second;
  double fraction() const { return probes ? static_cast<double>(second_lower) / probes : 0.0; }
};

// Each probe is a scripted episode of random floor views in which one
// key-sighting view (adjacent to the key, facing it) appears twice. Compares
// the MNIR of the two presentations.
inline RepeatProbeResult repeated_surprise_probe(const Trainer<double>& t, int probes, std::uint64_t seed,
                                                 int length = 24) {
  if (t.config().env_config().kind != EnvKind::key_door) throw ConfigError("repeat probe needs env.name = key_door");
  auto env_ptr = make_env(t.config().env_config());
  auto& env = static_cast<KeyDoorGrid&>(*env_ptr);
  RngStream rng(seed, streams::kProbe * 1000 + 11);
  env.reset(rng.next_u64());
  const Pos key = env.key_pos();
  std::vector<ScanPoint> sightings;
  for (int d = 0; d < 4; ++d) {
    const Dir facing = static_cast<Dir>(d);
    const Pos from = step_in(key, static_cast<Dir>((d + 2) % 4));
    if (env.in_bounds(from) && env.cell(from) != Cell::wall && env.cell(from) != Cell::door_closed &&
        env.cell(from) != Cell::door_open) {
      sightings.push_back({from, facing});
    }
  }
  if (sightings.empty()) throw UsageError("key has no open neighbour");
  std::vector<ScanPoint> background;
  for (const Pos p : env.floor_cells()) {
    if (p == key) continue;
    for (int d = 0; d < 4; ++d) background.push_back({p, static_cast<Dir>(d)});
  }
  RepeatProbeResult res;
  res.probes = probes;
  for (int k = 0; k < probes; ++k) {
    const ScanPoint sight = sightings[rng.below(sightings.size())];
    const int p1 = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(length / 3)));
    const int p2 = p1 + 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(length - p1 - 4)));
    std::vector<ScanPoint> pts;
    for (int i = 0; i < length; ++i) {
      if (i == p1 || i == p2) pts.push_back(sight);
      else pts.push_back(background[rng.below(background.size())]);
    }
    const auto m = mnir(t.probe_rewards(env.scripted_scan(pts)));
    res.first.push_back(m[p1]);
    res.second.push_back(m[p2]);
    if (m[p2] < m[p1]) ++res.second_lower;
  }
  return res;
}

}  // namespace smlab
