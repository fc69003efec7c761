#pragma once

// Experiment configuration in a flat dotted-key text format:
//
//   # comment
//   section.key = value
//
// One assignment per line; blank lines and '#' comments are ignored; keys are
// case-sensitive; unknown keys and malformed values are rejected with
// ConfigError. Booleans are true/false; env.maze_per_episode also accepts auto.

#include <cstdint>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "smlab/env.hpp"
#include "smlab/errors.hpp"
#include "smlab/reward.hpp"
#include "smlab/surprise_generator.hpp"
#include "smlab/surprise_memory.hpp"

namespace smlab {

struct PpoConfig {
  double gamma = 0.999;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch = 64;
  int actors = 16;
  int horizon = 128;
  double lr = 1e-4;
  int hidden = 256;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  bool normalize_advantages = true;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 500000;
  int log_interval = 1;         // iterations per metrics record
  int checkpoint_interval = 50; // iterations per periodic checkpoint; 0 disables
  std::string out_dir = "runs/default";
  int precision = 64;           // 64 or 32
};

struct SgSection {
  std::string variant = "rnd";
  int n = 64;
  int hidden = 128;
  double lr = 1e-4;
};

struct SmSection {
  std::string mode = "full";
  int n_slots = 128;
  int slot_dim = 16;
  int hidden = 32;
  bool w_grad_to_qv = true;
  bool normalize_attention = false;
};

struct EnvSection {
  std::string name = "noisy_tv";
  int grid_size = 9;
  int max_steps = 0;
  std::string maze_per_episode = "auto";
};

struct ExperimentConfig {
  EnvSection env;
  SgSection sg;
  SmSection sm;
  PpoConfig ppo;
  RewardConfig reward;
  RunConfig run;

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.to_text() == b.to_text();
  }

  EnvConfig env_config() const {
    EnvConfig c;
    c.kind = parse_env_kind(env.name);
    c.grid_size = env.grid_size;
    c.max_steps = env.max_steps;
    if (env.maze_per_episode != "auto") c.maze_per_episode = env.maze_per_episode == "true";
    c.seed = splitmix64(run.seed ^ 0x6c61796f7574ULL);
    return c;
  }

  SmMode sm_mode() const { return parse_sm_mode(sm.mode); }
  SgVariant sg_variant() const { return parse_sg_variant(sg.variant); }

  // Range checks beyond what parsing enforces.
  void validate() const {
    parse_env_kind(env.name);
    parse_sg_variant(sg.variant);
    parse_sm_mode(sm.mode);
    if (env.grid_size < 5 || env.grid_size % 2 == 0) throw ConfigError("env.grid_size must be odd and >= 5");
    if (env.max_steps < 0) throw ConfigError("env.max_steps must be >= 0");
    if (env.maze_per_episode != "auto" && env.maze_per_episode != "true" && env.maze_per_episode != "false") {
      throw ConfigError("env.maze_per_episode must be auto, true or false");
    }
    if (sg.n <= 0 || sg.hidden <= 0 || sg.lr <= 0) throw ConfigError("sg.n, sg.hidden and sg.lr must be positive");
    if (sm.n_slots <= 0 || sm.slot_dim <= 0 || sm.hidden <= 0) throw ConfigError("sm sizes must be positive");
    if (!(ppo.gamma > 0 && ppo.gamma <= 1)) throw ConfigError("ppo.gamma must lie in (0, 1]");
    if (!(ppo.gae_lambda > 0 && ppo.gae_lambda <= 1)) throw ConfigError("ppo.gae_lambda must lie in (0, 1]");
    if (!(ppo.clip_eps > 0)) throw ConfigError("ppo.clip_eps must be positive");
    if (ppo.epochs <= 0 || ppo.minibatch <= 0 || ppo.actors <= 0 || ppo.horizon <= 0 || ppo.hidden <= 0) {
      throw ConfigError("ppo counts must be positive");
    }
    if (!(ppo.lr > 0)) throw ConfigError("ppo.lr must be positive");
    if (reward.beta < 0) throw ConfigError("reward.beta must be >= 0");
    if (!(reward.gamma_i >= 0 && reward.gamma_i <= 1)) throw ConfigError("reward.gamma_i must lie in [0, 1]");
    if (!(reward.eps > 0)) throw ConfigError("reward.eps must be positive");
    if (run.log_interval <= 0) throw ConfigError("run.log_interval must be positive");
    if (run.checkpoint_interval < 0) throw ConfigError("run.checkpoint_interval must be >= 0");
    if (run.precision != 64 && run.precision != 32) throw ConfigError("run.precision must be 64 or 32");
  }

  std::string to_text() const {
    std::string out;
    for (const auto& f : const_cast<ExperimentConfig*>(this)->fields()) {
      out += f.key + " = " + f.get() + "\n";
    }
    return out;
  }

  // Applies assignments on top of the current values.
  void apply_text(const std::string& text) {
    auto table = fields();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(lineno) + ": expected 'section.key = value'");
      }
      set(table, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno);
    }
    validate();
  }

  void set(const std::string& key, const std::string& value) {
    auto table = fields();
    set(table, key, value, 0);
  }

  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig c;
    c.apply_text(text);
    return c;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& f : const_cast<ExperimentConfig*>(this)->fields()) out.push_back(f.key);
    return out;
  }

 private:
  struct Field {
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> put;
  };

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static void set(std::vector<Field>& table, const std::string& key, const std::string& value, int lineno) {
    for (auto& f : table) {
      if (f.key != key) continue;
      try {
        f.put(value);
      } catch (const ConfigError& e) {
        throw ConfigError((lineno ? "config line " + std::to_string(lineno) + ": " : std::string()) + key + ": " + e.what());
      }
      return;
    }
    throw ConfigError("unknown config key '" + key + "'");
  }

  static Field str(std::string key, std::string& ref) {
    return {std::move(key), [&ref] { return ref; }, [&ref](const std::string& v) {
              if (v.empty()) throw ConfigError("empty value");
              ref = v;
            }};
  }
  template <class I>
  static Field integer(std::string key, I& ref) {
    return {std::move(key), [&ref] { return std::to_string(ref); }, [&ref](const std::string& v) {
              try {
                std::size_t pos = 0;
                const long long x = std::stoll(v, &pos);
                if (pos != v.size()) throw ConfigError("not an integer: '" + v + "'");
                if constexpr (std::is_unsigned_v<I>) {
                  if (x < 0) throw ConfigError("must be non-negative: '" + v + "'");
                }
                ref = static_cast<I>(x);
              } catch (const std::logic_error&) {
                throw ConfigError("not an integer: '" + v + "'");
              }
            }};
  }
  static Field real(std::string key, double& ref) {
    return {std::move(key),
            [&ref] {
              char buf[40];
              std::snprintf(buf, sizeof buf, "%.17g", ref);
              return std::string(buf);
            },
            [&ref](const std::string& v) {
              try {
                std::size_t pos = 0;
                ref = std::stod(v, &pos);
                if (pos != v.size()) throw ConfigError("not a number: '" + v + "'");
              } catch (const std::logic_error&) {
                throw ConfigError("not a number: '" + v + "'");
              }
            }};
  }
  static Field boolean(std::string key, bool& ref) {
    return {std::move(key), [&ref] { return std::string(ref ? "true" : "false"); },
            [&ref](const std::string& v) {
              if (v == "true") ref = true;
              else if (v == "false") ref = false;
              else throw ConfigError("expected true or false, got '" + v + "'");
            }};
  }

  std::vector<Field> fields() {
    return {
        str("env.name", env.name),
        integer("env.grid_size", env.grid_size),
        integer("env.max_steps", env.max_steps),
        str("env.maze_per_episode", env.maze_per_episode),
        str("sg.variant", sg.variant),
        integer("sg.n", sg.n),
        integer("sg.hidden", sg.hidden),
        real("sg.lr", sg.lr),
        str("sm.mode", sm.mode),
        integer("sm.n_slots", sm.n_slots),
        integer("sm.slot_dim", sm.slot_dim),
        integer("sm.hidden", sm.hidden),
        boolean("sm.w_grad_to_qv", sm.w_grad_to_qv),
        boolean("sm.normalize_attention", sm.normalize_attention),
        real("ppo.gamma", ppo.gamma),
        real("ppo.gae_lambda", ppo.gae_lambda),
        real("ppo.clip_eps", ppo.clip_eps),
        integer("ppo.epochs", ppo.epochs),
        integer("ppo.minibatch", ppo.minibatch),
        integer("ppo.actors", ppo.actors),
        integer("ppo.horizon", ppo.horizon),
        real("ppo.lr", ppo.lr),
        integer("ppo.hidden", ppo.hidden),
        real("ppo.entropy_coef", ppo.entropy_coef),
        real("ppo.value_coef", ppo.value_coef),
        boolean("ppo.normalize_advantages", ppo.normalize_advantages),
        real("reward.beta", reward.beta),
        real("reward.gamma_i", reward.gamma_i),
        real("reward.eps", reward.eps),
        integer("run.seed", run.seed),
        integer("run.total_steps", run.total_steps),
        integer("run.log_interval", run.log_interval),
        integer("run.checkpoint_interval", run.checkpoint_interval),
        str("run.out_dir", run.out_dir),
        integer("run.precision", run.precision),
    };
  }
};

}  // namespace smlab
