// Renders a KeyDoor layout, solves it with the scripted planner and prints the
// per-cell MNIR of an untrained agent over a scan of every floor cell.

#include <cstdio>
#include <iostream>

#include "smlab/harness.hpp"

using namespace smlab;

int main() {
  ExperimentConfig cfg;
  cfg.env.name = "key_door";
  cfg.env.grid_size = 7;
  cfg.ppo.actors = 1;
  cfg.ppo.hidden = 32;
  cfg.sg.n = 16;
  cfg.sg.hidden = 32;
  cfg.run.seed = 2;

  auto env = make_env(cfg.env_config());
  env->reset(1);
  std::cout << env->render() << '\n';
  const auto plan = solve_keydoor(static_cast<const KeyDoorGrid&>(*env));
  double ret = 0;
  if (plan) {
    for (int a : *plan) ret += env->step(a).reward;
    std::printf("scripted solve: %zu actions, return %.1f\n\n", plan->size(), ret);
  }

  Trainer<double> t(cfg);
  std::cout << mnir_csv(mnir_map(t, 1));
}
