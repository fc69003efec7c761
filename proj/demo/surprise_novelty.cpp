// Builds an RND surprise generator and a surprise memory, then feeds one
// episode of a repeated pattern, a fresh pattern and noise through them and
// prints the intrinsic rewards before and after a short joint training pass.

#include <cstdio>
#include <vector>

#include "smlab/surprise_generator.hpp"
#include "smlab/surprise_memory.hpp"
#include "smlab/trainer.hpp"

using namespace smlab;

int main() {
  SgConfig sc;
  sc.obs_dim = 12;
  sc.n = 8;
  sc.hidden = 32;
  sc.seed = 1;
  SurpriseGenerator<double> sg(sc);

  SmConfig mc;
  mc.n = sg.surprise_dim();
  mc.n_slots = 16;
  mc.slot_dim = 4;
  mc.seed = 1;
  SurpriseMemory<double> sm(mc);

  RngStream rng(7, 1);
  Matrix<double> pattern(2, 12);
  for (Eigen::Index i = 0; i < pattern.size(); ++i) pattern.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  // a a b a a b ... then noise
  Matrix<double> obs(24, 12);
  for (int t = 0; t < 20; ++t) obs.row(t) = pattern.row(t % 3 == 2 ? 1 : 0);
  for (int t = 20; t < 24; ++t)
    for (int j = 0; j < 12; ++j) obs(t, j) = rng.normal();

  auto episode = [&] {
    const Matrix<double> u = sg.compute_surprise(obs, sg.make_target(obs));
    auto mem = sm.make_memory();
    std::vector<double> r;
    for (Eigen::Index t = 0; t < u.rows(); ++t) {
      r.push_back(sm.intrinsic_reward(mem, u.row(t)).r_i);
      sm.write(mem, u.row(t));
    }
    return r;
  };

  const auto before = episode();
  std::vector<ReplayItem> items;
  for (Eigen::Index t = 0; t < obs.rows(); ++t) items.push_back({t, std::max<Eigen::Index>(0, t - 16), t});
  for (int k = 0; k < 300; ++k) {
    const Matrix<double> pool = sg.compute_surprise(obs, sg.make_target(obs));
    joint_losses(sg, sm, obs, sg.make_target(obs), pool, items, true);
    auto params = sg.trainable_params();
    for (auto* p : sm.trainable_params()) params.push_back(p);
    adam_step<double>(params, 1e-3);
  }
  const auto after = episode();

  std::printf("step  input    r_i(before)  r_i(after)\n");
  for (std::size_t t = 0; t < before.size(); ++t) {
    const char* kind = t >= 20 ? "noise" : (t % 3 == 2 ? "b" : "a");
    std::printf("%4zu  %-6s  %11.4f  %10.4f\n", t, kind, before[t], after[t]);
  }
}
