#include <gtest/gtest.h>

#include <filesystem>

#include "smlab/harness.hpp"

using namespace smlab;

namespace {

ExperimentConfig tiny(const std::string& env = "noisy_tv") {
  ExperimentConfig c;
  c.env.name = env;
  c.env.grid_size = 7;
  c.ppo.actors = 2;
  c.ppo.horizon = 32;
  c.ppo.hidden = 32;
  c.ppo.minibatch = 16;
  c.ppo.epochs = 2;
  c.sg.n = 8;
  c.sg.hidden = 16;
  c.sm.n_slots = 16;
  c.sm.slot_dim = 4;
  c.run.seed = 3;
  c.run.total_steps = 128;
  return c;
}

template <class T>
void expect_same(const RolloutBuffer<T>& a, const RolloutBuffer<T>& b) {
  EXPECT_EQ(a.obs, b.obs);
  EXPECT_EQ(a.surprises, b.surprises);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.log_probs, b.log_probs);
  EXPECT_EQ(a.rewards, b.rewards);
  EXPECT_EQ(a.r_i_raw, b.r_i_raw);
  EXPECT_EQ(a.dones, b.dones);
}

// Remaining scripted distance to solving the task from the current state.
double keydoor_potential(const GridEnv& g) {
  const auto& env = static_cast<const KeyDoorGrid&>(g);
  KeyDoorGrid sim = env;
  if (env.cell(env.key_pos()) == Cell::key && !env.carrying()) {
    const auto plan = solve_keydoor(sim);
    return plan ? -static_cast<double>(plan->size()) : -100.0;
  }
  double cost = 0;
  Pos p = env.agent();
  Dir d = env.heading();
  if (env.cell(env.door_pos()) == Cell::door_closed) {
    const auto leg = plan_route(sim, p, d, env.door_pos(), false);
    if (!leg) return -100.0;
    cost += static_cast<double>(leg->size()) + 1;
    for (int a : *leg) {
      if (a == 0) d = turn_left(d);
      else if (a == 1) d = turn_right(d);
      else p = step_in(p, d);
    }
    sim.open_door();
  }
  const auto leg = plan_route(sim, p, d, env.goal(), true);
  return leg ? -(cost + static_cast<double>(leg->size())) : -100.0;
}

}  // namespace

TEST(Trainer, RolloutIsDeterministic) {
  for (const char* env : {"noisy_tv", "key_door"}) {
    Trainer<double> a(tiny(env)), b(tiny(env));
    expect_same(a.collect_rollout(), b.collect_rollout());
  }
}

TEST(Trainer, LossTrajectoriesRepeat) {
  auto c = tiny();
  c.sg.variant = "fd";
  Trainer<double> a(c), b(c);
  for (int k = 0; k < 3; ++k) {
    const auto ra = a.iterate(), rb = b.iterate();
    EXPECT_EQ(ra.losses.l_sg, rb.losses.l_sg);
    EXPECT_EQ(ra.losses.l_m, rb.losses.l_m);
    EXPECT_EQ(ra.losses.l_w, rb.losses.l_w);
    EXPECT_EQ(ra.losses.policy, rb.losses.policy);
    EXPECT_EQ(ra.r_std, rb.r_std);
  }
}

TEST(Trainer, BetaZeroRewardIsExtrinsic) {
  auto c = tiny();
  c.reward.beta = 0.0;
  c.env.max_steps = 10;
  Trainer<double> t(c);
  for (int k = 0; k < 2; ++k) {
    const auto buf = t.collect_rollout();
    for (Eigen::Index i = 0; i < buf.size(); ++i) EXPECT_EQ(buf.rewards[i], buf.r_ext[i]);
    t.update(buf);
  }
}

TEST(Trainer, ContextsStayInsideEpisodeAndSegment) {
  auto c = tiny();
  c.env.max_steps = 7;
  c.sm.n_slots = 4;
  Trainer<double> t(c);
  const auto buf = t.collect_rollout();
  int episode_starts = 0;
  for (Eigen::Index b = 0; b < buf.actors; ++b) {
    for (Eigen::Index s = 0; s < buf.horizon; ++s) {
      const Eigen::Index i = buf.index(b, s);
      const auto& it = buf.contexts[i];
      EXPECT_EQ(it.query, i);
      EXPECT_EQ(it.ctx_end, i);
      EXPECT_GE(it.ctx_begin, buf.index(b, 0));
      EXPECT_LE(it.ctx_end - it.ctx_begin, 4);
      for (Eigen::Index j = it.ctx_begin; j < it.ctx_end; ++j) EXPECT_FALSE(buf.dones[j]);
      if (s == 0 || buf.dones[i - 1]) {
        EXPECT_EQ(it.ctx_begin, it.ctx_end);
        ++episode_starts;
      }
    }
  }
  EXPECT_GT(episode_starts, 2);
  // The next segment starts with empty context again.
  const auto next = t.collect_rollout();
  EXPECT_EQ(next.contexts[0].ctx_begin, next.contexts[0].ctx_end);
}

TEST(Trainer, RolloutRewardsMatchProbeOnFreshMemory) {
  // The first step of a segment reads an empty memory, as does a probe of length one.
  auto c = tiny();
  Trainer<double> t(c);
  const Observation o0 = t.env(0).current_observation();
  const auto buf = t.collect_rollout();
  EXPECT_TRUE(std::isfinite(buf.r_i_raw[0]));
  EXPECT_EQ(t.probe_rewards({o0}).size(), 1u);
}

TEST(Trainer, OffModeSkipsMemoryLosses) {
  auto c = tiny();
  c.sm.mode = "off";
  Trainer<double> t(c);
  const auto r = t.iterate();
  EXPECT_EQ(r.losses.l_m, 0.0);
  EXPECT_EQ(r.losses.l_w, 0.0);
  EXPECT_GT(r.losses.l_sg, 0.0);
}

TEST(Trainer, TargetNetworkNeverTrains) {
  Trainer<double> t(tiny());
  const auto fp = t.sg().target_fingerprint();
  t.iterate();
  t.iterate();
  EXPECT_EQ(t.sg().target_fingerprint(), fp);
}

TEST(Trainer, FloatPrecisionRuns) {
  auto c = tiny();
  c.run.precision = 32;
  Trainer<float> t(c);
  const auto r = t.iterate();
  EXPECT_TRUE(std::isfinite(r.losses.l_sg));
}

TEST(Trainer, CheckpointResumeContinuesCounters) {
  auto c = tiny();
  Trainer<double> a(c);
  a.iterate();
  const auto ck = Checkpoint::parse(a.to_checkpoint().dump());
  Trainer<double> b(c);
  b.load_checkpoint(ck);
  EXPECT_EQ(b.global_step(), a.global_step());
  EXPECT_EQ(b.iteration(), 1u);
  auto pa = a.policy().params(), pb = b.policy().params();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    EXPECT_EQ(pa[i]->adam_m, pb[i]->adam_m);
  }
  EXPECT_EQ(b.normalizer().r_std(), a.normalizer().r_std());
  const auto before = b.global_step();
  b.iterate();
  EXPECT_GT(b.global_step(), before);

  auto other = c;
  other.sm.mode = "no_m";
  Trainer<double> d(other);
  EXPECT_THROW(d.load_checkpoint(ck), ConfigError);
}

TEST(Trainer, EvaluateAndProbe) {
  Trainer<double> t(tiny("key_door"));
  const auto e = t.evaluate(2, 1);
  EXPECT_GE(e.success_rate, 0.0);
  EXPECT_LE(e.success_rate, 1.0);
  EXPECT_EQ(e.watch_rate, 0.0);
  EXPECT_THROW(t.evaluate(0, 1), UsageError);
  std::vector<Observation> seq(5, t.env(0).current_observation());
  const auto r = t.probe_rewards(seq);
  ASSERT_EQ(r.size(), 5u);
  for (double x : r) EXPECT_GE(x, 0.0);
}

TEST(Trainer, PpoLearnsWithDenseShaping) {
  ExperimentConfig c;
  c.env.name = "key_door";
  c.env.grid_size = 7;
  c.env.max_steps = 60;
  c.ppo.actors = 8;
  c.ppo.horizon = 64;
  c.ppo.hidden = 64;
  c.ppo.minibatch = 64;
  c.ppo.lr = 1e-3;
  c.ppo.gamma = 0.99;
  c.reward.beta = 0.0;
  c.sg.n = 8;
  c.sg.hidden = 16;
  c.sm.mode = "off";
  c.run.seed = 1;
  Trainer<double> t(c);
  t.set_potential(keydoor_potential);
  std::vector<double> returns;
  for (int k = 0; k < 50; ++k) returns.push_back(t.iterate().mean_return);
  double first = 0, last = 0;
  for (int k = 0; k < 10; ++k) {
    first += returns[k] / 10;
    last += returns[40 + k] / 10;
  }
  EXPECT_GT(last, first);
}

TEST(Harness, TrainWritesMetricsAndCheckpoints) {
  namespace fs = std::filesystem;
  auto c = tiny();
  c.run.checkpoint_interval = 1;
  c.run.out_dir = (fs::temp_directory_path() / "smlab_trainer_test").string();
  fs::remove_all(c.run.out_dir);
  TrainOptions opt;
  opt.quiet = true;
  const auto s = train(c, opt);
  EXPECT_EQ(s.global_step, 128u);
  EXPECT_EQ(s.iterations, 2u);
  EXPECT_TRUE(fs::exists(fs::path(c.run.out_dir) / "checkpoint.json"));
  std::ifstream m(fs::path(c.run.out_dir) / "metrics.jsonl");
  std::string line;
  int records = 0;
  while (std::getline(m, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* k : {"mean_return", "L_SG", "L_M", "L_W", "r_std", "r_i_mean", "watch_rate", "entropy"})
      EXPECT_TRUE(j.contains(k)) << k;
    ++records;
  }
  EXPECT_EQ(records, 2);
  const auto cached = cached_run(c);
  ASSERT_TRUE(cached);
  EXPECT_EQ(cached->global_step, 128u);

  // Resume from the final checkpoint with a larger budget appends records.
  auto more = c;
  more.run.total_steps = 192;
  opt.resume = s.final_checkpoint;
  const auto s2 = train(more, opt);
  EXPECT_EQ(s2.global_step, 192u);
  std::ifstream m2(fs::path(c.run.out_dir) / "metrics.jsonl");
  records = 0;
  std::uint64_t prev = 0;
  while (std::getline(m2, line)) {
    const auto step = nlohmann::json::parse(line).at("global_step").get<std::uint64_t>();
    EXPECT_GT(step, prev);
    prev = step;
    ++records;
  }
  EXPECT_EQ(records, 3);
  fs::remove_all(c.run.out_dir);
}

TEST(Harness, QuartilesAndVariants) {
  const auto q = quartiles({4, 1, 3, 2, 5});
  EXPECT_EQ(q.median, 3.0);
  EXPECT_EQ(q.q1, 2.0);
  EXPECT_EQ(q.q3, 4.0);
  EXPECT_EQ(quartiles({1, 2}).median, 1.5);
  ExperimentConfig c;
  const auto v = ablation_variants(c, {"full", "no_w"}, {"32-4"});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[2].n_slots, 32);
  EXPECT_EQ(v[2].slot_dim, 4);
  EXPECT_THROW(parse_nd("32x4"), ConfigError);
  EXPECT_THROW(ablation_variants(c, {"half"}, {}), ConfigError);
}

TEST(Harness, MnirMapCoversFloorCells) {
  auto c = tiny("key_door");
  Trainer<double> t(c);
  const auto ck = t.to_checkpoint();
  const auto t2 = trainer_from_checkpoint(ck);
  const auto cells = mnir_map(t2, 1);
  auto env = make_env(c.env_config());
  env->reset(1);
  EXPECT_EQ(cells.size(), env->floor_cells().size());
  int keys = 0;
  for (const auto& m : cells) keys += m.kind == "key";
  EXPECT_EQ(keys, 1);
  const auto csv = mnir_csv(cells);
  EXPECT_EQ(csv.rfind("cell,x,y,mnir,kind,r_i\n", 0), 0u);
  auto wrong = c;
  wrong.env.name = "noisy_tv";
  EXPECT_THROW(trainer_from_checkpoint(ck, &wrong), ConfigError);
  const auto rp = repeated_surprise_probe(t2, 5, 1);
  EXPECT_EQ(rp.probes, 5);
  EXPECT_EQ(rp.first.size(), 5u);
}
