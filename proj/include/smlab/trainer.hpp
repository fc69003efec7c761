#pragma once

// Rollout collection and the joint SG + SM + PPO update over B actors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "smlab/checkpoint.hpp"
#include "smlab/config.hpp"
#include "smlab/env.hpp"
#include "smlab/errors.hpp"
#include "smlab/nn.hpp"
#include "smlab/ppo.hpp"
#include "smlab/reward.hpp"
#include "smlab/rng.hpp"
#include "smlab/surprise_generator.hpp"
#include "smlab/surprise_memory.hpp"

namespace smlab {

// Row b * horizon + t holds actor b's step t.
template <class T>
struct RolloutBuffer {
  Eigen::Index actors = 0;
  Eigen::Index horizon = 0;
  Matrix<T> obs;
  Matrix<T> sg_inputs;
  Matrix<T> sg_targets;
  Matrix<T> surprises;  // as computed at rollout time; SM training replays these
  std::vector<int> actions;
  std::vector<double> log_probs, values, r_ext, r_i_raw, r_i_norm, rewards;
  std::vector<char> dones, watched;
  std::vector<ReplayItem> contexts;  // query = own row; context rows precede it
  std::vector<double> bootstrap_values;

  Eigen::Index size() const { return actors * horizon; }
  Eigen::Index index(Eigen::Index b, Eigen::Index t) const { return b * horizon + t; }

  void allocate(Eigen::Index b, Eigen::Index t, Eigen::Index obs_dim, Eigen::Index in_dim, Eigen::Index n) {
    actors = b;
    horizon = t;
    const Eigen::Index rows = b * t;
    obs.resize(rows, obs_dim);
    sg_inputs.resize(rows, in_dim);
    sg_targets.resize(rows, n);
    surprises.resize(rows, n);
    const auto sz = static_cast<std::size_t>(rows);
    actions.assign(sz, 0);
    for (auto* v : {&log_probs, &values, &r_ext, &r_i_raw, &r_i_norm, &rewards}) v->assign(sz, 0.0);
    dones.assign(sz, 0);
    watched.assign(sz, 0);
    contexts.assign(sz, ReplayItem{});
    bootstrap_values.assign(static_cast<std::size_t>(b), 0.0);
  }
};

struct JointLosses {
  double l_sg = 0.0;
  double l_m = 0.0;
  double l_w = 0.0;
};

// L_SG on a minibatch of (I, O) plus L_M and L_W on replay items over the pool
// of rollout-recorded surprises. With `backprop`, gradients accumulate into the
// SG predictor (from L_SG only) and into Q, V, W.
template <class T>
JointLosses joint_losses(SurpriseGenerator<T>& sg, SurpriseMemory<T>& sm, const Matrix<T>& inputs,
                         const Matrix<T>& targets, const Matrix<T>& pool, const std::vector<ReplayItem>& items,
                         bool backprop) {
  JointLosses out;
  if (backprop) {
    out.l_sg = sg.loss_and_backward(inputs, targets).loss;
  } else {
    out.l_sg = sg_loss(sg.compute_surprise(inputs, targets));
  }
  if (sm.mode() != SmMode::off) {
    const auto l = backprop ? sm.losses_and_backward(pool, items) : sm.losses(pool, items);
    out.l_m = l.l_m;
    out.l_w = l.l_w;
  }
  return out;
}

struct UpdateReport {
  double l_sg = 0.0;
  double l_m = 0.0;
  double l_w = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
};

struct IterationReport {
  std::uint64_t global_step = 0;
  std::uint64_t iteration = 0;
  double mean_return = 0.0;  // last 100 finished episodes
  std::uint64_t episodes = 0;
  UpdateReport losses;
  double r_i_mean = 0.0;
  double r_i_norm_mean = 0.0;
  double r_std = 0.0;
  double watch_rate = 0.0;
  double wall_time_s = 0.0;
};

template <class T>
class Trainer {
 public:
  // Optional potential-based shaping added to r_ext: phi(after) - phi(before).
  using Potential = std::function<double(const GridEnv&)>;

  explicit Trainer(const ExperimentConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const EnvConfig ec = cfg_.env_config();
    for (int b = 0; b < cfg_.ppo.actors; ++b) envs_.push_back(make_env(ec));
    obs_dim_ = envs_.front()->obs_dim();
    num_actions_ = envs_.front()->num_actions();

    SgConfig sgc;
    sgc.variant = cfg_.sg_variant();
    sgc.obs_dim = obs_dim_;
    sgc.num_actions = num_actions_;
    sgc.n = cfg_.sg.n;
    sgc.hidden = cfg_.sg.hidden;
    sgc.seed = cfg_.run.seed;
    sg_ = SurpriseGenerator<T>(sgc);

    SmConfig smc;
    smc.n = sg_.surprise_dim();
    smc.n_slots = cfg_.sm.n_slots;
    smc.slot_dim = cfg_.sm.slot_dim;
    smc.hidden = cfg_.sm.hidden;
    smc.mode = cfg_.sm_mode();
    smc.w_grad_to_qv = cfg_.sm.w_grad_to_qv;
    smc.normalize_attention = cfg_.sm.normalize_attention;
    smc.seed = cfg_.run.seed;
    sm_ = SurpriseMemory<T>(smc);

    policy_ = PolicyValueNet<T>(obs_dim_, num_actions_, cfg_.ppo.hidden, cfg_.run.seed);
    normalizer_ = RewardNormalizer(cfg_.reward, static_cast<std::size_t>(cfg_.ppo.actors));
    for (int b = 0; b < cfg_.ppo.actors; ++b) memories_.push_back(sm_.make_memory());
    start_episodes(0);
  }

  const ExperimentConfig& config() const { return cfg_; }
  SurpriseGenerator<T>& sg() { return sg_; }
  SurpriseMemory<T>& sm() { return sm_; }
  PolicyValueNet<T>& policy() { return policy_; }
  const RewardNormalizer& normalizer() const { return normalizer_; }
  GridEnv& env(int b) { return *envs_[static_cast<std::size_t>(b)]; }
  int obs_dim() const { return obs_dim_; }
  int num_actions() const { return num_actions_; }
  std::uint64_t global_step() const { return global_step_; }
  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t episodes() const { return episodes_; }
  void set_potential(Potential p) { potential_ = std::move(p); }

  double mean_recent_return() const {
    if (recent_returns_.empty()) return 0.0;
    return std::accumulate(recent_returns_.begin(), recent_returns_.end(), 0.0) /
           static_cast<double>(recent_returns_.size());
  }

  bool finished() const { return global_step_ >= cfg_.run.total_steps; }

  RolloutBuffer<T> collect_rollout() {
    const int B = cfg_.ppo.actors;
    const int H = cfg_.ppo.horizon;
    const Eigen::Index n = sg_.surprise_dim();
    RolloutBuffer<T> buf;
    buf.allocate(B, H, obs_dim_, sg_.input_dim(), n);
    RngStream rng(cfg_.run.seed, streams::kRollout * 1000000ULL + iteration_);
    const bool memory_on = uses_memory(sm_.mode());
    const bool is_noisy_tv = cfg_.env_config().kind == EnvKind::noisy_tv;

    Matrix<T> next_obs(B, obs_dim_);
    Matrix<T> inputs(B, sg_.input_dim());
    std::vector<int> acts(static_cast<std::size_t>(B));
    std::vector<StepResult> results(static_cast<std::size_t>(B));
    std::vector<double> shaping(static_cast<std::size_t>(B), 0.0);

    for (int t = 0; t < H; ++t) {
      const auto out = policy_.predict(current_obs_);
      const Matrix<T> logp = log_softmax(out.logits);
      for (int b = 0; b < B; ++b) {
        acts[b] = sample(logp.row(b), rng);
        const double phi0 = potential_ ? potential_(*envs_[b]) : 0.0;
        results[b] = envs_[b]->step(acts[b]);
        shaping[b] = potential_ ? potential_(*envs_[b]) - phi0 : 0.0;
        next_obs.row(b) = results[b].obs.template cast<T>();
        inputs.row(b) = sg_.make_input(current_obs_.row(b), acts[b], next_obs.row(b));
      }
      const Matrix<T> targets = sg_.make_target(next_obs);
      const Matrix<T> u = sg_.compute_surprise(inputs, targets);
      const std::vector<double> r_i = sm_.intrinsic_rewards(memories_, u);

      for (int b = 0; b < B; ++b) {
        const Eigen::Index i = buf.index(b, t);
        const auto& res = results[b];
        buf.obs.row(i) = current_obs_.row(b);
        buf.sg_inputs.row(i) = inputs.row(b);
        buf.sg_targets.row(i) = targets.row(b);
        buf.surprises.row(i) = u.row(b);
        buf.actions[i] = acts[b];
        buf.log_probs[i] = static_cast<double>(logp(b, acts[b]));
        buf.values[i] = static_cast<double>(out.values(b, 0));
        buf.r_ext[i] = res.reward + shaping[b];
        buf.r_i_raw[i] = r_i[b];
        buf.dones[i] = res.done ? 1 : 0;
        buf.watched[i] = res.info.watched ? 1 : 0;
        const int begin = std::max(ep_start_[b], t - cfg_.sm.n_slots);
        buf.contexts[i] = ReplayItem{i, buf.index(b, begin), i};

        if (memory_on) sm_.write(memories_[b], u.row(b));
        buf.r_i_norm[i] = normalizer_.normalize(r_i[b], static_cast<std::size_t>(b), res.done);
        buf.rewards[i] = combine(buf.r_ext[i], buf.r_i_norm[i], cfg_.reward.beta);
        ep_return_[b] += buf.r_ext[i];
        if (is_noisy_tv) {
          ++action_count_;
          if (res.info.watched) ++watch_count_;
        }

        if (res.done) {
          recent_returns_.push_back(ep_return_[b]);
          if (recent_returns_.size() > 100) recent_returns_.pop_front();
          ++episodes_;
          ep_return_[b] = 0.0;
          memories_[b].reset();
          ep_start_[b] = t + 1;
          current_obs_.row(b) = envs_[b]->reset(episode_rngs_[b].next_u64()).template cast<T>();
        } else {
          current_obs_.row(b) = next_obs.row(b);
        }
      }
      global_step_ += static_cast<std::uint64_t>(B);
    }
    const auto boot = policy_.predict(current_obs_);
    for (int b = 0; b < B; ++b) buf.bootstrap_values[b] = static_cast<double>(boot.values(b, 0));
    // Contexts are per segment: the next rollout starts with empty replay context.
    std::fill(ep_start_.begin(), ep_start_.end(), 0);
    return buf;
  }

  UpdateReport update(const RolloutBuffer<T>& buf) {
    const Eigen::Index N = buf.size();
    const int H = static_cast<int>(buf.horizon);
    std::vector<double> adv(static_cast<std::size_t>(N)), ret(static_cast<std::size_t>(N));
    for (Eigen::Index b = 0; b < buf.actors; ++b) {
      const std::size_t off = static_cast<std::size_t>(b * H);
      const auto g = compute_gae(std::span<const double>(buf.rewards).subspan(off, H),
                                 std::span<const double>(buf.values).subspan(off, H),
                                 std::span<const char>(buf.dones).subspan(off, H),
                                 buf.bootstrap_values[b], cfg_.ppo.gamma, cfg_.ppo.gae_lambda);
      std::copy(g.advantages.begin(), g.advantages.end(), adv.begin() + static_cast<std::ptrdiff_t>(off));
      std::copy(g.returns.begin(), g.returns.end(), ret.begin() + static_cast<std::ptrdiff_t>(off));
    }

    RngStream shuffle(cfg_.run.seed, streams::kShuffle * 1000000ULL + iteration_);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    std::vector<Param<T>*> sgsm = sg_.trainable_params();
    for (auto* p : sm_.trainable_params()) sgsm.push_back(p);
    std::vector<Param<T>*> pv = policy_.params();

    UpdateReport rep;
    int batches = 0;
    const Eigen::Index mb = cfg_.ppo.minibatch;
    for (int epoch = 0; epoch < cfg_.ppo.epochs; ++epoch) {
      for (Eigen::Index k = N - 1; k > 0; --k) {
        std::swap(order[static_cast<std::size_t>(k)], order[shuffle.below(static_cast<std::uint64_t>(k + 1))]);
      }
      for (Eigen::Index start = 0; start < N; start += mb) {
        const Eigen::Index len = std::min(mb, N - start);
        Matrix<T> in(len, buf.sg_inputs.cols()), tg(len, buf.sg_targets.cols()), ob(len, buf.obs.cols());
        std::vector<ReplayItem> items(static_cast<std::size_t>(len));
        PpoMinibatch pm;
        for (Eigen::Index j = 0; j < len; ++j) {
          const Eigen::Index i = order[static_cast<std::size_t>(start + j)];
          in.row(j) = buf.sg_inputs.row(i);
          tg.row(j) = buf.sg_targets.row(i);
          ob.row(j) = buf.obs.row(i);
          items[j] = buf.contexts[i];
          pm.actions.push_back(buf.actions[i]);
          pm.old_log_probs.push_back(buf.log_probs[i]);
          pm.advantages.push_back(adv[i]);
          pm.returns.push_back(ret[i]);
        }
        const auto jl = joint_losses(sg_, sm_, in, tg, buf.surprises, items, true);
        rep.l_sg += jl.l_sg;
        rep.l_m += jl.l_m;
        rep.l_w += jl.l_w;
        adam_step<T>(sgsm, cfg_.sg.lr);

        const auto pr = ppo_loss(policy_, ob, pm, cfg_.ppo);
        adam_step<T>(pv, cfg_.ppo.lr);
        rep.policy += pr.policy_loss;
        rep.value += pr.value_loss;
        rep.entropy += pr.entropy;
        rep.approx_kl += pr.approx_kl;
        ++batches;
      }
    }
    const double inv = 1.0 / std::max(batches, 1);
    for (double* v : {&rep.l_sg, &rep.l_m, &rep.l_w, &rep.policy, &rep.value, &rep.entropy, &rep.approx_kl}) *v *= inv;
    return rep;
  }

  IterationReport iterate() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t watch0 = watch_count_, count0 = action_count_;
    const RolloutBuffer<T> buf = collect_rollout();
    IterationReport r;
    r.losses = update(buf);
    ++iteration_;
    r.global_step = global_step_;
    r.iteration = iteration_;
    r.mean_return = mean_recent_return();
    r.episodes = episodes_;
    r.r_i_mean = std::accumulate(buf.r_i_raw.begin(), buf.r_i_raw.end(), 0.0) / static_cast<double>(buf.size());
    r.r_i_norm_mean = std::accumulate(buf.r_i_norm.begin(), buf.r_i_norm.end(), 0.0) / static_cast<double>(buf.size());
    r.r_std = normalizer_.r_std();
    const std::uint64_t dc = action_count_ - count0;
    r.watch_rate = dc ? static_cast<double>(watch_count_ - watch0) / static_cast<double>(dc) : 0.0;
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  // Greedy policy over `episodes` fresh episodes.
  struct EvalResult {
    double mean_return = 0.0;
    double watch_rate = 0.0;
    double success_rate = 0.0;
  };
  EvalResult evaluate(int episodes, std::uint64_t eval_seed) const {
    if (episodes <= 0) throw UsageError("evaluate: episodes must be positive");
    auto env = make_env(cfg_.env_config());
    RngStream seeds(eval_seed, streams::kProbe);
    EvalResult res;
    std::uint64_t watches = 0, steps = 0;
    for (int e = 0; e < episodes; ++e) {
      Observation o = env->reset(seeds.next_u64());
      double total = 0.0;
      while (true) {
        Matrix<T> row = o.template cast<T>();
        const auto out = policy_.predict(row);
        Eigen::Index a = 0;
        out.logits.row(0).maxCoeff(&a);
        const auto st = env->step(static_cast<int>(a));
        ++steps;
        if (st.info.watched) ++watches;
        total += st.reward;
        if (st.done) {
          if (st.info.reached_goal) res.success_rate += 1.0;
          break;
        }
        o = st.obs;
      }
      res.mean_return += total;
    }
    res.mean_return /= episodes;
    res.success_rate /= episodes;
    res.watch_rate = steps ? static_cast<double>(watches) / static_cast<double>(steps) : 0.0;
    return res;
  }

  // Intrinsic rewards along a synthetic observation sequence, run through a
  // fresh episodic memory exactly as during a rollout. For the fd variant the
  // transition into each observation is taken to be a forward move from the
  // previous one.
  std::vector<double> probe_rewards(const std::vector<Observation>& seq, int action = 2) const {
    auto mem = sm_.make_memory();
    std::vector<double> out;
    out.reserve(seq.size());
    RowVector<T> prev;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      const RowVector<T> o = seq[k].template cast<T>();
      if (k == 0) prev = o;
      Matrix<T> in = sg_.make_input(prev, action, o);
      Matrix<T> tg = sg_.make_target(Matrix<T>(o));
      const RowVector<T> u = sg_.compute_surprise(in, tg).row(0);
      out.push_back(sm_.intrinsic_reward(mem, u).r_i);
      if (uses_memory(sm_.mode())) sm_.write(mem, u);
      prev = o;
    }
    return out;
  }

  Checkpoint to_checkpoint() {
    Checkpoint c;
    c.meta["config"] = cfg_.to_text();
    c.meta["precision"] = cfg_.run.precision;
    c.meta["env"] = cfg_.env.name;
    c.meta["obs_dim"] = obs_dim_;
    c.meta["num_actions"] = num_actions_;
    c.meta["sg_variant"] = cfg_.sg.variant;
    c.meta["sg_target_seed"] = cfg_.run.seed;
    c.meta["sm_mode"] = cfg_.sm.mode;
    c.meta["global_step"] = global_step_;
    c.meta["iteration"] = iteration_;
    c.meta["episodes"] = episodes_;
    c.meta["watch_count"] = watch_count_;
    c.meta["action_count"] = action_count_;
    c.meta["recent_returns"] = std::vector<double>(recent_returns_.begin(), recent_returns_.end());
    const auto& rs = normalizer_.running_std();
    c.meta["r_std_count"] = rs.count();
    c.meta["r_std_mean"] = rs.mean();
    c.meta["r_std_m2"] = rs.m2();
    c.put_all(policy_.params());
    c.put_all(sg_.trainable_params());
    c.put_all(sg_.target_net().params());
    c.put_all(sm_.all_params());
    return c;
  }

  // Restores weights, optimizer state and counters. Episodes restart fresh:
  // env and episodic-memory state are not part of a checkpoint.
  void load_checkpoint(const Checkpoint& c) {
    check_compatible(c);
    c.get_all(policy_.params());
    c.get_all(sg_.trainable_params());
    c.get_all(sg_.target_net().params());
    c.get_all(sm_.all_params());
    global_step_ = c.meta.at("global_step").get<std::uint64_t>();
    iteration_ = c.meta.at("iteration").get<std::uint64_t>();
    episodes_ = c.meta.at("episodes").get<std::uint64_t>();
    watch_count_ = c.meta.value("watch_count", std::uint64_t{0});
    action_count_ = c.meta.value("action_count", std::uint64_t{0});
    const auto rr = c.meta.at("recent_returns").get<std::vector<double>>();
    recent_returns_.assign(rr.begin(), rr.end());
    normalizer_.running_std().restore(c.meta.at("r_std_count").get<std::uint64_t>(),
                                      c.meta.at("r_std_mean").get<double>(), c.meta.at("r_std_m2").get<double>());
    std::fill(normalizer_.mutable_returns().begin(), normalizer_.mutable_returns().end(), 0.0);
    for (auto& m : memories_) m.reset();
    start_episodes(iteration_);
  }

  void check_compatible(const Checkpoint& c) const {
    auto mismatch = [](const std::string& what) { throw ConfigError("checkpoint does not match config: " + what); };
    if (c.meta.value("env", "") != cfg_.env.name) mismatch("env.name");
    if (c.meta.value("obs_dim", -1) != obs_dim_) mismatch("observation size");
    if (c.meta.value("sg_variant", "") != cfg_.sg.variant) mismatch("sg.variant");
    if (c.meta.value("sm_mode", "") != cfg_.sm.mode) mismatch("sm.mode");
  }

 private:
  template <class Row>
  int sample(const Row& logp, RngStream& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    const int na = static_cast<int>(logp.size());
    for (int a = 0; a < na; ++a) {
      acc += std::exp(static_cast<double>(logp(a)));
      if (u < acc) return a;
    }
    return na - 1;
  }

  void start_episodes(std::uint64_t from_iteration) {
    const int B = cfg_.ppo.actors;
    episode_rngs_.clear();
    current_obs_.resize(B, obs_dim_);
    for (int b = 0; b < B; ++b) {
      episode_rngs_.emplace_back(cfg_.run.seed, streams::kEnv * 1000000ULL + static_cast<std::uint64_t>(b) +
                                                    1000ULL * from_iteration);
      current_obs_.row(b) = envs_[b]->reset(episode_rngs_.back().next_u64()).template cast<T>();
    }
    ep_start_.assign(static_cast<std::size_t>(B), 0);
    ep_return_.assign(static_cast<std::size_t>(B), 0.0);
  }

  ExperimentConfig cfg_;
  std::vector<std::unique_ptr<GridEnv>> envs_;
  int obs_dim_ = 0;
  int num_actions_ = 0;
  SurpriseGenerator<T> sg_;
  SurpriseMemory<T> sm_;
  PolicyValueNet<T> policy_;
  RewardNormalizer normalizer_;
  std::vector<EpisodicMemory<T>> memories_;
  std::vector<RngStream> episode_rngs_;
  Matrix<T> current_obs_;
  std::vector<int> ep_start_;
  std::vector<double> ep_return_;
  std::deque<double> recent_returns_;
  std::uint64_t global_step_ = 0;
  std::uint64_t iteration_ = 0;
  std::uint64_t episodes_ = 0;
  std::uint64_t watch_count_ = 0;
  std::uint64_t action_count_ = 0;
  Potential potential_;
};

}  // namespace smlab
