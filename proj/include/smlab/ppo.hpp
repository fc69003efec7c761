#pragma once

// PPO machinery: shared-encoder policy/value net, GAE, and the clipped
// surrogate objective with its hand-derived gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "smlab/config.hpp"
#include "smlab/errors.hpp"
#include "smlab/nn.hpp"

namespace smlab {

template <class T>
Matrix<T> log_softmax(const Matrix<T>& logits) {
  Matrix<T> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const T mx = out.row(i).maxCoeff();
    out.row(i).array() -= mx;
    const T lse = std::log(out.row(i).array().exp().sum());
    out.row(i).array() -= lse;
  }
  return out;
}

// Encoder obs -> h -> h (tanh), linear policy head h -> |A|, linear value head h -> 1.
template <class T>
class PolicyValueNet {
 public:
  struct Output {
    Matrix<T> logits;
    Matrix<T> values;  // batch x 1
  };
  struct Cache {
    MlpCache<T> encoder, policy, value;
  };

  PolicyValueNet() = default;
  PolicyValueNet(Eigen::Index obs_dim, Eigen::Index num_actions, Eigen::Index hidden, std::uint64_t seed)
      : encoder_(Mlp<T>::make("policy.encoder", {obs_dim, hidden, hidden}, Activation::tanh, Activation::tanh)),
        policy_(Mlp<T>::make("policy.pi", {hidden, num_actions}, Activation::identity)),
        value_(Mlp<T>::make("policy.v", {hidden, 1}, Activation::identity)) {
    encoder_.init(seed, streams::kInit * 100 + 40);
    policy_.init(seed, streams::kInit * 100 + 41);
    value_.init(seed, streams::kInit * 100 + 42);
    // Small policy logits at init keep the first policy close to uniform.
    policy_.layer(0).weight.value *= T(0.01);
  }

  Eigen::Index obs_dim() const { return encoder_.in_dim(); }
  Eigen::Index num_actions() const { return policy_.out_dim(); }

  Output predict(const Matrix<T>& obs) const {
    const Matrix<T> h = encoder_.predict(obs);
    return {policy_.predict(h), value_.predict(h)};
  }

  Output forward(const Matrix<T>& obs, Cache& cache) const {
    const Matrix<T> h = encoder_.forward(obs, cache.encoder);
    return {policy_.forward(h, cache.policy), value_.forward(h, cache.value)};
  }

  void backward(const Cache& cache, const Matrix<T>& d_logits, const Matrix<T>& d_values) {
    Matrix<T> d_h = policy_.backward(cache.policy, d_logits);
    d_h += value_.backward(cache.value, d_values);
    encoder_.backward(cache.encoder, d_h);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out = encoder_.params();
    for (auto* p : policy_.params()) out.push_back(p);
    for (auto* p : value_.params()) out.push_back(p);
    return out;
  }

  Mlp<T>& encoder() { return encoder_; }
  Mlp<T>& policy_head() { return policy_; }
  Mlp<T>& value_head() { return value_; }

 private:
  Mlp<T> encoder_, policy_, value_;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t
// A_t     = delta_t + gamma lambda (1 - done_t) A_{t+1}
// V_{T} is the bootstrap value; returns = A + V.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const char> dones, double bootstrap_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw UsageError("compute_gae: length mismatch");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    r.advantages[k] = next_adv;
    r.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return r;
}

// mean_i min(ratio_i A_i, clip(ratio_i, 1 - eps, 1 + eps) A_i)
inline double clipped_surrogate(std::span<const double> ratio, std::span<const double> adv, double clip_eps) {
  double s = 0.0;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    const double clipped = std::clamp(ratio[i], 1.0 - clip_eps, 1.0 + clip_eps);
    s += std::min(ratio[i] * adv[i], clipped * adv[i]);
  }
  return s / static_cast<double>(ratio.size());
}

struct PpoLossReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

struct PpoMinibatch {
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Evaluates policy_loss + value_coef * value_loss - entropy_coef * entropy
// and, when `backprop` is set, accumulates its gradient into the net.
template <class T>
PpoLossReport ppo_loss(PolicyValueNet<T>& net, const Matrix<T>& obs, const PpoMinibatch& mb,
                       const PpoConfig& cfg, bool backprop = true) {
  const Eigen::Index bsz = obs.rows();
  if (static_cast<Eigen::Index>(mb.actions.size()) != bsz) throw UsageError("ppo_loss: batch size mismatch");
  typename PolicyValueNet<T>::Cache cache;
  const auto out = net.forward(obs, cache);
  const Matrix<T> logp = log_softmax(out.logits);
  const Eigen::Index na = logp.cols();

  std::vector<double> adv = mb.advantages;
  if (cfg.normalize_advantages && bsz > 1) {
    double mean = 0.0, var = 0.0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(bsz);
    for (double a : adv) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(bsz));
    for (double& a : adv) a = (a - mean) / (sd + 1e-8);
  }

  PpoLossReport rep;
  Matrix<T> d_logits = Matrix<T>::Zero(bsz, na);
  Matrix<T> d_values(bsz, 1);
  const double inv_b = 1.0 / static_cast<double>(bsz);
  for (Eigen::Index i = 0; i < bsz; ++i) {
    const int a = mb.actions[i];
    const double lp = static_cast<double>(logp(i, a));
    const double ratio = std::exp(lp - mb.old_log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double s1 = ratio * adv[i];
    const double s2 = clipped * adv[i];
    rep.policy_loss -= std::min(s1, s2) * inv_b;
    rep.approx_kl += (mb.old_log_probs[i] - lp) * inv_b;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) rep.clip_fraction += inv_b;

    double ent = 0.0;
    for (Eigen::Index k = 0; k < na; ++k) {
      const double l = static_cast<double>(logp(i, k));
      ent -= std::exp(l) * l;
    }
    rep.entropy += ent * inv_b;
    const double v = static_cast<double>(out.values(i, 0));
    rep.value_loss += (v - mb.returns[i]) * (v - mb.returns[i]) * inv_b;

    // d(-min(s1, s2))/dlogp_a is -A ratio on the unclipped branch, 0 when clipped.
    const double d_lp = s1 <= s2 ? -adv[i] * ratio * inv_b : 0.0;
    for (Eigen::Index k = 0; k < na; ++k) {
      const double p = std::exp(static_cast<double>(logp(i, k)));
      const double l = static_cast<double>(logp(i, k));
      double g = d_lp * ((k == a ? 1.0 : 0.0) - p);
      // dH/dz_k = -p_k (log p_k + H); the loss carries -entropy_coef * H.
      g += cfg.entropy_coef * inv_b * p * (l + ent);
      d_logits(i, k) = T(g);
    }
    d_values(i, 0) = T(cfg.value_coef * 2.0 * (v - mb.returns[i]) * inv_b);
  }
  if (!std::isfinite(rep.policy_loss) || !std::isfinite(rep.value_loss)) {
    throw NumericError("non-finite PPO loss");
  }
  if (backprop) net.backward(cache, d_logits, d_values);
  return rep;
}

inline double ppo_total_loss(const PpoLossReport& r, const PpoConfig& cfg) {
  return r.policy_loss + cfg.value_coef * r.value_loss - cfg.entropy_coef * r.entropy;
}

}  // namespace smlab
