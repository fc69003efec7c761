#pragma once

// Surprise generators: u = SG(I) - O for RND, autoencoder and forward-dynamics
// predictors, plus the training loss L_SG = mean ||u||.

#include <cstdint>
#include <string>
#include <vector>

#include "smlab/errors.hpp"
#include "smlab/nn.hpp"

namespace smlab {

enum class SgVariant { rnd, ae, fd };

inline SgVariant parse_sg_variant(const std::string& s) {
  if (s == "rnd") return SgVariant::rnd;
  if (s == "ae") return SgVariant::ae;
  if (s == "fd") return SgVariant::fd;
  throw ConfigError("unknown sg.variant '" + s + "' (expected rnd, ae or fd)");
}

inline std::string to_string(SgVariant v) {
  switch (v) {
    case SgVariant::rnd: return "rnd";
    case SgVariant::ae: return "ae";
    case SgVariant::fd: return "fd";
  }
  return "?";
}

struct SgConfig {
  SgVariant variant = SgVariant::rnd;
  Eigen::Index obs_dim = 0;
  Eigen::Index num_actions = 0;
  // Surprise width for rnd. ae and fd predict the raw observation, so their
  // surprise width is obs_dim regardless of this value.
  Eigen::Index n = 64;
  Eigen::Index hidden = 128;
  std::uint64_t seed = 0;
};

// Row-wise Euclidean norms.
template <class T>
Eigen::Matrix<T, Eigen::Dynamic, 1> row_norms(const Matrix<T>& m) {
  return m.rowwise().norm();
}

// L_SG = mean_i ||u_i||.
template <class T>
double sg_loss(const Matrix<T>& surprises) {
  if (surprises.rows() == 0) throw UsageError("sg_loss: empty batch");
  return static_cast<double>(surprises.rowwise().norm().sum()) / static_cast<double>(surprises.rows());
}

// d(mean ||u_i||)/du. Zero rows get a zero subgradient.
template <class T>
Matrix<T> sg_loss_grad(const Matrix<T>& surprises) {
  Matrix<T> g(surprises.rows(), surprises.cols());
  const T inv_b = T(1) / T(surprises.rows());
  for (Eigen::Index i = 0; i < surprises.rows(); ++i) {
    const T norm = surprises.row(i).norm();
    if (norm > T(0))
      g.row(i) = surprises.row(i) * (inv_b / norm);
    else
      g.row(i).setZero();
  }
  return g;
}

template <class T>
class SurpriseGenerator {
 public:
  SurpriseGenerator() = default;

  explicit SurpriseGenerator(const SgConfig& cfg) : cfg_(cfg) {
    if (cfg.obs_dim <= 0) throw ConfigError("sg: obs_dim must be positive");
    if (cfg.hidden <= 0) throw ConfigError("sg.hidden must be positive");
    const Eigen::Index h = cfg.hidden;
    switch (cfg.variant) {
      case SgVariant::rnd:
        if (cfg.n <= 0) throw ConfigError("sg.n must be positive");
        predictor_ = Mlp<T>::make("sg.predictor", {cfg.obs_dim, h, h, cfg.n}, Activation::tanh);
        target_ = Mlp<T>::make("sg.target", {cfg.obs_dim, h, cfg.n}, Activation::tanh);
        target_.init(cfg.seed, streams::kTarget);
        break;
      case SgVariant::ae:
        predictor_ = Mlp<T>::make("sg.predictor", {cfg.obs_dim, h, h, cfg.obs_dim}, Activation::tanh);
        break;
      case SgVariant::fd:
        if (cfg.num_actions <= 0) throw ConfigError("sg: fd variant needs num_actions");
        predictor_ = Mlp<T>::make("sg.predictor", {cfg.obs_dim + cfg.num_actions, h, h, cfg.obs_dim},
                                  Activation::relu);
        break;
    }
    predictor_.init(cfg.seed, streams::kInit * 100 + 1);
  }

  SgVariant variant() const { return cfg_.variant; }
  const SgConfig& config() const { return cfg_; }
  Eigen::Index input_dim() const { return predictor_.in_dim(); }
  Eigen::Index surprise_dim() const { return predictor_.out_dim(); }

  Mlp<T>& predictor() { return predictor_; }
  const Mlp<T>& predictor() const { return predictor_; }
  // Frozen random network of the rnd variant (empty for ae/fd).
  Mlp<T>& target_net() { return target_; }
  const Mlp<T>& target_net() const { return target_; }

  std::vector<Param<T>*> trainable_params() { return predictor_.params(); }

  std::uint64_t target_fingerprint() const { return fingerprint<T>(target_.params()); }

  // I_t: s_t for rnd/ae; [s_{t-1}, onehot(a_t)] for fd.
  RowVector<T> make_input(const RowVector<T>& prev_obs, int action, const RowVector<T>& obs) const {
    check_obs(obs);
    if (cfg_.variant != SgVariant::fd) return obs;
    check_obs(prev_obs);
    if (action < 0 || action >= cfg_.num_actions) throw UsageError("sg: action out of range");
    RowVector<T> in = RowVector<T>::Zero(cfg_.obs_dim + cfg_.num_actions);
    in.head(cfg_.obs_dim) = prev_obs;
    in(cfg_.obs_dim + action) = T(1);
    return in;
  }

  // O_t: f_R(s_t) for rnd; s_t itself for ae and fd.
  Matrix<T> make_target(const Matrix<T>& obs) const {
    if (obs.cols() != cfg_.obs_dim) throw UsageError("sg: observation width mismatch");
    if (cfg_.variant == SgVariant::rnd) return target_.predict(obs);
    return obs;
  }

  // u = SG(I) - O, one row per sample. O is data: no gradient reaches the target net.
  Matrix<T> compute_surprise(const Matrix<T>& inputs, const Matrix<T>& targets) const {
    check_targets(inputs, targets);
    Matrix<T> u = predictor_.predict(inputs) - targets;
    require_finite(u, "surprise vector");
    return u;
  }

  struct LossResult {
    double loss = 0.0;
    Matrix<T> surprises;
  };

  // Forward + backward of L_SG into the predictor's grads.
  LossResult loss_and_backward(const Matrix<T>& inputs, const Matrix<T>& targets) {
    check_targets(inputs, targets);
    MlpCache<T> cache;
    LossResult r;
    r.surprises = predictor_.forward(inputs, cache) - targets;
    require_finite(r.surprises, "surprise vector");
    r.loss = sg_loss(r.surprises);
    predictor_.backward(cache, sg_loss_grad(r.surprises));
    return r;
  }

 private:
  void check_obs(const RowVector<T>& obs) const {
    if (obs.size() != cfg_.obs_dim) throw UsageError("sg: observation width mismatch");
  }
  void check_targets(const Matrix<T>& inputs, const Matrix<T>& targets) const {
    if (inputs.rows() != targets.rows() || targets.cols() != surprise_dim()) {
      throw UsageError("sg: input/target shape mismatch");
    }
  }

  SgConfig cfg_;
  Mlp<T> predictor_;
  Mlp<T> target_;
};

}  // namespace smlab
