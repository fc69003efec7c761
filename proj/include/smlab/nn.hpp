#pragma once

// Dense MLP numerics: parameters, forward/backward with explicit caches,
// Adam, and a central-difference gradient oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "smlab/errors.hpp"
#include "smlab/rng.hpp"

namespace smlab {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic, Eigen::RowMajor>;

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError("non-finite values in " + what);
}

template <class T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  Matrix<T> adam_m;
  Matrix<T> adam_v;
  std::uint64_t step_count = 0;
  // Bumped on every in-place value change; caches record it to detect staleness.
  std::uint64_t version = 0;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Matrix<T>::Zero(rows, cols)),
        grad(Matrix<T>::Zero(rows, cols)),
        adam_m(Matrix<T>::Zero(rows, cols)),
        adam_v(Matrix<T>::Zero(rows, cols)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  void zero_grad() { grad.setZero(); }
  void touch() { ++version; }
};

enum class Activation { tanh, relu, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

template <class T>
void apply_activation(Activation a, Matrix<T>& m) {
  switch (a) {
    case Activation::tanh: m = m.array().tanh().matrix(); break;
    case Activation::relu: m = m.cwiseMax(T(0)); break;
    case Activation::identity: break;
  }
}

// dL/dpre given dL/dpost and the post-activation values.
template <class T>
void activation_backward(Activation a, const Matrix<T>& post, Matrix<T>& grad) {
  switch (a) {
    case Activation::tanh:
      grad.array() *= (T(1) - post.array().square());
      break;
    case Activation::relu:
      grad.array() *= (post.array() > T(0)).template cast<T>();
      break;
    case Activation::identity: break;
  }
}

struct LayerSpec {
  Eigen::Index in = 0;
  Eigen::Index out = 0;
  Activation activation = Activation::identity;
  bool bias = true;
};

template <class T>
struct Layer {
  Param<T> weight;  // in x out
  Param<T> bias;    // 1 x out (zero-size when disabled)
  Activation activation = Activation::identity;
  bool has_bias = true;
};

template <class T>
class Mlp;

template <class T>
struct MlpCache {
  const Mlp<T>* owner = nullptr;
  std::vector<std::uint64_t> versions;
  std::vector<Matrix<T>> inputs;   // input to each layer
  std::vector<Matrix<T>> outputs;  // post-activation of each layer
};

// Sequential MLP with row-major batches: y = act(x W + b) per layer.
template <class T>
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::string name, const std::vector<LayerSpec>& specs) : name_(std::move(name)) {
    if (specs.empty()) throw ConfigError("mlp '" + name_ + "' needs at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      if (s.in <= 0 || s.out <= 0) throw ConfigError("mlp '" + name_ + "': non-positive layer dim");
      if (i > 0 && specs[i - 1].out != s.in) {
        throw ConfigError("mlp '" + name_ + "': layer dims do not chain at layer " + std::to_string(i));
      }
      Layer<T> l;
      const std::string prefix = name_ + ".l" + std::to_string(i);
      l.weight = Param<T>(prefix + ".w", s.in, s.out);
      l.has_bias = s.bias;
      l.bias = Param<T>(prefix + ".b", 1, s.bias ? s.out : 0);
      l.activation = s.activation;
      layers_.push_back(std::move(l));
    }
  }

  // dims = {in, h1, ..., out}; hidden layers use `hidden`, last layer `output`.
  static Mlp make(std::string name, const std::vector<Eigen::Index>& dims, Activation hidden,
                  Activation output = Activation::identity) {
    if (dims.size() < 2) throw ConfigError("mlp '" + name + "' needs at least in/out dims");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      specs.push_back({dims[i], dims[i + 1], i + 2 == dims.size() ? output : hidden, true});
    }
    return Mlp(std::move(name), specs);
  }

  // Glorot-uniform weights, zero biases. Layer i draws from RngStream(seed, stream + i).
  void init(std::uint64_t seed, std::uint64_t stream) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      RngStream rng(seed, stream * 1000 + i);
      auto& w = layers_[i].weight;
      const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w.value(r, c) = T(rng.uniform(-limit, limit));
      w.touch();
      layers_[i].bias.value.setZero();
      layers_[i].bias.touch();
    }
  }

  const std::string& name() const { return name_; }
  std::size_t num_layers() const { return layers_.size(); }
  Eigen::Index in_dim() const { return layers_.front().weight.rows(); }
  Eigen::Index out_dim() const { return layers_.back().weight.cols(); }
  Layer<T>& layer(std::size_t i) { return layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return layers_.at(i); }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      if (l.has_bias) out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out;
    for (const auto& l : layers_) {
      out.push_back(&l.weight);
      if (l.has_bias) out.push_back(&l.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  Matrix<T> forward(const Matrix<T>& input, MlpCache<T>& cache) const {
    check_input(input);
    cache.owner = this;
    cache.versions.clear();
    cache.inputs.clear();
    cache.outputs.clear();
    Matrix<T> x = input;
    for (const auto& l : layers_) {
      cache.versions.push_back(l.weight.version + l.bias.version);
      cache.inputs.push_back(x);
      Matrix<T> h = x * l.weight.value;
      if (l.has_bias) h.rowwise() += l.bias.value.row(0);
      apply_activation(l.activation, h);
      cache.outputs.push_back(h);
      x = std::move(h);
    }
    return x;
  }

  // Inference without a cache.
  Matrix<T> predict(const Matrix<T>& input) const {
    check_input(input);
    Matrix<T> x = input;
    for (const auto& l : layers_) {
      Matrix<T> h = x * l.weight.value;
      if (l.has_bias) h.rowwise() += l.bias.value.row(0);
      apply_activation(l.activation, h);
      x = std::move(h);
    }
    return x;
  }

  // Accumulates parameter gradients; returns dL/dinput.
  Matrix<T> backward(const MlpCache<T>& cache, const Matrix<T>& output_grad) {
    if (cache.owner != this || cache.outputs.size() != layers_.size()) {
      throw UsageError("mlp '" + name_ + "': backward with a cache from a different net");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (cache.versions[i] != layers_[i].weight.version + layers_[i].bias.version) {
        throw UsageError("mlp '" + name_ + "': stale cache (parameters changed since forward)");
      }
    }
    if (output_grad.rows() != cache.outputs.back().rows() || output_grad.cols() != out_dim()) {
      throw UsageError("mlp '" + name_ + "': output_grad shape mismatch");
    }
    Matrix<T> g = output_grad;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      auto& l = layers_[k];
      activation_backward(l.activation, cache.outputs[k], g);
      l.weight.grad.noalias() += cache.inputs[k].transpose() * g;
      if (l.has_bias) l.bias.grad.row(0) += g.colwise().sum();
      Matrix<T> gx = g * l.weight.value.transpose();
      g = std::move(gx);
    }
    return g;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

 private:
  void check_input(const Matrix<T>& input) const {
    if (layers_.empty()) throw UsageError("mlp '" + name_ + "' has no layers");
    if (input.cols() != in_dim()) {
      throw ConfigError("mlp '" + name_ + "': input has " + std::to_string(input.cols()) +
                        " cols, expected " + std::to_string(in_dim()));
    }
  }

  std::string name_;
  std::vector<Layer<T>> layers_;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update over every param; grads are zeroed afterwards.
template <class T>
void adam_step(std::span<Param<T>* const> params, const AdamConfig& cfg) {
  for (auto* p : params) {
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + p->name + "'");
  }
  for (auto* p : params) {
    if (p->value.size() == 0) continue;
    ++p->step_count;
    const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
    p->adam_m = b1 * p->adam_m + (T(1) - b1) * p->grad;
    p->adam_v = b2 * p->adam_v + (T(1) - b2) * p->grad.cwiseProduct(p->grad);
    const T c1 = T(1) - T(std::pow(cfg.beta1, static_cast<double>(p->step_count)));
    const T c2 = T(1) - T(std::pow(cfg.beta2, static_cast<double>(p->step_count)));
    const T lr = T(cfg.lr);
    p->value.array() -= lr * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + T(cfg.eps));
    p->grad.setZero();
    p->touch();
  }
}

template <class T>
void adam_step(std::vector<Param<T>*> params, double lr) {
  AdamConfig cfg;
  cfg.lr = lr;
  adam_step<T>(std::span<Param<T>* const>(params), cfg);
}

// Plain gradient descent: value -= lr * grad; grads zeroed.
template <class T>
void sgd_step(std::span<Param<T>* const> params, double lr) {
  for (auto* p : params) {
    p->value -= T(lr) * p->grad;
    p->grad.setZero();
    p->touch();
  }
}

template <class T>
void zero_grads(std::span<Param<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

// Central differences (f(θ+eps e_i) - f(θ-eps e_i)) / (2 eps) for every entry.
template <class T>
std::vector<Matrix<T>> finite_diff_grad(const std::function<double()>& f,
                                        std::span<Param<T>* const> params, double eps) {
  std::vector<Matrix<T>> out;
  out.reserve(params.size());
  for (auto* p : params) {
    Matrix<T> g(p->rows(), p->cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      T& v = p->value.data()[i];
      const T saved = v;
      v = saved + T(eps);
      p->touch();
      const double fp = f();
      v = saved - T(eps);
      p->touch();
      const double fm = f();
      v = saved;
      p->touch();
      g.data()[i] = T((fp - fm) / (2.0 * eps));
    }
    out.push_back(std::move(g));
  }
  return out;
}

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient
// is ~0 from being judged on round-off noise alone.
template <class T>
double max_relative_error(const Matrix<T>& analytic, const Matrix<T>& numeric, double floor = 1e-4) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = static_cast<double>(analytic.data()[i]);
    const double n = static_cast<double>(numeric.data()[i]);
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

// FNV-1a over the raw bytes of every parameter value.
template <class T>
std::uint64_t fingerprint(const std::vector<const Param<T>*>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = static_cast<std::size_t>(p->value.size()) * sizeof(T);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace smlab
