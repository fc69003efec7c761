#pragma once

// Surprise memory: a per-episode FIFO store of projected surprises read by
// cosine content-based attention, and an autoencoder W whose reconstruction
// error of the query q = [u_e, u] is the intrinsic reward.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "smlab/errors.hpp"
#include "smlab/nn.hpp"

namespace smlab {

// Added to both norms in the cosine denominator.
inline constexpr double kAttentionEps = 1e-8;

// off: no memory at all, r_i = ||u|| (plain surprise-norm baseline).
enum class SmMode { full, no_w, no_m, off };

inline SmMode parse_sm_mode(const std::string& s) {
  if (s == "full") return SmMode::full;
  if (s == "no_w") return SmMode::no_w;
  if (s == "no_m") return SmMode::no_m;
  if (s == "off") return SmMode::off;
  throw ConfigError("unknown sm.mode '" + s + "' (expected full, no_w, no_m or off)");
}

inline std::string to_string(SmMode m) {
  switch (m) {
    case SmMode::full: return "full";
    case SmMode::no_w: return "no_w";
    case SmMode::no_m: return "no_m";
    case SmMode::off: return "off";
  }
  return "?";
}

inline bool uses_memory(SmMode m) { return m == SmMode::full || m == SmMode::no_w; }
inline bool uses_autoencoder(SmMode m) { return m == SmMode::full || m == SmMode::no_m; }

// Fixed-capacity FIFO of d-wide rows. Wiped at every episode boundary.
template <class T>
class EpisodicMemory {
 public:
  EpisodicMemory() = default;
  EpisodicMemory(Eigen::Index capacity, Eigen::Index slot_dim)
      : slots_(Matrix<T>::Zero(capacity, slot_dim)) {
    if (capacity <= 0 || slot_dim <= 0) throw ConfigError("episodic memory needs positive N and d");
  }

  Eigen::Index capacity() const { return slots_.rows(); }
  Eigen::Index slot_dim() const { return slots_.cols(); }
  Eigen::Index fill() const { return fill_; }
  bool empty() const { return fill_ == 0; }

  // Appends a row; evicts the oldest once full.
  void write(const RowVector<T>& row) {
    if (row.size() != slot_dim()) throw UsageError("episodic memory: row width mismatch");
    slots_.row(cursor_) = row;
    cursor_ = (cursor_ + 1) % capacity();
    fill_ = std::min(fill_ + 1, capacity());
  }

  void reset() {
    fill_ = 0;
    cursor_ = 0;
  }

  // Readable rows, oldest first.
  Matrix<T> rows_in_order() const {
    Matrix<T> out(fill_, slot_dim());
    const Eigen::Index start = fill_ < capacity() ? 0 : cursor_;
    for (Eigen::Index i = 0; i < fill_; ++i) out.row(i) = slots_.row((start + i) % capacity());
    return out;
  }

 private:
  Matrix<T> slots_;
  Eigen::Index fill_ = 0;
  Eigen::Index cursor_ = 0;
};

template <class T>
struct AttentionOutput {
  RowVector<T> weights;  // one per row (normalized when requested)
  RowVector<T> raw;      // cosines before optional normalization
  RowVector<T> readout;  // sum_j weights_j * rows_j
};

// w_j = (k . m_j) / ((||k|| + eps)(||m_j|| + eps)); readout = w M.
// With normalize=true the weights are divided by sum_j |w_j| + eps.
template <class T>
AttentionOutput<T> cosine_attention(const RowVector<T>& key, const Eigen::Ref<const Matrix<T>>& rows,
                                    bool normalize = false) {
  AttentionOutput<T> out;
  const Eigen::Index m = rows.rows();
  out.raw.resize(m);
  out.readout = RowVector<T>::Zero(rows.cols());
  if (m == 0) {
    out.weights.resize(0);
    return out;
  }
  const T eps = T(kAttentionEps);
  const T key_norm = key.norm() + eps;
  for (Eigen::Index j = 0; j < m; ++j) {
    out.raw(j) = key.dot(rows.row(j)) / (key_norm * (rows.row(j).norm() + eps));
  }
  out.weights = out.raw;
  if (normalize) out.weights /= (out.raw.cwiseAbs().sum() + eps);
  out.readout = out.weights * rows;
  return out;
}

// Accumulates dL/dkey and dL/drows given dL/dreadout.
template <class T>
void cosine_attention_backward(const RowVector<T>& key, const Eigen::Ref<const Matrix<T>>& rows,
                               const AttentionOutput<T>& fwd, const RowVector<T>& d_readout,
                               bool normalize, RowVector<T>& d_key, Eigen::Ref<Matrix<T>> d_rows) {
  const Eigen::Index m = rows.rows();
  if (m == 0) return;
  const T eps = T(kAttentionEps);
  // readout = weights * rows
  RowVector<T> d_w = d_readout * rows.transpose();
  d_rows.noalias() += fwd.weights.transpose() * d_readout;
  if (normalize) {
    const T s = fwd.raw.cwiseAbs().sum() + eps;
    const T cross = d_w.dot(fwd.raw);
    RowVector<T> d_raw(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const T sign = fwd.raw(j) > T(0) ? T(1) : (fwd.raw(j) < T(0) ? T(-1) : T(0));
      d_raw(j) = d_w(j) / s - sign * cross / (s * s);
    }
    d_w = d_raw;
  }
  const T kn = key.norm();
  const T a = kn + eps;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto row = rows.row(j);
    const T rn = row.norm();
    const T b = rn + eps;
    const T s = key.dot(row);
    const T g = d_w(j);
    if (g == T(0)) continue;
    d_key += g * (row / (a * b));
    if (kn > T(0)) d_key -= g * (s / (a * a * b)) * (key / kn);
    d_rows.row(j) += g * (key / (a * b));
    if (rn > T(0)) d_rows.row(j) -= g * (s / (a * b * b)) * (row / rn);
  }
}

struct SmConfig {
  Eigen::Index n = 64;         // surprise width
  Eigen::Index n_slots = 128;  // N
  Eigen::Index slot_dim = 16;  // d
  Eigen::Index hidden = 32;    // W hidden width
  SmMode mode = SmMode::full;
  bool w_grad_to_qv = true;          // L_W reaches Q, V through W's input
  bool normalize_attention = false;  // literal raw cosines by default
  std::uint64_t seed = 0;
};

// One element of a training batch: a query surprise plus its episodic context,
// both given as rows of a shared pool of recorded surprises. Context rows
// [ctx_begin, ctx_end) are the preceding same-episode surprises, oldest first.
struct ReplayItem {
  Eigen::Index query = 0;
  Eigen::Index ctx_begin = 0;
  Eigen::Index ctx_end = 0;
};

template <class T>
class SurpriseMemory {
 public:
  struct Reward {
    double r_i = 0.0;
    RowVector<T> q;
    RowVector<T> q_tilde;
  };

  struct Losses {
    double l_m = 0.0;
    double l_w = 0.0;
    std::vector<double> rewards;  // per item, same formula as rollout-time r_i
  };

  SurpriseMemory() = default;

  explicit SurpriseMemory(const SmConfig& cfg) : cfg_(cfg) {
    if (cfg.n <= 0 || cfg.n_slots <= 0 || cfg.slot_dim <= 0 || cfg.hidden <= 0) {
      throw ConfigError("sm: n, n_slots, slot_dim and hidden must be positive");
    }
    q_ = Param<T>("sm.Q", cfg.n, cfg.slot_dim);
    v_ = Param<T>("sm.V", cfg.slot_dim, cfg.n);
    glorot(q_, cfg.seed, streams::kInit * 100 + 20);
    glorot(v_, cfg.seed, streams::kInit * 100 + 21);
    const Eigen::Index qd = query_dim();
    w_ = Mlp<T>::make("sm.W", {qd, cfg.hidden, qd}, Activation::tanh);
    w_.init(cfg.seed, streams::kInit * 100 + 22);
  }

  const SmConfig& config() const { return cfg_; }
  SmMode mode() const { return cfg_.mode; }
  Eigen::Index n() const { return cfg_.n; }
  Eigen::Index query_dim() const { return cfg_.mode == SmMode::no_m || cfg_.mode == SmMode::off ? cfg_.n : 2 * cfg_.n; }

  // Mode is fixed once training has touched the parameters.
  void set_mode(SmMode m) {
    if (m == cfg_.mode) return;
    if (trained_) throw ConfigError("sm: mode cannot change after training has started");
    const bool reshape = query_dim() != (m == SmMode::no_m || m == SmMode::off ? cfg_.n : 2 * cfg_.n);
    cfg_.mode = m;
    if (reshape) {
      w_ = Mlp<T>::make("sm.W", {query_dim(), cfg_.hidden, query_dim()}, Activation::tanh);
      w_.init(cfg_.seed, streams::kInit * 100 + 22);
    }
  }

  Param<T>& Q() { return q_; }
  Param<T>& V() { return v_; }
  const Param<T>& Q() const { return q_; }
  const Param<T>& V() const { return v_; }
  Mlp<T>& W() { return w_; }
  const Mlp<T>& W() const { return w_; }

  EpisodicMemory<T> make_memory() const { return EpisodicMemory<T>(cfg_.n_slots, cfg_.slot_dim); }

  std::vector<Param<T>*> trainable_params() {
    std::vector<Param<T>*> out;
    if (uses_memory(cfg_.mode)) {
      out.push_back(&q_);
      out.push_back(&v_);
    }
    if (uses_autoencoder(cfg_.mode)) {
      for (auto* p : w_.params()) out.push_back(p);
    }
    return out;
  }

  // All arrays that belong in a checkpoint, whatever the mode.
  std::vector<Param<T>*> all_params() {
    std::vector<Param<T>*> out{&q_, &v_};
    for (auto* p : w_.params()) out.push_back(p);
    return out;
  }

  // Appends u Q to the memory.
  void write(EpisodicMemory<T>& mem, const RowVector<T>& u) const {
    check_u(u);
    mem.write(u * q_.value);
  }

  // Read-out u_e = w M V with cosine weights against u Q; zero for an empty memory.
  AttentionOutput<T> read(const EpisodicMemory<T>& mem, const RowVector<T>& u, RowVector<T>& u_e) const {
    check_u(u);
    const Matrix<T> rows = mem.rows_in_order();
    AttentionOutput<T> att = cosine_attention<T>(u * q_.value, rows, cfg_.normalize_attention);
    u_e = att.readout * v_.value;
    return att;
  }

  // Builds q for the configured mode (without W).
  RowVector<T> query(const EpisodicMemory<T>& mem, const RowVector<T>& u) const {
    check_u(u);
    if (!uses_memory(cfg_.mode)) return u;
    RowVector<T> u_e;
    read(mem, u, u_e);
    RowVector<T> q(2 * cfg_.n);
    q << u_e, u;
    return q;
  }

  // r_i for one surprise against one actor's memory. Does not write.
  Reward intrinsic_reward(const EpisodicMemory<T>& mem, const RowVector<T>& u) const {
    Reward r;
    r.q = query(mem, u);
    r.r_i = finish_reward(r.q, r.q_tilde);
    return r;
  }

  // Batched rollout form: row b of `surprises` is read against mems[b].
  std::vector<double> intrinsic_rewards(const std::vector<EpisodicMemory<T>>& mems,
                                        const Matrix<T>& surprises) const {
    if (static_cast<Eigen::Index>(mems.size()) != surprises.rows()) {
      throw UsageError("sm: one memory per surprise row required");
    }
    Matrix<T> qs(surprises.rows(), query_dim());
    for (Eigen::Index b = 0; b < surprises.rows(); ++b) qs.row(b) = query(mems[b], surprises.row(b));
    std::vector<double> out(surprises.rows());
    if (cfg_.mode == SmMode::off || cfg_.mode == SmMode::no_w) {
      for (Eigen::Index b = 0; b < qs.rows(); ++b) out[b] = static_cast<double>(qs.row(b).norm());
    } else {
      const Matrix<T> rec = w_.predict(qs);
      for (Eigen::Index b = 0; b < qs.rows(); ++b) out[b] = static_cast<double>((rec.row(b) - qs.row(b)).norm());
    }
    for (double r : out)
      if (!std::isfinite(r)) throw NumericError("non-finite intrinsic reward");
    return out;
  }

  // L_M and L_W without gradients.
  Losses losses(const Matrix<T>& pool, const std::vector<ReplayItem>& items) const {
    Forward f = forward_pass(pool, items);
    return f.losses;
  }

  // Same as losses(), accumulating gradients into Q, V and W. Surprises are
  // data here: nothing in this graph depends on the surprise generator.
  Losses losses_and_backward(const Matrix<T>& pool, const std::vector<ReplayItem>& items) {
    Forward f = forward_pass(pool, items);
    trained_ = true;
    const Eigen::Index bsz = static_cast<Eigen::Index>(items.size());
    const Eigen::Index n = cfg_.n;
    const T inv_b = T(1) / T(bsz);

    Matrix<T> d_ue = Matrix<T>::Zero(bsz, n);
    if (uses_autoencoder(cfg_.mode)) {
      Matrix<T> d_rec(bsz, query_dim());
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const RowVector<T> diff = f.rec.row(i) - f.q.row(i);
        const T norm = diff.norm();
        if (norm > T(0))
          d_rec.row(i) = diff * (inv_b / norm);
        else
          d_rec.row(i).setZero();
      }
      Matrix<T> d_q = w_.backward(f.w_cache, d_rec);
      // The reconstruction target q is detached; only W's input path remains.
      if (cfg_.mode == SmMode::full && cfg_.w_grad_to_qv) d_ue += d_q.leftCols(n);
    }
    if (!uses_memory(cfg_.mode)) return f.losses;

    for (Eigen::Index i = 0; i < bsz; ++i) {
      const RowVector<T> diff = f.u_e.row(i) - pool.row(items[i].query);
      const T norm = diff.norm();
      if (norm > T(0)) d_ue.row(i) += diff * (inv_b / norm);
    }
    // u_e = R V
    v_.grad.noalias() += f.readouts.transpose() * d_ue;
    const Matrix<T> d_readout = d_ue * v_.value.transpose();
    // Keys and context rows are projections K = pool Q.
    Matrix<T> d_keys = Matrix<T>::Zero(f.keys.rows(), f.keys.cols());
    for (Eigen::Index i = 0; i < bsz; ++i) {
      const auto& it = items[i];
      const Eigen::Index len = it.ctx_end - it.ctx_begin;
      if (len == 0) continue;
      RowVector<T> d_key = RowVector<T>::Zero(cfg_.slot_dim);
      const RowVector<T> key = f.keys.row(it.query);
      cosine_attention_backward<T>(key, f.keys.middleRows(it.ctx_begin, len), f.attention[i],
                                   d_readout.row(i), cfg_.normalize_attention, d_key,
                                   d_keys.middleRows(it.ctx_begin, len));
      d_keys.row(it.query) += d_key;
    }
    q_.grad.noalias() += pool.transpose() * d_keys;
    return f.losses;
  }

 private:
  struct Forward {
    Losses losses;
    Matrix<T> keys;      // pool Q
    Matrix<T> readouts;  // per item, d wide
    Matrix<T> u_e;
    Matrix<T> q;
    Matrix<T> rec;
    std::vector<AttentionOutput<T>> attention;
    MlpCache<T> w_cache;
  };

  Forward forward_pass(const Matrix<T>& pool, const std::vector<ReplayItem>& items) const {
    if (items.empty()) throw UsageError("sm_losses: empty batch");
    if (pool.cols() != cfg_.n) throw UsageError("sm_losses: surprise width mismatch");
    for (const auto& it : items) {
      if (it.query < 0 || it.query >= pool.rows() || it.ctx_begin < 0 || it.ctx_end < it.ctx_begin ||
          it.ctx_end > pool.rows() || it.ctx_end - it.ctx_begin > cfg_.n_slots) {
        throw UsageError("sm_losses: context indices out of range");
      }
    }
    Forward f;
    const Eigen::Index bsz = static_cast<Eigen::Index>(items.size());
    const Eigen::Index n = cfg_.n;
    Matrix<T> u(bsz, n);
    for (Eigen::Index i = 0; i < bsz; ++i) u.row(i) = pool.row(items[i].query);

    if (uses_memory(cfg_.mode)) {
      f.keys = pool * q_.value;
      f.readouts = Matrix<T>::Zero(bsz, cfg_.slot_dim);
      f.attention.reserve(items.size());
      for (Eigen::Index i = 0; i < bsz; ++i) {
        const auto& it = items[i];
        f.attention.push_back(cosine_attention<T>(f.keys.row(it.query),
                                                  f.keys.middleRows(it.ctx_begin, it.ctx_end - it.ctx_begin),
                                                  cfg_.normalize_attention));
        f.readouts.row(i) = f.attention.back().readout;
      }
      f.u_e = f.readouts * v_.value;
      f.q.resize(bsz, 2 * n);
      f.q << f.u_e, u;
      f.losses.l_m = static_cast<double>((f.u_e - u).rowwise().norm().sum()) / static_cast<double>(bsz);
    } else {
      f.q = u;
    }
    f.losses.rewards.resize(items.size());
    if (uses_autoencoder(cfg_.mode)) {
      f.rec = w_.forward(f.q, f.w_cache);
      const auto norms = (f.rec - f.q).rowwise().norm();
      for (Eigen::Index i = 0; i < bsz; ++i) f.losses.rewards[i] = static_cast<double>(norms(i));
      f.losses.l_w = static_cast<double>(norms.sum()) / static_cast<double>(bsz);
    } else {
      const auto norms = f.q.rowwise().norm();
      for (Eigen::Index i = 0; i < bsz; ++i) f.losses.rewards[i] = static_cast<double>(norms(i));
    }
    if (!std::isfinite(f.losses.l_m) || !std::isfinite(f.losses.l_w)) {
      throw NumericError("non-finite surprise-memory loss");
    }
    return f;
  }

  double finish_reward(const RowVector<T>& q, RowVector<T>& q_tilde) const {
    double r;
    if (uses_autoencoder(cfg_.mode)) {
      q_tilde = w_.predict(q);
      r = static_cast<double>((q_tilde - q).norm());
    } else {
      q_tilde = RowVector<T>::Zero(q.size());
      r = static_cast<double>(q.norm());
    }
    if (!std::isfinite(r)) throw NumericError("non-finite intrinsic reward");
    return r;
  }

  void check_u(const RowVector<T>& u) const {
    if (u.size() != cfg_.n) throw UsageError("sm: surprise width mismatch");
  }

  static void glorot(Param<T>& p, std::uint64_t seed, std::uint64_t stream) {
    RngStream rng(seed, stream);
    const double limit = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = T(rng.uniform(-limit, limit));
    p.touch();
  }

  SmConfig cfg_;
  Param<T> q_;
  Param<T> v_;
  Mlp<T> w_;
  bool trained_ = false;
};

}  // namespace smlab
