#pragma once

// Standalone numerical checks. Each returns a Verdict (name, metrics, pass)
// that the CLI prints as one JSON line. All checks run in double precision
// with fixed seeds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "smlab/nn.hpp"
#include "smlab/ppo.hpp"
#include "smlab/reward.hpp"
#include "smlab/rng.hpp"
#include "smlab/surprise_generator.hpp"
#include "smlab/surprise_memory.hpp"
#include "smlab/trainer.hpp"

namespace smlab::verify {

struct Verdict {
  std::string name;
  nlohmann::json metrics = nlohmann::json::object();
  bool pass = false;

  std::string to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["pass"] = pass;
    j["metrics"] = metrics;
    return j.dump();
  }
};

namespace detail {

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng, double scale = 1.0) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline double max_abs(const Matrix<double>& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

// Analytic grads already accumulated in `params`; compares with central differences.
inline double grad_error(const std::function<double()>& f, std::vector<Param<double>*> params, double eps) {
  std::vector<Matrix<double>> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  const auto numeric = finite_diff_grad<double>(f, std::span<Param<double>* const>(params), eps);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) worst = std::max(worst, max_relative_error(analytic[i], numeric[i]));
  for (auto* p : params) p->zero_grad();
  return worst;
}

// Random biases keep relu pre-activations away from the kink at 0.
inline void randomize_biases(Mlp<double>& net, RngStream& rng) {
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    auto& b = net.layer(i).bias.value;
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = 0.5 * rng.normal();
  }
}

// L_M + L_W re-evaluated from scratch through a live episodic memory, with the
// reconstruction target q held at `q_fixed` (the loss detaches it).
inline double sm_detached_objective(const SurpriseMemory<double>& sm, const Matrix<double>& pool,
                                    const std::vector<ReplayItem>& items, const Matrix<double>& q_fixed) {
  double lm = 0.0, lw = 0.0;
  const auto b = static_cast<double>(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    auto mem = sm.make_memory();
    for (Eigen::Index r = it.ctx_begin; r < it.ctx_end; ++r) sm.write(mem, pool.row(r));
    const RowVector<double> u = pool.row(it.query);
    const RowVector<double> q = sm.query(mem, u);
    if (uses_memory(sm.mode())) lm += (q.head(sm.n()) - u).norm() / b;
    if (uses_autoencoder(sm.mode())) lw += (sm.W().predict(q) - q_fixed.row(static_cast<Eigen::Index>(i))).norm() / b;
  }
  return lm + lw;
}

}  // namespace detail

// ---------------------------------------------------------------- gradcheck

struct GradcheckOptions {
  int probes = 100;
  double eps = 1e-6;
  double tolerance = 1e-5;
  std::uint64_t seed = 11;
};

// Rotates through every net family: tanh and relu MLPs, the three SG
// predictors under L_SG, the SM losses in each mode (both attention flavours),
// and the PPO objective on the policy/value net.
inline Verdict gradcheck(const GradcheckOptions& opt = {}) {
  using detail::grad_error;
  using detail::random_matrix;
  Verdict v{"gradcheck"};
  nlohmann::json per_family = nlohmann::json::object();
  double worst = 0.0;
  const char* families[] = {"mlp_tanh", "mlp_relu", "sg_rnd", "sg_ae", "sg_fd", "sm_full", "sm_no_w", "sm_no_m", "ppo"};
  constexpr int kFamilies = 9;
  for (int k = 0; k < opt.probes; ++k) {
    const int fam = k % kFamilies;
    RngStream rng(opt.seed, 1000 + static_cast<std::uint64_t>(k));
    const std::uint64_t net_seed = rng.next_u64();
    double err = 0.0;
    if (fam <= 1) {
      const Eigen::Index in = 2 + rng.below(4), h = 2 + rng.below(5), out = 1 + rng.below(4);
      auto net = Mlp<double>::make("probe", {in, h, h, out}, fam == 0 ? Activation::tanh : Activation::relu);
      net.init(net_seed, 1);
      detail::randomize_biases(net, rng);
      const Matrix<double> x = random_matrix(3, in, rng);
      const Matrix<double> g = random_matrix(3, out, rng);
      MlpCache<double> cache;
      net.forward(x, cache);
      net.backward(cache, g);
      err = grad_error([&] { return (net.predict(x).array() * g.array()).sum(); }, net.params(), opt.eps);
    } else if (fam <= 4) {
      SgConfig c;
      c.variant = fam == 2 ? SgVariant::rnd : fam == 3 ? SgVariant::ae : SgVariant::fd;
      c.obs_dim = 4;
      c.num_actions = 3;
      c.n = 3;
      c.hidden = 5;
      c.seed = net_seed;
      SurpriseGenerator<double> sg(c);
      detail::randomize_biases(sg.predictor(), rng);
      Matrix<double> in(4, sg.input_dim());
      Matrix<double> obs = random_matrix(4, c.obs_dim, rng);
      for (Eigen::Index i = 0; i < 4; ++i) {
        in.row(i) = sg.make_input(random_matrix(1, c.obs_dim, rng), static_cast<int>(rng.below(3)), obs.row(i));
      }
      const Matrix<double> tg = sg.make_target(obs);
      sg.loss_and_backward(in, tg);
      err = grad_error([&] { return sg_loss(sg.compute_surprise(in, tg)); }, sg.trainable_params(), opt.eps);
    } else if (fam <= 7) {
      SmConfig c;
      c.n = 3;
      c.n_slots = 4;
      c.slot_dim = 2;
      c.hidden = 4;
      c.mode = fam == 5 ? SmMode::full : fam == 6 ? SmMode::no_w : SmMode::no_m;
      c.normalize_attention = (k / kFamilies) % 2 == 1;
      c.seed = net_seed;
      SurpriseMemory<double> sm(c);
      const Matrix<double> pool = random_matrix(8, c.n, rng);
      std::vector<ReplayItem> items;
      for (Eigen::Index q = 0; q < 8; q += 2) {
        const Eigen::Index len = std::min<Eigen::Index>(q, static_cast<Eigen::Index>(rng.below(5)));
        items.push_back({q, q - len, q});
      }
      detail::randomize_biases(sm.W(), rng);
      Matrix<double> q_fixed(static_cast<Eigen::Index>(items.size()), sm.query_dim());
      for (std::size_t i = 0; i < items.size(); ++i) {
        auto mem = sm.make_memory();
        for (Eigen::Index r = items[i].ctx_begin; r < items[i].ctx_end; ++r) sm.write(mem, pool.row(r));
        q_fixed.row(static_cast<Eigen::Index>(i)) = sm.query(mem, pool.row(items[i].query));
      }
      sm.losses_and_backward(pool, items);
      err = grad_error([&] { return detail::sm_detached_objective(sm, pool, items, q_fixed); },
                       sm.trainable_params(), opt.eps);
    } else {
      PolicyValueNet<double> net(4, 3, 5, net_seed);
      const Matrix<double> obs = random_matrix(6, 4, rng);
      const Matrix<double> logp = log_softmax(net.predict(obs).logits);
      PpoMinibatch mb;
      for (int i = 0; i < 6; ++i) {
        const int a = static_cast<int>(rng.below(3));
        mb.actions.push_back(a);
        // Old policy close to the current one keeps ratios inside the clip band.
        mb.old_log_probs.push_back(logp(i, a) + 0.05 * rng.normal());
        mb.advantages.push_back(rng.normal());
        mb.returns.push_back(rng.normal());
      }
      PpoConfig pc;
      ppo_loss(net, obs, mb, pc, true);
      err = grad_error([&] { return ppo_total_loss(ppo_loss(net, obs, mb, pc, false), pc); }, net.params(),
                       opt.eps);
    }
    worst = std::max(worst, err);
    double& fw = per_family[families[fam]].is_null() ? (per_family[families[fam]] = 0.0).get_ref<double&>()
                                                      : per_family[families[fam]].get_ref<double&>();
    fw = std::max(fw, err);
  }
  v.metrics["probes"] = opt.probes;
  v.metrics["eps"] = opt.eps;
  v.metrics["max_relative_error"] = worst;
  v.metrics["per_family"] = per_family;
  v.pass = worst < opt.tolerance;
  return v;
}

// ----------------------------------------------------------------- hebbian

// Column-convention W (m x m) stored in a bias-free linear layer as its
// transpose, so that y_row = x_row W^T.
struct LinearProbe {
  Mlp<double> net;
  explicit LinearProbe(const Matrix<double>& w0)
      : net("hebbian", {LayerSpec{w0.rows(), w0.rows(), Activation::identity, false}}) {
    net.layer(0).weight.value = w0.transpose();
  }
  Matrix<double> W() const { return net.layer(0).weight.value.transpose(); }

  // One plain GD step on sum_i ||W x_i - x_i||^2 through the generic MLP path.
  void gd_step(const Matrix<double>& xs, double alpha) {
    MlpCache<double> cache;
    const Matrix<double> y = net.forward(xs, cache);
    net.backward(cache, 2.0 * (y - xs));
    auto params = net.params();
    sgd_step<double>(std::span<Param<double>* const>(params), alpha);
  }
};

// W (I - 2 a x x^T) + 2 a x x^T, summed over the batch rows.
inline Matrix<double> hebbian_closed_form(const Matrix<double>& w, const Matrix<double>& xs, double alpha) {
  const Eigen::Index m = w.rows();
  const Matrix<double> X = 2.0 * xs.transpose() * xs;
  return w * (Matrix<double>::Identity(m, m) - alpha * X) + alpha * X;
}

struct HebbianAccumulation {
  double recurrence_deviation = 0.0;  // GD vs exact recurrence
  double hebbian_relative_error = 0.0;  // W_T vs alpha sum X_t
  Matrix<double> w_final;
};

inline HebbianAccumulation hebbian_accumulate(const Matrix<double>& w0, const std::vector<Matrix<double>>& batches,
                                              double alpha) {
  LinearProbe probe(w0);
  Matrix<double> rec = w0;
  Matrix<double> hebb = Matrix<double>::Zero(w0.rows(), w0.cols());
  HebbianAccumulation out;
  for (const auto& xs : batches) {
    probe.gd_step(xs, alpha);
    rec = hebbian_closed_form(rec, xs, alpha);
    hebb += alpha * 2.0 * xs.transpose() * xs;
    out.recurrence_deviation = std::max(out.recurrence_deviation, detail::max_abs(probe.W() - rec));
  }
  out.w_final = probe.W();
  const double hn = hebb.norm();
  out.hebbian_relative_error = hn > 0 ? (out.w_final - hebb).norm() / hn : (out.w_final - hebb).norm();
  return out;
}

inline Verdict hebbian(std::uint64_t seed = 12) {
  using detail::max_abs;
  using detail::random_matrix;
  Verdict v{"hebbian"};
  RngStream rng(seed, 1);

  // W0 = 0, x = e1, alpha = 1/4 gives W1 = e1 e1^T / 2.
  Matrix<double> e1 = Matrix<double>::Zero(1, 3);
  e1(0, 0) = 1.0;
  LinearProbe p0(Matrix<double>::Zero(3, 3));
  p0.gd_step(e1, 0.25);
  Matrix<double> want = Matrix<double>::Zero(3, 3);
  want(0, 0) = 0.5;
  const double dev_basis = max_abs(p0.W() - want);

  double dev_step = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Index m = 2 + rng.below(6);
    const Matrix<double> w0 = random_matrix(m, m, rng);
    const Matrix<double> x = random_matrix(1 + rng.below(3), m, rng);
    const double alpha = k == 0 ? 1e-3 : 1e-3 * (1.0 + 9.0 * rng.uniform());
    LinearProbe p(w0);
    p.gd_step(x, alpha);
    dev_step = std::max(dev_step, max_abs(p.W() - hebbian_closed_form(w0, x, alpha)));
  }

  // T = 100 steps of near-orthogonal unit-scale items from a decayed init.
  const Eigen::Index m = 16;
  std::vector<Matrix<double>> batches;
  for (int t = 0; t < 100; ++t) {
    Matrix<double> xs = Matrix<double>::Zero(2, m);
    for (int r = 0; r < 2; ++r) {
      xs(r, static_cast<Eigen::Index>(rng.below(m))) = 1.0;
      xs.row(r) += 0.01 * random_matrix(1, m, rng);
    }
    batches.push_back(xs);
  }
  const Matrix<double> w0 = Matrix<double>::Zero(m, m);
  const auto a1 = hebbian_accumulate(w0, batches, 1e-4);
  const auto a2 = hebbian_accumulate(w0, batches, 5e-5);
  const auto a3 = hebbian_accumulate(w0, batches, 0.02);  // recurrence holds for any alpha
  const auto none = hebbian_accumulate(w0, {}, 1e-4);

  v.metrics["closed_form_basis_deviation"] = dev_basis;
  v.metrics["single_step_max_deviation"] = dev_step;
  v.metrics["recurrence_deviation_T100"] = std::max({a1.recurrence_deviation, a2.recurrence_deviation,
                                                     a3.recurrence_deviation});
  v.metrics["hebbian_rel_error_alpha_1e-4"] = a1.hebbian_relative_error;
  v.metrics["hebbian_rel_error_alpha_5e-5"] = a2.hebbian_relative_error;
  v.metrics["t0_deviation"] = max_abs(none.w_final - w0);
  v.pass = dev_basis < 1e-10 && dev_step < 1e-10 && a1.recurrence_deviation < 1e-10 &&
           a2.recurrence_deviation < 1e-10 && a3.recurrence_deviation < 1e-10 &&
           a2.hebbian_relative_error < a1.hebbian_relative_error && max_abs(none.w_final - w0) == 0.0;
  return v;
}

// ---------------------------------------------------------------- variance

struct VarianceResult {
  std::vector<double> var_x;
  std::vector<double> var_u;
  std::vector<double> var_z;
  std::vector<char> holds;
  int empty_buckets = 0;
};

// Ideal SG: Z = empirical mean of X within each y bucket. U = Z - X.
// ys in [0, k). Population variances per dimension.
inline VarianceResult variance_check(const Matrix<double>& xs, const std::vector<int>& ys, int k) {
  if (xs.rows() < 2) throw UsageError("variance_check: need at least 2 samples");
  const Eigen::Index n = xs.rows(), m = xs.cols();
  Matrix<double> sums = Matrix<double>::Zero(k, m);
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    sums.row(ys[i]) += xs.row(i);
    counts[ys[i]] += 1.0;
  }
  VarianceResult r;
  for (int y = 0; y < k; ++y) {
    if (counts[y] < 1) ++r.empty_buckets;
    else sums.row(y) /= counts[y];
  }
  auto pop_var = [](const Eigen::VectorXd& col) {
    const double mean = col.mean();
    return (col.array() - mean).square().sum() / static_cast<double>(col.size());
  };
  Matrix<double> z(n, m), u(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    z.row(i) = sums.row(ys[i]);
    u.row(i) = z.row(i) - xs.row(i);
  }
  for (Eigen::Index d = 0; d < m; ++d) {
    r.var_x.push_back(pop_var(xs.col(d)));
    r.var_u.push_back(pop_var(u.col(d)));
    r.var_z.push_back(pop_var(z.col(d)));
    r.holds.push_back(r.var_u.back() <= r.var_x.back() + 1e-12);
  }
  return r;
}

inline Verdict variance(std::uint64_t seed = 13, int samples = 100000) {
  Verdict v{"variance"};
  const Eigen::Index m = 3;
  const double shifts[4][3] = {{-2.0, 0.0, 1.0}, {-0.5, 1.0, -1.0}, {0.5, -1.0, 0.0}, {2.0, 0.0, 3.0}};
  bool ok = true;
  auto run = [&](const std::string& name, int k, auto&& draw) {
    RngStream rng(seed, std::hash<std::string>{}(name) & 0xffff);
    Matrix<double> xs(samples, m);
    std::vector<int> ys(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) draw(rng, xs, ys, i);
    const auto r = variance_check(xs, ys, k);
    nlohmann::json j;
    j["var_x"] = r.var_x;
    j["var_u"] = r.var_u;
    j["empty_buckets"] = r.empty_buckets;
    double decomposition = 0.0;
    bool holds = true;
    for (std::size_t d = 0; d < r.var_x.size(); ++d) {
      decomposition = std::max(decomposition, std::abs(r.var_x[d] - r.var_u[d] - r.var_z[d]));
      holds = holds && r.holds[d];
    }
    j["decomposition_error"] = decomposition;
    j["holds"] = holds;
    v.metrics[name] = j;
    ok = ok && holds && decomposition < 1e-12 * 100;  // sums of 1e5 terms
    return r;
  };

  // Y determines X: var(U) = 0.
  const auto perfect = run("perfect_sg", 4, [&](RngStream& rng, Matrix<double>& xs, std::vector<int>& ys, int i) {
    ys[i] = static_cast<int>(rng.below(4));
    for (Eigen::Index d = 0; d < m; ++d) xs(i, d) = shifts[ys[i]][d];
  });
  for (double x : perfect.var_u) ok = ok && x < 1e-24;

  // Uninformative Y (single bucket): Z = mean, var(U) = var(X).
  const auto indep = run("independent_y", 1, [&](RngStream& rng, Matrix<double>& xs, std::vector<int>& ys, int i) {
    ys[i] = 0;
    for (Eigen::Index d = 0; d < m; ++d) xs(i, d) = 1.0 + 2.0 * rng.normal();
  });
  double eq_gap = 0.0;
  for (std::size_t d = 0; d < indep.var_x.size(); ++d) {
    eq_gap = std::max(eq_gap, std::abs(indep.var_u[d] - indep.var_x[d]));
  }
  v.metrics["independent_y"]["equality_gap"] = eq_gap;
  ok = ok && eq_gap < 1e-12;

  // Four-valued Y drawn independently of X: only sampling noise separates them.
  const auto indep4 = run("independent_y_k4", 4, [&](RngStream& rng, Matrix<double>& xs, std::vector<int>& ys, int i) {
    ys[i] = static_cast<int>(rng.below(4));
    for (Eigen::Index d = 0; d < m; ++d) xs(i, d) = rng.normal();
  });
  for (std::size_t d = 0; d < indep4.var_x.size(); ++d) {
    ok = ok && (indep4.var_x[d] - indep4.var_u[d]) < 1e-3 * indep4.var_x[d];
  }

  // Standard normal plus a y-dependent shift: margin = variance of the shifts.
  const auto shift = run("shift_k4", 4, [&](RngStream& rng, Matrix<double>& xs, std::vector<int>& ys, int i) {
    ys[i] = static_cast<int>(rng.below(4));
    for (Eigen::Index d = 0; d < m; ++d) xs(i, d) = rng.normal() + shifts[ys[i]][d];
  });
  std::vector<double> expected_margin;
  for (Eigen::Index d = 0; d < m; ++d) {
    double mean = 0.0, sq = 0.0;
    for (int y = 0; y < 4; ++y) mean += shifts[y][d] / 4.0;
    for (int y = 0; y < 4; ++y) sq += (shifts[y][d] - mean) * (shifts[y][d] - mean) / 4.0;
    expected_margin.push_back(sq);
    const double margin = shift.var_x[d] - shift.var_u[d];
    ok = ok && shift.var_u[d] < shift.var_x[d] && std::abs(margin - sq) < 0.05 * sq + 0.02;
  }
  v.metrics["shift_k4"]["expected_margin"] = expected_margin;

  // Heteroscedastic noise per bucket.
  run("scaled_shift_k4", 4, [&](RngStream& rng, Matrix<double>& xs, std::vector<int>& ys, int i) {
    ys[i] = static_cast<int>(rng.below(4));
    for (Eigen::Index d = 0; d < m; ++d) xs(i, d) = (0.5 + ys[i]) * rng.normal() + shifts[ys[i]][d];
  });

  v.metrics["samples"] = samples;
  v.pass = ok;
  return v;
}

// --------------------------------------------------------------- attention

// Straight-line evaluation of w_j = k.m_j / ((|k|+eps)(|m_j|+eps)), u_e = w M V.
inline std::vector<double> attention_reference(const std::vector<double>& u, const std::vector<double>& Q,
                                               const std::vector<double>& V, const std::vector<double>& M,
                                               int n, int d, int rows) {
  std::vector<double> key(static_cast<std::size_t>(d), 0.0);
  for (int j = 0; j < d; ++j)
    for (int i = 0; i < n; ++i) key[j] += u[i] * Q[i * d + j];
  double kn = 0.0;
  for (double x : key) kn += x * x;
  kn = std::sqrt(kn);
  std::vector<double> read(static_cast<std::size_t>(d), 0.0);
  for (int r = 0; r < rows; ++r) {
    double dot = 0.0, mn = 0.0;
    for (int j = 0; j < d; ++j) {
      dot += key[j] * M[r * d + j];
      mn += M[r * d + j] * M[r * d + j];
    }
    const double w = dot / ((kn + 1e-8) * (std::sqrt(mn) + 1e-8));
    for (int j = 0; j < d; ++j) read[j] += w * M[r * d + j];
  }
  std::vector<double> ue(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ue[i] += read[j] * V[j * n + i];
  return ue;
}

inline Verdict attention(std::uint64_t seed = 14, int instances = 1000) {
  Verdict v{"attention"};
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    RngStream rng(seed, static_cast<std::uint64_t>(k));
    const int n = 1 + static_cast<int>(rng.below(8));
    const int d = 1 + static_cast<int>(rng.below(6));
    const int cap = 1 + static_cast<int>(rng.below(10));
    const int writes = static_cast<int>(rng.below(2 * cap + 1));
    SmConfig c;
    c.n = n;
    c.slot_dim = d;
    c.n_slots = cap;
    c.seed = rng.next_u64();
    SurpriseMemory<double> sm(c);
    auto mem = sm.make_memory();
    for (int w = 0; w < writes; ++w) {
      // Occasional zero surprises exercise the epsilon guard.
      RowVector<double> x = detail::random_matrix(1, n, rng);
      if (rng.below(10) == 0) x.setZero();
      sm.write(mem, x);
    }
    RowVector<double> u = detail::random_matrix(1, n, rng);
    if (rng.below(20) == 0) u.setZero();
    RowVector<double> ue;
    sm.read(mem, u, ue);

    const Matrix<double> rows = mem.rows_in_order();
    std::vector<double> uu(u.data(), u.data() + n);
    std::vector<double> Q(sm.Q().value.data(), sm.Q().value.data() + n * d);
    std::vector<double> V(sm.V().value.data(), sm.V().value.data() + d * n);
    std::vector<double> M(rows.data(), rows.data() + rows.size());
    const auto ref = attention_reference(uu, Q, V, M, n, d, static_cast<int>(rows.rows()));
    for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(ref[i] - ue(i)));
  }
  v.metrics["instances"] = instances;
  v.metrics["max_abs_diff"] = worst;
  v.pass = worst < 1e-12;
  return v;
}

// ---------------------------------------------------------------- blocking

// Finite differences of L_M + L_W, as computed by the training step, with
// respect to sampled SG predictor weights.
inline double blocking_probe(SgVariant variant, SmMode mode, std::uint64_t seed, int weights, double& control) {
  RngStream rng(seed, 7);
  SgConfig sc;
  sc.variant = variant;
  sc.obs_dim = 5;
  sc.num_actions = 3;
  sc.n = 4;
  sc.hidden = 6;
  sc.seed = seed;
  SurpriseGenerator<double> sg(sc);
  SmConfig mc;
  mc.n = sg.surprise_dim();
  mc.n_slots = 6;
  mc.slot_dim = 3;
  mc.hidden = 5;
  mc.mode = mode;
  mc.seed = seed + 1;
  SurpriseMemory<double> sm(mc);

  // A short recorded segment: inputs, targets and the surprises seen at rollout.
  const Eigen::Index steps = 12;
  const Matrix<double> obs = detail::random_matrix(steps + 1, sc.obs_dim, rng);
  Matrix<double> inputs(steps, sg.input_dim());
  for (Eigen::Index t = 0; t < steps; ++t) {
    inputs.row(t) = sg.make_input(obs.row(t), static_cast<int>(rng.below(3)), obs.row(t + 1));
  }
  const Matrix<double> targets = sg.make_target(obs.bottomRows(steps));
  const Matrix<double> pool = sg.compute_surprise(inputs, targets);
  std::vector<ReplayItem> items;
  for (Eigen::Index t = 0; t < steps; ++t) items.push_back({t, std::max<Eigen::Index>(0, t - mc.n_slots), t});

  auto sm_part = [&] {
    const auto l = joint_losses(sg, sm, inputs, targets, pool, items, false);
    return l.l_m + l.l_w;
  };
  auto sg_part = [&] { return joint_losses(sg, sm, inputs, targets, pool, items, false).l_sg; };

  auto params = sg.trainable_params();
  const double eps = 1e-6;
  double worst = 0.0;
  control = 0.0;
  for (int k = 0; k < weights; ++k) {
    auto* p = params[rng.below(params.size())];
    double& w = p->value.data()[rng.below(static_cast<std::uint64_t>(p->value.size()))];
    const double saved = w;
    w = saved + eps;
    p->touch();
    const double fp = sm_part(), gp = sg_part();
    w = saved - eps;
    p->touch();
    const double fm = sm_part(), gm = sg_part();
    w = saved;
    p->touch();
    worst = std::max(worst, std::abs(fp - fm) / (2 * eps));
    control = std::max(control, std::abs(gp - gm) / (2 * eps));
  }
  return worst;
}

// SG gradients after a full joint backward equal those of L_SG alone.
inline double blocking_grad_path(SgVariant variant, SmMode mode, std::uint64_t seed) {
  RngStream rng(seed, 8);
  SgConfig sc;
  sc.variant = variant;
  sc.obs_dim = 5;
  sc.num_actions = 3;
  sc.n = 4;
  sc.hidden = 6;
  sc.seed = seed;
  SurpriseGenerator<double> sg(sc);
  SmConfig mc;
  mc.n = sg.surprise_dim();
  mc.n_slots = 6;
  mc.slot_dim = 3;
  mc.hidden = 5;
  mc.mode = mode;
  mc.seed = seed + 1;
  SurpriseMemory<double> sm(mc);
  const Matrix<double> obs = detail::random_matrix(9, sc.obs_dim, rng);
  Matrix<double> inputs(8, sg.input_dim());
  for (Eigen::Index t = 0; t < 8; ++t) inputs.row(t) = sg.make_input(obs.row(t), 1, obs.row(t + 1));
  const Matrix<double> targets = sg.make_target(obs.bottomRows(8));
  const Matrix<double> pool = sg.compute_surprise(inputs, targets);
  std::vector<ReplayItem> items;
  for (Eigen::Index t = 0; t < 8; ++t) items.push_back({t, std::max<Eigen::Index>(0, t - mc.n_slots), t});

  joint_losses(sg, sm, inputs, targets, pool, items, true);
  std::vector<Matrix<double>> joint;
  for (auto* p : sg.trainable_params()) {
    joint.push_back(p->grad);
    p->zero_grad();
  }
  sg.loss_and_backward(inputs, targets);
  double worst = 0.0;
  auto params = sg.trainable_params();
  for (std::size_t i = 0; i < params.size(); ++i) worst = std::max(worst, detail::max_abs(joint[i] - params[i]->grad));
  return worst;
}

inline Verdict blocking(std::uint64_t seed = 15, int weights = 50) {
  Verdict v{"blocking"};
  bool ok = true;
  double worst = 0.0;
  for (SgVariant sgv : {SgVariant::rnd, SgVariant::ae, SgVariant::fd}) {
    for (SmMode mode : {SmMode::full, SmMode::no_w, SmMode::no_m, SmMode::off}) {
      double control = 0.0;
      const double fd = blocking_probe(sgv, mode, seed, weights, control);
      const double path = blocking_grad_path(sgv, mode, seed);
      const std::string key = to_string(sgv) + "+" + to_string(mode);
      v.metrics[key] = {{"max_fd_sm_wrt_sg", fd}, {"max_fd_lsg_wrt_sg", control}, {"grad_path_diff", path}};
      worst = std::max(worst, fd);
      ok = ok && fd < 1e-9 && control > 1e-6 && path == 0.0;
    }
  }
  v.metrics["sampled_weights"] = weights;
  v.metrics["max_abs_derivative"] = worst;
  v.pass = ok;
  return v;
}

// -------------------------------------------------------------------- mnir

inline Verdict mnir_check(std::uint64_t seed = 16, int episodes = 100) {
  Verdict v{"mnir"};
  double worst_mean = 0.0, worst_std = 0.0;
  for (int e = 0; e < episodes; ++e) {
    RngStream rng(seed, static_cast<std::uint64_t>(e));
    const int len = 2 + static_cast<int>(rng.below(500));
    const double scale = std::exp(rng.uniform(-3.0, 3.0));
    const double offset = rng.uniform(0.0, 10.0);
    std::vector<double> r(static_cast<std::size_t>(len));
    for (double& x : r) x = offset + scale * std::abs(rng.normal());
    const auto out = mnir(r);
    double mean = 0.0;
    for (double x : out) mean += x;
    mean /= len;
    double var = 0.0;
    for (double x : out) var += (x - mean) * (x - mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(std::sqrt(var / len) - 1.0));
  }
  const std::vector<double> abc{1.0, 2.0, 3.0};
  const auto ref = mnir(abc);
  const double expect = std::sqrt(1.5);
  const double hand = std::max({std::abs(ref[0] + expect), std::abs(ref[1]), std::abs(ref[2] - expect)});
  v.metrics["episodes"] = episodes;
  v.metrics["max_abs_mean"] = worst_mean;
  v.metrics["max_std_deviation"] = worst_std;
  v.metrics["example_123"] = ref;
  v.pass = worst_mean < 1e-12 && worst_std < 1e-12 && hand < 1e-5;
  return v;
}

// ------------------------------------------------------------------ memory

inline Verdict memory_laws(std::uint64_t seed = 17) {
  Verdict v{"memory"};
  bool fill_ok = true, fifo_ok = true, reset_ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    RngStream rng(seed, static_cast<std::uint64_t>(trial));
    SmConfig c;
    c.n = 2 + static_cast<Eigen::Index>(rng.below(5));
    c.slot_dim = 1 + static_cast<Eigen::Index>(rng.below(4));
    c.n_slots = 1 + static_cast<Eigen::Index>(rng.below(12));
    c.seed = rng.next_u64();
    SurpriseMemory<double> sm(c);
    auto mem = sm.make_memory();
    const Eigen::Index k = 3 * c.n_slots;
    std::vector<RowVector<double>> written;
    for (Eigen::Index w = 0; w < k; ++w) {
      written.push_back(detail::random_matrix(1, c.n, rng));
      sm.write(mem, written.back());
      fill_ok = fill_ok && mem.fill() <= c.n_slots && mem.fill() == std::min<Eigen::Index>(w + 1, c.n_slots);
      // Expected rows: projections of the last min(w+1, N) writes, oldest first.
      const Matrix<double> rows = mem.rows_in_order();
      const Eigen::Index first = w + 1 - mem.fill();
      for (Eigen::Index r = 0; r < mem.fill(); ++r) {
        const auto& x = written[static_cast<std::size_t>(first + r)];
        for (Eigen::Index j = 0; j < c.slot_dim; ++j) {
          double s = 0.0;
          for (Eigen::Index i = 0; i < c.n; ++i) s += x(i) * sm.Q().value(i, j);
          fifo_ok = fifo_ok && std::abs(s - rows(r, j)) < 1e-12;
        }
      }
    }
    mem.reset();
    RowVector<double> ue;
    sm.read(mem, detail::random_matrix(1, c.n, rng), ue);
    reset_ok = reset_ok && mem.fill() == 0 && ue.size() == c.n && ue.isZero(0.0);
  }
  v.metrics["fill_bound"] = fill_ok;
  v.metrics["fifo_order"] = fifo_ok;
  v.metrics["reset_zero_readout"] = reset_ok;
  v.pass = fill_ok && fifo_ok && reset_ok;
  return v;
}

// --------------------------------------------------------------- streaming

inline Verdict streaming_std(std::uint64_t seed = 18, int steps = 100000) {
  Verdict v{"stream_std"};
  RngStream rng(seed, 1);
  RewardConfig rc;
  RewardNormalizer norm(rc, 3);
  std::vector<double> acc(3, 0.0), stream;
  stream.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const std::size_t actor = static_cast<std::size_t>(s % 3);
    const double r = std::abs(rng.normal()) * (1.0 + actor);
    const bool done = rng.below(200) == 0;
    norm.normalize(r, actor, done);
    acc[actor] = rc.gamma_i * acc[actor] + r;
    stream.push_back(acc[actor]);
    if (done) acc[actor] = 0.0;
  }
  double mean = 0.0;
  for (double x : stream) mean += x;
  mean /= static_cast<double>(stream.size());
  double var = 0.0;
  for (double x : stream) var += (x - mean) * (x - mean);
  const double batch = std::sqrt(var / static_cast<double>(stream.size()));
  const double rel = std::abs(norm.r_std() - batch) / batch;
  v.metrics["steps"] = steps;
  v.metrics["streaming_std"] = norm.r_std();
  v.metrics["batch_std"] = batch;
  v.metrics["relative_error"] = rel;
  v.pass = rel < 1e-9;
  return v;
}

inline std::vector<std::string> check_names() {
  return {"gradcheck", "hebbian", "variance", "attention", "blocking", "mnir", "memory", "stream_std"};
}

inline Verdict run_check(const std::string& name) {
  if (name == "gradcheck") return gradcheck();
  if (name == "hebbian") return hebbian();
  if (name == "variance") return variance();
  if (name == "attention") return attention();
  if (name == "blocking") return blocking();
  if (name == "mnir") return mnir_check();
  if (name == "memory") return memory_laws();
  if (name == "stream_std") return streaming_std();
  throw ConfigError("unknown check '" + name + "'");
}

}  // namespace smlab::verify
