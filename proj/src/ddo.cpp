#include "optforge/ddo.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace optforge {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> softmax(const double* logits, int n) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  std::vector<double> out(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= total;
  return out;
}

}  // namespace

std::vector<double> DdoParams::eta(int s) const {
  return softmax(&eta_logits[static_cast<std::size_t>(s) * n_options],
                 n_options);
}

ActionDist DdoParams::pi(int h, int s) const {
  const std::size_t base =
      (static_cast<std::size_t>(h) * n_states + s) * n_actions;
  std::vector<double> p = softmax(&pi_logits[base], n_actions);
  ActionDist out{};
  std::copy(p.begin(), p.end(), out.begin());
  return out;
}

double DdoParams::psi(int h, int s) const {
  return termination_scale *
         sigmoid(psi_logits[static_cast<std::size_t>(h) * n_states + s]);
}

DdoParams DdoParams::init(int n_options, int n_states, double init_scale,
                          std::uint64_t seed) {
  DdoParams params;
  params.n_options = n_options;
  params.n_states = n_states;
  params.eta_logits.resize(static_cast<std::size_t>(n_states) * n_options);
  params.pi_logits.resize(static_cast<std::size_t>(n_options) * n_states *
                          params.n_actions);
  params.psi_logits.resize(static_cast<std::size_t>(n_options) * n_states);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, init_scale);
  for (double& x : params.eta_logits) x = normal(rng);
  for (double& x : params.pi_logits) x = normal(rng);
  for (double& x : params.psi_logits) x = normal(rng);
  return params;
}

PosteriorTables forward_backward(const DdoParams& params,
                                 const Trajectory& xi) {
  const int T = static_cast<int>(xi.actions.size());
  const int H = params.n_options;
  if (T < 1) throw std::invalid_argument("trajectory needs at least one step");

  PosteriorTables tables;
  auto& phi = tables.phi_scaled;
  auto& omega = tables.omega_scaled;
  phi.assign(T, std::vector<double>(H, 0.0));
  omega.assign(T, std::vector<double>(H, 0.0));
  tables.normalizers.assign(T + 1, 0.0);

  // Per-step readouts reused by both passes.
  std::vector<std::vector<double>> pi_a(T, std::vector<double>(H));
  std::vector<std::vector<double>> psi_next(T, std::vector<double>(H));
  std::vector<std::vector<double>> eta_next(T);
  for (int t = 0; t < T; ++t) {
    for (int h = 0; h < H; ++h) {
      pi_a[t][h] = params.pi(h, xi.states[t])[xi.actions[t]];
      psi_next[t][h] = params.psi(h, xi.states[t + 1]);
    }
    if (t + 1 < T) eta_next[t] = params.eta(xi.states[t + 1]);
  }

  auto check_normalizer = [](double c) {
    if (!(c > 0.0) || !std::isfinite(c))
      throw DegenerateLikelihood("forward normalizer underflowed to zero");
  };

  // Forward pass with per-step rescaling.
  std::vector<double> eta0 = params.eta(xi.states[0]);
  double c0 = std::accumulate(eta0.begin(), eta0.end(), 0.0);
  check_normalizer(c0);
  tables.normalizers[0] = c0;
  for (int h = 0; h < H; ++h) phi[0][h] = eta0[h] / c0;

  for (int t = 0; t + 1 < T; ++t) {
    double switch_mass = 0.0;
    for (int h = 0; h < H; ++h)
      switch_mass += phi[t][h] * pi_a[t][h] * psi_next[t][h];
    double c = 0.0;
    for (int h = 0; h < H; ++h) {
      phi[t + 1][h] = switch_mass * eta_next[t][h] +
                      phi[t][h] * pi_a[t][h] * (1.0 - psi_next[t][h]);
      c += phi[t + 1][h];
    }
    check_normalizer(c);
    tables.normalizers[t + 1] = c;
    for (int h = 0; h < H; ++h) phi[t + 1][h] /= c;
  }

  // Final normalizer absorbs the last action factor.
  double c_final = 0.0;
  for (int h = 0; h < H; ++h) c_final += phi[T - 1][h] * pi_a[T - 1][h];
  check_normalizer(c_final);
  tables.normalizers[T] = c_final;

  // Backward pass, scaled by the forward normalizers so that
  // u_t(h) = phi_scaled[t][h] * omega_scaled[t][h].
  for (int h = 0; h < H; ++h) omega[T - 1][h] = pi_a[T - 1][h] / c_final;
  for (int t = T - 2; t >= 0; --t) {
    double switch_mass = 0.0;
    for (int h = 0; h < H; ++h)
      switch_mass += eta_next[t][h] * omega[t + 1][h];
    for (int h = 0; h < H; ++h) {
      omega[t][h] = pi_a[t][h] *
                    (psi_next[t][h] * switch_mass +
                     (1.0 - psi_next[t][h]) * omega[t + 1][h]) /
                    tables.normalizers[t + 1];
    }
  }

  tables.u.assign(T, std::vector<double>(H, 0.0));
  tables.v.assign(T, std::vector<double>(H, 0.0));
  tables.w.assign(T - 1, std::vector<double>(H, 0.0));
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < H; ++h) tables.u[t][h] = phi[t][h] * omega[t][h];
  tables.v[0] = tables.u[0];  // b_0 == 1 convention
  for (int t = 1; t < T; ++t) {
    double switch_mass = 0.0;
    for (int h = 0; h < H; ++h)
      switch_mass += phi[t - 1][h] * pi_a[t - 1][h] * psi_next[t - 1][h];
    for (int h = 0; h < H; ++h)
      tables.v[t][h] = switch_mass * eta_next[t - 1][h] * omega[t][h] /
                       tables.normalizers[t];
  }
  for (int t = 0; t + 1 < T; ++t)
    for (int h = 0; h < H; ++h)
      tables.w[t][h] = phi[t][h] * pi_a[t][h] * (1.0 - psi_next[t][h]) *
                       omega[t + 1][h] / tables.normalizers[t + 1];

  tables.log_likelihood = 0.0;
  for (double c : tables.normalizers) tables.log_likelihood += std::log(c);
  return tables;
}

PosteriorTables brute_force_posteriors(const DdoParams& params,
                                       const Trajectory& xi) {
  const int T = static_cast<int>(xi.actions.size());
  const int H = params.n_options;
  if (T < 1) throw std::invalid_argument("trajectory needs at least one step");
  if (std::pow(static_cast<double>(H), static_cast<double>(T)) > 1e6)
    throw TooLarge("latent enumeration H^T exceeds 1e6");

  PosteriorTables tables;
  tables.u.assign(T, std::vector<double>(H, 0.0));
  tables.v.assign(T, std::vector<double>(H, 0.0));
  tables.w.assign(T - 1, std::vector<double>(H, 0.0));

  std::vector<int> hs(T);
  std::vector<int> bs(T);  // bs[0] fixed to 1
  double total = 0.0;

  std::function<void(int, double)> recurse = [&](int t, double weight) {
    if (t == T) {
      total += weight;
      for (int k = 0; k < T; ++k) {
        tables.u[k][hs[k]] += weight;
        if (bs[k] == 1) tables.v[k][hs[k]] += weight;
        if (k + 1 < T && bs[k + 1] == 0) tables.w[k][hs[k]] += weight;
      }
      return;
    }
    if (t == 0) {
      const std::vector<double> eta0 = params.eta(xi.states[0]);
      for (int h = 0; h < H; ++h) {
        hs[0] = h;
        bs[0] = 1;
        recurse(1, weight * eta0[h] * params.pi(h, xi.states[0])[xi.actions[0]]);
      }
      return;
    }
    const int prev = hs[t - 1];
    const int s = xi.states[t];
    const double psi_prev = params.psi(prev, s);
    // continue: b_t = 0, same option
    hs[t] = prev;
    bs[t] = 0;
    recurse(t + 1, weight * (1.0 - psi_prev) *
                       params.pi(prev, s)[xi.actions[t]]);
    // switch: b_t = 1, any option
    const std::vector<double> eta_s = params.eta(s);
    for (int h = 0; h < H; ++h) {
      hs[t] = h;
      bs[t] = 1;
      recurse(t + 1,
              weight * psi_prev * eta_s[h] * params.pi(h, s)[xi.actions[t]]);
    }
  };
  recurse(0, 1.0);

  if (!(total > 0.0))
    throw DegenerateLikelihood("brute-force likelihood is zero");
  for (auto& row : tables.u)
    for (double& x : row) x /= total;
  for (auto& row : tables.v)
    for (double& x : row) x /= total;
  for (auto& row : tables.w)
    for (double& x : row) x /= total;
  tables.log_likelihood = std::log(total);
  return tables;
}

double log_likelihood(const DdoParams& params,
                      const std::vector<Trajectory>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  double total = 0.0;
  for (const Trajectory& xi : dataset)
    total += forward_backward(params, xi).log_likelihood;
  return total;
}

std::vector<double> visitation_weights(const std::vector<Trajectory>& dataset,
                                       int n_states) {
  std::vector<double> weights(n_states, 0.0);
  double total = 0.0;
  for (const Trajectory& xi : dataset)
    for (int s : xi.states) {
      weights[s] += 1.0;
      total += 1.0;
    }
  if (total > 0.0)
    for (double& w : weights) w /= total;
  return weights;
}

double pairwise_kl_regularizer(const DdoParams& params,
                               const std::vector<double>& rho_weights) {
  const int H = params.n_options;
  double value = 0.0;
  for (int s = 0; s < params.n_states; ++s) {
    const double rho = rho_weights[s];
    if (rho == 0.0) continue;
    std::vector<ActionDist> p(H);
    for (int h = 0; h < H; ++h) p[h] = params.pi(h, s);
    double kl_sum = 0.0;
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < H; ++j) {
        if (i == j) continue;
        for (int a = 0; a < kNumActions; ++a)
          kl_sum += p[i][a] * (std::log(p[i][a]) - std::log(p[j][a]));
      }
    value += rho * kl_sum;
  }
  return value;
}

DdoGradient gradient(const DdoParams& params,
                     const std::vector<Trajectory>& dataset, double lambda,
                     const std::vector<double>& rho_weights) {
  const int H = params.n_options;
  const int A = params.n_actions;
  DdoGradient grad;
  grad.eta.assign(params.eta_logits.size(), 0.0);
  grad.pi.assign(params.pi_logits.size(), 0.0);
  grad.psi.assign(params.psi_logits.size(), 0.0);

  const double inv_n = 1.0 / static_cast<double>(dataset.size());
  const double alpha = params.termination_scale;

  for (const Trajectory& xi : dataset) {
    const PosteriorTables post = forward_backward(params, xi);
    const int T = static_cast<int>(xi.actions.size());

    for (int t = 0; t < T; ++t) {
      const int s = xi.states[t];
      const int a = xi.actions[t];

      // v_t(h) grad log eta(h|s_t)
      const std::vector<double> eta_s = params.eta(s);
      double v_mass = 0.0;
      for (int h = 0; h < H; ++h) v_mass += post.v[t][h];
      for (int h = 0; h < H; ++h)
        grad.eta[static_cast<std::size_t>(s) * H + h] +=
            inv_n * (post.v[t][h] - v_mass * eta_s[h]);

      // u_t(h) grad log pi_h(a_t|s_t)
      for (int h = 0; h < H; ++h) {
        const ActionDist p = params.pi(h, s);
        const std::size_t base =
            (static_cast<std::size_t>(h) * params.n_states + s) * A;
        const double weight = post.u[t][h];
        for (int k = 0; k < A; ++k)
          grad.pi[base + k] += inv_n * weight * ((k == a ? 1.0 : 0.0) - p[k]);
      }

      // termination gradient at s_{t+1}, defined for t <= T-2
      if (t + 1 < T) {
        const int sn = xi.states[t + 1];
        for (int h = 0; h < H; ++h) {
          const double sig = sigmoid(
              params.psi_logits[static_cast<std::size_t>(h) * params.n_states +
                                sn]);
          const double stay = post.w[t][h];
          const double stop = post.u[t][h] - post.w[t][h];
          // d log(alpha*sig)/dx = 1-sig ; d log(1-alpha*sig)/dx =
          // -alpha*sig*(1-sig)/(1-alpha*sig)
          const double d_stop = 1.0 - sig;
          const double d_stay =
              -alpha * sig * (1.0 - sig) / (1.0 - alpha * sig);
          grad.psi[static_cast<std::size_t>(h) * params.n_states + sn] +=
              inv_n * (stop * d_stop + stay * d_stay);
        }
      }
    }
  }

  if (lambda > 0.0) {
    for (int s = 0; s < params.n_states; ++s) {
      const double rho = rho_weights[s];
      if (rho == 0.0) continue;
      std::vector<ActionDist> p(H);
      std::vector<std::array<double, kNumActions>> logp(H);
      for (int h = 0; h < H; ++h) {
        p[h] = params.pi(h, s);
        for (int a = 0; a < A; ++a) logp[h][a] = std::log(p[h][a]);
      }
      for (int i = 0; i < H; ++i) {
        const std::size_t base_i =
            (static_cast<std::size_t>(i) * params.n_states + s) * A;
        for (int j = 0; j < H; ++j) {
          if (i == j) continue;
          double kl = 0.0;
          for (int a = 0; a < A; ++a)
            kl += p[i][a] * (logp[i][a] - logp[j][a]);
          const std::size_t base_j =
              (static_cast<std::size_t>(j) * params.n_states + s) * A;
          for (int k = 0; k < A; ++k) {
            // d KL(p_i || p_j) / d z_i,k and / d z_j,k
            grad.pi[base_i + k] +=
                lambda * rho * p[i][k] * ((logp[i][k] - logp[j][k]) - kl);
            grad.pi[base_j + k] += lambda * rho * (p[j][k] - p[i][k]);
          }
        }
      }
    }
  }
  return grad;
}

TrainResult train(const std::vector<Trajectory>& dataset, int n_states,
                  const TrainConfig& config, const DdoParams* warm_start) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!warm_start && config.n_options < 1)
    throw std::invalid_argument("n_options must be >= 1");
  TrainResult result;
  result.params = warm_start
                      ? *warm_start
                      : DdoParams::init(config.n_options, n_states,
                                        config.init_scale, config.seed);

  std::vector<double> rho;
  if (config.rho == RhoMode::kExpertVisitation) {
    rho = visitation_weights(dataset, n_states);
  } else {
    rho.assign(n_states, 1.0 / n_states);
  }

  auto record = [&]() {
    EpochStats stats;
    stats.log_likelihood = log_likelihood(result.params, dataset);
    stats.regularizer =
        config.lambda > 0.0 ? pairwise_kl_regularizer(result.params, rho) : 0.0;
    result.history.push_back(stats);
  };
  record();

  const int n = static_cast<int>(dataset.size());
  const int batch_size =
      (config.minibatch <= 0 || config.minibatch >= n) ? n : config.minibatch;
  std::mt19937_64 rng(config.seed + 0x9e3779b97f4a7c15ull);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch_size < n) std::shuffle(order.begin(), order.end(), rng);
    for (int begin = 0; begin < n; begin += batch_size) {
      const int end = std::min(begin + batch_size, n);
      std::vector<Trajectory> batch;
      batch.reserve(end - begin);
      for (int i = begin; i < end; ++i) batch.push_back(dataset[order[i]]);
      const DdoGradient grad =
          gradient(result.params, batch, config.lambda, rho);
      for (std::size_t i = 0; i < grad.eta.size(); ++i)
        result.params.eta_logits[i] += config.learning_rate * grad.eta[i];
      for (std::size_t i = 0; i < grad.pi.size(); ++i)
        result.params.pi_logits[i] += config.learning_rate * grad.pi[i];
      for (std::size_t i = 0; i < grad.psi.size(); ++i)
        result.params.psi_logits[i] += config.learning_rate * grad.psi[i];
    }
    record();
  }

  result.no_progress =
      result.history.back().log_likelihood <= result.history.front().log_likelihood &&
      config.epochs > 0;
  return result;
}

DdoParams scale_termination(DdoParams params, double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw BadAlpha("alpha must lie in (0,1], got " + std::to_string(alpha));
  params.termination_scale *= alpha;
  return params;
}

OptionSet extract_options(const DdoParams& params) {
  OptionSet set;
  for (int h = 0; h < params.n_options; ++h) {
    OptionDefinition option;
    option.label = "opt" + std::to_string(h);
    option.policy.resize(params.n_states);
    option.termination.resize(params.n_states);
    for (int s = 0; s < params.n_states; ++s) {
      option.policy[s] = params.pi(h, s);
      option.termination[s] = params.psi(h, s);
    }
    set.options.push_back(std::move(option));
  }
  return set;
}

}  // namespace optforge
