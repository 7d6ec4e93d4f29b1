#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "optforge/expert.hpp"
#include "optforge/gridworld.hpp"
#include "optforge/smdp.hpp"

namespace optforge {

class DegenerateLikelihood : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadAlpha : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Logit parameterization of the meta-policy eta(h|s), option policies
// pi_h(a|s) and termination probabilities psi_h(s). termination_scale is
// the alpha readout factor; logits are never rescaled.
struct DdoParams {
  int n_options = 0;
  int n_states = 0;
  int n_actions = kNumActions;
  std::vector<double> eta_logits;  // [s * H + h]
  std::vector<double> pi_logits;   // [(h * S + s) * A + a]
  std::vector<double> psi_logits;  // [h * S + s]
  double termination_scale = 1.0;

  std::vector<double> eta(int s) const;
  ActionDist pi(int h, int s) const;
  double psi(int h, int s) const;  // termination_scale * sigmoid(logit)

  static DdoParams init(int n_options, int n_states, double init_scale,
                        std::uint64_t seed);
};

struct PosteriorTables {
  // u[t][h] = P(h_t=h | xi), v[t][h] = P(b_t=1, h_t=h | xi),
  // w[t][h] = P(b_{t+1}=0, h_t=h | xi). u,v have T rows, w has T-1.
  std::vector<std::vector<double>> u, v, w;
  std::vector<std::vector<double>> phi_scaled;    // T rows
  std::vector<std::vector<double>> omega_scaled;  // T rows
  std::vector<double> normalizers;                // c_0..c_T
  double log_likelihood = 0.0;
};

// Scaled forward-backward pass over one trajectory; dynamics factors are
// elided throughout (they cancel in every posterior ratio).
PosteriorTables forward_backward(const DdoParams& params,
                                 const Trajectory& xi);

// Exhaustive enumeration of latent (b,h) sequences; guard H^T <= 1e6.
PosteriorTables brute_force_posteriors(const DdoParams& params,
                                       const Trajectory& xi);

double log_likelihood(const DdoParams& params,
                      const std::vector<Trajectory>& dataset);

// Same layout as the logits in DdoParams.
struct DdoGradient {
  std::vector<double> eta;
  std::vector<double> pi;
  std::vector<double> psi;
};

// Gradient of  mean_xi L(theta; xi) + lambda * E_rho[sum_{i!=j} KL(pi_i || pi_j)]
// with respect to all logits. rho_weights is a distribution over states.
DdoGradient gradient(const DdoParams& params,
                     const std::vector<Trajectory>& dataset, double lambda,
                     const std::vector<double>& rho_weights);

// E_rho[sum_{i!=j} KL(pi_i(.|s) || pi_j(.|s))], ordered pairs.
double pairwise_kl_regularizer(const DdoParams& params,
                               const std::vector<double>& rho_weights);

// Empirical state-visitation distribution of a trajectory dataset.
std::vector<double> visitation_weights(const std::vector<Trajectory>& dataset,
                                       int n_states);

enum class RhoMode { kExpertVisitation, kUniform };

struct TrainConfig {
  int n_options = 6;
  double learning_rate = 0.2;
  int epochs = 300;
  int minibatch = 0;  // 0 = full batch
  double lambda = 0.0;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  double init_scale = 0.1;
  RhoMode rho = RhoMode::kExpertVisitation;
};

struct EpochStats {
  double log_likelihood = 0.0;
  double regularizer = 0.0;
};

struct TrainResult {
  DdoParams params;
  std::vector<EpochStats> history;  // entry 0 is the pre-training value
  bool no_progress = false;
};

// Fixed-rate gradient ascent, minibatched by trajectory. config.alpha is
// not consumed here; callers apply scale_termination before extraction so
// warm-started retraining never compounds the scale.
TrainResult train(const std::vector<Trajectory>& dataset, int n_states,
                  const TrainConfig& config,
                  const DdoParams* warm_start = nullptr);

DdoParams scale_termination(DdoParams params, double alpha);

OptionSet extract_options(const DdoParams& params);

}  // namespace optforge
