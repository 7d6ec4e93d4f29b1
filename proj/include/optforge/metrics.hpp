#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "optforge/expert.hpp"
#include "optforge/gridworld.hpp"
#include "optforge/smdp.hpp"

namespace optforge {

class UndefinedState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class MismatchedDomains : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class Disconnected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Visitation-weighted cross-entropy of the agent's action distribution
// against the expert's greedy action. With a one-hot expert this equals the
// KL divergence between the two policies.
double cross_entropy_metric(const std::vector<int>& expert_actions,
                            const Policy& agent_dist,
                            const std::vector<double>& weights);

// (1/|S|) sum_s (min(V(s), V*(s)) - V*(s))^2 -- only shortfalls penalized.
double hinge_value_loss(const std::vector<double>& v_agent,
                        const std::vector<double>& v_expert);

struct TerminationStat {
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

std::vector<TerminationStat> termination_stats(const OptionSet& options);

struct UsageStats {
  double option_time_fraction = 0.0;
  double median_duration = 0.0;
  double mean_duration = 0.0;
  double success_rate = 0.0;
  bool no_option_segments = false;
};

UsageStats usage_stats(const std::vector<SegmentedRollout>& rollouts);

// Average expected hitting time over all ordered state pairs for the
// uniform random walk over the four primitives. Exact linear solve.
double diffusion_time_exact(const GridMap& map);

struct DiffusionEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double truncated_fraction = 0.0;
  int samples = 0;
};

// Monte-carlo estimate with uniform choices over primitives and options;
// walks are truncated at step_cap and the truncation fraction reported.
DiffusionEstimate diffusion_time_monte_carlo(const GridMap& map,
                                             const MdpSpec& spec,
                                             const OptionSet& options,
                                             int samples, std::uint64_t seed,
                                             int option_max_steps = 20,
                                             int step_cap = 100000);

struct Visitation {
  std::vector<std::int64_t> counts;       // per state
  std::vector<double> distribution;       // sums to 1
};

Visitation visitation_counts(const std::vector<SegmentedRollout>& rollouts,
                             int n_states);
Visitation visitation_counts(const std::vector<Trajectory>& trajectories,
                             int n_states);

// Per-state action frequencies pooled over rollouts, Laplace-smoothed so
// every action keeps nonzero mass.
Policy empirical_action_distribution(
    const std::vector<SegmentedRollout>& rollouts, int n_states,
    double smoothing = 1e-3);

struct MetricReport {
  double ce_error = 0.0;
  double hinge_loss = 0.0;
  std::vector<TerminationStat> per_option_termination;
  double option_time_fraction = 0.0;
  double median_option_duration = 0.0;
  double mean_option_duration = 0.0;
  double success_rate = 0.0;
  double diffusion_time = 0.0;           // exact, primitives only
  double diffusion_time_with_options = 0.0;  // monte-carlo
  std::vector<std::int64_t> visitation;
};

std::string report_to_text(const MetricReport& report);

}  // namespace optforge
