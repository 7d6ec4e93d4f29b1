#include "optforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

namespace optforge {

double cross_entropy_metric(const std::vector<int>& expert_actions,
                            const Policy& agent_dist,
                            const std::vector<double>& weights) {
  if (expert_actions.empty()) throw EmptyInput("no expert actions");
  if (agent_dist.size() != expert_actions.size() ||
      weights.size() != expert_actions.size())
    throw MismatchedDomains("expert, agent and weights cover different state sets");
  double total = 0.0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    if (weights[s] == 0.0) continue;
    const double p = agent_dist[s][expert_actions[s]];
    if (!(p > 0.0))
      throw UndefinedState("agent assigns zero mass to expert action at state " +
                           std::to_string(s));
    total += weights[s] * (-std::log(p));
  }
  return total;
}

double hinge_value_loss(const std::vector<double>& v_agent,
                        const std::vector<double>& v_expert) {
  if (v_agent.size() != v_expert.size())
    throw MismatchedDomains("value tables cover different state sets");
  double total = 0.0;
  for (std::size_t s = 0; s < v_expert.size(); ++s) {
    const double shortfall = std::min(v_agent[s], v_expert[s]) - v_expert[s];
    total += shortfall * shortfall;
  }
  return total / static_cast<double>(v_expert.size());
}

std::vector<TerminationStat> termination_stats(const OptionSet& options) {
  std::vector<TerminationStat> stats;
  for (const OptionDefinition& option : options.options) {
    const std::size_t n = option.termination.size();
    double mean = 0.0;
    for (double psi : option.termination) mean += psi;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double psi : option.termination) var += (psi - mean) * (psi - mean);
    var /= static_cast<double>(n);
    stats.push_back({mean, var});
  }
  return stats;
}

UsageStats usage_stats(const std::vector<SegmentedRollout>& rollouts) {
  if (rollouts.empty()) throw EmptyInput("no rollouts");
  UsageStats stats;
  std::int64_t option_steps = 0, all_steps = 0;
  std::vector<int> durations;
  int successes = 0;
  for (const SegmentedRollout& rollout : rollouts) {
    if (rollout.success) ++successes;
    for (const Segment& seg : rollout.segments) {
      all_steps += seg.duration;
      if (seg.choice >= kNumActions) {
        option_steps += seg.duration;
        durations.push_back(seg.duration);
      }
    }
  }
  stats.success_rate = static_cast<double>(successes) / rollouts.size();
  stats.option_time_fraction =
      all_steps > 0 ? static_cast<double>(option_steps) / all_steps : 0.0;
  if (durations.empty()) {
    stats.no_option_segments = true;
    return stats;
  }
  std::sort(durations.begin(), durations.end());
  const std::size_t mid = durations.size() / 2;
  stats.median_duration =
      durations.size() % 2 == 1
          ? durations[mid]
          : 0.5 * (durations[mid - 1] + durations[mid]);
  stats.mean_duration =
      std::accumulate(durations.begin(), durations.end(), 0.0) /
      durations.size();
  return stats;
}

double diffusion_time_exact(const GridMap& map) {
  const int n = map.n_states();
  // next-state distribution of the uniform primitive walk
  std::vector<std::array<int, kNumActions>> next(n);
  for (int s = 0; s < n; ++s)
    for (int a = 0; a < kNumActions; ++a) next[s][a] = apply_move(map, s, a);

  // connectivity check
  {
    std::vector<int> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      const int s = stack.back();
      stack.pop_back();
      for (int a = 0; a < kNumActions; ++a)
        if (!seen[next[s][a]]) {
          seen[next[s][a]] = 1;
          ++count;
          stack.push_back(next[s][a]);
        }
    }
    if (count != n) throw Disconnected("free-state graph is not connected");
  }

  double total = 0.0;
  for (int goal = 0; goal < n; ++goal) {
    // hitting times h solve (I - P') h = 1 on states != goal
    const int m = n - 1;
    auto reduced = [&](int s) { return s < goal ? s : s - 1; };
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Ones(m);
    for (int s = 0; s < n; ++s) {
      if (s == goal) continue;
      for (int a = 0; a < kNumActions; ++a) {
        const int t = next[s][a];
        if (t == goal) continue;
        A(reduced(s), reduced(t)) -= 1.0 / kNumActions;
      }
    }
    const Eigen::VectorXd h = A.partialPivLu().solve(b);
    total += h.sum();
  }
  return total / (static_cast<double>(n) * (n - 1));
}

DiffusionEstimate diffusion_time_monte_carlo(const GridMap& map,
                                             const MdpSpec& spec,
                                             const OptionSet& options,
                                             int samples, std::uint64_t seed,
                                             int option_max_steps,
                                             int step_cap) {
  if (samples <= 0) throw EmptyInput("samples must be positive");
  std::mt19937_64 rng(seed);
  const int n = map.n_states();
  std::uniform_int_distribution<int> any_state(0, n - 1);
  std::uniform_int_distribution<int> any_choice(0, options.n_choices() - 1);

  DiffusionEstimate estimate;
  estimate.samples = samples;
  double sum = 0.0, sum_sq = 0.0;
  int truncated = 0;
  for (int i = 0; i < samples; ++i) {
    int s = any_state(rng);
    int goal = any_state(rng);
    while (goal == s) goal = any_state(rng);
    EnvContext env{map, spec, goal};
    std::int64_t steps = 0;
    while (s != goal && steps < step_cap) {
      const int choice = any_choice(rng);
      if (options.is_option(choice)) {
        // execute_option stops as soon as the walk enters the goal
        const OptionExecution exec = execute_option(
            env, options.option_of(choice), s, rng, option_max_steps);
        steps += exec.duration;
        s = exec.next;
      } else {
        s = apply_move(map, s, choice);
        ++steps;
      }
    }
    if (s != goal) ++truncated;
    sum += static_cast<double>(steps);
    sum_sq += static_cast<double>(steps) * steps;
  }
  estimate.mean = sum / samples;
  const double var = std::max(0.0, sum_sq / samples - estimate.mean * estimate.mean);
  estimate.std_error = std::sqrt(var / samples);
  estimate.truncated_fraction = static_cast<double>(truncated) / samples;
  return estimate;
}

namespace {

Visitation counts_from_state_lists(
    const std::vector<const std::vector<int>*>& lists, int n_states) {
  Visitation visitation;
  visitation.counts.assign(n_states, 0);
  std::int64_t total = 0;
  for (const auto* states : lists)
    for (int s : *states) {
      ++visitation.counts[s];
      ++total;
    }
  visitation.distribution.assign(n_states, 0.0);
  if (total > 0)
    for (int s = 0; s < n_states; ++s)
      visitation.distribution[s] =
          static_cast<double>(visitation.counts[s]) / total;
  return visitation;
}

}  // namespace

Visitation visitation_counts(const std::vector<SegmentedRollout>& rollouts,
                             int n_states) {
  if (rollouts.empty()) throw EmptyInput("no rollouts");
  std::vector<const std::vector<int>*> lists;
  for (const SegmentedRollout& r : rollouts) lists.push_back(&r.flat.states);
  return counts_from_state_lists(lists, n_states);
}

Visitation visitation_counts(const std::vector<Trajectory>& trajectories,
                             int n_states) {
  if (trajectories.empty()) throw EmptyInput("no trajectories");
  std::vector<const std::vector<int>*> lists;
  for (const Trajectory& t : trajectories) lists.push_back(&t.states);
  return counts_from_state_lists(lists, n_states);
}

Policy empirical_action_distribution(
    const std::vector<SegmentedRollout>& rollouts, int n_states,
    double smoothing) {
  Policy dist(n_states);
  for (auto& d : dist) d.fill(smoothing);
  for (const SegmentedRollout& rollout : rollouts)
    for (std::size_t t = 0; t < rollout.flat.actions.size(); ++t)
      dist[rollout.flat.states[t]][rollout.flat.actions[t]] += 1.0;
  for (auto& d : dist) {
    const double total = d[0] + d[1] + d[2] + d[3];
    for (double& x : d) x /= total;
  }
  return dist;
}

std::string report_to_text(const MetricReport& report) {
  std::ostringstream out;
  out << "metric                     value\n";
  out << "-------------------------  ----------\n";
  auto row = [&](const char* name, double value) {
    out << name;
    for (std::size_t i = std::string(name).size(); i < 27; ++i) out << ' ';
    out << value << "\n";
  };
  row("ce_error", report.ce_error);
  row("hinge_loss", report.hinge_loss);
  row("option_time_fraction", report.option_time_fraction);
  row("median_option_duration", report.median_option_duration);
  row("mean_option_duration", report.mean_option_duration);
  row("success_rate", report.success_rate);
  row("diffusion_time", report.diffusion_time);
  row("diffusion_time_options", report.diffusion_time_with_options);
  out << "\noption  mean_psi  var_psi\n";
  for (std::size_t h = 0; h < report.per_option_termination.size(); ++h)
    out << "opt" << h << "    " << report.per_option_termination[h].mean
        << "  " << report.per_option_termination[h].variance << "\n";
  return out.str();
}

}  // namespace optforge
