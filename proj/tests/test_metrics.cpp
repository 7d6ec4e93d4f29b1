#include <doctest.h>

#include <cmath>

#include "optforge/metrics.hpp"

using namespace optforge;

namespace {

ActionDist uniform_dist() { return {0.25, 0.25, 0.25, 0.25}; }

ActionDist one_hot(int a) {
  ActionDist dist{};
  dist[a] = 1.0;
  return dist;
}

SegmentedRollout rollout_with(std::vector<Segment> segments,
                              std::vector<int> states,
                              std::vector<int> actions, bool success) {
  SegmentedRollout r;
  r.segments = std::move(segments);
  r.flat.states = std::move(states);
  r.flat.actions = std::move(actions);
  r.success = success;
  return r;
}

}  // namespace

TEST_CASE("cross entropy vanishes when the agent matches the expert") {
  const std::vector<int> expert = {0, 2, 1};
  const Policy agent = {one_hot(0), one_hot(2), one_hot(1)};
  const std::vector<double> w = {0.5, 0.3, 0.2};
  CHECK(cross_entropy_metric(expert, agent, w) == doctest::Approx(0.0));
}

TEST_CASE("cross entropy of a uniform agent is ln 4") {
  const std::vector<int> expert = {3, 0};
  const Policy agent = {uniform_dist(), uniform_dist()};
  const std::vector<double> w = {0.7, 0.3};
  CHECK(cross_entropy_metric(expert, agent, w) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy of half mass on the expert action is ln 2") {
  const std::vector<int> expert = {1};
  ActionDist half{};
  half[1] = 0.5;
  half[0] = half[2] = half[3] = 0.5 / 3.0;
  const Policy agent = {half};
  CHECK(cross_entropy_metric(expert, agent, {1.0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects zero agent mass on a weighted state") {
  const std::vector<int> expert = {1};
  const Policy agent = {one_hot(0)};
  CHECK_THROWS_AS(cross_entropy_metric(expert, agent, {1.0}), UndefinedState);
  // unweighted states are fine even with zero mass
  const std::vector<int> expert2 = {1, 0};
  const Policy agent2 = {one_hot(0), one_hot(0)};
  CHECK(cross_entropy_metric(expert2, agent2, {0.0, 1.0}) ==
        doctest::Approx(0.0));
}

TEST_CASE("cross entropy validates domain sizes") {
  CHECK_THROWS_AS(
      cross_entropy_metric({0, 1}, {uniform_dist()}, {0.5, 0.5}),
      MismatchedDomains);
  CHECK_THROWS_AS(cross_entropy_metric({}, {}, {}), EmptyInput);
}

TEST_CASE("hinge value loss penalizes shortfalls only") {
  const std::vector<double> expert = {1.0, 0.5};
  CHECK(hinge_value_loss(expert, expert) == doctest::Approx(0.0));
  // agent stuck at zero: mean of squared expert values
  CHECK(hinge_value_loss({0.0, 0.0}, expert) ==
        doctest::Approx((1.0 + 0.25) / 2.0).epsilon(1e-12));
  // overshoot is clipped to zero loss
  CHECK(hinge_value_loss({2.0, 0.9}, expert) == doctest::Approx(0.0));
  CHECK_THROWS_AS(hinge_value_loss({1.0}, expert), MismatchedDomains);
}

TEST_CASE("termination stats report per-option mean and variance") {
  OptionSet set;
  OptionDefinition flat;
  flat.termination = {0.5, 0.5, 0.5};
  flat.policy.assign(3, uniform_dist());
  OptionDefinition split;
  split.termination = {0.2, 0.8};
  split.policy.assign(2, uniform_dist());
  set.options = {flat, split};
  const auto stats = termination_stats(set);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].mean == doctest::Approx(0.5));
  CHECK(stats[0].variance == doctest::Approx(0.0));
  CHECK(stats[1].mean == doctest::Approx(0.5));
  CHECK(stats[1].variance == doctest::Approx(0.09).epsilon(1e-12));
}

TEST_CASE("usage stats flag rollouts that never choose an option") {
  std::vector<SegmentedRollout> rollouts = {rollout_with(
      {{kEast, 0, 1, 0.0}, {kEast, 1, 1, 1.0}}, {0, 1, 2}, {1, 1}, true)};
  const UsageStats stats = usage_stats(rollouts);
  CHECK(stats.no_option_segments);
  CHECK(stats.option_time_fraction == doctest::Approx(0.0));
  CHECK(stats.success_rate == doctest::Approx(1.0));
}

TEST_CASE("usage stats compute option share and duration median") {
  // 10 primitive steps and two option segments of 5 steps each
  std::vector<Segment> segs;
  int offset = 0;
  for (int i = 0; i < 10; ++i) segs.push_back({0, offset++, 1, 0.0});
  segs.push_back({4, offset, 5, 0.0});
  offset += 5;
  segs.push_back({5, offset, 5, 0.0});
  offset += 5;
  std::vector<int> states(offset + 1, 0);
  std::vector<int> actions(offset, 0);
  std::vector<SegmentedRollout> rollouts = {
      rollout_with(segs, states, actions, false)};
  const UsageStats stats = usage_stats(rollouts);
  CHECK(!stats.no_option_segments);
  CHECK(stats.option_time_fraction == doctest::Approx(0.5));
  CHECK(stats.median_duration == doctest::Approx(5.0));
  CHECK(stats.mean_duration == doctest::Approx(5.0));
  CHECK(stats.success_rate == doctest::Approx(0.0));
}

TEST_CASE("exact diffusion time on a two-cell corridor is four") {
  const GridMap map = parse_map("####\n#..#\n####");
  // from either cell the walk moves to the other with chance 1/4 per step,
  // so each ordered pair has expected hitting time 4
  CHECK(diffusion_time_exact(map) == doctest::Approx(4.0).epsilon(1e-10));
}

TEST_CASE("exact diffusion time on a three-cell corridor matches a hand solve") {
  const GridMap map = parse_map("#####\n#...#\n#####");
  // hand solve: toward an end cell h_far = 12, h_mid = 8; toward the middle
  // cell h_end = 4; average over the six ordered pairs is 8
  const double expected = (12.0 + 8.0 + 8.0 + 12.0 + 4.0 + 4.0) / 6.0;
  CHECK(diffusion_time_exact(map) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("disconnected maps are rejected by the exact solver") {
  const GridMap map = parse_map("#####\n#.#.#\n#####");
  CHECK_THROWS_AS(diffusion_time_exact(map), Disconnected);
}

TEST_CASE("monte-carlo diffusion agrees with the exact value") {
  const GridMap map = parse_map("#####\n#...#\n#####");
  MdpSpec spec;
  OptionSet primitives_only;
  const double exact = diffusion_time_exact(map);
  const DiffusionEstimate est = diffusion_time_monte_carlo(
      map, spec, primitives_only, 4000, /*seed=*/17);
  CHECK(est.samples == 4000);
  CHECK(est.truncated_fraction == doctest::Approx(0.0));
  CHECK(std::abs(est.mean - exact) < 3 * est.std_error + 1e-9);
}

TEST_CASE("visitation counts normalize to a distribution") {
  Trajectory xi;
  xi.states = {0, 1, 2, 3, 4};
  xi.actions = {0, 0, 0, 0};
  const Visitation vis = visitation_counts(std::vector<Trajectory>{xi}, 6);
  REQUIRE(vis.counts.size() == 6);
  for (int s = 0; s < 5; ++s) {
    CHECK(vis.counts[s] == 1);
    CHECK(vis.distribution[s] == doctest::Approx(0.2));
  }
  CHECK(vis.counts[5] == 0);
}

TEST_CASE("visitation distribution is invariant to dataset duplication") {
  Trajectory xi;
  xi.states = {0, 0, 1};
  xi.actions = {0, 0};
  const Visitation once = visitation_counts(std::vector<Trajectory>{xi}, 2);
  const Visitation twice =
      visitation_counts(std::vector<Trajectory>{xi, xi}, 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(twice.counts[s] == 2 * once.counts[s]);
    CHECK(twice.distribution[s] == doctest::Approx(once.distribution[s]));
  }
}

TEST_CASE("empirical action distribution pools and smooths frequencies") {
  std::vector<SegmentedRollout> rollouts = {
      rollout_with({}, {0, 1, 0, 1}, {kEast, kWest, kEast}, true)};
  const Policy dist = empirical_action_distribution(rollouts, 2, 1e-3);
  // state 0 chose east twice; with smoothing mass stays near but below 1
  CHECK(dist[0][kEast] > 0.99);
  CHECK(dist[0][kEast] < 1.0);
  double total = 0.0;
  for (int a = 0; a < 4; ++a) {
    CHECK(dist[0][a] > 0.0);
    total += dist[0][a];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // unseen states fall back to uniform
  for (int a = 0; a < 4; ++a) {
    CHECK(dist[1][a] > 0.0);
  }
}

TEST_CASE("report text includes the headline numbers") {
  MetricReport report;
  report.ce_error = 0.125;
  report.hinge_loss = 0.5;
  report.per_option_termination = {{0.3, 0.01}};
  const std::string text = report_to_text(report);
  CHECK(text.find("0.125") != std::string::npos);
  CHECK(text.find("0.5") != std::string::npos);
}
