#pragma once

#include <optional>
#include <string>
#include <vector>

#include "optforge/config.hpp"
#include "optforge/ddo.hpp"
#include "optforge/metrics.hpp"
#include "optforge/smdp.hpp"

namespace optforge {

class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class Corrupt : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Versioned JSON persistence. load(save(x)) is bitwise for every float.
void save_params(const std::string& path, const DdoParams& params);
DdoParams load_params(const std::string& path);
void save_qtable(const std::string& path, const SmdpQTable& table);
SmdpQTable load_qtable(const std::string& path);
void save_report(const std::string& path, const MetricReport& report);

enum class RenderFormat { kAscii, kSvg };

// Arrow map of the argmax action per free cell; SVG additionally shades
// cells by termination probability when one is supplied.
std::string render_policy(const GridMap& map, const Policy& policy,
                          RenderFormat format,
                          const std::vector<double>* termination = nullptr,
                          int goal = -1);

struct PipelineArtifacts {
  GridMap map;
  std::vector<Trajectory> expert_dataset;
  DdoParams params;
  OptionSet options;
  SmdpQTable qtable;
  std::vector<SegmentedRollout> eval_rollouts;
  MetricReport report;
  int eval_goal = -1;
};

// Algorithm: expert -> dataset -> DDO -> extract options -> SMDP -> metrics.
// Every artifact is written under cfg.out_dir together with a manifest.
PipelineArtifacts run_pipeline(const ExperimentConfig& cfg);

struct IterationArtifacts {
  DdoParams params;
  SmdpQTable qtable;
  MetricReport report;
  double heldout_log_likelihood = 0.0;
  std::size_t buffer_size = 0;
};

// Iterated loop: the trajectory buffer starts with the expert dataset and
// grows by loop_rollouts agent trajectories per iteration; DDO params are
// warm-started across iterations when loop_warm_start is set.
std::vector<IterationArtifacts> run_iterated(const ExperimentConfig& cfg);

}  // namespace optforge
