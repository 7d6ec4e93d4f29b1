#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "optforge/config.hpp"
#include "optforge/pipeline.hpp"

using namespace optforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("optforge_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.map_path = std::string(OPTFORGE_ASSET_DIR) + "/tworoom.map";
  cfg.expert_trajectories = 20;
  cfg.ddo.n_options = 2;
  cfg.ddo.epochs = 20;
  cfg.smdp.episodes = 300;
  cfg.eval_tasks = 5;
  cfg.eval_diffusion_samples = 50;
  cfg.seed = 12345;
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("parameter artifacts round-trip bitwise") {
  const fs::path dir = scratch_dir("params_rt");
  DdoParams params = DdoParams::init(3, 7, 0.8, 99);
  params = scale_termination(std::move(params), 0.37);
  const std::string path = (dir / "p.json").string();
  save_params(path, params);
  const DdoParams loaded = load_params(path);
  CHECK(loaded.n_options == params.n_options);
  CHECK(loaded.n_states == params.n_states);
  CHECK(loaded.eta_logits == params.eta_logits);
  CHECK(loaded.pi_logits == params.pi_logits);
  CHECK(loaded.psi_logits == params.psi_logits);
  CHECK(loaded.termination_scale == params.termination_scale);
  // saving the loaded copy reproduces the same bytes
  const std::string path2 = (dir / "p2.json").string();
  save_params(path2, loaded);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("q-table artifacts round-trip bitwise") {
  const fs::path dir = scratch_dir("qtable_rt");
  SmdpQTable table;
  table.n_states = 3;
  table.n_choices = 5;
  table.q = {0.1, -2.5, 1.0 / 3.0, 0, 4e-17, 1, 2, 3, 4, 5,
             -0.125, 6, 7, 8, 9};
  table.visits = {1, 0, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  const std::string path = (dir / "q.json").string();
  save_qtable(path, table);
  const SmdpQTable loaded = load_qtable(path);
  CHECK(loaded.q == table.q);
  CHECK(loaded.visits == table.visits);
  const std::string path2 = (dir / "q2.json").string();
  save_qtable(path2, loaded);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("future artifact versions are refused") {
  const fs::path dir = scratch_dir("version");
  DdoParams params = DdoParams::init(2, 2, 0.1, 1);
  const std::string path = (dir / "p.json").string();
  save_params(path, params);
  nlohmann::json j = nlohmann::json::parse(slurp(path));
  j["version"] = 2;
  std::ofstream(path) << j.dump(2);
  CHECK_THROWS_AS(load_params(path), VersionMismatch);
}

TEST_CASE("corrupt artifacts are rejected") {
  const fs::path dir = scratch_dir("corrupt");
  const std::string path = (dir / "p.json").string();
  std::ofstream(path) << "{\"version\": 1, \"kind\": \"ddo_par";
  CHECK_THROWS_AS(load_params(path), Corrupt);

  // wrong kind
  SmdpQTable table;
  table.n_states = 1;
  table.n_choices = 4;
  table.q.assign(4, 0.0);
  table.visits.assign(4, 0);
  save_qtable(path, table);
  CHECK_THROWS_AS(load_params(path), Corrupt);

  // shape metadata that contradicts the arrays
  DdoParams params = DdoParams::init(2, 2, 0.1, 1);
  save_params(path, params);
  nlohmann::json j = nlohmann::json::parse(slurp(path));
  j["n_states"] = 5;
  std::ofstream(path) << j.dump(2);
  CHECK_THROWS_AS(load_params(path), Corrupt);

  CHECK_THROWS_AS(load_params((dir / "missing.json").string()), Corrupt);
}

TEST_CASE("ascii render shows walls, arrows and the goal") {
  const GridMap map = parse_map("#####\n#...#\n#####");
  Policy east(3);
  for (auto& dist : east) dist = {0.0, 1.0, 0.0, 0.0};
  const std::string out =
      render_policy(map, east, RenderFormat::kAscii, nullptr, /*goal=*/2);
  CHECK(out == "#####\n#>>G#\n#####\n");
}

TEST_CASE("ascii render breaks argmax ties toward north") {
  const GridMap map = parse_map("####\n#..#\n####");
  Policy uniform(2, ActionDist{0.25, 0.25, 0.25, 0.25});
  const std::string out = render_policy(map, uniform, RenderFormat::kAscii);
  CHECK(out == "####\n#^^#\n####\n");
}

TEST_CASE("svg render is a well-formed document with one rect per cell") {
  const GridMap map = parse_map("####\n#..#\n####");
  Policy east(2, ActionDist{0.0, 1.0, 0.0, 0.0});
  std::vector<double> term = {0.0, 1.0};
  const std::string svg =
      render_policy(map, east, RenderFormat::kSvg, &term, /*goal=*/1);
  CHECK(svg.rfind("<?xml", 0) == 0);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t rects = 0, pos = 0;
  while ((pos = svg.find("<rect", pos)) != std::string::npos) {
    ++rects;
    pos += 5;
  }
  CHECK(rects == 12);  // every wall and free cell
  CHECK(svg.find("circle") != std::string::npos);  // goal marker
}

TEST_CASE("config files parse with comments and defaults") {
  const fs::path dir = scratch_dir("config");
  const std::string path = (dir / "exp.cfg").string();
  std::ofstream(path) << "# experiment\n"
                      << "discount = 0.95\n"
                      << "ddo.n_options = 4  # four latent modes\n"
                      << "seed = 7\n";
  const ExperimentConfig cfg = load_config(path);
  CHECK(cfg.mdp.discount == doctest::Approx(0.95));
  CHECK(cfg.ddo.n_options == 4);
  CHECK(cfg.seed == 7);
  CHECK(cfg.expert_trajectories == 200);  // untouched default
}

TEST_CASE("config validation rejects bad values and unknown keys") {
  CHECK_THROWS_AS(parse_config({{"discount", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"slip_prob", "-0.1"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"ddo.alpha", "0"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"ddo.alpha", "1.2"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"ddo.lambda", "-1"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"ddo.rho", "sometimes"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"discount", "abc"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"loop.warm_start", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"no.such.key", "1"}}), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/exp.cfg"), ConfigError);
}

TEST_CASE("environment variables override config file values") {
  setenv("OPTFORGE_DDO_N_OPTIONS", "9", 1);
  const ExperimentConfig cfg = parse_config({{"ddo.n_options", "3"}});
  unsetenv("OPTFORGE_DDO_N_OPTIONS");
  CHECK(cfg.ddo.n_options == 9);
}

TEST_CASE("config round-trips through save and load") {
  const fs::path dir = scratch_dir("config_rt");
  ExperimentConfig cfg = tiny_config(dir / "out");
  cfg.ddo.lambda = 0.015625;
  cfg.mdp.slip_prob = 0.1;
  cfg.loop_warm_start = false;
  const std::string path = (dir / "exp.cfg").string();
  save_config(path, cfg);
  const ExperimentConfig loaded = load_config(path);
  CHECK(config_to_kv(loaded) == config_to_kv(cfg));
}

TEST_CASE("pipeline writes every artifact and is reproducible") {
  const fs::path a = scratch_dir("pipe_rerun");

  const PipelineArtifacts first = run_pipeline(tiny_config(a));
  std::map<std::string, std::string> snapshot;
  for (const auto& entry : fs::directory_iterator(a))
    snapshot[entry.path().filename().string()] = slurp(entry.path());
  fs::remove_all(a);
  run_pipeline(tiny_config(a));

  for (const char* name :
       {"trajectories.jsonl", "ddo_params.json", "ddo_history.csv",
        "qtable.json", "eval_rollouts.jsonl", "metrics.json", "metrics.txt",
        "termination.csv", "usage.csv", "options_ascii.txt",
        "manifest.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(a / name));
    REQUIRE(snapshot.count(name) == 1);
    CHECK(slurp(a / name) == snapshot.at(name));
  }
  for (const auto& option : first.options.options)
    CHECK(fs::exists(a / (option.label + ".svg")));
  CHECK(first.options.options.size() == 2);
  CHECK(first.qtable.n_choices == 6);
  CHECK(static_cast<int>(first.eval_rollouts.size()) == 5);
}

TEST_CASE("a single-iteration loop reproduces the one-shot pipeline") {
  const fs::path one = scratch_dir("oneshot");
  const fs::path loop = scratch_dir("loop1");

  run_pipeline(tiny_config(one));
  ExperimentConfig cfg = tiny_config(loop);
  cfg.loop_iterations = 1;
  cfg.loop_rollouts = 0;
  cfg.loop_sample_size = 0;
  const auto iterations = run_iterated(cfg);
  REQUIRE(iterations.size() == 1);
  CHECK(iterations[0].buffer_size == 20);

  CHECK(slurp(one / "ddo_params.json") ==
        slurp(loop / "iter0" / "ddo_params.json"));
  CHECK(slurp(one / "qtable.json") == slurp(loop / "iter0" / "qtable.json"));
  CHECK(slurp(one / "metrics.json") == slurp(loop / "iter0" / "metrics.json"));
}

TEST_CASE("the trajectory buffer grows by the rollout count each iteration") {
  const fs::path dir = scratch_dir("loop_buffer");
  ExperimentConfig cfg = tiny_config(dir);
  cfg.loop_iterations = 3;
  cfg.loop_rollouts = 4;
  cfg.loop_sample_size = 10;
  cfg.ddo.epochs = 5;
  cfg.smdp.episodes = 100;
  cfg.eval_tasks = 2;
  const auto iterations = run_iterated(cfg);
  REQUIRE(iterations.size() == 3);
  CHECK(iterations[0].buffer_size == 24);
  CHECK(iterations[1].buffer_size == 28);
  CHECK(iterations[2].buffer_size == 32);
  for (const auto& record : iterations)
    CHECK(std::isfinite(record.heldout_log_likelihood));
  CHECK(fs::exists(dir / "iter2" / "metrics.json"));
}

TEST_CASE("stage failures carry the stage name") {
  ExperimentConfig cfg = tiny_config(scratch_dir("stagefail"));
  cfg.ddo.n_options = 2;
  cfg.ddo.epochs = -1;  // train must reject this
  bool caught = false;
  try {
    run_pipeline(cfg);
  } catch (const StageError& e) {
    caught = true;
    CHECK(e.stage() == "ddo");
  }
  CHECK(caught);
}
