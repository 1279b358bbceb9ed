#include "wirefield/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace wirefield;

namespace {

int error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string error_field(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("empty text gives the defaults") {
  const ExperimentConfig c = parse_config("");
  CHECK(c.label == "A");
  CHECK(c.seeds.size() == 5);
  CHECK(c.training.grid == ExperimentConfig{}.training.grid);
  CHECK(config_hash(c) == config_hash(ExperimentConfig{}));
}

TEST_CASE("nested values override defaults") {
  const ExperimentConfig c = parse_config(
      "label: D\n"
      "seeds: [7, 8]\n"
      "training:\n"
      "  steps: 300\n"
      "  variance_head: true\n"
      "trajectory:\n"
      "  scene_center: [0, 0.5, -0.2]\n"
      "weighting:\n"
      "  mode: up-weight\n");
  CHECK(c.label == "D");
  CHECK(c.seeds == std::vector<std::uint64_t>{7, 8});
  CHECK(c.training.steps == 300);
  CHECK(c.training.variance_head);
  CHECK(c.trajectory.scene_center == Vec3(0, 0.5, -0.2));
  CHECK(c.weighting.mode == WeightingMode::kUpWeight);
}

TEST_CASE("unknown keys are reported with their line") {
  CHECK(error_line("label: A\ntraining:\n  stepz: 3\n") == 3);
  CHECK(error_field("label: A\ntraining:\n  stepz: 3\n") == "training.stepz");
  CHECK(error_field("bogus: 1\n") == "bogus");
}

TEST_CASE("bad values name the field and the line") {
  CHECK(error_line("camera:\n  width: wide\n") == 2);
  CHECK(error_field("camera:\n  width: wide\n") == "camera.width");
  CHECK(error_field("label: Q\n") == "label");
  CHECK(error_line("label: Q\n") == 1);
  CHECK(error_field("sweep:\n  trials: 4\n") == "sweep.trials");
  CHECK(error_line("sweep:\n  trials: 4\n") == 2);
  CHECK(error_field("weighting:\n  mode: both\n") == "weighting.mode");
  CHECK(error_field("trajectory:\n  scene_center: [1, 2]\n") == "trajectory.scene_center");
  CHECK(error_field("training: 5\n") == "training");
}

TEST_CASE("yaml syntax errors carry a line") {
  CHECK(error_line("label: A\ntraining:\n  steps: [1, 2\n") > 0);
}

TEST_CASE("diagnostic text starts with the line") {
  try {
    parse_config("\n\nplanner:\n  step: -1\n");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).rfind("line 4: planner.step:", 0) == 0);
  }
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(load_config("/nonexistent/wirefield.yaml"), ConfigError);
}

TEST_CASE("load from disk") {
  const auto path = std::filesystem::temp_directory_path() / "wirefield_config_test.yaml";
  std::ofstream(path) << "label: C\nseeds: [3]\n";
  const ExperimentConfig c = load_config(path.string());
  std::filesystem::remove(path);
  CHECK(c.label == "C");
  CHECK(c.seeds == std::vector<std::uint64_t>{3});
}

TEST_CASE("canonical json and hash") {
  ExperimentConfig a;
  ExperimentConfig b;
  CHECK(config_to_json(a) == config_to_json(b));
  CHECK(config_hash(a).size() == 16);
  b.training.steps += 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_to_json(a).find("\"training\"") != std::string::npos);
}

TEST_CASE("labels") {
  for (const char* l : {"A", "B", "C", "D"}) CHECK(valid_label(l));
  CHECK_FALSE(valid_label("E"));
  CHECK_FALSE(valid_label("a"));
}
