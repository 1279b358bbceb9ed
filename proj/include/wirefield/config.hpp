#pragma once

#include "wirefield/geometry.hpp"
#include "wirefield/localization.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wirefield {

/// Bad config file or value. `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, int line, const std::string& message);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

struct SceneSettings {
  std::string preset = "default";
  double edge_width = 0.04;
};

struct CameraSettings {
  int width = 64;
  int height = 64;
  double focal = 70.0;
};

/// Two robots driving arcs around the scene center, cameras mounted looking
/// inward.
struct TrajectorySettings {
  int frames_per_robot = 100;
  double radius = 3.0;
  double alpha_start_deg = 0.0;
  double alpha_end_deg = 200.0;
  double beta_start_deg = 180.0;
  double beta_end_deg = 380.0;
  /// Body origin (and antenna) height.
  double ground_height = -0.9;
  double camera_height = 0.8;
  double frame_period = 0.1;
  Vec3 scene_center{0.0, 0.0, -0.5};
};

struct WirelessSettings {
  double wavelength = 0.06;
  double aperture_radius = 0.3;
  int aperture_samples = 128;
  /// Frames between wireless refreshes.
  int refresh_every = 10;
  /// Per-measurement channel phase noise std is drawn uniformly from this range.
  double phase_noise_min = 0.2;
  double phase_noise_max = 2.4;
  double range_std = 0.05;
  double tolerance_noise = 0.5;
  double staleness_horizon = 1.0;
};

struct DriftSettings {
  /// Per-step translation noise std as a fraction of the step length.
  double translation_fraction = 0.005;
  double yaw_deg = 0.1;
};

struct WeightingSettings {
  WeightingMode mode = WeightingMode::kDownWeight;
  double anchor_weight = 0.5;
  double ci = 0.95;
};

struct TrainingSettings {
  int steps = 1500;
  int batch_size = 1024;
  double learning_rate = 5e-2;
  double final_lr_fraction = 0.05;
  int n_samples = 64;
  int grid = 48;
  int eval_every = 125;
  bool variance_head = false;
};

struct PlannerSettings {
  int candidates = 8;
  double step = 0.5;
  int rays = 256;
  double base_origin_std = 0.01;
  double origin_std_growth = 0.5;
  int initial_views_per_robot = 6;
  int captures_per_move = 4;
  int initial_steps = 1500;
  int steps_per_round = 400;
  int stabilization_window = 50;
  double stabilization_tolerance = 0.01;
  int max_wait_steps = 400;
  bool variance_head = true;
  /// Robots may only stand within this distance of the trajectory radius
  /// (horizontal distance from the scene center).
  double workspace_band = 0.5;
};

struct TestViewSettings {
  int count = 16;
  double radius = 3.0;
  double elevation_min_deg = 5.0;
  double elevation_max_deg = 20.0;
  double azimuth_offset_deg = 11.25;
};

struct SweepSettings {
  double noise_min = 0.01;
  double noise_max = 3.0;
  int levels = 12;
  int trials = 16;
  double source_distance = 4.0;
  /// Sliding-window width as a fraction of the observed κ range.
  double window_fraction = 0.1;
};

struct ExperimentConfig {
  std::string label = "A";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SceneSettings scene;
  CameraSettings camera;
  TrajectorySettings trajectory;
  WirelessSettings wireless;
  DriftSettings drift;
  WeightingSettings weighting;
  TrainingSettings training;
  PlannerSettings planner;
  TestViewSettings test_views;
  SweepSettings sweep;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Reads a YAML config. Missing keys keep their defaults; unknown keys and bad
/// values raise ConfigError with the source line.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

/// Canonical JSON text of every field (stable key order).
std::string config_to_json(const ExperimentConfig& config);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

bool valid_label(const std::string& label);

}  // namespace wirefield
