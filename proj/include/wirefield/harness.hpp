#pragma once

#include "wirefield/config.hpp"
#include "wirefield/field.hpp"
#include "wirefield/localization.hpp"
#include "wirefield/scene.hpp"
#include "wirefield/stats.hpp"
#include "wirefield/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wirefield {

/// Failure inside an experiment pipeline; carries what is needed to rerun it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::uint64_t seed, const std::string& message);
  const std::string& stage() const { return stage_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::string stage_;
  std::uint64_t seed_;
};

/// Independent RNG stream for (seed, purpose).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct RobotTrajectory {
  std::string id;
  /// Ground-truth body poses in the world (x forward, z up).
  std::vector<StampedPose> poses;
  double odometry_translation_fraction = 0.0;
  double odometry_yaw_std = 0.0;

  void validate() const;
  std::size_t size() const { return poses.size(); }
};

/// Body poses on a counter-clockwise arc around the scene center, heading
/// along the tangent.
RobotTrajectory arc_trajectory(const std::string& id, const TrajectorySettings& settings,
                               double start_deg, double end_deg);

/// Body-to-camera transform: camera raised by camera_height, looking left
/// (toward the arc center) and pitched down at the scene center.
Pose camera_mount(const TrajectorySettings& settings);

/// Odometry relative to the first pose: L_k = P_0⁻¹ P_k.
std::vector<Pose> local_odometry(const RobotTrajectory& trajectory);

/// Odometry with accumulated per-step noise: translation std proportional to
/// the step length (x, y only) and yaw std in radians.
std::vector<Pose> drifted_odometry(std::span<const Pose> odometry, double translation_fraction,
                                   double yaw_std, std::uint64_t seed);

/// Held-out views on a ring around the scene center at alternating elevations.
std::vector<Pose> test_view_poses(const TestViewSettings& settings, const Vec3& center);

/// Antenna positions of an in-place rotation: a horizontal circle around the
/// body origin.
std::vector<Pose> circular_aperture(double radius, int samples);

/// One simulated AoA estimate from a synthetic aperture.
struct AoaObservation {
  double azimuth = 0.0;
  double kappa = 1.0;
  /// Wrapped difference from the true azimuth (radians).
  double error = 0.0;
};

/// Measures the azimuth of `source_body` (a point in the receiver's body
/// frame, assumed coplanar) with the configured aperture and phase noise.
AoaObservation observe_aoa(const Vec3& source_body, const WirelessSettings& settings,
                           double phase_noise_std, std::uint64_t seed);

/// Range + reciprocal AoA exchange between the anchor and the peer.
struct WirelessExchange {
  int frame = 0;
  double phase_noise_std = 0.0;
  WirelessMeasurement forward;  // anchor observes peer
  WirelessMeasurement reverse;  // peer observes anchor
  double forward_error = 0.0;
  double reverse_error = 0.0;
};

WirelessExchange simulate_exchange(const Pose& anchor_body, const Pose& peer_body, int frame,
                                   double timestamp, const WirelessSettings& settings,
                                   std::uint64_t seed);

/// Measurement used for the error ellipse: the forward one with the larger of
/// the two directions' κ.
WirelessMeasurement combined_measurement(const WirelessExchange& exchange);

/// Rendered ground truth shared by every setup for a given scene/trajectory.
struct Dataset {
  SyntheticScene scene;
  CameraModel camera;
  Pose mount;
  RobotTrajectory alpha;
  RobotTrajectory beta;
  std::vector<Image> alpha_images;
  std::vector<Image> beta_images;
  std::vector<ValidationView> test_views;
};

SyntheticScene make_scene(const SceneSettings& settings);

/// Hash of the settings that determine the rendered images.
std::string dataset_key(const ExperimentConfig& config);

/// Renders the dataset, or loads it from `cache_dir` when a matching cache
/// file exists (written otherwise). An empty path disables caching.
Dataset prepare_dataset(const ExperimentConfig& config,
                        const std::filesystem::path& cache_dir = {});

struct MetricsReport {
  std::string label;
  std::uint64_t seed = 0;
  std::string config_hash;
  double psnr = 0.0;
  double ssim = 0.0;
  std::vector<double> view_psnr;
  std::vector<TrainRecord> curve;
  int recoveries = 0;
  bool interrupted = false;
  /// Mean camera-position error of the training poses (meters).
  double mean_position_error = 0.0;
  std::vector<WeightedFrame> frames;
  std::vector<WirelessExchange> exchanges;

  /// PSNR recorded closest to `fraction` of the total steps.
  double psnr_at_fraction(double fraction) const;
};

struct SetupResult {
  MetricsReport report;
  VoxelField field;
};

/// Training frames for a setup label: poses per the label's pipeline,
/// weights per the label's loss mode. Fills `exchanges`.
std::vector<WeightedFrame> build_setup_frames(const ExperimentConfig& config,
                                              const Dataset& dataset, const std::string& label,
                                              std::uint64_t seed,
                                              std::vector<WirelessExchange>& exchanges);

/// Frames weighted below this are excluded from training.
inline constexpr double kMinFrameWeight = 1e-6;

/// Runs setup `config.label` for one seed and evaluates on the test views.
SetupResult run_setup(const ExperimentConfig& config, std::uint64_t seed, const Dataset& dataset);

void write_report_json(std::ostream& os, const MetricsReport& report);
/// CSV with header step,loss,psnr.
void write_curve_csv(std::ostream& os, const MetricsReport& report);

enum class ViewPolicy { kBestView, kRandom };
const char* policy_name(ViewPolicy policy);

struct RoundMetrics {
  int round = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  int total_steps = 0;
  int views = 0;
};

struct ActiveLoopReport {
  ViewPolicy policy = ViewPolicy::kBestView;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<RoundMetrics> rounds;  // round 0 is the baseline
  /// One JSON object per (round, robot) decision.
  std::vector<std::string> decisions;
  bool interrupted = false;
};

struct ActiveLoopResult {
  ActiveLoopReport report;
  VoxelField field;
};

/// Sparse initial views, then per round each robot proposes candidates,
/// picks one by `policy`, captures images along the move and training resumes.
ActiveLoopResult run_active_loop(const ExperimentConfig& config, std::uint64_t seed,
                                 const Dataset& dataset, int rounds, ViewPolicy policy);

void write_active_report_json(std::ostream& os, const ActiveLoopReport& report);

struct SweepTrial {
  double noise_std = 0.0;
  int trial = 0;
  double true_azimuth = 0.0;
  double estimated_azimuth = 0.0;
  double error = 0.0;  // wrapped, radians
  double kappa = 0.0;
};

struct CorrelationReport {
  std::vector<SweepTrial> trials;
  double spearman = 0.0;
  double window_width = 0.0;
  std::vector<WindowStat> windows;
  PowerFit fit;
};

/// `count` evenly spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int count);

/// For each noise level and trial: a coplanar source at a random azimuth, the
/// measured AoA and κ. Fits y = a·κ^b to the windowed error variance.
CorrelationReport correlation_study(std::span<const double> noise_levels, int trials,
                                    std::uint64_t seed, const WirelessSettings& wireless,
                                    const SweepSettings& sweep);

/// CSV with header noise_std,trial,true_azimuth,estimated_azimuth,error,kappa.
void write_sweep_csv(std::ostream& os, const CorrelationReport& report);
void write_sweep_json(std::ostream& os, const CorrelationReport& report);

}  // namespace wirefield
