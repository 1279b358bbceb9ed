#pragma once

#include "wirefield/field.hpp"
#include "wirefield/image.hpp"
#include "wirefield/localization.hpp"

#include <array>
#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace wirefield {

struct TrainBatch {
  std::vector<Ray> rays;
  std::vector<Vec3> targets;
  std::vector<double> weights;

  void validate() const;
  std::size_t size() const { return rays.size(); }
};

struct LossOptions {
  RenderOptions render;
  /// Heteroscedastic NLL (trains the variance head) instead of weighted MSE.
  bool variance_head = false;
  /// Non-zero: jitter samples per ray from this seed; zero: stratum midpoints.
  std::uint64_t jitter_seed = 0;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Σ_i w_i ℓ_i, where ℓ = ‖C − C̄‖² (plain) or
/// ℓ = ‖C − C̄‖² / (2B²) + ½ ln B² (variance head).
double loss(const VoxelField& field, const TrainBatch& batch, const LossOptions& options);

/// Same value as loss(); adds dL/dparams into `grad` (resized if needed).
double loss_and_gradient(const VoxelField& field, const TrainBatch& batch,
                         const LossOptions& options, std::vector<double>& grad);

/// Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t size, double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad, double learning_rate);
  std::int64_t iterations() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  std::int64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct TrainConfig {
  int steps = 1500;
  int batch_size = 1024;
  double learning_rate = 5e-2;
  /// Cosine decay ends at learning_rate * final_lr_fraction.
  double final_lr_fraction = 0.05;
  int n_samples = 64;
  bool variance_head = false;
  Vec3 background = Vec3::Ones();
  std::uint64_t seed = 1;
  /// Steps between validation evaluations (0 disables).
  int eval_every = 250;
  int stabilization_window = 50;
  double stabilization_tolerance = 0.01;
  int max_recoveries = 3;
};

struct TrainRecord {
  int step = 0;
  double loss = 0.0;
  double psnr = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<TrainRecord> records;   // evaluation points
  std::vector<double> step_losses;    // every step
  int recoveries = 0;
  bool interrupted = false;

  void write_csv(std::ostream& os) const;
};

struct TrainingView {
  WeightedFrame frame;
  Image image;
};

struct ValidationView {
  Pose pose;
  Image image;
};

class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Renders a full image from the field at stratum midpoints.
Image render_image(const VoxelField& field, const CameraModel& camera, const Pose& pose,
                   const RenderOptions& options);

/// Mean PSNR / SSIM of the field over a set of views.
struct ImageMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
};
ImageMetrics evaluate_views(const VoxelField& field, const CameraModel& camera,
                            std::span<const ValidationView> views, const RenderOptions& options);

/// Stochastic minibatch trainer over random pixel rays. Holds the optimizer
/// state so training can resume after views are added.
class Trainer {
 public:
  Trainer(VoxelField& field, CameraModel camera, TrainConfig config);

  void add_view(TrainingView view);
  void set_validation(std::vector<ValidationView> views);
  std::span<const TrainingView> views() const { return views_; }

  /// Runs `steps` optimizer steps with a cosine schedule spanning this call.
  /// Records validation PSNR every config.eval_every steps and at the end.
  TrainHistory run(int steps);
  TrainHistory run() { return run(config_.steps); }

  /// Relative change between the mean loss of the last two windows < tolerance.
  bool loss_stabilized() const;

  int global_step() const { return global_step_; }
  const TrainConfig& config() const { return config_; }
  const CameraModel& camera() const { return camera_; }
  RenderOptions render_options() const { return {config_.n_samples, config_.background}; }

  /// Set from a signal handler; run() returns early with history.interrupted.
  static std::atomic<bool>& interrupt_flag();

 private:
  TrainBatch sample_batch();

  VoxelField& field_;
  CameraModel camera_;
  TrainConfig config_;
  Adam adam_;
  std::mt19937_64 rng_;
  std::vector<TrainingView> views_;
  std::vector<ValidationView> validation_;
  std::vector<double> grad_;
  std::vector<double> recent_losses_;
  int global_step_ = 0;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  /// Worst error per raw channel (density, r, g, b, log-variance).
  std::array<double, VoxelField::kChannels> channel_error{};
  std::size_t parameters = 0;
};

/// Compares loss_and_gradient with central differences of loss() on a random
/// grid³ field and `rays` random rays through it. Relative error is
/// |a − n| / max(|a|, |n|, floor).
GradientCheckResult gradient_check(int grid, int rays, bool variance_head, std::uint64_t seed,
                                   double step = 1e-4, double floor = 1e-6);

/// One-shot training run over weighted frames and their images.
TrainHistory train(VoxelField& field, std::span<const WeightedFrame> frames,
                   std::span<const Image> images, const CameraModel& camera,
                   const TrainConfig& config, std::vector<ValidationView> validation = {});

}  // namespace wirefield
