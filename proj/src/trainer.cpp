#include "wirefield/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace wirefield {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct RayLoss {
  double value = 0.0;
  Vec3 grad_color = Vec3::Zero();
  double grad_variance = 0.0;
};

RayLoss ray_loss(const RayTrace& trace, const Vec3& target, double weight, bool variance_head) {
  RayLoss out;
  const Vec3 residual = trace.color - target;
  const double sq = residual.squaredNorm();
  if (!variance_head) {
    out.value = weight * sq;
    out.grad_color = 2.0 * weight * residual;
    return out;
  }
  const double b2 = trace.variance;
  out.value = weight * (sq / (2.0 * b2) + 0.5 * std::log(b2));
  out.grad_color = weight * residual / b2;
  out.grad_variance = weight * (0.5 / b2 - sq / (2.0 * b2 * b2));
  return out;
}

template <typename OnRay>
double accumulate_loss(const VoxelField& field, const TrainBatch& batch, const LossOptions& options,
                       OnRay&& on_ray) {
  batch.validate();
  RayTrace trace;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::minstd_rand jitter(static_cast<std::uint32_t>(mix_seed(options.jitter_seed, i)));
    trace_ray(field, batch.rays[i], options.render, options.jitter_seed ? &jitter : nullptr,
              trace);
    const RayLoss rl = ray_loss(trace, batch.targets[i], batch.weights[i], options.variance_head);
    if (!std::isfinite(rl.value)) {
      std::ostringstream msg;
      msg << "non-finite loss at ray " << i << ": color=(" << trace.color.transpose()
          << ") variance=" << trace.variance;
      throw NonFiniteLossError(msg.str());
    }
    total += rl.value;
    on_ray(trace, rl);
  }
  return total;
}

}  // namespace

void TrainBatch::validate() const {
  if (targets.size() != rays.size() || weights.size() != rays.size()) {
    throw std::invalid_argument("TrainBatch: rays, targets and weights differ in length");
  }
  for (double w : weights) {
    if (!(w > 0.0)) throw std::invalid_argument("TrainBatch: weights must be positive");
  }
}

double loss(const VoxelField& field, const TrainBatch& batch, const LossOptions& options) {
  return accumulate_loss(field, batch, options, [](const RayTrace&, const RayLoss&) {});
}

double loss_and_gradient(const VoxelField& field, const TrainBatch& batch,
                         const LossOptions& options, std::vector<double>& grad) {
  if (grad.size() != field.params().size()) grad.assign(field.params().size(), 0.0);
  return accumulate_loss(field, batch, options, [&](const RayTrace& trace, const RayLoss& rl) {
    backpropagate(field, trace, rl.grad_color, rl.grad_variance, grad);
  });
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double learning_rate) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double step_size = learning_rate / c1;
  const double inv_c2 = 1.0 / c2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    params[i] -= step_size * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps_);
  }
}

void TrainHistory::write_csv(std::ostream& os) const {
  os.precision(10);
  os << "step,loss,psnr\n";
  for (const auto& r : records) {
    os << r.step << ',' << r.loss << ',';
    if (std::isfinite(r.psnr)) os << r.psnr;
    os << '\n';
  }
}

Image render_image(const VoxelField& field, const CameraModel& camera, const Pose& pose,
                   const RenderOptions& options) {
  Image image(camera.width, camera.height);
  RayTrace trace;
  std::size_t i = 0;
  for (const Ray& ray : pixel_rays(camera, pose)) {
    trace_ray(field, ray, options, nullptr, trace);
    image.set(i++, trace.color);
  }
  return image;
}

ImageMetrics evaluate_views(const VoxelField& field, const CameraModel& camera,
                            std::span<const ValidationView> views, const RenderOptions& options) {
  ImageMetrics m;
  if (views.empty()) return m;
  for (const auto& v : views) {
    const Image rendered = render_image(field, camera, v.pose, options);
    m.psnr += psnr(rendered, v.image);
    m.ssim += ssim(rendered, v.image);
  }
  m.psnr /= static_cast<double>(views.size());
  m.ssim /= static_cast<double>(views.size());
  return m;
}

Trainer::Trainer(VoxelField& field, CameraModel camera, TrainConfig config)
    : field_(field),
      camera_(camera),
      config_(config),
      adam_(field.params().size()),
      rng_(config.seed),
      grad_(field.params().size(), 0.0) {
  if (config.batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be > 0");
}

std::atomic<bool>& Trainer::interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

void Trainer::add_view(TrainingView view) {
  if (view.image.width() != camera_.width || view.image.height() != camera_.height) {
    throw std::invalid_argument("training image does not match the camera dimensions");
  }
  if (!(view.frame.weight > 0.0)) throw std::invalid_argument("training view weight must be > 0");
  views_.push_back(std::move(view));
}

void Trainer::set_validation(std::vector<ValidationView> views) { validation_ = std::move(views); }

TrainBatch Trainer::sample_batch() {
  TrainBatch batch;
  batch.rays.reserve(config_.batch_size);
  batch.targets.reserve(config_.batch_size);
  batch.weights.reserve(config_.batch_size);
  std::uniform_int_distribution<std::size_t> pick_view(0, views_.size() - 1);
  std::uniform_int_distribution<int> pick_x(0, camera_.width - 1);
  std::uniform_int_distribution<int> pick_y(0, camera_.height - 1);
  for (int i = 0; i < config_.batch_size; ++i) {
    const TrainingView& v = views_[pick_view(rng_)];
    const int x = pick_x(rng_);
    const int y = pick_y(rng_);
    batch.rays.push_back(camera_ray(camera_, v.frame.pose, x + 0.5, y + 0.5));
    batch.targets.push_back(v.image.pixel(x, y));
    batch.weights.push_back(v.frame.weight);
  }
  return batch;
}

bool Trainer::loss_stabilized() const {
  const std::size_t w = static_cast<std::size_t>(config_.stabilization_window);
  if (w == 0 || recent_losses_.size() < 2 * w) return false;
  double prev = 0.0;
  double last = 0.0;
  const std::size_t n = recent_losses_.size();
  for (std::size_t i = 0; i < w; ++i) {
    prev += recent_losses_[n - 2 * w + i];
    last += recent_losses_[n - w + i];
  }
  return std::abs(last - prev) < config_.stabilization_tolerance * std::abs(prev);
}

TrainHistory Trainer::run(int steps) {
  if (views_.empty()) throw std::invalid_argument("Trainer: no training views");
  TrainHistory history;
  const RenderOptions render = render_options();
  LossOptions loss_options{render, config_.variance_head, 0};

  std::vector<double> checkpoint(field_.params().begin(), field_.params().end());
  Adam checkpoint_adam = adam_;
  std::mt19937_64 checkpoint_rng = rng_;
  double lr_scale = 1.0;
  double loss_accum = 0.0;
  int loss_count = 0;

  auto record = [&] {
    TrainRecord r;
    r.step = global_step_;
    r.loss = loss_count ? loss_accum / loss_count : 0.0;
    if (!validation_.empty()) r.psnr = evaluate_views(field_, camera_, validation_, render).psnr;
    history.records.push_back(r);
    loss_accum = 0.0;
    loss_count = 0;
  };

  for (int step = 0; step < steps; ++step) {
    if (interrupt_flag().load()) {
      history.interrupted = true;
      break;
    }
    const double progress = steps > 1 ? static_cast<double>(step) / (steps - 1) : 1.0;
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    const double lr = lr_scale * config_.learning_rate *
                      (config_.final_lr_fraction + (1.0 - config_.final_lr_fraction) * cosine);

    TrainBatch batch = sample_batch();
    loss_options.jitter_seed = rng_() | 1u;
    std::fill(grad_.begin(), grad_.end(), 0.0);
    double value = 0.0;
    bool finite = true;
    try {
      value = loss_and_gradient(field_, batch, loss_options, grad_) / batch.size();
    } catch (const NonFiniteLossError&) {
      finite = false;
    }
    if (finite) {
      for (double g : grad_) {
        if (!std::isfinite(g)) {
          finite = false;
          break;
        }
      }
    }
    if (!finite) {
      if (++history.recoveries > config_.max_recoveries) {
        throw TrainingDivergedError("training diverged after " +
                                    std::to_string(config_.max_recoveries) + " recoveries");
      }
      std::copy(checkpoint.begin(), checkpoint.end(), field_.params().begin());
      adam_ = checkpoint_adam;
      rng_ = checkpoint_rng;
      lr_scale *= 0.5;
      continue;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad_) g *= inv;
    adam_.step(field_.params(), grad_, lr);
    ++global_step_;
    history.step_losses.push_back(value);
    recent_losses_.push_back(value);
    if (recent_losses_.size() > 4 * static_cast<std::size_t>(config_.stabilization_window + 1)) {
      recent_losses_.erase(recent_losses_.begin(),
                           recent_losses_.begin() + config_.stabilization_window);
    }
    loss_accum += value;
    ++loss_count;

    if (config_.eval_every > 0 && (step + 1) % config_.eval_every == 0 && step + 1 < steps) {
      record();
      checkpoint.assign(field_.params().begin(), field_.params().end());
      checkpoint_adam = adam_;
      checkpoint_rng = rng_;
    }
  }
  record();
  return history;
}

GradientCheckResult gradient_check(int grid, int rays, bool variance_head, std::uint64_t seed,
                                   double step, double floor) {
  if (grid < 2) throw std::invalid_argument("gradient_check: grid must be >= 2");
  if (rays < 1) throw std::invalid_argument("gradient_check: need at least one ray");
  std::mt19937_64 rng(seed);
  VoxelField field({grid, grid, grid}, Aabb{});
  // Log-variance stays clear of the clamp, where the derivative has a kink.
  std::uniform_real_distribution<double> density(-1.0, 2.0), color(-2.0, 2.0), logvar(-4.0, -1.0);
  for (int iz = 0; iz < grid; ++iz) {
    for (int iy = 0; iy < grid; ++iy) {
      for (int ix = 0; ix < grid; ++ix) {
        field.raw(ix, iy, iz, VoxelField::kDensity) = density(rng);
        for (int c = VoxelField::kRed; c <= VoxelField::kBlue; ++c) field.raw(ix, iy, iz, c) = color(rng);
        field.raw(ix, iy, iz, VoxelField::kLogVariance) = logvar(rng);
      }
    }
  }

  TrainBatch batch;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0), inner(-0.5, 0.5);
  for (int i = 0; i < rays; ++i) {
    const Vec3 dir = Vec3(normal(rng), normal(rng), normal(rng)).normalized();
    const Vec3 through(inner(rng), inner(rng), inner(rng));
    batch.rays.emplace_back(through - 3.0 * dir, dir, 0.0, 6.0);
    batch.targets.emplace_back(u01(rng), u01(rng), u01(rng));
    batch.weights.push_back(0.25 + 0.5 * u01(rng));
  }

  const LossOptions options{RenderOptions{8, Vec3::Ones()}, variance_head, 0};
  std::vector<double> analytic;
  loss_and_gradient(field, batch, options, analytic);

  GradientCheckResult result;
  auto params = field.params();
  result.parameters = params.size();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + step;
    const double up = loss(field, batch, options);
    params[i] = saved - step;
    const double down = loss(field, batch, options);
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    double& channel = result.channel_error[i % VoxelField::kChannels];
    channel = std::max(channel, err);
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

TrainHistory train(VoxelField& field, std::span<const WeightedFrame> frames,
                   std::span<const Image> images, const CameraModel& camera,
                   const TrainConfig& config, std::vector<ValidationView> validation) {
  if (frames.empty()) throw std::invalid_argument("train: need at least one frame");
  if (frames.size() != images.size()) throw std::invalid_argument("train: frames/images mismatch");
  Trainer trainer(field, camera, config);
  for (std::size_t i = 0; i < frames.size(); ++i) trainer.add_view({frames[i], images[i]});
  trainer.set_validation(std::move(validation));
  return trainer.run();
}

}  // namespace wirefield
