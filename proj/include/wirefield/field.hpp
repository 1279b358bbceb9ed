#pragma once

#include "wirefield/geometry.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace wirefield {

struct GridShape {
  int nx = 64;
  int ny = 64;
  int nz = 64;

  std::size_t voxels() const { return static_cast<std::size_t>(nx) * ny * nz; }
  bool operator==(const GridShape&) const = default;
};

/// Dense grid of raw parameters with trilinear interpolation. Grid points sit
/// on the box corners and are spaced (hi - lo) / (n - 1).
///
/// Per grid point, five raw values: density (softplus → σ ≥ 0), three color
/// logits (sigmoid → c ∈ [0,1]), and a log-variance (exp, clamped to
/// [β_min², β_max²]).
class VoxelField {
 public:
  static constexpr int kChannels = 5;
  enum Channel : int { kDensity = 0, kRed = 1, kGreen = 2, kBlue = 3, kLogVariance = 4 };

  struct Init {
    double density_raw = -3.0;
    double color_raw = 0.0;
    double log_variance = -1.3862943611198906;  // log 0.25
  };

  VoxelField(GridShape shape, Aabb bounds);
  VoxelField(GridShape shape, Aabb bounds, Init init);

  const GridShape& shape() const { return shape_; }
  const Aabb& bounds() const { return bounds_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::size_t index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(iz) * shape_.ny + iy) * shape_.nx + ix;
  }
  double& raw(int ix, int iy, int iz, int channel) {
    return params_[index(ix, iy, iz) * kChannels + channel];
  }
  double raw(int ix, int iy, int iz, int channel) const {
    return params_[index(ix, iy, iz) * kChannels + channel];
  }
  Vec3 grid_point(int ix, int iy, int iz) const;

  /// Trilinear stencil of a point: eight parameter offsets and weights.
  struct Stencil {
    std::array<std::uint32_t, 8> offset;
    std::array<double, 8> weight;
  };
  /// False when p lies outside the bounds.
  bool stencil(const Vec3& p, Stencil& out) const;
  /// Interpolated raw values at a stencil.
  std::array<double, kChannels> interpolate(const Stencil& s) const;

  double beta_min = 0.01;
  double beta_max = 1.0;

  double variance_from_raw(double log_variance) const;
  bool variance_clamped(double log_variance) const;

 private:
  GridShape shape_;
  Aabb bounds_;
  Vec3 inv_spacing_;
  std::vector<double> params_;
};

double softplus(double x);
double softplus_inverse(double y);
double logistic(double x);
double logit(double p);

struct RenderOptions {
  int n_samples = 64;
  Vec3 background = Vec3::Ones();
};

struct RenderResult {
  Vec3 color = Vec3::Zero();
  /// Pixel variance B² = β_min² + Σ α_i² β̄²_i.
  double variance = 0.0;
  std::vector<double> weights;
  /// Transmittance left after the last sample.
  double transmittance = 1.0;
  /// Sample depths matching `weights`.
  std::vector<double> depths;
  /// Per-sample point variance β̄²_i matching `weights`.
  std::vector<double> point_variances;
};

/// Stratified emission-absorption quadrature over the part of the ray inside
/// the field bounds. `jitter` (optional) places each sample uniformly inside
/// its stratum; otherwise samples sit at stratum midpoints. Each sample's
/// interval length is the stratum width.
RenderResult render(const VoxelField& field, const Ray& ray, const RenderOptions& options,
                    std::minstd_rand* jitter = nullptr);

/// Per-sample state of one rendered ray, kept for the backward pass.
struct RaySample {
  VoxelField::Stencil stencil;
  double depth = 0.0;
  double delta = 0.0;
  double raw_density = 0.0;
  double sigma = 0.0;
  double alpha = 0.0;
  double transmittance = 1.0;  // before this sample
  Vec3 color = Vec3::Zero();
  double variance = 0.0;
  bool variance_clamped = false;
};

struct RayTrace {
  std::vector<RaySample> samples;
  Vec3 color = Vec3::Zero();
  double variance = 0.0;
  double transmittance = 1.0;
  Vec3 background = Vec3::Ones();
};

void trace_ray(const VoxelField& field, const Ray& ray, const RenderOptions& options,
               std::minstd_rand* jitter, RayTrace& out);

/// Accumulates dL/dparams into `grad` given dL/dC and dL/dB² for a traced ray.
void backpropagate(const VoxelField& field, const RayTrace& trace, const Vec3& grad_color,
                   double grad_variance, std::span<double> grad);

// Snapshot layout (little-endian): magic "WFVF", u32 version, i32 nx ny nz,
// f64 bounds lo[3] hi[3], f32 beta_min beta_max, u32 channel count, then one
// f32 grid per channel in channel order, x fastest.
void save_field(const VoxelField& field, const std::string& path);
VoxelField load_field(const std::string& path);

}  // namespace wirefield
