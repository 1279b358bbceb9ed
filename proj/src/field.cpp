#include "wirefield/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wirefield {

namespace {

constexpr char kMagic[4] = {'W', 'F', 'V', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("field snapshot truncated");
  return value;
}

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

VoxelField::VoxelField(GridShape shape, Aabb bounds) : VoxelField(shape, bounds, Init{}) {}

VoxelField::VoxelField(GridShape shape, Aabb bounds, Init init)
    : shape_(shape), bounds_(bounds) {
  if (shape.nx < 2 || shape.ny < 2 || shape.nz < 2) {
    throw std::invalid_argument("VoxelField: each axis needs at least 2 grid points");
  }
  if (!((bounds.hi.array() > bounds.lo.array()).all())) {
    throw std::invalid_argument("VoxelField: empty bounds");
  }
  const Vec3 n(shape.nx - 1, shape.ny - 1, shape.nz - 1);
  inv_spacing_ = n.cwiseQuotient(bounds.hi - bounds.lo);
  params_.resize(shape.voxels() * kChannels);
  for (std::size_t v = 0; v < shape.voxels(); ++v) {
    double* p = &params_[v * kChannels];
    p[kDensity] = init.density_raw;
    p[kRed] = p[kGreen] = p[kBlue] = init.color_raw;
    p[kLogVariance] = init.log_variance;
  }
}

Vec3 VoxelField::grid_point(int ix, int iy, int iz) const {
  return bounds_.lo + Vec3(ix, iy, iz).cwiseQuotient(inv_spacing_);
}

bool VoxelField::stencil(const Vec3& p, Stencil& out) const {
  if (!bounds_.contains(p)) return false;
  const Vec3 u = (p - bounds_.lo).cwiseProduct(inv_spacing_);
  const int n[3] = {shape_.nx, shape_.ny, shape_.nz};
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::min(static_cast<int>(std::floor(u[a])), n[a] - 2);
    i0[a] = std::max(i0[a], 0);
    f[a] = std::clamp(u[a] - i0[a], 0.0, 1.0);
  }
  int k = 0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx, ++k) {
        out.offset[k] = static_cast<std::uint32_t>(
            index(i0[0] + dx, i0[1] + dy, i0[2] + dz) * kChannels);
        out.weight[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) *
                        (dz ? f[2] : 1.0 - f[2]);
      }
    }
  }
  return true;
}

std::array<double, VoxelField::kChannels> VoxelField::interpolate(const Stencil& s) const {
  std::array<double, kChannels> v{};
  for (int k = 0; k < 8; ++k) {
    const double* p = &params_[s.offset[k]];
    const double w = s.weight[k];
    for (int c = 0; c < kChannels; ++c) v[c] += w * p[c];
  }
  return v;
}

double VoxelField::variance_from_raw(double log_variance) const {
  return std::clamp(std::exp(log_variance), beta_min * beta_min, beta_max * beta_max);
}

bool VoxelField::variance_clamped(double log_variance) const {
  const double v = std::exp(log_variance);
  return v <= beta_min * beta_min || v >= beta_max * beta_max;
}

void trace_ray(const VoxelField& field, const Ray& ray, const RenderOptions& options,
               std::minstd_rand* jitter, RayTrace& out) {
  out.samples.clear();
  out.background = options.background;
  out.color = options.background;
  out.variance = field.beta_min * field.beta_min;
  out.transmittance = 1.0;

  double t0 = 0.0;
  double t1 = 0.0;
  if (options.n_samples <= 0 || !field.bounds().clip(ray, t0, t1)) return;

  const int n = options.n_samples;
  const double width = (t1 - t0) / n;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  out.samples.reserve(n);
  Vec3 color = Vec3::Zero();
  double variance = out.variance;
  double log_t = 0.0;  // log transmittance before the current sample
  for (int i = 0; i < n; ++i) {
    const double offset = jitter ? u01(*jitter) : 0.5;
    RaySample s;
    s.depth = t0 + (i + offset) * width;
    s.delta = width;
    if (!field.stencil(ray.at(s.depth), s.stencil)) {
      // Rounding at the box faces; clamp back inside.
      const Vec3 p = ray.at(s.depth).cwiseMax(field.bounds().lo).cwiseMin(field.bounds().hi);
      field.stencil(p, s.stencil);
    }
    const auto raw = field.interpolate(s.stencil);
    s.raw_density = raw[VoxelField::kDensity];
    s.sigma = softplus(s.raw_density);
    s.transmittance = std::exp(log_t);
    const double tau = s.sigma * s.delta;
    s.alpha = s.transmittance * -std::expm1(-tau);
    s.color = Vec3(logistic(raw[VoxelField::kRed]), logistic(raw[VoxelField::kGreen]),
                   logistic(raw[VoxelField::kBlue]));
    s.variance = field.variance_from_raw(raw[VoxelField::kLogVariance]);
    s.variance_clamped = field.variance_clamped(raw[VoxelField::kLogVariance]);
    color += s.alpha * s.color;
    variance += s.alpha * s.alpha * s.variance;
    log_t -= tau;
    out.samples.push_back(s);
  }
  out.transmittance = std::exp(log_t);
  out.color = color + out.transmittance * options.background;
  out.variance = variance;
}

RenderResult render(const VoxelField& field, const Ray& ray, const RenderOptions& options,
                    std::minstd_rand* jitter) {
  RayTrace trace;
  trace_ray(field, ray, options, jitter, trace);
  RenderResult r;
  r.color = trace.color;
  r.variance = trace.variance;
  r.transmittance = trace.transmittance;
  r.weights.reserve(trace.samples.size());
  r.depths.reserve(trace.samples.size());
  r.point_variances.reserve(trace.samples.size());
  for (const auto& s : trace.samples) {
    r.weights.push_back(s.alpha);
    r.depths.push_back(s.depth);
    r.point_variances.push_back(s.variance);
  }
  return r;
}

void backpropagate(const VoxelField& field, const RayTrace& trace, const Vec3& grad_color,
                   double grad_variance, std::span<double> grad) {
  (void)field;
  // Suffix sums over samples after k: Σ α_i c_i + T_final·bg and Σ α_i² β̄²_i.
  Vec3 suffix_color = trace.transmittance * trace.background;
  double suffix_var = 0.0;
  for (std::size_t k = trace.samples.size(); k-- > 0;) {
    const RaySample& s = trace.samples[k];
    const double t_next = s.transmittance * std::exp(-s.sigma * s.delta);

    const double d_tau = grad_color.dot(t_next * s.color - suffix_color) +
                         grad_variance * 2.0 * (s.alpha * s.variance * t_next - suffix_var);
    const double d_density = d_tau * s.delta * logistic(s.raw_density);
    double d_color[3];
    for (int c = 0; c < 3; ++c) {
      d_color[c] = grad_color[c] * s.alpha * s.color[c] * (1.0 - s.color[c]);
    }
    const double d_logvar =
        s.variance_clamped ? 0.0 : grad_variance * s.alpha * s.alpha * s.variance;

    for (int j = 0; j < 8; ++j) {
      double* g = &grad[s.stencil.offset[j]];
      const double w = s.stencil.weight[j];
      g[VoxelField::kDensity] += w * d_density;
      g[VoxelField::kRed] += w * d_color[0];
      g[VoxelField::kGreen] += w * d_color[1];
      g[VoxelField::kBlue] += w * d_color[2];
      g[VoxelField::kLogVariance] += w * d_logvar;
    }
    suffix_color += s.alpha * s.color;
    suffix_var += s.alpha * s.alpha * s.variance;
  }
}

void save_field(const VoxelField& field, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write field snapshot: " + path);
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::int32_t>(os, field.shape().nx);
  write_le<std::int32_t>(os, field.shape().ny);
  write_le<std::int32_t>(os, field.shape().nz);
  for (int a = 0; a < 3; ++a) write_le<double>(os, field.bounds().lo[a]);
  for (int a = 0; a < 3; ++a) write_le<double>(os, field.bounds().hi[a]);
  write_le<float>(os, static_cast<float>(field.beta_min));
  write_le<float>(os, static_cast<float>(field.beta_max));
  write_le<std::uint32_t>(os, VoxelField::kChannels);
  const auto params = field.params();
  for (int c = 0; c < VoxelField::kChannels; ++c) {
    for (std::size_t v = 0; v < field.shape().voxels(); ++v) {
      write_le<float>(os, static_cast<float>(params[v * VoxelField::kChannels + c]));
    }
  }
}

VoxelField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read field snapshot: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not a field snapshot");
  if (read_le<std::uint32_t>(is) != kVersion) throw std::runtime_error("unsupported snapshot version");
  GridShape shape;
  shape.nx = read_le<std::int32_t>(is);
  shape.ny = read_le<std::int32_t>(is);
  shape.nz = read_le<std::int32_t>(is);
  Aabb bounds;
  for (int a = 0; a < 3; ++a) bounds.lo[a] = read_le<double>(is);
  for (int a = 0; a < 3; ++a) bounds.hi[a] = read_le<double>(is);
  VoxelField field(shape, bounds);
  field.beta_min = read_le<float>(is);
  field.beta_max = read_le<float>(is);
  if (read_le<std::uint32_t>(is) != VoxelField::kChannels) {
    throw std::runtime_error("snapshot channel count mismatch");
  }
  auto params = field.params();
  for (int c = 0; c < VoxelField::kChannels; ++c) {
    for (std::size_t v = 0; v < shape.voxels(); ++v) {
      params[v * VoxelField::kChannels + c] = read_le<float>(is);
    }
  }
  return field;
}

}  // namespace wirefield
