#include "wirefield/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wirefield {

namespace {

// Occupancy in [0, 1] from the signed inside distance.
double occupancy(double inside, double edge_width) {
  if (edge_width <= 0.0) return inside >= 0.0 ? 1.0 : 0.0;
  return logistic(inside / edge_width);
}

}  // namespace

double Primitive::inside_distance(const Vec3& p) const {
  if (kind == Kind::kSphere) return size.x() - (p - center).norm();
  const Vec3 q = (p - center).cwiseAbs() - size;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return -(outside + inside);
}

void SyntheticScene::validate() const {
  if (!((bounds.hi.array() > bounds.lo.array()).all())) {
    throw std::invalid_argument("scene bounds are empty");
  }
  if (edge_width < 0.0) throw std::invalid_argument("scene edge_width must be >= 0");
  auto in_unit = [](const Vec3& c) { return (c.array() >= 0.0).all() && (c.array() <= 1.0).all(); };
  if (!in_unit(background)) throw std::invalid_argument("scene background outside [0,1]");
  for (const auto& p : primitives) {
    if (!in_unit(p.color)) throw std::invalid_argument("primitive '" + p.name + "' color outside [0,1]");
    if (!(p.density >= 0.0) || !std::isfinite(p.density)) {
      throw std::invalid_argument("primitive '" + p.name + "' density must be finite and >= 0");
    }
    if (!((p.size.array() > 0.0).all())) {
      throw std::invalid_argument("primitive '" + p.name + "' size must be positive");
    }
  }
}

double SyntheticScene::density(const Vec3& p) const {
  double sigma = 0.0;
  for (const auto& prim : primitives) {
    sigma += prim.density * occupancy(prim.inside_distance(p), edge_width);
  }
  return sigma;
}

Vec3 SyntheticScene::color(const Vec3& p) const {
  Vec3 mix = Vec3::Zero();
  double total = 0.0;
  for (const auto& prim : primitives) {
    const double w = prim.density * occupancy(prim.inside_distance(p), edge_width);
    mix += w * prim.color;
    total += w;
  }
  return total > 1e-12 ? Vec3(mix / total) : background;
}

SyntheticScene default_scene() {
  using K = Primitive::Kind;
  SyntheticScene s;
  s.bounds = Aabb{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  s.primitives = {
      {K::kBox, "floor", {0.0, 0.0, -0.85}, {0.9, 0.9, 0.08}, {0.55, 0.5, 0.45}, 40.0},
      {K::kSphere, "red", {0.35, 0.3, -0.47}, {0.3, 0.3, 0.3}, {0.85, 0.15, 0.1}, 40.0},
      {K::kSphere, "green", {-0.45, 0.35, -0.55}, {0.22, 0.22, 0.22}, {0.15, 0.7, 0.2}, 40.0},
      {K::kSphere, "blue", {0.1, -0.4, -0.5}, {0.27, 0.27, 0.27}, {0.15, 0.25, 0.85}, 40.0},
      {K::kBox, "pillar", {-0.4, -0.3, -0.4}, {0.14, 0.14, 0.37}, {0.9, 0.8, 0.15}, 40.0},
  };
  return s;
}

Image render_ground_truth(const SyntheticScene& scene, const CameraModel& camera,
                          const Pose& pose, int n_samples) {
  if (n_samples <= 0) throw std::invalid_argument("render_ground_truth: n_samples must be > 0");
  Image image(camera.width, camera.height, scene.background);
  std::size_t index = 0;
  for (const Ray& ray : pixel_rays(camera, pose)) {
    const std::size_t i = index++;
    double t0 = 0.0;
    double t1 = 0.0;
    if (!scene.bounds.clip(ray, t0, t1)) continue;
    const double width = (t1 - t0) / n_samples;
    Vec3 color = Vec3::Zero();
    double transmittance = 1.0;
    for (int k = 0; k < n_samples && transmittance > 1e-7; ++k) {
      const Vec3 p = ray.at(t0 + (k + 0.5) * width);
      const double sigma = scene.density(p);
      if (sigma <= 0.0) continue;
      const double alpha = -std::expm1(-sigma * width);
      color += transmittance * alpha * scene.color(p);
      transmittance *= 1.0 - alpha;
    }
    image.set(i, color + transmittance * scene.background);
  }
  return image;
}

void fit_field_to_scene(const SyntheticScene& scene, VoxelField& field) {
  const GridShape& g = field.shape();
  auto params = field.params();
  constexpr double kEps = 1e-4;
  for (int iz = 0; iz < g.nz; ++iz) {
    for (int iy = 0; iy < g.ny; ++iy) {
      for (int ix = 0; ix < g.nx; ++ix) {
        const Vec3 p = field.grid_point(ix, iy, iz);
        double* v = &params[field.index(ix, iy, iz) * VoxelField::kChannels];
        v[VoxelField::kDensity] = softplus_inverse(std::max(scene.density(p), 1e-6));
        const Vec3 c = scene.color(p).cwiseMax(kEps).cwiseMin(1.0 - kEps);
        v[VoxelField::kRed] = logit(c.x());
        v[VoxelField::kGreen] = logit(c.y());
        v[VoxelField::kBlue] = logit(c.z());
      }
    }
  }
}

}  // namespace wirefield
