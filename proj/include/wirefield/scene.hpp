#pragma once

#include "wirefield/geometry.hpp"
#include "wirefield/field.hpp"
#include "wirefield/image.hpp"

#include <string>
#include <vector>

namespace wirefield {

/// Soft-edged solid: density ramps from 0 to `density` across `edge_width`
/// around the surface.
struct Primitive {
  enum class Kind { kSphere, kBox };

  Kind kind = Kind::kSphere;
  std::string name;
  Vec3 center = Vec3::Zero();
  /// Sphere: x is the radius. Box: half extents.
  Vec3 size = Vec3::Constant(0.25);
  Vec3 color = Vec3::Constant(0.5);
  double density = 40.0;

  /// Positive inside, negative outside (exact for spheres, a bound for boxes).
  double inside_distance(const Vec3& p) const;
};

/// Analytic emission-absorption field made of colored primitives.
struct SyntheticScene {
  Aabb bounds;
  Vec3 background = Vec3::Ones();
  /// Width of the density ramp at each surface; 0 gives hard edges.
  double edge_width = 0.04;
  std::vector<Primitive> primitives;

  void validate() const;

  double density(const Vec3& p) const;
  /// Density-weighted mix of the primitive colors; background where empty.
  Vec3 color(const Vec3& p) const;
};

/// Three spheres and a box resting on a floor slab inside [-1, 1]³.
SyntheticScene default_scene();

inline constexpr int kGroundTruthSamples = 256;

/// Ray-marches the analytic field at stratum midpoints. Deterministic.
Image render_ground_truth(const SyntheticScene& scene, const CameraModel& camera,
                          const Pose& pose, int n_samples = kGroundTruthSamples);

/// Sets each grid point of `field` to the scene's density and color there, so
/// the voxel renderer can be compared with the analytic one directly.
void fit_field_to_scene(const SyntheticScene& scene, VoxelField& field);

}  // namespace wirefield
