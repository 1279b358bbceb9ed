#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <iosfwd>
#include <string>
#include <vector>

namespace wirefield {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Rigid SE(3) pose: x_target = rotation * x_source + translation.
///
/// The rotation is kept orthonormal with det = +1; the constructor rejects
/// matrices that are off by more than 1e-9.
class Pose {
 public:
  Pose();
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return Pose(); }
  static Pose from_translation(const Vec3& t);
  /// Rotation about +z by `yaw` radians.
  static Pose from_yaw(double yaw, const Vec3& t = Vec3::Zero());
  static Pose from_axis_angle(const Vec3& axis, double angle, const Vec3& t = Vec3::Zero());
  /// Camera pose at `eye` whose +z optical axis points at `target`, with image
  /// y pointing as close to -`up` as possible.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  /// Heading of the body x-axis projected onto the world x-y plane.
  double yaw() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Same representation as Pose, used as a frame-change operator.
using RigidTransform = Pose;

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

/// a ⊕ b: pose `b` re-expressed through frame change `a`.
Pose compose(const RigidTransform& a, const Pose& b);
RigidTransform invert(const RigidTransform& t);

/// Max-norm deviation of RᵀR from the identity.
double orthonormality_error(const Mat3& r);
/// Nearest rotation (polar decomposition).
Mat3 orthonormalize(const Mat3& r);

bool approx_equal(const Pose& a, const Pose& b, double tol);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = 1.0;

  Ray() = default;
  Ray(const Vec3& origin, const Vec3& direction, double t_near, double t_far);

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Pinhole camera: +z optical axis, image x right, image y down.
struct CameraModel {
  int width = 64;
  int height = 64;
  double focal = 70.0;
  double cx = 32.0;
  double cy = 32.0;

  CameraModel() = default;
  CameraModel(int width, int height, double focal, double cx, double cy);
  static CameraModel centered(int width, int height, double focal);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

inline constexpr double kDefaultNear = 0.05;
inline constexpr double kDefaultFar = 100.0;

/// Ray through continuous image coordinates (x, y).
Ray camera_ray(const CameraModel& camera, const Pose& pose, double x, double y,
               double t_near = kDefaultNear, double t_far = kDefaultFar);

/// One ray per pixel through the pixel center, row-major (y outer).
std::vector<Ray> pixel_rays(const CameraModel& camera, const Pose& pose,
                            double t_near = kDefaultNear, double t_far = kDefaultFar);

/// Axis-aligned box.
struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const;
  Vec3 center() const { return 0.5 * (lo + hi); }
  /// Clips [ray.t_near, ray.t_far] to the box; false when the ray misses.
  bool clip(const Ray& ray, double& t0, double& t1) const;
};

// Trajectory text records: 12 numbers per line, row-major rotation then
// translation.
std::string format_pose(const Pose& pose);
Pose parse_pose(const std::string& line);
void write_poses(std::ostream& os, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(std::istream& is);

}  // namespace wirefield
