#include "wirefield/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wirefield {

namespace {

constexpr double kRotationTolerance = 1e-9;
constexpr double kDriftTolerance = 1e-12;

}  // namespace

Pose::Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw std::invalid_argument("Pose: non-finite entries");
  }
  if (orthonormality_error(rotation) > kRotationTolerance ||
      std::abs(rotation.determinant() - 1.0) > kRotationTolerance) {
    throw std::invalid_argument("Pose: rotation is not orthonormal with det +1");
  }
}

Pose Pose::from_translation(const Vec3& t) { return Pose(Mat3::Identity(), t); }

Pose Pose::from_yaw(double yaw, const Vec3& t) {
  return Pose(Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), t);
}

Pose Pose::from_axis_angle(const Vec3& axis, double angle, const Vec3& t) {
  return Pose(Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(), t);
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) {
    // Looking along `up`: pick any perpendicular.
    right = forward.unitOrthogonal();
  }
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return Pose(orthonormalize(r), eye);
}

double Pose::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) = -u.col(2);
    out = u * svd.matrixV().transpose();
  }
  return out;
}

Pose compose(const RigidTransform& a, const Pose& b) {
  Mat3 r = a.rotation() * b.rotation();
  if (orthonormality_error(r) > kDriftTolerance) {
    r = orthonormalize(r);
  }
  return Pose(r, a.rotation() * b.translation() + a.translation());
}

RigidTransform invert(const RigidTransform& t) {
  const Mat3 rt = t.rotation().transpose();
  return Pose(rt, -(rt * t.translation()));
}

bool approx_equal(const Pose& a, const Pose& b, double tol) {
  return (a.rotation() - b.rotation()).cwiseAbs().maxCoeff() <= tol &&
         (a.translation() - b.translation()).cwiseAbs().maxCoeff() <= tol;
}

Ray::Ray(const Vec3& o, const Vec3& d, double tn, double tf)
    : origin(o), direction(d.normalized()), t_near(tn), t_far(tf) {
  if (!(tn < tf)) {
    throw std::invalid_argument("Ray: t_near must be < t_far");
  }
  if (!(d.norm() > 0.0)) {
    throw std::invalid_argument("Ray: zero direction");
  }
}

CameraModel::CameraModel(int w, int h, double f, double px, double py)
    : width(w), height(h), focal(f), cx(px), cy(py) {
  if (w <= 0 || h <= 0) {
    throw std::invalid_argument("CameraModel: image size must be positive");
  }
  if (!(f > 0.0)) {
    throw std::invalid_argument("CameraModel: focal length must be > 0");
  }
  if (px < 0.0 || px > w || py < 0.0 || py > h) {
    throw std::invalid_argument("CameraModel: principal point outside the image");
  }
}

CameraModel CameraModel::centered(int w, int h, double f) {
  return CameraModel(w, h, f, 0.5 * w, 0.5 * h);
}

Ray camera_ray(const CameraModel& camera, const Pose& pose, double x, double y,
               double t_near, double t_far) {
  const Vec3 d_cam((x - camera.cx) / camera.focal, (y - camera.cy) / camera.focal, 1.0);
  return Ray(pose.translation(), pose.rotate(d_cam), t_near, t_far);
}

std::vector<Ray> pixel_rays(const CameraModel& camera, const Pose& pose, double t_near,
                            double t_far) {
  std::vector<Ray> rays;
  rays.reserve(camera.pixel_count());
  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      rays.push_back(camera_ray(camera, pose, u + 0.5, v + 0.5, t_near, t_far));
    }
  }
  return rays;
}

bool Aabb::contains(const Vec3& p) const {
  return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

bool Aabb::clip(const Ray& ray, double& t0, double& t1) const {
  t0 = ray.t_near;
  t1 = ray.t_far;
  for (int axis = 0; axis < 3; ++axis) {
    const double d = ray.direction[axis];
    const double o = ray.origin[axis];
    if (std::abs(d) < 1e-15) {
      if (o < lo[axis] || o > hi[axis]) return false;
      continue;
    }
    double ta = (lo[axis] - o) / d;
    double tb = (hi[axis] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return true;
}

std::string format_pose(const Pose& pose) {
  std::ostringstream os;
  os.precision(17);
  const Mat3& r = pose.rotation();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) os << r(i, j) << ' ';
  }
  os << pose.translation().x() << ' ' << pose.translation().y() << ' '
     << pose.translation().z();
  return os.str();
}

Pose parse_pose(const std::string& line) {
  std::istringstream is(line);
  double v[12];
  for (double& x : v) {
    if (!(is >> x)) throw std::invalid_argument("pose record needs 12 numbers: " + line);
  }
  std::string extra;
  if (is >> extra) throw std::invalid_argument("pose record has trailing data: " + line);
  Mat3 r;
  r << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return Pose(r, Vec3(v[9], v[10], v[11]));
}

void write_poses(std::ostream& os, const std::vector<Pose>& poses) {
  for (const Pose& p : poses) os << format_pose(p) << '\n';
}

std::vector<Pose> read_poses(std::istream& is) {
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    poses.push_back(parse_pose(line));
  }
  return poses;
}

}  // namespace wirefield
