#include "wirefield/scene.hpp"
#include "wirefield/trainer.hpp"

#include <doctest.h>

#include <cmath>

using namespace wirefield;

TEST_CASE("empty scene renders a uniform background") {
  SyntheticScene scene;
  scene.background = Vec3(0.2, 0.4, 0.6);
  const CameraModel cam = CameraModel::centered(12, 10, 15.0);
  const Image img = render_ground_truth(scene, cam, Pose::look_at(Vec3(0, -3, 0.5), Vec3::Zero()));
  for (std::size_t i = 0; i < img.pixel_count(); ++i) CHECK((img.pixel(i) - scene.background).norm() < 1e-12);
}

TEST_CASE("sphere silhouette matches its pinhole projection") {
  SyntheticScene scene;
  scene.edge_width = 0.0;
  Primitive sphere;
  sphere.center = Vec3::Zero();
  sphere.size = Vec3::Constant(0.5);
  sphere.color = Vec3(0.0, 0.0, 1.0);
  sphere.density = 1e4;
  scene.primitives.push_back(sphere);
  const double focal = 60.0, distance = 3.0;
  const CameraModel cam = CameraModel::centered(64, 64, focal);
  const Image img = render_ground_truth(scene, cam, Pose::look_at(Vec3(0, -distance, 0), Vec3::Zero()));
  int covered = 0;
  for (int x = 0; x < 64; ++x) {
    if (img.pixel(x, 32).x() < 0.5) ++covered;
  }
  const double expected = focal * std::tan(std::asin(0.5 / distance));
  CHECK(std::abs(0.5 * covered - expected) <= 1.0);
}

TEST_CASE("ground truth rendering is deterministic") {
  const SyntheticScene scene = default_scene();
  const CameraModel cam = CameraModel::centered(16, 16, 18.0);
  const Pose pose = Pose::look_at(Vec3(2, -2, 0.5), Vec3(0, 0, -0.5));
  CHECK(render_ground_truth(scene, cam, pose) == render_ground_truth(scene, cam, pose));
}

TEST_CASE("default scene is valid and asymmetric") {
  const SyntheticScene scene = default_scene();
  CHECK_NOTHROW(scene.validate());
  CHECK(scene.primitives.size() == 5);
  CHECK(scene.density(Vec3(0.35, 0.3, -0.47)) > 30.0);
  CHECK(scene.density(Vec3(0.0, 0.0, 0.9)) < 1e-6);
  CHECK(scene.density(Vec3(0.35, 0.3, -0.47)) != doctest::Approx(scene.density(Vec3(-0.35, -0.3, -0.47))));
  const Vec3 c = scene.color(Vec3(0.35, 0.3, -0.47));
  CHECK(c.x() > c.y());
}

TEST_CASE("scene validation rejects bad colors and densities") {
  SyntheticScene scene;
  Primitive p;
  p.color = Vec3(1.5, 0, 0);
  scene.primitives.push_back(p);
  CHECK_THROWS(scene.validate());
  scene.primitives[0].color = Vec3::Constant(0.5);
  scene.primitives[0].density = -1.0;
  CHECK_THROWS(scene.validate());
}

TEST_CASE("box inside distance") {
  Primitive box;
  box.kind = Primitive::Kind::kBox;
  box.size = Vec3(0.5, 0.3, 0.2);
  CHECK(box.inside_distance(Vec3::Zero()) == doctest::Approx(0.2));
  CHECK(box.inside_distance(Vec3(0.7, 0, 0)) < 0.0);
}

TEST_CASE("voxel renderer agrees with the analytic renderer when fit to the scene") {
  const SyntheticScene scene = default_scene();
  VoxelField field({96, 96, 96}, scene.bounds);
  fit_field_to_scene(scene, field);
  const CameraModel cam = CameraModel::centered(48, 48, 52.0);
  const Vec3 center(0, 0, -0.5);
  for (double az : {0.3, 2.4, 4.4}) {
    const Pose pose = Pose::look_at(center + Vec3(3 * std::cos(az), 3 * std::sin(az), 0.6), center);
    const Image truth = render_ground_truth(scene, cam, pose);
    const Image voxel = render_image(field, cam, pose, {kGroundTruthSamples, scene.background});
    CHECK(psnr(voxel, truth) > 40.0);
  }
}
