#include "wirefield/channel.hpp"
#include "wirefield/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>
#include <sstream>

using namespace wirefield;

namespace {

constexpr double kPi = std::numbers::pi;

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.camera = {12, 12, 13.0};
  c.trajectory.frames_per_robot = 20;
  c.test_views.count = 3;
  c.training.steps = 40;
  c.training.batch_size = 64;
  c.training.n_samples = 16;
  c.training.grid = 8;
  c.training.eval_every = 10;
  c.planner.rays = 16;
  c.planner.initial_views_per_robot = 2;
  c.planner.captures_per_move = 1;
  c.planner.initial_steps = 30;
  c.planner.steps_per_round = 20;
  c.planner.stabilization_window = 10;
  c.planner.max_wait_steps = 20;
  c.wireless.aperture_samples = 32;
  return c;
}

const Dataset& tiny_dataset() {
  static const Dataset ds = prepare_dataset(tiny_config());
  return ds;
}

}  // namespace

TEST_CASE("derived seeds differ per stream and per seed") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t k = 0; k < 10; ++k) seen.insert(derive_seed(s, k));
  CHECK(seen.size() == 200);
  CHECK(derive_seed(3, 4) == derive_seed(3, 4));
}

TEST_CASE("arc trajectory circles the scene center heading along the tangent") {
  TrajectorySettings s;
  s.frames_per_robot = 12;
  const RobotTrajectory t = arc_trajectory("alpha", s, 0.0, 90.0);
  REQUIRE(t.size() == 12);
  CHECK_NOTHROW(t.validate());
  for (std::size_t k = 0; k < t.size(); ++k) {
    const Vec3 p = t.poses[k].pose.translation();
    CHECK((p - s.scene_center).head<2>().norm() == doctest::Approx(s.radius));
    CHECK(p.z() == doctest::Approx(s.ground_height));
    const Vec3 heading = t.poses[k].pose.rotate(Vec3::UnitX());
    CHECK(std::abs(heading.dot((p - s.scene_center).normalized())) < 1e-12);
  }
  RobotTrajectory bad = t;
  bad.poses[3].timestamp = bad.poses[2].timestamp;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("mounted camera looks at the scene center") {
  TrajectorySettings s;
  const RobotTrajectory t = arc_trajectory("alpha", s, 0.0, 200.0);
  const Pose mount = camera_mount(s);
  for (std::size_t k = 0; k < t.size(); k += 17) {
    const Pose cam = compose(t.poses[k].pose, mount);
    const Vec3 to_center = (s.scene_center - cam.translation()).normalized();
    CHECK((cam.rotate(Vec3::UnitZ()) - to_center).norm() < 1e-9);
    CHECK(cam.translation().z() == doctest::Approx(s.ground_height + s.camera_height));
  }
}

TEST_CASE("local odometry starts at the identity and drift accumulates") {
  TrajectorySettings s;
  s.frames_per_robot = 50;
  const RobotTrajectory t = arc_trajectory("beta", s, 180.0, 380.0);
  const auto local = local_odometry(t);
  CHECK(approx_equal(local.front(), Pose::identity(), 1e-12));
  const auto clean = drifted_odometry(local, 0.0, 0.0, 1);
  for (std::size_t k = 0; k < local.size(); ++k) CHECK(approx_equal(clean[k], local[k], 1e-9));
  const auto noisy = drifted_odometry(local, 0.05, 0.01, 1);
  const double early = (noisy[2].translation() - local[2].translation()).norm();
  const double late = (noisy.back().translation() - local.back().translation()).norm();
  CHECK(late > early);
  CHECK(approx_equal(drifted_odometry(local, 0.05, 0.01, 1).back(), noisy.back(), 0.0));
}

TEST_CASE("test views ring the scene off the training arcs") {
  TestViewSettings s;
  const Vec3 center(0, 0, -0.5);
  const auto views = test_view_poses(s, center);
  REQUIRE(views.size() == 16);
  for (const Pose& v : views) {
    const Vec3 d = v.translation() - center;
    CHECK(d.norm() == doctest::Approx(s.radius));
    const double el = std::asin(d.z() / d.norm()) * 180.0 / kPi;
    CHECK(el >= s.elevation_min_deg - 1e-9);
    CHECK(el <= s.elevation_max_deg + 1e-9);
  }
  TrajectorySettings ts;
  const Pose mount = camera_mount(ts);
  const RobotTrajectory a = arc_trajectory("alpha", ts, ts.alpha_start_deg, ts.alpha_end_deg);
  for (const Pose& v : views)
    for (const auto& sp : a.poses) CHECK((compose(sp.pose, mount).translation() - v.translation()).norm() > 0.05);
}

TEST_CASE("circular aperture geometry") {
  const auto ap = circular_aperture(0.3, 16);
  REQUIRE(ap.size() == 16);
  for (const Pose& p : ap) CHECK(p.translation().norm() == doctest::Approx(0.3));
}

TEST_CASE("near-noiseless observation lands within a bin") {
  WirelessSettings w;
  const double az = 1.234;
  const AoaObservation obs = observe_aoa(4.0 * direction_vector(az, kPi / 2), w, 0.01, 3);
  CHECK(std::abs(obs.error) <= 2.0 * kPi / kDefaultAzimuthBins);
  CHECK(std::abs(wrap_angle(obs.azimuth - az)) <= 2.0 * kPi / kDefaultAzimuthBins);
  CHECK(obs.kappa > 0.0);
}

TEST_CASE("exchange measures both directions and shares the range") {
  WirelessSettings w;
  w.phase_noise_min = w.phase_noise_max = 0.05;
  const Pose a = Pose::from_yaw(0.3, {3, 0, -0.9});
  const Pose b = Pose::from_yaw(2.0, {-3, 0.5, -0.9});
  const WirelessExchange ex = simulate_exchange(a, b, 0, 0.0, w, 11);
  CHECK(ex.forward.range == ex.reverse.range);
  CHECK(std::abs(ex.forward_error) < 0.02);
  CHECK(std::abs(ex.reverse_error) < 0.02);
  const WirelessMeasurement m = combined_measurement(ex);
  CHECK(m.aoa.kappa == std::max(ex.forward.aoa.kappa, ex.reverse.aoa.kappa));
  // The reciprocal bearings recover b's pose from a's.
  const Pose est = estimate_extrinsic(ex.forward, a, StampedPose{0.0, Pose::identity()}, ex.reverse.aoa.azimuth);
  CHECK((est.translation() - b.translation()).norm() < 0.25);
  CHECK(std::abs(wrap_angle(est.yaw() - b.yaw())) < 0.05);
}

TEST_CASE("setup frames follow each label's pipeline") {
  const ExperimentConfig c = tiny_config();
  const Dataset& ds = tiny_dataset();
  std::vector<WirelessExchange> ex_a, ex_b, ex_c, ex_d;
  const auto a = build_setup_frames(c, ds, "A", 1, ex_a);
  const auto b = build_setup_frames(c, ds, "B", 1, ex_b);
  const auto cc = build_setup_frames(c, ds, "C", 1, ex_c);
  const auto d = build_setup_frames(c, ds, "D", 1, ex_d);
  REQUIRE(a.size() == 40);
  REQUIRE(d.size() == 40);
  CHECK(ex_a.empty());
  REQUIRE(ex_b.size() == 2);
  CHECK(ex_b[0].forward.aoa.azimuth == ex_d[0].forward.aoa.azimuth);
  CHECK(ex_c[1].phase_noise_std == ex_d[1].phase_noise_std);
  for (std::size_t i = 0; i < 20; ++i) {
    const Pose truth = compose(ds.alpha.poses[i].pose, ds.mount);
    CHECK(approx_equal(a[i].pose, truth, 1e-12));
    CHECK(approx_equal(b[i].pose, truth, 1e-9));
    CHECK(a[i].weight == c.weighting.anchor_weight);
    CHECK(d[i].weight == c.weighting.anchor_weight);
    CHECK_FALSE(d[i].ellipse.has_value());
  }
  for (std::size_t i = 20; i < 40; ++i) {
    CHECK(b[i].weight == c.weighting.anchor_weight);
    REQUIRE(d[i].ellipse.has_value());
    CHECK(d[i].weight > 0.0);
    CHECK(d[i].weight < 1.0);
    CHECK(approx_equal(cc[i].pose, d[i].pose, 0.0));
  }
  // Larger ellipse, smaller weight.
  const WeightedFrame& f0 = d[20];
  const WeightedFrame& f1 = d[30];
  if (f0.ellipse->area < f1.ellipse->area) CHECK(f0.weight > f1.weight);
  if (f0.ellipse->area > f1.ellipse->area) CHECK(f0.weight < f1.weight);
  CHECK_THROWS(build_setup_frames(c, ds, "E", 1, ex_a));
}

TEST_CASE("setup reports are reproducible per seed and vary across seeds") {
  ExperimentConfig c = tiny_config();
  c.label = "D";
  const Dataset& ds = tiny_dataset();
  auto json = [&](std::uint64_t seed) {
    std::ostringstream os;
    write_report_json(os, run_setup(c, seed, ds).report);
    return os.str();
  };
  const std::string first = json(7);
  CHECK(first == json(7));
  CHECK(first != json(8));
  const SetupResult r = run_setup(c, 8, ds);
  CHECK(std::isfinite(r.report.psnr));
  CHECK(r.report.view_psnr.size() == 3);
  CHECK(r.report.curve.size() == 4);
  CHECK(r.report.curve.back().step == 40);
  CHECK(r.report.psnr_at_fraction(0.25) == r.report.curve.front().psnr);
  std::ostringstream csv;
  write_curve_csv(csv, r.report);
  CHECK(csv.str().rfind("step,loss,psnr\n", 0) == 0);
}

TEST_CASE("dataset cache round trip") {
  const ExperimentConfig c = tiny_config();
  const auto dir = std::filesystem::temp_directory_path() / "wirefield_cache_test";
  std::filesystem::remove_all(dir);
  const Dataset fresh = prepare_dataset(c, dir);
  CHECK(std::filesystem::exists(dir / ("dataset-" + dataset_key(c) + ".bin")));
  const Dataset cached = prepare_dataset(c, dir);
  CHECK(cached.alpha_images == fresh.alpha_images);
  CHECK(cached.beta_images == tiny_dataset().beta_images);
  CHECK(cached.test_views.back().image == fresh.test_views.back().image);
  std::filesystem::remove_all(dir);
  ExperimentConfig other = c;
  other.training.steps = 99;
  CHECK(dataset_key(other) == dataset_key(c));
  other.camera.focal = 20.0;
  CHECK(dataset_key(other) != dataset_key(c));
}

TEST_CASE("zero rounds give the baseline only") {
  const auto r = run_active_loop(tiny_config(), 1, tiny_dataset(), 0, ViewPolicy::kBestView);
  REQUIRE(r.report.rounds.size() == 1);
  CHECK(r.report.rounds[0].round == 0);
  CHECK(r.report.decisions.empty());
}

TEST_CASE("active loop logs one decision per robot and round") {
  const ExperimentConfig c = tiny_config();
  auto run = [&](ViewPolicy p) {
    std::ostringstream os;
    write_active_report_json(os, run_active_loop(c, 2, tiny_dataset(), 2, p).report);
    return os.str();
  };
  const std::string best = run(ViewPolicy::kBestView);
  CHECK(best == run(ViewPolicy::kBestView));
  const auto r = run_active_loop(c, 2, tiny_dataset(), 2, ViewPolicy::kRandom);
  CHECK(r.report.rounds.size() == 3);
  CHECK(r.report.decisions.size() == 4);
  CHECK(r.report.rounds.back().views > r.report.rounds.front().views);
  CHECK(best.find("\"reduction\"") != std::string::npos);
  CHECK_THROWS(run_active_loop(c, 2, tiny_dataset(), -1, ViewPolicy::kRandom));
}

TEST_CASE("correlation study") {
  WirelessSettings w;
  w.aperture_samples = 64;
  SweepSettings s;
  const std::vector<double> clean{0.01};
  CHECK_THROWS(correlation_study(clean, 15, 1, w, s));
  const CorrelationReport low = correlation_study(clean, 16, 1, w, s);
  for (const auto& t : low.trials) CHECK(std::abs(t.error) <= 2.0 * kPi / kDefaultAzimuthBins);

  const auto levels = linspace(0.01, 3.0, 4);
  const CorrelationReport r16 = correlation_study(levels, 16, 2, w, s);
  const CorrelationReport r32 = correlation_study(levels, 32, 2, w, s);
  CHECK(r16.trials.size() == 64);
  CHECK(r16.fit.b > 0.0);
  CHECK(r32.fit.b > 0.0);
  // Clean-channel κ sits at the bottom of the sweep.
  double low_max = 0.0;
  for (const auto& t : low.trials) low_max = std::max(low_max, t.kappa);
  std::vector<double> kappas;
  for (const auto& t : r16.trials) kappas.push_back(t.kappa);
  std::sort(kappas.begin(), kappas.end());
  CHECK(low_max <= kappas[kappas.size() / 4]);

  std::ostringstream csv, json;
  write_sweep_csv(csv, r16);
  write_sweep_json(json, r16);
  CHECK(csv.str().rfind("noise_std,trial,true_azimuth,estimated_azimuth,error,kappa\n", 0) == 0);
  CHECK(json.str().find("\"r_squared\"") != std::string::npos);
}

TEST_CASE("linspace") {
  CHECK(linspace(0.0, 1.0, 5) == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(linspace(2.0, 3.0, 1) == std::vector<double>{2.0});
  CHECK_THROWS(linspace(0.0, 1.0, 0));
}
