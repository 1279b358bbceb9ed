#include "wirefield/harness.hpp"

#include "wirefield/channel.hpp"
#include "wirefield/planner.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace wirefield {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Stream tags for derive_seed.
enum Stream : std::uint64_t {
  kWirelessStream = 1,
  kAlphaDriftStream = 2,
  kBetaDriftStream = 3,
  kTrainStream = 4,
  kPolicyStream = 5,
  kCaptureStream = 6,
  kScoreStream = 7,
  kSweepStream = 8,
};

constexpr char kCacheMagic[4] = {'W', 'F', 'D', 'S'};
constexpr std::uint32_t kCacheVersion = 1;

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

void write_images(std::ostream& os, std::span<const Image> images) {
  const auto n = static_cast<std::uint32_t>(images.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const Image& im : images) {
    const std::int32_t wh[2] = {im.width(), im.height()};
    os.write(reinterpret_cast<const char*>(wh), sizeof wh);
    os.write(reinterpret_cast<const char*>(im.data().data()),
             static_cast<std::streamsize>(im.data().size() * sizeof(double)));
  }
}

std::vector<Image> read_images(std::istream& is) {
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  std::vector<Image> images;
  for (std::uint32_t i = 0; i < n && is; ++i) {
    std::int32_t wh[2] = {0, 0};
    is.read(reinterpret_cast<char*>(wh), sizeof wh);
    if (!is || wh[0] <= 0 || wh[1] <= 0) break;
    Image im(wh[0], wh[1]);
    is.read(reinterpret_cast<char*>(im.data().data()),
            static_cast<std::streamsize>(im.data().size() * sizeof(double)));
    images.push_back(std::move(im));
  }
  if (!is || images.size() != n) throw std::runtime_error("dataset cache truncated");
  return images;
}

bool load_cache(const std::filesystem::path& path, const std::string& key, Dataset& ds) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return false;
  char magic[4];
  std::uint32_t version = 0;
  char stored_key[16];
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(stored_key, 16);
  if (!is || std::memcmp(magic, kCacheMagic, 4) != 0 || version != kCacheVersion ||
      std::string(stored_key, 16) != key) {
    return false;
  }
  try {
    auto alpha = read_images(is);
    auto beta = read_images(is);
    auto test = read_images(is);
    if (alpha.size() != ds.alpha.size() || beta.size() != ds.beta.size() ||
        test.size() != ds.test_views.size()) {
      return false;
    }
    ds.alpha_images = std::move(alpha);
    ds.beta_images = std::move(beta);
    for (std::size_t i = 0; i < test.size(); ++i) ds.test_views[i].image = std::move(test[i]);
  } catch (const std::runtime_error&) {
    return false;
  }
  return true;
}

void save_cache(const std::filesystem::path& path, const std::string& key, const Dataset& ds) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write dataset cache " + tmp.string());
    os.write(kCacheMagic, 4);
    os.write(reinterpret_cast<const char*>(&kCacheVersion), sizeof kCacheVersion);
    os.write(key.data(), 16);
    write_images(os, ds.alpha_images);
    write_images(os, ds.beta_images);
    std::vector<Image> test;
    for (const auto& v : ds.test_views) test.push_back(v.image);
    write_images(os, test);
  }
  std::filesystem::rename(tmp, path);
}

TrainConfig train_config(const TrainingSettings& t, std::uint64_t seed) {
  TrainConfig c;
  c.steps = t.steps;
  c.batch_size = t.batch_size;
  c.learning_rate = t.learning_rate;
  c.final_lr_fraction = t.final_lr_fraction;
  c.n_samples = t.n_samples;
  c.variance_head = t.variance_head;
  c.seed = seed;
  c.eval_every = t.eval_every;
  return c;
}

VoxelField make_field(const ExperimentConfig& config, const Dataset& ds) {
  const int g = config.training.grid;
  return VoxelField({g, g, g}, ds.scene.bounds);
}

nlohmann::ordered_json pose_json(const Pose& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) j.push_back(p.rotation()(r, c));
  }
  for (int r = 0; r < 3; ++r) j.push_back(p.translation()[r]);
  return j;
}

nlohmann::ordered_json measurement_json(const WirelessMeasurement& m) {
  return {{"timestamp", m.timestamp},     {"source", m.source},
          {"target", m.target},           {"range", m.range},
          {"range_std", m.range_std},     {"azimuth", m.aoa.azimuth},
          {"zenith", m.aoa.zenith},       {"kappa", m.aoa.kappa}};
}

// Camera pose along the straight move from `from` to `to`, looking at `target`.
Pose interpolated_view(const Pose& from, const Pose& to, double f, const Vec3& target) {
  const Vec3 p = (1.0 - f) * from.translation() + f * to.translation();
  return Pose::look_at(p, target);
}

}  // namespace

StageError::StageError(std::string stage, std::uint64_t seed, const std::string& message)
    : std::runtime_error("stage '" + stage + "' failed (seed " + std::to_string(seed) +
                         "): " + message),
      stage_(std::move(stage)),
      seed_(seed) {}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + stream * 0xD1B54A32D192ED03ull + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void RobotTrajectory::validate() const {
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (!(poses[i].timestamp > poses[i - 1].timestamp)) {
      throw std::invalid_argument("trajectory '" + id + "': timestamps must increase");
    }
  }
}

RobotTrajectory arc_trajectory(const std::string& id, const TrajectorySettings& s,
                               double start_deg, double end_deg) {
  RobotTrajectory traj;
  traj.id = id;
  const int n = s.frames_per_robot;
  for (int k = 0; k < n; ++k) {
    const double a = (start_deg + (end_deg - start_deg) * k / (n - 1)) * kDeg;
    const Vec3 p(s.scene_center.x() + s.radius * std::cos(a),
                 s.scene_center.y() + s.radius * std::sin(a), s.ground_height);
    const double heading = a + (end_deg >= start_deg ? 0.5 : -0.5) * std::numbers::pi;
    traj.poses.push_back({k * s.frame_period, Pose::from_yaw(heading, p)});
  }
  traj.validate();
  return traj;
}

Pose camera_mount(const TrajectorySettings& s) {
  const Vec3 eye(0.0, 0.0, s.camera_height);
  const Vec3 target(0.0, s.radius, s.scene_center.z() - s.ground_height);
  return Pose::look_at(eye, target);
}

std::vector<Pose> local_odometry(const RobotTrajectory& trajectory) {
  std::vector<Pose> out;
  if (trajectory.poses.empty()) return out;
  const RigidTransform to_local = invert(trajectory.poses.front().pose);
  for (const auto& sp : trajectory.poses) out.push_back(compose(to_local, sp.pose));
  return out;
}

std::vector<Pose> drifted_odometry(std::span<const Pose> odometry, double translation_fraction,
                                   double yaw_std, std::uint64_t seed) {
  std::vector<Pose> out;
  if (odometry.empty()) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  out.push_back(odometry.front());
  for (std::size_t k = 1; k < odometry.size(); ++k) {
    const Pose step = compose(invert(odometry[k - 1]), odometry[k]);
    const double len = step.translation().norm();
    const Vec3 dt(translation_fraction * len * n01(rng), translation_fraction * len * n01(rng),
                  0.0);
    const Pose noisy(Pose::from_yaw(yaw_std * n01(rng)).rotation() * step.rotation(),
                     step.translation() + dt);
    out.push_back(compose(out.back(), noisy));
  }
  return out;
}

std::vector<Pose> test_view_poses(const TestViewSettings& s, const Vec3& center) {
  std::vector<Pose> poses;
  for (int i = 0; i < s.count; ++i) {
    const double az = (s.azimuth_offset_deg + 360.0 * i / s.count) * kDeg;
    const double f = s.count > 1 ? static_cast<double>(i % 4) / 3.0 : 0.0;
    const double el = (s.elevation_min_deg + (s.elevation_max_deg - s.elevation_min_deg) * f) * kDeg;
    const Vec3 eye =
        center + s.radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                 std::sin(el));
    poses.push_back(Pose::look_at(eye, center));
  }
  return poses;
}

std::vector<Pose> circular_aperture(double radius, int samples) {
  std::vector<Pose> poses;
  for (int i = 0; i < samples; ++i) {
    const double a = 2.0 * std::numbers::pi * i / samples;
    poses.push_back(Pose::from_translation(Vec3(radius * std::cos(a), radius * std::sin(a), 0.0)));
  }
  return poses;
}

AoaObservation observe_aoa(const Vec3& source_body, const WirelessSettings& s,
                           double phase_noise_std, std::uint64_t seed) {
  const auto aperture = circular_aperture(s.aperture_radius, s.aperture_samples);
  const ChannelTrace measured =
      simulate_channel(source_body, aperture, s.wavelength, phase_noise_std, seed);
  const AoaProfile profile = compute_profile(measured);
  const Direction peak = peak_at_zenith(profile, std::numbers::pi / 2);
  const ChannelTrace rebuilt = reconstruct_channel(aperture, peak.azimuth, peak.zenith,
                                                   s.wavelength, s.tolerance_noise,
                                                   derive_seed(seed, 1));
  AoaObservation obs;
  obs.azimuth = peak.azimuth;
  obs.kappa = aoa_uncertainty(profile, compute_profile(rebuilt), peak);
  obs.error = wrap_angle(peak.azimuth - std::atan2(source_body.y(), source_body.x()));
  return obs;
}

WirelessExchange simulate_exchange(const Pose& anchor_body, const Pose& peer_body, int frame,
                                   double timestamp, const WirelessSettings& s,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise_level(s.phase_noise_min, s.phase_noise_max);
  std::normal_distribution<double> n01(0.0, 1.0);
  WirelessExchange ex;
  ex.frame = frame;
  ex.phase_noise_std = noise_level(rng);

  const Vec3 peer_in_anchor = invert(anchor_body).apply(peer_body.translation());
  const Vec3 anchor_in_peer = invert(peer_body).apply(anchor_body.translation());
  const double true_range = peer_in_anchor.norm();

  auto make = [&](const std::string& src, const std::string& dst, const Vec3& source) {
    const AoaObservation obs = observe_aoa(source, s, ex.phase_noise_std, rng());
    WirelessMeasurement m;
    m.timestamp = timestamp;
    m.source = src;
    m.target = dst;
    m.range = std::max(1e-3, true_range + s.range_std * n01(rng));
    m.range_std = s.range_std;
    m.aoa = {obs.azimuth, std::numbers::pi / 2, obs.kappa};
    return std::make_pair(m, obs.error);
  };
  std::tie(ex.forward, ex.forward_error) = make("alpha", "beta", peer_in_anchor);
  std::tie(ex.reverse, ex.reverse_error) = make("beta", "alpha", anchor_in_peer);
  ex.reverse.range = ex.forward.range;
  return ex;
}

WirelessMeasurement combined_measurement(const WirelessExchange& exchange) {
  WirelessMeasurement m = exchange.forward;
  m.aoa.kappa = std::max(exchange.forward.aoa.kappa, exchange.reverse.aoa.kappa);
  return m;
}

SyntheticScene make_scene(const SceneSettings& settings) {
  SyntheticScene scene = default_scene();
  scene.edge_width = settings.edge_width;
  scene.validate();
  return scene;
}

std::string dataset_key(const ExperimentConfig& c) {
  const auto full = nlohmann::ordered_json::parse(config_to_json(c));
  nlohmann::ordered_json j;
  for (const char* k : {"scene", "camera", "trajectory", "test_views"}) j[k] = full[k];
  return fnv_hex(j.dump());
}

Dataset prepare_dataset(const ExperimentConfig& config, const std::filesystem::path& cache_dir) {
  Dataset ds;
  ds.scene = make_scene(config.scene);
  ds.camera = CameraModel::centered(config.camera.width, config.camera.height, config.camera.focal);
  ds.mount = camera_mount(config.trajectory);
  const auto& t = config.trajectory;
  ds.alpha = arc_trajectory("alpha", t, t.alpha_start_deg, t.alpha_end_deg);
  ds.beta = arc_trajectory("beta", t, t.beta_start_deg, t.beta_end_deg);
  for (auto* traj : {&ds.alpha, &ds.beta}) {
    traj->odometry_translation_fraction = config.drift.translation_fraction;
    traj->odometry_yaw_std = config.drift.yaw_deg * kDeg;
  }
  for (const Pose& p : test_view_poses(config.test_views, t.scene_center)) {
    ds.test_views.push_back({p, Image(1, 1)});
  }

  const std::string key = dataset_key(config);
  const std::filesystem::path cache =
      cache_dir.empty() ? std::filesystem::path() : cache_dir / ("dataset-" + key + ".bin");
  if (!cache.empty() && load_cache(cache, key, ds)) return ds;

  for (const auto& sp : ds.alpha.poses) {
    ds.alpha_images.push_back(render_ground_truth(ds.scene, ds.camera, compose(sp.pose, ds.mount)));
  }
  for (const auto& sp : ds.beta.poses) {
    ds.beta_images.push_back(render_ground_truth(ds.scene, ds.camera, compose(sp.pose, ds.mount)));
  }
  for (auto& v : ds.test_views) v.image = render_ground_truth(ds.scene, ds.camera, v.pose);
  if (!cache.empty()) save_cache(cache, key, ds);
  return ds;
}

double MetricsReport::psnr_at_fraction(double fraction) const {
  if (curve.empty()) return psnr;
  const double target = fraction * curve.back().step;
  const TrainRecord* best = &curve.front();
  for (const auto& r : curve) {
    if (std::abs(r.step - target) < std::abs(best->step - target)) best = &r;
  }
  return best->psnr;
}

std::vector<WeightedFrame> build_setup_frames(const ExperimentConfig& config,
                                              const Dataset& ds, const std::string& label,
                                              std::uint64_t seed,
                                              std::vector<WirelessExchange>& exchanges) {
  if (!valid_label(label)) throw std::invalid_argument("unknown setup label '" + label + "'");
  std::vector<WeightedFrame> frames;
  auto add = [&](const std::string& robot, std::size_t k, const Pose& body, double weight,
                 std::optional<UncertaintyEllipse> ellipse) {
    frames.push_back({robot + "/" + std::to_string(k), compose(body, ds.mount), weight, ellipse});
  };

  // Without down-weighting every frame counts like an anchor frame.
  const double uniform = config.weighting.anchor_weight;
  if (label == "A") {
    for (std::size_t k = 0; k < ds.alpha.size(); ++k) add("alpha", k, ds.alpha.poses[k].pose, uniform, {});
    for (std::size_t k = 0; k < ds.beta.size(); ++k) add("beta", k, ds.beta.poses[k].pose, uniform, {});
    return frames;
  }

  const bool drift = label == "C" || label == "D";
  std::vector<Pose> alpha_local = local_odometry(ds.alpha);
  std::vector<Pose> beta_local = local_odometry(ds.beta);
  if (drift) {
    alpha_local = drifted_odometry(alpha_local, ds.alpha.odometry_translation_fraction,
                                   ds.alpha.odometry_yaw_std, derive_seed(seed, kAlphaDriftStream));
    beta_local = drifted_odometry(beta_local, ds.beta.odometry_translation_fraction,
                                  ds.beta.odometry_yaw_std, derive_seed(seed, kBetaDriftStream));
  }
  // The anchor's odometry frame is registered to the world at its start pose.
  const Pose anchor_origin = ds.alpha.poses.front().pose;
  std::vector<Pose> alpha_world;
  for (const Pose& l : alpha_local) alpha_world.push_back(compose(anchor_origin, l));

  const auto& w = config.wireless;
  exchanges.clear();
  for (std::size_t k = 0; k < ds.beta.size(); k += w.refresh_every) {
    const double ts = ds.beta.poses[k].timestamp;
    exchanges.push_back(simulate_exchange(ds.alpha.poses[k].pose, ds.beta.poses[k].pose,
                                          static_cast<int>(k), ts, w,
                                          derive_seed(derive_seed(seed, kWirelessStream), k)));
  }

  const bool weighted = label == "D";
  std::vector<UncertaintyEllipse> ellipses;
  for (const auto& ex : exchanges) {
    ellipses.push_back(error_ellipse(combined_measurement(ex), config.weighting.ci));
  }
  const double scale = weighted ? median_area(ellipses) : 1.0;

  for (std::size_t k = 0; k < alpha_world.size(); ++k) {
    add("alpha", k, alpha_world[k], uniform, {});
  }
  std::size_t j = 0;
  for (std::size_t p = 0; p < beta_local.size(); ++p) {
    while (j + 1 < exchanges.size() && static_cast<std::size_t>(exchanges[j + 1].frame) <= p) ++j;
    const WirelessExchange& ex = exchanges[j];
    const std::size_t k = static_cast<std::size_t>(ex.frame);
    const double age = ds.beta.poses[p].timestamp - ex.forward.timestamp;
    if (age > w.staleness_horizon + 1e-9) {
      throw StaleMeasurementError("no wireless refresh within " +
                                  std::to_string(w.staleness_horizon) + " s of beta frame " +
                                  std::to_string(p));
    }
    const RigidTransform align =
        frame_alignment(ex.forward, alpha_world[k], beta_local[k], ex.reverse.aoa.azimuth);
    double weight = uniform;
    if (weighted) weight = loss_weight(ellipses[j], config.weighting.mode, scale);
    add("beta", p, compose(align, beta_local[p]), weight, ellipses[j]);
  }
  return frames;
}

SetupResult run_setup(const ExperimentConfig& config, std::uint64_t seed, const Dataset& ds) {
  MetricsReport report;
  report.label = config.label;
  report.seed = seed;
  report.config_hash = config_hash(config);

  try {
    report.frames = build_setup_frames(config, ds, config.label, seed, report.exchanges);
  } catch (const std::exception& e) {
    throw StageError("localization", seed, e.what());
  }

  // Frames whose weight underflowed carry no gradient; leave them out of the
  // batch instead of spending samples on them.
  std::vector<WeightedFrame> train_frames;
  std::vector<Image> images;
  double err = 0.0;
  for (std::size_t i = 0; i < report.frames.size(); ++i) {
    const bool alpha = i < ds.alpha.size();
    const std::size_t k = alpha ? i : i - ds.alpha.size();
    const Pose truth = compose((alpha ? ds.alpha : ds.beta).poses[k].pose, ds.mount);
    err += (truth.translation() - report.frames[i].pose.translation()).norm();
    if (report.frames[i].weight < kMinFrameWeight) continue;
    train_frames.push_back(report.frames[i]);
    images.push_back(alpha ? ds.alpha_images[k] : ds.beta_images[k]);
  }
  report.mean_position_error = err / static_cast<double>(report.frames.size());

  VoxelField field = make_field(config, ds);
  TrainHistory history;
  try {
    history = train(field, train_frames, images, ds.camera,
                    train_config(config.training, derive_seed(seed, kTrainStream)),
                    ds.test_views);
  } catch (const std::exception& e) {
    throw StageError("training", seed, e.what());
  }
  report.curve = history.records;
  report.recoveries = history.recoveries;
  report.interrupted = history.interrupted;

  const RenderOptions render{config.training.n_samples, ds.scene.background};
  double psnr_sum = 0.0;
  double ssim_sum = 0.0;
  for (const auto& v : ds.test_views) {
    const Image out = render_image(field, ds.camera, v.pose, render);
    report.view_psnr.push_back(psnr(out, v.image));
    psnr_sum += report.view_psnr.back();
    ssim_sum += ssim(out, v.image);
  }
  report.psnr = psnr_sum / static_cast<double>(ds.test_views.size());
  report.ssim = ssim_sum / static_cast<double>(ds.test_views.size());
  return {std::move(report), std::move(field)};
}

void write_report_json(std::ostream& os, const MetricsReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["manifest"] = {{"label", r.label}, {"seed", r.seed}, {"config_hash", r.config_hash}};
  j["psnr"] = r.psnr;
  j["ssim"] = r.ssim;
  j["psnr_at_25pct"] = r.psnr_at_fraction(0.25);
  j["view_psnr"] = r.view_psnr;
  j["mean_position_error"] = r.mean_position_error;
  j["recoveries"] = r.recoveries;
  j["interrupted"] = r.interrupted;
  ordered_json curve = ordered_json::array();
  for (const auto& rec : r.curve) {
    curve.push_back({{"step", rec.step},
                     {"loss", rec.loss},
                     {"psnr", std::isfinite(rec.psnr) ? ordered_json(rec.psnr) : ordered_json()}});
  }
  j["curve"] = curve;
  ordered_json ex = ordered_json::array();
  for (const auto& e : r.exchanges) {
    ex.push_back({{"frame", e.frame},
                  {"phase_noise_std", e.phase_noise_std},
                  {"forward", measurement_json(e.forward)},
                  {"reverse", measurement_json(e.reverse)},
                  {"forward_error", e.forward_error},
                  {"reverse_error", e.reverse_error}});
  }
  j["exchanges"] = ex;
  ordered_json frames = ordered_json::array();
  for (const auto& f : r.frames) {
    frames.push_back({{"image", f.image_id},
                      {"pose", pose_json(f.pose)},
                      {"weight", f.weight},
                      {"ellipse_area", f.ellipse ? f.ellipse->area : 0.0}});
  }
  j["frames"] = frames;
  os << j.dump(2) << '\n';
}

void write_curve_csv(std::ostream& os, const MetricsReport& r) {
  os.precision(10);
  os << "step,loss,psnr\n";
  for (const auto& rec : r.curve) {
    os << rec.step << ',' << rec.loss << ',';
    if (std::isfinite(rec.psnr)) os << rec.psnr;
    os << '\n';
  }
}

const char* policy_name(ViewPolicy policy) {
  return policy == ViewPolicy::kBestView ? "best" : "random";
}

ActiveLoopResult run_active_loop(const ExperimentConfig& config, std::uint64_t seed,
                                 const Dataset& ds, int rounds, ViewPolicy policy) {
  if (rounds < 0) throw std::invalid_argument("rounds must be >= 0");
  const auto& pl = config.planner;
  ActiveLoopReport report;
  report.policy = policy;
  report.seed = seed;
  report.config_hash = config_hash(config);

  VoxelField field = make_field(config, ds);
  TrainConfig tc = train_config(config.training, derive_seed(seed, kTrainStream));
  tc.variance_head = pl.variance_head;
  tc.eval_every = 0;
  tc.stabilization_window = pl.stabilization_window;
  tc.stabilization_tolerance = pl.stabilization_tolerance;
  Trainer trainer(field, ds.camera, tc);

  // Sparse start: the first few frames of each robot, every other frame.
  struct RobotState {
    std::string id;
    Pose camera;
  };
  std::vector<RobotState> robots;
  for (const auto* traj : {&ds.alpha, &ds.beta}) {
    const auto& images = traj == &ds.alpha ? ds.alpha_images : ds.beta_images;
    Pose last;
    for (int i = 0; i < pl.initial_views_per_robot; ++i) {
      const std::size_t k = std::min<std::size_t>(2 * i, traj->size() - 1);
      last = compose(traj->poses[k].pose, ds.mount);
      trainer.add_view({{traj->id + "/" + std::to_string(k), last, config.weighting.anchor_weight, {}},
                        images[k]});
    }
    robots.push_back({traj->id, last});
  }

  const RenderOptions render = trainer.render_options();
  auto measure = [&](int round) {
    const ImageMetrics m = evaluate_views(field, ds.camera, ds.test_views, render);
    report.rounds.push_back({round, m.psnr, m.ssim, trainer.global_step(),
                             static_cast<int>(trainer.views().size())});
  };
  auto train_steps = [&](int steps) {
    try {
      const TrainHistory h = trainer.run(steps);
      if (h.interrupted) report.interrupted = true;
    } catch (const std::exception& e) {
      throw StageError("training", seed, e.what());
    }
  };

  train_steps(pl.initial_steps);
  measure(0);

  std::mt19937_64 policy_rng(derive_seed(seed, kPolicyStream));
  std::mt19937_64 capture_rng(derive_seed(seed, kCaptureStream));
  std::normal_distribution<double> n01(0.0, 1.0);
  const Vec3 center = config.trajectory.scene_center;
  const OriginStdFn origin_std = linear_origin_std(pl.base_origin_std, pl.origin_std_growth);
  // Robots stay on a ring around their orbit, clear of the scene volume.
  const double min_clearance = std::max(
      (ds.scene.bounds.hi - ds.scene.bounds.lo).head<2>().norm() * 0.5 + 0.2,
      config.trajectory.radius - pl.workspace_band);
  const double max_reach = config.trajectory.radius + pl.workspace_band;

  for (int round = 1; round <= rounds && !report.interrupted; ++round) {
    int waited = 0;
    while (!trainer.loss_stabilized() && waited < pl.max_wait_steps && !report.interrupted) {
      train_steps(pl.stabilization_window);
      waited += pl.stabilization_window;
    }
    for (RobotState& robot : robots) {
      std::vector<CandidateView> cands =
          propose_candidates(robot.camera, pl.step, pl.candidates, center, origin_std);
      for (auto& c : cands) {
        const double r = (c.pose.translation() - center).head<2>().norm();
        c.reachable = r >= min_clearance && r <= max_reach;
      }
      std::vector<ViewScore> scores;
      if (policy == ViewPolicy::kBestView) {
        ScoreOptions so;
        so.n_rays = pl.rays;
        so.render = render;
        const std::uint64_t score_seed =
            derive_seed(derive_seed(seed, kScoreStream), static_cast<std::uint64_t>(round));
        for (const auto& c : cands) scores.push_back(score_candidate(field, c, ds.camera, so, score_seed));
      } else {
        for (const auto& c : cands) scores.push_back({c, 0.0, 0.0, 0.0});
      }

      std::optional<std::size_t> chosen;
      try {
        if (policy == ViewPolicy::kBestView) {
          chosen = select_best(scores);
        } else {
          std::vector<std::size_t> reachable;
          for (std::size_t i = 0; i < cands.size(); ++i) {
            if (cands[i].reachable) reachable.push_back(i);
          }
          if (reachable.empty()) throw NoReachableCandidateError("no reachable candidate");
          chosen = reachable[std::uniform_int_distribution<std::size_t>(0, reachable.size() - 1)(
              policy_rng)];
        }
      } catch (const NoReachableCandidateError&) {
        chosen.reset();  // hold position
      }

      nlohmann::ordered_json rec;
      rec["round"] = round;
      rec["robot"] = robot.id;
      rec["policy"] = policy_name(policy);
      rec["seed"] = seed;
      nlohmann::ordered_json cj = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto& t = scores[i].candidate.pose.translation();
        cj.push_back({{"index", i},
                      {"position", {t.x(), t.y(), t.z()}},
                      {"origin_std", scores[i].candidate.origin_std},
                      {"reachable", scores[i].candidate.reachable},
                      {"reduction", scores[i].reduction}});
      }
      rec["candidates"] = cj;
      rec["chosen"] = chosen ? nlohmann::ordered_json(*chosen) : nlohmann::ordered_json();
      rec["held"] = !chosen.has_value();
      report.decisions.push_back(rec.dump());
      if (!chosen) continue;

      const CandidateView& target = cands[*chosen];
      for (int c = 1; c <= pl.captures_per_move; ++c) {
        const double f = static_cast<double>(c) / pl.captures_per_move;
        const Pose nominal = interpolated_view(robot.camera, target.pose, f, center);
        const double sd = origin_std(nominal.translation() - robot.camera.translation());
        const Vec3 jitter(sd * n01(capture_rng), sd * n01(capture_rng), 0.0);
        const Pose actual = Pose::look_at(nominal.translation() + jitter, center + jitter);
        const Image image = render_ground_truth(ds.scene, ds.camera, actual);
        trainer.add_view({{robot.id + "/r" + std::to_string(round) + "c" + std::to_string(c),
                           nominal, config.weighting.anchor_weight, {}},
                          image});
      }
      robot.camera = target.pose;
    }
    train_steps(pl.steps_per_round);
    measure(round);
  }
  return {std::move(report), std::move(field)};
}

void write_active_report_json(std::ostream& os, const ActiveLoopReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["manifest"] = {{"policy", policy_name(r.policy)}, {"seed", r.seed},
                   {"config_hash", r.config_hash}};
  ordered_json rounds = ordered_json::array();
  for (const auto& m : r.rounds) {
    rounds.push_back({{"round", m.round}, {"psnr", m.psnr}, {"ssim", m.ssim},
                      {"total_steps", m.total_steps}, {"views", m.views}});
  }
  j["rounds"] = rounds;
  ordered_json decisions = ordered_json::array();
  for (const auto& d : r.decisions) decisions.push_back(ordered_json::parse(d));
  j["decisions"] = decisions;
  j["interrupted"] = r.interrupted;
  os << j.dump(2) << '\n';
}

std::vector<double> linspace(double lo, double hi, int count) {
  if (count < 1) throw std::invalid_argument("linspace: count must be >= 1");
  std::vector<double> v;
  for (int i = 0; i < count; ++i) v.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
  return v;
}

CorrelationReport correlation_study(std::span<const double> noise_levels, int trials,
                                    std::uint64_t seed, const WirelessSettings& wireless,
                                    const SweepSettings& sweep) {
  if (trials < 16) throw std::invalid_argument("correlation_study: need at least 16 trials");
  if (noise_levels.empty()) throw std::invalid_argument("correlation_study: no noise levels");
  CorrelationReport report;
  std::mt19937_64 rng(derive_seed(seed, kSweepStream));
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  for (double noise : noise_levels) {
    for (int t = 0; t < trials; ++t) {
      const double az = azimuth(rng);
      const Vec3 source = sweep.source_distance * direction_vector(az, std::numbers::pi / 2);
      const AoaObservation obs = observe_aoa(source, wireless, noise, rng());
      report.trials.push_back({noise, t, az, obs.azimuth, obs.error, obs.kappa});
    }
  }

  std::vector<double> kappa;
  std::vector<double> abs_error;
  std::vector<double> error;
  for (const auto& t : report.trials) {
    kappa.push_back(t.kappa);
    abs_error.push_back(std::abs(t.error));
    error.push_back(t.error);
  }
  report.spearman = spearman(kappa, abs_error);
  const auto [lo, hi] = std::minmax_element(kappa.begin(), kappa.end());
  report.window_width = (*hi - *lo) * sweep.window_fraction;
  if (report.window_width > 0.0) {
    report.windows = windowed_variance(kappa, error, report.window_width, 0.5 * report.window_width);
    std::vector<double> x;
    std::vector<double> y;
    for (const auto& w : report.windows) {
      x.push_back(w.center);
      y.push_back(w.variance);
    }
    report.fit = fit_power_law(x, y);
  }
  return report;
}

void write_sweep_csv(std::ostream& os, const CorrelationReport& r) {
  os.precision(12);
  os << "noise_std,trial,true_azimuth,estimated_azimuth,error,kappa\n";
  for (const auto& t : r.trials) {
    os << t.noise_std << ',' << t.trial << ',' << t.true_azimuth << ',' << t.estimated_azimuth
       << ',' << t.error << ',' << t.kappa << '\n';
  }
}

void write_sweep_json(std::ostream& os, const CorrelationReport& r) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["trials"] = r.trials.size();
  j["spearman"] = r.spearman;
  j["window_width"] = r.window_width;
  j["fit"] = {{"a", r.fit.a}, {"b", r.fit.b}, {"r_squared", r.fit.r_squared},
              {"points", r.fit.points}};
  ordered_json windows = ordered_json::array();
  for (const auto& w : r.windows) {
    windows.push_back({{"center", w.center}, {"count", w.count}, {"variance", w.variance}});
  }
  j["windows"] = windows;
  os << j.dump(2) << '\n';
}

}  // namespace wirefield
