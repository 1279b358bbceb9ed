#include "wirefield/config.hpp"

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace wirefield {

namespace {

int line_of(const YAML::Node& node) {
  const YAML::Mark m = node.Mark();
  return m.line >= 0 ? m.line + 1 : 0;
}

// Reads one mapping section, remembering which keys were consumed so
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) {
      throw ConfigError(path_, line_of(node_), "expected a mapping");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!node_) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), line_of(v), "invalid value '" + scalar(v) + "'");
    }
  }

  void read(const char* key, Vec3& out) {
    std::vector<double> xs{out.x(), out.y(), out.z()};
    read(key, xs);
    if (xs.size() != 3) {
      throw ConfigError(field(key), line_of(node_[key]), "expected three numbers");
    }
    out = Vec3(xs[0], xs[1], xs[2]);
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(node_ ? node_[key] : YAML::Node(), field(key));
  }

  YAML::Node raw(const char* key) {
    seen_.insert(key);
    return node_ ? node_[key] : YAML::Node();
  }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(field(key), line_of(kv.first), "unknown key");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  static std::string scalar(const YAML::Node& v) { return v.IsScalar() ? v.Scalar() : "<non-scalar>"; }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

const char* mode_name(WeightingMode m) {
  return m == WeightingMode::kDownWeight ? "down-weight" : "up-weight";
}

void require(bool ok, const char* field, const char* message) {
  if (!ok) throw ConfigError(field, 0, message);
}

ExperimentConfig from_yaml(const YAML::Node& root) {
  ExperimentConfig c;
  Section top(root, "");
  top.read("label", c.label);
  top.read("seeds", c.seeds);

  Section scene = top.child("scene");
  scene.read("preset", c.scene.preset);
  scene.read("edge_width", c.scene.edge_width);
  scene.finish();

  Section cam = top.child("camera");
  cam.read("width", c.camera.width);
  cam.read("height", c.camera.height);
  cam.read("focal", c.camera.focal);
  cam.finish();

  Section tr = top.child("trajectory");
  tr.read("frames_per_robot", c.trajectory.frames_per_robot);
  tr.read("radius", c.trajectory.radius);
  tr.read("alpha_start_deg", c.trajectory.alpha_start_deg);
  tr.read("alpha_end_deg", c.trajectory.alpha_end_deg);
  tr.read("beta_start_deg", c.trajectory.beta_start_deg);
  tr.read("beta_end_deg", c.trajectory.beta_end_deg);
  tr.read("ground_height", c.trajectory.ground_height);
  tr.read("camera_height", c.trajectory.camera_height);
  tr.read("frame_period", c.trajectory.frame_period);
  tr.read("scene_center", c.trajectory.scene_center);
  tr.finish();

  Section w = top.child("wireless");
  w.read("wavelength", c.wireless.wavelength);
  w.read("aperture_radius", c.wireless.aperture_radius);
  w.read("aperture_samples", c.wireless.aperture_samples);
  w.read("refresh_every", c.wireless.refresh_every);
  w.read("phase_noise_min", c.wireless.phase_noise_min);
  w.read("phase_noise_max", c.wireless.phase_noise_max);
  w.read("range_std", c.wireless.range_std);
  w.read("tolerance_noise", c.wireless.tolerance_noise);
  w.read("staleness_horizon", c.wireless.staleness_horizon);
  w.finish();

  Section d = top.child("drift");
  d.read("translation_fraction", c.drift.translation_fraction);
  d.read("yaw_deg", c.drift.yaw_deg);
  d.finish();

  Section wt = top.child("weighting");
  std::string mode = mode_name(c.weighting.mode);
  wt.read("mode", mode);
  if (mode == "down-weight") {
    c.weighting.mode = WeightingMode::kDownWeight;
  } else if (mode == "up-weight") {
    c.weighting.mode = WeightingMode::kUpWeight;
  } else {
    throw ConfigError("weighting.mode", line_of(wt.raw("mode")),
                      "expected 'down-weight' or 'up-weight', got '" + mode + "'");
  }
  wt.read("anchor_weight", c.weighting.anchor_weight);
  wt.read("ci", c.weighting.ci);
  wt.finish();

  Section t = top.child("training");
  t.read("steps", c.training.steps);
  t.read("batch_size", c.training.batch_size);
  t.read("learning_rate", c.training.learning_rate);
  t.read("final_lr_fraction", c.training.final_lr_fraction);
  t.read("n_samples", c.training.n_samples);
  t.read("grid", c.training.grid);
  t.read("eval_every", c.training.eval_every);
  t.read("variance_head", c.training.variance_head);
  t.finish();

  Section p = top.child("planner");
  p.read("candidates", c.planner.candidates);
  p.read("step", c.planner.step);
  p.read("rays", c.planner.rays);
  p.read("base_origin_std", c.planner.base_origin_std);
  p.read("origin_std_growth", c.planner.origin_std_growth);
  p.read("initial_views_per_robot", c.planner.initial_views_per_robot);
  p.read("captures_per_move", c.planner.captures_per_move);
  p.read("initial_steps", c.planner.initial_steps);
  p.read("steps_per_round", c.planner.steps_per_round);
  p.read("stabilization_window", c.planner.stabilization_window);
  p.read("stabilization_tolerance", c.planner.stabilization_tolerance);
  p.read("max_wait_steps", c.planner.max_wait_steps);
  p.read("variance_head", c.planner.variance_head);
  p.read("workspace_band", c.planner.workspace_band);
  p.finish();

  Section tv = top.child("test_views");
  tv.read("count", c.test_views.count);
  tv.read("radius", c.test_views.radius);
  tv.read("elevation_min_deg", c.test_views.elevation_min_deg);
  tv.read("elevation_max_deg", c.test_views.elevation_max_deg);
  tv.read("azimuth_offset_deg", c.test_views.azimuth_offset_deg);
  tv.finish();

  Section sw = top.child("sweep");
  sw.read("noise_min", c.sweep.noise_min);
  sw.read("noise_max", c.sweep.noise_max);
  sw.read("levels", c.sweep.levels);
  sw.read("trials", c.sweep.trials);
  sw.read("source_distance", c.sweep.source_distance);
  sw.read("window_fraction", c.sweep.window_fraction);
  sw.finish();

  top.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    // Point the diagnostic at the offending key when the file sets it.
    if (e.line() > 0 || e.field().empty()) throw;
    YAML::Node node = root;
    std::stringstream path(e.field());
    std::string part;
    while (node && node.IsMap() && std::getline(path, part, '.')) {
      const YAML::Node& parent = node;
      node.reset(parent[part]);
    }
    if (!node) throw;
    std::string message = e.what();
    message = message.substr(message.find(": ") + 2);
    throw ConfigError(e.field(), line_of(node), message);
  }
  return c;
}

}  // namespace

ConfigError::ConfigError(std::string field, int line, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? std::string() : field + ": ") + message),
      field_(std::move(field)),
      line_(line) {}

bool valid_label(const std::string& label) {
  return label == "A" || label == "B" || label == "C" || label == "D";
}

void ExperimentConfig::validate() const {
  require(valid_label(label), "label", "must be one of A, B, C, D");
  require(!seeds.empty(), "seeds", "need at least one seed");
  require(scene.preset == "default", "scene.preset", "only 'default' is available");
  require(scene.edge_width >= 0.0, "scene.edge_width", "must be >= 0");
  require(camera.width > 0 && camera.height > 0, "camera", "width and height must be > 0");
  require(camera.focal > 0.0, "camera.focal", "must be > 0");
  require(trajectory.frames_per_robot >= 2, "trajectory.frames_per_robot", "must be >= 2");
  require(trajectory.radius > 0.0, "trajectory.radius", "must be > 0");
  require(trajectory.frame_period > 0.0, "trajectory.frame_period", "must be > 0");
  require(wireless.wavelength > 0.0, "wireless.wavelength", "must be > 0");
  require(wireless.aperture_radius > 0.0, "wireless.aperture_radius", "must be > 0");
  require(wireless.aperture_samples >= 8, "wireless.aperture_samples", "must be >= 8");
  require(wireless.refresh_every >= 1, "wireless.refresh_every", "must be >= 1");
  require(wireless.phase_noise_min >= 0.0 && wireless.phase_noise_max >= wireless.phase_noise_min,
          "wireless.phase_noise_min", "need 0 <= phase_noise_min <= phase_noise_max");
  require(wireless.range_std > 0.0, "wireless.range_std", "must be > 0");
  require(wireless.tolerance_noise >= 0.0, "wireless.tolerance_noise", "must be >= 0");
  require(wireless.staleness_horizon > 0.0, "wireless.staleness_horizon", "must be > 0");
  require(drift.translation_fraction >= 0.0 && drift.yaw_deg >= 0.0, "drift", "must be >= 0");
  require(weighting.anchor_weight > 0.0 && weighting.anchor_weight < 1.0, "weighting.anchor_weight",
          "must be in (0,1)");
  require(weighting.ci > 0.0 && weighting.ci < 1.0, "weighting.ci", "must be in (0, 1)");
  require(training.steps >= 1, "training.steps", "must be >= 1");
  require(training.batch_size >= 1, "training.batch_size", "must be >= 1");
  require(training.learning_rate > 0.0, "training.learning_rate", "must be > 0");
  require(training.n_samples >= 1, "training.n_samples", "must be >= 1");
  require(training.grid >= 2, "training.grid", "must be >= 2");
  require(training.eval_every >= 0, "training.eval_every", "must be >= 0");
  require(planner.candidates >= 1, "planner.candidates", "must be >= 1");
  require(planner.step > 0.0, "planner.step", "must be > 0");
  require(planner.rays >= 1, "planner.rays", "must be >= 1");
  require(planner.base_origin_std >= 0.0, "planner.base_origin_std", "must be >= 0");
  require(planner.initial_views_per_robot >= 1, "planner.initial_views_per_robot", "must be >= 1");
  require(planner.captures_per_move >= 1, "planner.captures_per_move", "must be >= 1");
  require(planner.steps_per_round >= 1, "planner.steps_per_round", "must be >= 1");
  require(planner.workspace_band > 0.0, "planner.workspace_band", "must be > 0");
  require(test_views.count >= 1, "test_views.count", "must be >= 1");
  require(test_views.radius > 0.0, "test_views.radius", "must be > 0");
  require(sweep.noise_min >= 0.0 && sweep.noise_max >= sweep.noise_min, "sweep.noise_min",
          "need 0 <= noise_min <= noise_max");
  require(sweep.levels >= 1, "sweep.levels", "must be >= 1");
  require(sweep.trials >= 16, "sweep.trials", "must be >= 16");
  require(sweep.source_distance > 0.0, "sweep.source_distance", "must be > 0");
  require(sweep.window_fraction > 0.0 && sweep.window_fraction <= 1.0, "sweep.window_fraction",
          "must be in (0, 1]");
}

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.mark.line + 1, e.msg);
  }
  if (root.IsNull()) return from_yaml(YAML::Node(YAML::NodeType::Map));
  return from_yaml(root);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("", 0, "cannot open config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  using nlohmann::ordered_json;
  auto vec = [](const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); };
  ordered_json j;
  j["label"] = c.label;
  j["seeds"] = c.seeds;
  j["scene"] = {{"preset", c.scene.preset}, {"edge_width", c.scene.edge_width}};
  j["camera"] = {{"width", c.camera.width}, {"height", c.camera.height}, {"focal", c.camera.focal}};
  const auto& t = c.trajectory;
  j["trajectory"] = {{"frames_per_robot", t.frames_per_robot}, {"radius", t.radius},
                     {"alpha_start_deg", t.alpha_start_deg}, {"alpha_end_deg", t.alpha_end_deg},
                     {"beta_start_deg", t.beta_start_deg},   {"beta_end_deg", t.beta_end_deg},
                     {"ground_height", t.ground_height},     {"camera_height", t.camera_height},
                     {"frame_period", t.frame_period},       {"scene_center", vec(t.scene_center)}};
  const auto& w = c.wireless;
  j["wireless"] = {{"wavelength", w.wavelength},           {"aperture_radius", w.aperture_radius},
                   {"aperture_samples", w.aperture_samples}, {"refresh_every", w.refresh_every},
                   {"phase_noise_min", w.phase_noise_min}, {"phase_noise_max", w.phase_noise_max},
                   {"range_std", w.range_std},             {"tolerance_noise", w.tolerance_noise},
                   {"staleness_horizon", w.staleness_horizon}};
  j["drift"] = {{"translation_fraction", c.drift.translation_fraction},
                {"yaw_deg", c.drift.yaw_deg}};
  j["weighting"] = {{"mode", mode_name(c.weighting.mode)},
                    {"anchor_weight", c.weighting.anchor_weight},
                    {"ci", c.weighting.ci}};
  const auto& tr = c.training;
  j["training"] = {{"steps", tr.steps},         {"batch_size", tr.batch_size},
                   {"learning_rate", tr.learning_rate},
                   {"final_lr_fraction", tr.final_lr_fraction},
                   {"n_samples", tr.n_samples}, {"grid", tr.grid},
                   {"eval_every", tr.eval_every}, {"variance_head", tr.variance_head}};
  const auto& p = c.planner;
  j["planner"] = {{"candidates", p.candidates},
                  {"step", p.step},
                  {"rays", p.rays},
                  {"base_origin_std", p.base_origin_std},
                  {"origin_std_growth", p.origin_std_growth},
                  {"initial_views_per_robot", p.initial_views_per_robot},
                  {"captures_per_move", p.captures_per_move},
                  {"initial_steps", p.initial_steps},
                  {"steps_per_round", p.steps_per_round},
                  {"stabilization_window", p.stabilization_window},
                  {"stabilization_tolerance", p.stabilization_tolerance},
                  {"max_wait_steps", p.max_wait_steps},
                  {"variance_head", p.variance_head},
                  {"workspace_band", p.workspace_band}};
  const auto& tv = c.test_views;
  j["test_views"] = {{"count", tv.count},
                     {"radius", tv.radius},
                     {"elevation_min_deg", tv.elevation_min_deg},
                     {"elevation_max_deg", tv.elevation_max_deg},
                     {"azimuth_offset_deg", tv.azimuth_offset_deg}};
  const auto& s = c.sweep;
  j["sweep"] = {{"noise_min", s.noise_min},   {"noise_max", s.noise_max},
                {"levels", s.levels},         {"trials", s.trials},
                {"source_distance", s.source_distance},
                {"window_fraction", s.window_fraction}};
  return j.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : config_to_json(config)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wirefield
