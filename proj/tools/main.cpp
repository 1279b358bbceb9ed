#include "wirefield/channel.hpp"
#include "wirefield/config.hpp"
#include "wirefield/harness.hpp"
#include "wirefield/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace wirefield;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInterrupted = 130;
constexpr const char* kOutEnv = "WIREFIELD_OUT";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string label;
  std::string policy = "best";
  int rounds = 4;
  std::optional<int> trials;
  std::string noise;
  int grid = 4;
  double phase_noise = 0.7;
  double azimuth_deg = 45.6;
  std::string field;
};

void on_sigint(int) { Trainer::interrupt_flag() = true; }

fs::path output_dir(const Options& o, const std::string& command) {
  fs::path dir;
  if (!o.out.empty()) {
    dir = o.out;
  } else if (const char* root = std::getenv(kOutEnv); root && *root) {
    dir = fs::path(root) / command;
  } else {
    dir = fs::path("wirefield-out") / command;
  }
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.label.empty()) {
    c.label = o.label;
    c.validate();
  }
  if (o.trials) {
    c.sweep.trials = *o.trials;
    c.validate();
  }
  if (!o.noise.empty()) {
    const auto colon = o.noise.find(':');
    auto number = [&](const std::string& text) {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    };
    try {
      if (colon == std::string::npos) throw std::invalid_argument(o.noise);
      c.sweep.noise_min = number(o.noise.substr(0, colon));
      c.sweep.noise_max = number(o.noise.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--noise", 0, "expected LO:HI, got '" + o.noise + "'");
    }
    c.validate();
  }
  return c;
}

std::vector<std::uint64_t> seeds_for(const Options& o, const ExperimentConfig& c) {
  if (o.seed) return {*o.seed};
  return c.seeds;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

template <typename F>
void write_with(const fs::path& path, F&& fill) {
  std::ostringstream os;
  fill(os);
  write_file(path, os.str());
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& c,
                    const std::vector<std::uint64_t>& seeds) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seeds"] = seeds;
  j["config_hash"] = config_hash(c);
  j["config"] = nlohmann::ordered_json::parse(config_to_json(c));
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

Vec3 source_position(const Options& o, const ExperimentConfig& c) {
  const double az = o.azimuth_deg * std::numbers::pi / 180.0;
  return c.sweep.source_distance * direction_vector(az, std::numbers::pi / 2);
}

int cmd_simulate_channel(const Options& o) {
  const ExperimentConfig c = load(o);
  const std::uint64_t seed = seeds_for(o, c).front();
  const fs::path dir = output_dir(o, "simulate-channel");
  const auto& w = c.wireless;
  const ChannelTrace trace =
      simulate_channel(source_position(o, c), circular_aperture(w.aperture_radius, w.aperture_samples),
                       w.wavelength, o.phase_noise, seed);
  write_manifest(dir, "simulate-channel", c, {seed});
  write_with(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
  std::cout << "wrote " << trace.size() << " samples to " << (dir / "trace.csv").string() << '\n';
  return 0;
}

int cmd_profile(const Options& o) {
  const ExperimentConfig c = load(o);
  const std::uint64_t seed = seeds_for(o, c).front();
  const fs::path dir = output_dir(o, "profile");
  const auto& w = c.wireless;
  const auto aperture = circular_aperture(w.aperture_radius, w.aperture_samples);
  const ChannelTrace trace =
      simulate_channel(source_position(o, c), aperture, w.wavelength, o.phase_noise, seed);
  const AoaProfile measured = compute_profile(trace);
  const Direction p = peak_at_zenith(measured, std::numbers::pi / 2);
  const AoaProfile rebuilt = compute_profile(reconstruct_channel(
      aperture, p.azimuth, p.zenith, w.wavelength, w.tolerance_noise, derive_seed(seed, 1)));
  const double kappa = aoa_uncertainty(measured, rebuilt, p);

  write_manifest(dir, "profile", c, {seed});
  write_with(dir / "measured.txt", [&](std::ostream& os) { write_profile(os, measured); });
  write_with(dir / "reconstructed.txt", [&](std::ostream& os) { write_profile(os, rebuilt); });
  nlohmann::ordered_json j;
  j["true_azimuth_deg"] = o.azimuth_deg;
  j["peak_azimuth_deg"] = p.azimuth * 180.0 / std::numbers::pi;
  j["peak_zenith_deg"] = p.zenith * 180.0 / std::numbers::pi;
  j["kappa"] = kappa;
  write_file(dir / "summary.json", j.dump(2) + "\n");
  std::cout << "peak azimuth " << j["peak_azimuth_deg"].get<double>() << " deg, kappa " << kappa
            << '\n';
  return 0;
}

int cmd_sweep(const Options& o) {
  const ExperimentConfig c = load(o);
  const std::uint64_t seed = seeds_for(o, c).front();
  const fs::path dir = output_dir(o, "uncertainty-sweep");
  const auto levels = linspace(c.sweep.noise_min, c.sweep.noise_max, c.sweep.levels);
  const CorrelationReport r = correlation_study(levels, c.sweep.trials, seed, c.wireless, c.sweep);
  write_manifest(dir, "uncertainty-sweep", c, {seed});
  write_with(dir / "sweep.csv", [&](std::ostream& os) { write_sweep_csv(os, r); });
  write_with(dir / "fit.json", [&](std::ostream& os) { write_sweep_json(os, r); });
  std::cout << r.trials.size() << " trials, spearman " << r.spearman << ", fit y = " << r.fit.a
            << " * x^" << r.fit.b << " (r^2 " << r.fit.r_squared << ", " << r.fit.points
            << " windows)\n";
  return 0;
}

int save_checkpoint(const fs::path& dir, const VoxelField& field) {
  const fs::path path = dir / "checkpoint.wfvf";
  save_field(field, path.string());
  std::cerr << "interrupted; checkpoint saved to " << path.string() << '\n';
  return kExitInterrupted;
}

int cmd_run_setup(const Options& o) {
  const ExperimentConfig c = load(o);
  const auto seeds = seeds_for(o, c);
  const fs::path dir = output_dir(o, "run-setup");
  write_manifest(dir, "run-setup", c, seeds);
  Dataset ds;
  try {
    ds = prepare_dataset(c, dir / "cache");
  } catch (const std::exception& e) {
    throw StageError("dataset", seeds.front(), e.what());
  }

  std::ostringstream summary;
  summary.precision(10);
  summary << "label,seed,psnr,ssim,psnr_at_25pct,mean_position_error\n";
  for (std::uint64_t seed : seeds) {
    const SetupResult r = run_setup(c, seed, ds);
    const fs::path run = dir / (c.label + "-seed" + std::to_string(seed));
    fs::create_directories(run);
    if (r.report.interrupted) return save_checkpoint(run, r.field);
    write_with(run / "report.json", [&](std::ostream& os) { write_report_json(os, r.report); });
    write_with(run / "curve.csv", [&](std::ostream& os) { write_curve_csv(os, r.report); });
    write_with(run / "frames.txt", [&](std::ostream& os) { write_frame_manifest(os, r.report.frames); });
    std::vector<WirelessMeasurement> ms;
    for (const auto& ex : r.report.exchanges) {
      ms.push_back(ex.forward);
      ms.push_back(ex.reverse);
    }
    write_with(run / "measurements.csv", [&](std::ostream& os) { write_measurements_csv(os, ms); });
    save_field(r.field, (run / "field.wfvf").string());
    summary << c.label << ',' << seed << ',' << r.report.psnr << ',' << r.report.ssim << ','
            << r.report.psnr_at_fraction(0.25) << ',' << r.report.mean_position_error << '\n';
    std::cout << "setup " << c.label << " seed " << seed << ": psnr " << r.report.psnr
              << " dB, ssim " << r.report.ssim << '\n';
  }
  write_file(dir / ("summary-" + c.label + ".csv"), summary.str());
  return 0;
}

int cmd_active_loop(const Options& o) {
  const ExperimentConfig c = load(o);
  if (o.policy != "best" && o.policy != "random") {
    throw ConfigError("--policy", 0, "expected 'best' or 'random', got '" + o.policy + "'");
  }
  if (o.rounds < 0) throw ConfigError("--rounds", 0, "must be >= 0");
  const ViewPolicy policy = o.policy == "best" ? ViewPolicy::kBestView : ViewPolicy::kRandom;
  const auto seeds = seeds_for(o, c);
  const fs::path dir = output_dir(o, "active-loop");
  write_manifest(dir, "active-loop", c, seeds);
  Dataset ds;
  try {
    ds = prepare_dataset(c, dir / "cache");
  } catch (const std::exception& e) {
    throw StageError("dataset", seeds.front(), e.what());
  }
  for (std::uint64_t seed : seeds) {
    const ActiveLoopResult r = run_active_loop(c, seed, ds, o.rounds, policy);
    const fs::path run = dir / (o.policy + "-seed" + std::to_string(seed));
    fs::create_directories(run);
    if (r.report.interrupted) return save_checkpoint(run, r.field);
    write_with(run / "report.json", [&](std::ostream& os) { write_active_report_json(os, r.report); });
    write_with(run / "rounds.csv", [&](std::ostream& os) {
      os.precision(10);
      os << "round,psnr,ssim,total_steps,views\n";
      for (const auto& m : r.report.rounds) {
        os << m.round << ',' << m.psnr << ',' << m.ssim << ',' << m.total_steps << ',' << m.views << '\n';
      }
    });
    std::cout << o.policy << " seed " << seed << ':';
    for (const auto& m : r.report.rounds) std::cout << ' ' << m.psnr;
    std::cout << '\n';
  }
  return 0;
}

int cmd_render(const Options& o) {
  const ExperimentConfig c = load(o);
  const fs::path dir = output_dir(o, "render");
  write_manifest(dir, "render", c, {});
  const SyntheticScene scene = make_scene(c.scene);
  const CameraModel cam = CameraModel::centered(c.camera.width, c.camera.height, c.camera.focal);
  std::optional<VoxelField> field;
  if (!o.field.empty()) field = load_field(o.field);
  const auto poses = test_view_poses(c.test_views, c.trajectory.scene_center);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Image truth = render_ground_truth(scene, cam, poses[i]);
    std::ostringstream name;
    name << "view" << (i < 10 ? "0" : "") << i;
    write_png((dir / (name.str() + "-truth.png")).string(), truth);
    if (field) {
      const Image out = render_image(*field, cam, poses[i], {c.training.n_samples, scene.background});
      write_png((dir / (name.str() + "-field.png")).string(), out);
      std::cout << name.str() << ": psnr " << psnr(out, truth) << " dB\n";
    }
  }
  std::cout << "rendered " << poses.size() << " views to " << dir.string() << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const std::uint64_t seed = o.seed.value_or(1);
  constexpr double kTolerance = 1e-4;
  double worst = 0.0;
  for (bool head : {false, true}) {
    const GradientCheckResult r = gradient_check(o.grid, 8, head, seed);
    std::cout << (head ? "nll" : "mse") << " loss: max relative error " << r.max_relative_error
              << " over " << r.parameters << " parameters (density " << r.channel_error[0]
              << ", color " << std::max({r.channel_error[1], r.channel_error[2], r.channel_error[3]})
              << ", log-variance " << r.channel_error[4] << ")\n";
    worst = std::max(worst, r.max_relative_error);
  }
  std::cout << "max relative error " << worst << (worst < kTolerance ? " ok" : " FAILED") << '\n';
  return worst < kTolerance ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wireless-localized radiance field experiments"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* sub, bool seeded = true) {
    sub->add_option("--config", o.config, "YAML experiment config")->check(CLI::ExistingFile);
    if (seeded) sub->add_option("--seed", o.seed, "override the config seeds with one seed");
    sub->add_option("--out", o.out, std::string("output directory (default $") + kOutEnv + "/<command>)");
  };

  auto* sim = app.add_subcommand("simulate-channel", "simulate a channel trace along the aperture");
  common(sim);
  sim->add_option("--phase-noise", o.phase_noise, "phase noise std (rad)");
  sim->add_option("--azimuth", o.azimuth_deg, "source azimuth (deg)");

  auto* prof = app.add_subcommand("profile", "measured/reconstructed AoA profiles and kappa");
  common(prof);
  prof->add_option("--phase-noise", o.phase_noise, "phase noise std (rad)");
  prof->add_option("--azimuth", o.azimuth_deg, "source azimuth (deg)");

  auto* sweep = app.add_subcommand("uncertainty-sweep", "kappa vs AoA error over a noise sweep");
  common(sweep);
  sweep->add_option("--trials", o.trials, "trials per noise level (>= 16)");
  sweep->add_option("--noise", o.noise, "noise std range LO:HI (rad)");

  auto* setup = app.add_subcommand("run-setup", "train one localization setup and evaluate it");
  common(setup);
  setup->add_option("--label", o.label, "setup label")->check(CLI::IsMember({"A", "B", "C", "D"}));

  auto* active = app.add_subcommand("active-loop", "next-best-view acquisition rounds");
  common(active);
  active->add_option("--policy", o.policy, "view policy")->check(CLI::IsMember({"best", "random"}));
  active->add_option("--rounds", o.rounds, "acquisition rounds")->check(CLI::NonNegativeNumber);

  auto* render = app.add_subcommand("render", "render the test views (and a field snapshot)");
  common(render, false);
  render->add_option("--field", o.field, "field snapshot to render")->check(CLI::ExistingFile);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
  grad->add_option("--grid", o.grid, "grid resolution")->check(CLI::Range(2, 16));
  grad->add_option("--seed", o.seed, "random field seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << '\n' << app.help();
    return kExitUsage;
  }

  std::signal(SIGINT, on_sigint);
  try {
    if (*sim) return cmd_simulate_channel(o);
    if (*prof) return cmd_profile(o);
    if (*sweep) return cmd_sweep(o);
    if (*setup) return cmd_run_setup(o);
    if (*active) return cmd_active_loop(o);
    if (*render) return cmd_render(o);
    if (*grad) return cmd_gradcheck(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const StageError& e) {
    std::cerr << "error in stage '" << e.stage() << "' (seed " << e.seed() << "): " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error in stage 'output': " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
