// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: wirefield_acceptance [criterion...]   (default: all)

#include "wirefield/channel.hpp"
#include "wirefield/config.hpp"
#include "wirefield/field.hpp"
#include "wirefield/harness.hpp"
#include "wirefield/localization.hpp"
#include "wirefield/planner.hpp"
#include "wirefield/stats.hpp"
#include "wirefield/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace wirefield;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ExperimentConfig default_config() { return load_config(WIREFIELD_DEFAULT_CONFIG); }

// Setup runs are shared by the ordering and convergence criteria.
struct SetupRuns {
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<MetricsReport>> reports;
  double seconds = 0.0;
};

const SetupRuns& setup_runs() {
  static const SetupRuns runs = [] {
    SetupRuns r;
    Stopwatch clock;
    ExperimentConfig c = default_config();
    r.seeds = c.seeds;
    const Dataset ds = prepare_dataset(c);
    for (const char* label : {"A", "C", "D"}) {
      c.label = label;
      for (std::uint64_t seed : r.seeds) {
        const SetupResult s = run_setup(c, seed, ds);
        std::printf("  setup %s seed %llu: final %.3f dB, at 25%% %.3f dB\n", label,
                    static_cast<unsigned long long>(seed), s.report.psnr,
                    s.report.psnr_at_fraction(0.25));
        std::fflush(stdout);
        r.reports[label].push_back(s.report);
      }
    }
    r.seconds = clock.seconds();
    return r;
  }();
  return runs;
}

std::vector<double> collect(const std::vector<MetricsReport>& reports,
                            const std::function<double(const MetricsReport&)>& f) {
  std::vector<double> v;
  for (const auto& r : reports) v.push_back(f(r));
  return v;
}

Verdict uncertainty_correlation() {
  Stopwatch clock;
  const ExperimentConfig c = default_config();
  const auto levels = linspace(0.01, 3.0, c.sweep.levels);
  const int trials = std::max(16, c.sweep.trials);
  const CorrelationReport r = correlation_study(levels, trials, c.seeds.front(), c.wireless, c.sweep);
  const double t = clock.seconds();
  const bool pass = r.trials.size() >= 16 * levels.size() && r.spearman > 0.6 &&
                    r.fit.r_squared > 0.6 && r.fit.b > 0.0 && t < 300.0;
  return {pass, fmt("%zu trials, spearman %.3f, fit r^2 %.3f, b %.3f, %.0f s", r.trials.size(),
                    r.spearman, r.fit.r_squared, r.fit.b, t)};
}

Verdict setup_ordering() {
  const SetupRuns& runs = setup_runs();
  auto final_psnr = [](const MetricsReport& r) { return r.psnr; };
  const double a = median(collect(runs.reports.at("A"), final_psnr));
  const double c = median(collect(runs.reports.at("C"), final_psnr));
  const double d = median(collect(runs.reports.at("D"), final_psnr));
  const bool pass = runs.seeds.size() >= 5 && a > d && d > c && a - c >= 1.0 && d - c >= 0.3 &&
                    runs.seconds < 1800.0;
  return {pass, fmt("median PSNR A %.3f, D %.3f, C %.3f (A-C %.3f, D-C %.3f) over %zu seeds, %.0f s",
                    a, d, c, a - c, d - c, runs.seeds.size(), runs.seconds)};
}

Verdict convergence_speed() {
  const SetupRuns& runs = setup_runs();
  auto early = [](const MetricsReport& r) { return r.psnr_at_fraction(0.25); };
  const double c = median(collect(runs.reports.at("C"), early));
  const double d = median(collect(runs.reports.at("D"), early));
  return {d - c >= 0.3, fmt("median PSNR at 25%% of steps: D %.3f, C %.3f (D-C %.3f)", d, c, d - c)};
}

Verdict active_loop() {
  Stopwatch clock;
  const ExperimentConfig c = default_config();
  const Dataset ds = prepare_dataset(c);
  constexpr int kRounds = 4;
  constexpr double kDip = 0.05;
  std::vector<double> gains;
  bool monotone = true;
  for (std::uint64_t seed : c.seeds) {
    const auto best = run_active_loop(c, seed, ds, kRounds, ViewPolicy::kBestView).report;
    const auto random = run_active_loop(c, seed, ds, kRounds, ViewPolicy::kRandom).report;
    int dips = 0;
    for (std::size_t i = 1; i < best.rounds.size(); ++i) {
      const double drop = best.rounds[i - 1].psnr - best.rounds[i].psnr;
      if (drop > kDip) monotone = false;
      if (drop > 0.0) ++dips;
    }
    if (dips > 1 || static_cast<int>(best.rounds.size()) != kRounds + 1) monotone = false;
    gains.push_back(best.rounds.back().psnr - random.rounds.back().psnr);
    std::printf("  seed %llu best:", static_cast<unsigned long long>(seed));
    for (const auto& m : best.rounds) std::printf(" %.3f", m.psnr);
    std::printf(" | random:");
    for (const auto& m : random.rounds) std::printf(" %.3f", m.psnr);
    std::printf("\n");
    std::fflush(stdout);
  }
  const double t = clock.seconds();
  const double gain = median(gains);
  const auto wins = std::count_if(gains.begin(), gains.end(), [](double g) { return g >= 0.0; });
  const bool pass = c.seeds.size() >= 5 && gain >= 0.0 && monotone && t < 1800.0;
  return {pass, fmt("median final gain best-random %.3f dB (%td/%zu seeds), best monotone: %s, %.0f s",
                    gain, wins, gains.size(), monotone ? "yes" : "no", t)};
}

VoxelField random_field(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> density(-1.0, 2.0), color(-2.0, 2.0), logvar(-5.0, -0.5);
  VoxelField f({n, n, n}, Aabb{});
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        f.raw(x, y, z, VoxelField::kDensity) = density(rng);
        for (int ch = 1; ch <= 3; ++ch) f.raw(x, y, z, ch) = color(rng);
        f.raw(x, y, z, VoxelField::kLogVariance) = logvar(rng);
      }
  return f;
}

Verdict score_oracle() {
  double worst = 0.0;
  int points = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const VoxelField field = random_field(4, seed);
    const CameraModel cam = CameraModel::centered(8, 8, 6.0);
    std::mt19937_64 place(seed + 100);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi), sd(0.0, 0.2);
    CandidateView cand;
    const double a = ang(place);
    cand.pose = Pose::look_at(Vec3(2.5 * std::cos(a), 2.5 * std::sin(a), 0.7), Vec3::Zero());
    cand.origin_std = sd(place);
    ScoreOptions opts;
    opts.n_rays = 16;
    opts.render.n_samples = 8;
    const ViewScore score = score_candidate(field, cand, cam, opts, seed);

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> px(0, cam.width - 1), py(0, cam.height - 1);
    double reduction = 0.0;
    for (int r = 0; r < opts.n_rays; ++r) {
      const int x = px(rng), y = py(rng);
      const RenderResult rr = render(field, camera_ray(cam, cand.pose, x + 0.5, y + 0.5), opts.render);
      for (std::size_t k = 0; k < rr.weights.size(); ++k) {
        const double w = rr.weights[k];
        if (w <= opts.visibility_cutoff) continue;
        const double b = rr.point_variances[k];
        const double s2 = cand.origin_std * cand.origin_std;
        reduction += b - 1.0 / (w * w / (w * w * s2 + rr.variance) + 1.0 / b);
        ++points;
      }
    }
    worst = std::max(worst, std::abs(score.reduction - reduction));
  }

  double special = 0.0;
  const double point = 0.3, ray = 0.2, alpha = 0.6;
  special = std::max(special, std::abs(posterior_variance(point, ray, alpha, 0.0) -
                                       1.0 / (alpha * alpha / ray + 1.0 / point)));
  special = std::max(special, std::abs(posterior_variance(point, ray, 0.0, 0.4) - point));
  special = std::max(special, std::abs(posterior_variance(0.25, 0.25, 1.0, 0.0) - 0.125));
  const bool pass = points > 0 && worst < 1e-9 && special < 1e-12;
  return {pass, fmt("score vs brute force max |diff| %.2e over %d points, special cases %.2e",
                    worst, points, special)};
}

Verdict renderer() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  VoxelField f({6, 6, 6}, Aabb{});
  for (double& p : f.params()) p = u(rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::minstd_rand jitter(5);
  double worst_sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 dir = Vec3(n(rng), n(rng), n(rng)).normalized();
    const Vec3 through = 0.8 * Vec3(n(rng), n(rng), n(rng)).cwiseMax(-1.0).cwiseMin(1.0);
    const RenderResult r = render(f, Ray(through - 4.0 * dir, dir, 0.0, 8.0), {32}, i % 2 ? &jitter : nullptr);
    double sum = r.transmittance;
    for (double a : r.weights) sum += a;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }

  double worst_slab = 0.0;
  for (double sigma : {0.1, 0.7, 2.5, 6.0}) {
    VoxelField slab({4, 4, 4}, Aabb{});
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) slab.raw(x, y, z, VoxelField::kDensity) = softplus_inverse(sigma);
    const RenderResult r = render(slab, Ray(Vec3(-3, 0.2, -0.1), Vec3::UnitX(), 0.0, 6.0), {256});
    double opacity = 0.0;
    for (double a : r.weights) opacity += a;
    worst_slab = std::max(worst_slab, std::abs(opacity - (1.0 - std::exp(-sigma * 2.0))));
  }
  return {worst_sum < 1e-6 && worst_slab < 1e-3,
          fmt("max |sum alpha + T - 1| %.2e on 10^4 rays, max slab opacity error %.2e", worst_sum,
              worst_slab)};
}

Verdict gradients() {
  double worst = 0.0;
  std::array<double, VoxelField::kChannels> per{};
  for (bool head : {false, true}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const GradientCheckResult r = gradient_check(4, 8, head, seed);
      worst = std::max(worst, r.max_relative_error);
      for (int ch = 0; ch < VoxelField::kChannels; ++ch) per[ch] = std::max(per[ch], r.channel_error[ch]);
    }
  }
  const double color = std::max({per[1], per[2], per[3]});
  return {worst < 1e-4,
          fmt("max relative error %.2e (density %.2e, color %.2e, log-variance %.2e)", worst, per[0],
              color, per[4])};
}

Verdict profile_fixed_point() {
  const ExperimentConfig c = default_config();
  const auto& w = c.wireless;
  // A climbing circle so that zenith is resolvable.
  std::vector<Pose> helix;
  for (int i = 0; i < w.aperture_samples; ++i) {
    const double a = 2.0 * kPi * i / w.aperture_samples;
    helix.push_back(Pose::from_translation(
        {w.aperture_radius * std::cos(a), w.aperture_radius * std::sin(a), 0.3 * i / w.aperture_samples}));
  }
  const AngleAxis az = AngleAxis::azimuth(kDefaultAzimuthBins);
  const AngleAxis ze = AngleAxis::zenith(kDefaultZenithBins);
  int exact = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    const int i = std::uniform_int_distribution<int>(0, az.count - 1)(rng);
    const int j = std::uniform_int_distribution<int>(ze.count / 4, 3 * ze.count / 4)(rng);
    const Direction d =
        peak(compute_profile(reconstruct_channel(helix, az[i], ze[j], w.wavelength, w.tolerance_noise, seed)));
    if (d.azimuth == az[i] && d.zenith == ze[j]) ++exact;
  }

  int within = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed);
    const double a = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
    const Vec3 source = c.sweep.source_distance * direction_vector(a, kPi / 2);
    const AoaObservation obs = observe_aoa(source, w, 0.7, seed);
    if (std::abs(obs.error) <= az.step) ++within;
  }
  return {exact == 100 && within >= 95,
          fmt("reconstruction peak exact in %d/100, 0.7 rad AoA within one bin in %d/100", exact, within)};
}

Verdict ellipse() {
  auto measurement = [](double t, double sigma, double kappa) {
    WirelessMeasurement m;
    m.source = "alpha";
    m.target = "beta";
    m.range = t;
    m.range_std = sigma;
    m.aoa = {0.7, kPi / 2, kappa};
    return m;
  };
  const double k = confidence_scale(0.95);
  double identity = 0.0;
  bool monotone = true;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      for (int l = 0; l < 10; ++l) {
        const double sigma = 0.01 + 0.05 * i, kappa = 0.01 + 0.03 * j, t = 0.5 + 0.7 * l;
        const auto e = error_ellipse(measurement(t, sigma, kappa));
        const double lhs = e.semi_major * e.semi_major + e.semi_minor * e.semi_minor;
        const double rhs = sigma * sigma + t * t * kappa * kappa;
        identity = std::max(identity, std::abs(lhs - rhs) / rhs);
        if (i > 0 && !(e.area > error_ellipse(measurement(t, sigma - 0.05, kappa)).area)) monotone = false;
        if (j > 0 && !(e.area > error_ellipse(measurement(t, sigma, kappa - 0.03)).area)) monotone = false;
        if (l > 0 && !(e.area > error_ellipse(measurement(t - 0.7, sigma, kappa)).area)) monotone = false;
      }
    }
  }
  const bool pass = identity < 1e-12 && std::abs(k - 2.4477) <= 1e-4 && monotone;
  return {pass, fmt("a^2+b^2 relative error %.2e, k(0.95) = %.6f, area monotone on 10^3 grid: %s",
                    identity, k, monotone ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Relative path -> contents of every file under `root`.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

Verdict determinism() {
  const fs::path work = fs::path(WIREFIELD_ACCEPTANCE_WORKDIR) / "determinism";
  fs::remove_all(work);
  const std::string cli = WIREFIELD_CLI;
  const std::string config = WIREFIELD_SMOKE_CONFIG;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"run-setup", "run-setup --label D --seed 7"},
      {"active-loop", "active-loop --policy best --rounds 2"},
      {"uncertainty-sweep", "uncertainty-sweep --trials 16 --noise 0.01:3"},
      {"profile", "profile --seed 3"},
      {"simulate-channel", "simulate-channel --seed 3"},
  };
  int identical = 0;
  std::string mismatch;
  for (const auto& [name, args] : commands) {
    std::map<std::string, std::string> first;
    bool ok = true;
    for (int run = 0; run < 2 && ok; ++run) {
      const fs::path out = work / (name + "-" + std::to_string(run));
      const std::string cmd = "\"" + cli + "\" " + args + " --config \"" + config + "\" --out \"" +
                              out.string() + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) {
        ok = false;
        mismatch = name + " failed";
        break;
      }
      auto files = snapshot(out);
      if (run == 0) {
        first = std::move(files);
      } else if (files != first || first.empty()) {
        ok = false;
        mismatch = name + " differs";
      }
    }
    if (ok) ++identical;
  }
  return {identical == static_cast<int>(commands.size()),
          fmt("%d/%zu commands byte-identical across repeated runs%s%s", identical, commands.size(),
              mismatch.empty() ? "" : "; ", mismatch.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  Verdict (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "uncertainty metric tracks AoA error", uncertainty_correlation},
      {2, "setup ordering A > D > C", setup_ordering},
      {3, "down-weighting converges faster", convergence_speed},
      {4, "best-view beats random acquisition", active_loop},
      {5, "view score equals brute force", score_oracle},
      {6, "renderer conservation and slab opacity", renderer},
      {7, "analytic gradients", gradients},
      {8, "profile reconstruction fixed point", profile_fixed_point},
      {9, "error-ellipse identities", ellipse},
      {10, "CLI determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2d %s: %s (%s)\n", c.id, v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
