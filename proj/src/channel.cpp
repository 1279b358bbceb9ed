#include "wirefield/channel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace wirefield {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double max_displacement(std::span<const Pose> poses) {
  double m = 0.0;
  for (const Pose& p : poses) {
    m = std::max(m, (p.translation() - poses.front().translation()).norm());
  }
  return m;
}

void require_aperture(std::span<const Pose> poses) {
  if (poses.size() < 2) {
    throw std::invalid_argument("aperture needs at least two poses");
  }
  if (max_displacement(poses) < 1e-12) {
    throw std::invalid_argument("degenerate aperture: antenna never moves");
  }
}

std::vector<double> make_timestamps(std::size_t n, double period) {
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = static_cast<double>(i) * period;
  return ts;
}

}  // namespace

void ChannelTrace::validate() const {
  if (samples.size() < 2) throw std::invalid_argument("ChannelTrace: needs >= 2 samples");
  if (timestamps.size() != samples.size() || local_poses.size() != samples.size()) {
    throw std::invalid_argument("ChannelTrace: samples, timestamps and poses differ in length");
  }
  if (!(wavelength > 0.0)) throw std::invalid_argument("ChannelTrace: wavelength must be > 0");
}

Vec3 direction_vector(double azimuth, double zenith) {
  const double s = std::sin(zenith);
  return {s * std::cos(azimuth), s * std::sin(azimuth), std::cos(zenith)};
}

double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

int AngleAxis::nearest(double angle, bool periodic) const {
  if (periodic) {
    const double span = step * count;
    double rel = std::fmod(angle - start, span);
    if (rel < 0) rel += span;
    return static_cast<int>(std::lround(rel / step)) % count;
  }
  const long i = std::lround((angle - start) / step);
  return static_cast<int>(std::clamp<long>(i, 0, count - 1));
}

AngleAxis AngleAxis::azimuth(int bins) { return {0.0, kTwoPi / bins, bins}; }
AngleAxis AngleAxis::zenith(int bins) { return {0.0, std::numbers::pi / bins, bins}; }

AoaProfile::AoaProfile(AngleAxis azimuth, AngleAxis zenith)
    : azimuth_(azimuth), zenith_(zenith) {
  if (azimuth.count <= 0 || zenith.count <= 0 || !(azimuth.step > 0) || !(zenith.step > 0)) {
    throw std::invalid_argument("AoaProfile: axes must be non-empty and increasing");
  }
  values_.assign(static_cast<std::size_t>(azimuth.count) * zenith.count, 0.0);
}

ChannelTrace simulate_channel(const Vec3& tx_position, std::span<const Pose> rx_trajectory,
                              double wavelength, double phase_noise_std, std::uint64_t seed,
                              double sample_period) {
  if (rx_trajectory.size() < 2) throw std::invalid_argument("simulate_channel: need >= 2 poses");
  if (!(wavelength > 0.0)) throw std::invalid_argument("simulate_channel: wavelength must be > 0");
  if (phase_noise_std < 0.0) throw std::invalid_argument("simulate_channel: negative noise std");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  ChannelTrace trace;
  trace.wavelength = wavelength;
  trace.local_poses.assign(rx_trajectory.begin(), rx_trajectory.end());
  trace.timestamps = make_timestamps(rx_trajectory.size(), sample_period);
  trace.samples.reserve(rx_trajectory.size());
  for (const Pose& pose : rx_trajectory) {
    const double d = (tx_position - pose.translation()).norm();
    if (!(d > 0.0)) {
      throw std::invalid_argument("simulate_channel: receiver passes through the transmitter");
    }
    const double phase = -kTwoPi * d / wavelength + phase_noise_std * noise(rng);
    trace.samples.push_back(std::polar(1.0 / d, phase));
  }
  return trace;
}

double projected_displacement(const Pose& origin, const Pose& pose, double azimuth,
                              double zenith) {
  return -(pose.translation() - origin.translation()).dot(direction_vector(azimuth, zenith));
}

AoaProfile compute_profile(const ChannelTrace& trace, int azimuth_bins, int zenith_bins) {
  trace.validate();
  if (azimuth_bins < 8 || zenith_bins < 8) {
    throw std::invalid_argument("compute_profile: need at least 8 bins per axis");
  }
  require_aperture(trace.local_poses);

  AoaProfile profile(AngleAxis::azimuth(azimuth_bins), AngleAxis::zenith(zenith_bins));
  const std::size_t n = trace.size();
  const double k = kTwoPi / trace.wavelength;
  const Vec3 p0 = trace.local_poses.front().translation();

  std::vector<double> cos_az(azimuth_bins), sin_az(azimuth_bins);
  for (int i = 0; i < azimuth_bins; ++i) {
    cos_az[i] = std::cos(profile.azimuth_axis()[i]);
    sin_az[i] = std::sin(profile.azimuth_axis()[i]);
  }
  std::vector<double> ax(n), ay(n), az(n);
  for (int j = 0; j < zenith_bins; ++j) {
    const double theta = profile.zenith_axis()[j];
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    for (std::size_t t = 0; t < n; ++t) {
      const Vec3 dp = trace.local_poses[t].translation() - p0;
      ax[t] = -k * dp.x() * st;
      ay[t] = -k * dp.y() * st;
      az[t] = -k * dp.z() * ct;
    }
    for (int i = 0; i < azimuth_bins; ++i) {
      double re = 0.0;
      double im = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double phase = ax[t] * cos_az[i] + ay[t] * sin_az[i] + az[t];
        const double c = std::cos(phase);
        const double s = std::sin(phase);
        const Complex& h = trace.samples[t];
        re += h.real() * c - h.imag() * s;
        im += h.real() * s + h.imag() * c;
      }
      profile.at(i, j) = re * re + im * im;
    }
  }
  return profile;
}

Direction peak(const AoaProfile& profile) {
  int best_i = 0;
  int best_j = 0;
  double best = profile.at(0, 0);
  for (int j = 0; j < profile.zenith_axis().count; ++j) {
    for (int i = 0; i < profile.azimuth_axis().count; ++i) {
      if (profile.at(i, j) > best) {
        best = profile.at(i, j);
        best_i = i;
        best_j = j;
      }
    }
  }
  return {profile.azimuth_axis()[best_i], profile.zenith_axis()[best_j]};
}

Direction peak_at_zenith(const AoaProfile& profile, double zenith) {
  const int j = profile.zenith_axis().nearest(zenith, false);
  int best_i = 0;
  for (int i = 1; i < profile.azimuth_axis().count; ++i) {
    if (profile.at(i, j) > profile.at(best_i, j)) best_i = i;
  }
  return {profile.azimuth_axis()[best_i], profile.zenith_axis()[j]};
}

ChannelTrace reconstruct_channel(std::span<const Pose> poses, double azimuth, double zenith,
                                 double wavelength, double tolerance_noise_std,
                                 std::uint64_t seed, double sample_period) {
  require_aperture(poses);
  if (!(wavelength > 0.0)) throw std::invalid_argument("reconstruct_channel: wavelength must be > 0");
  if (tolerance_noise_std < 0.0) {
    throw std::invalid_argument("reconstruct_channel: negative tolerance noise");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  ChannelTrace trace;
  trace.wavelength = wavelength;
  trace.local_poses.assign(poses.begin(), poses.end());
  trace.timestamps = make_timestamps(poses.size(), sample_period);
  trace.samples.reserve(poses.size());
  const double k = kTwoPi / wavelength;
  for (const Pose& pose : poses) {
    const double f = projected_displacement(poses.front(), pose, azimuth, zenith);
    trace.samples.push_back(std::polar(1.0, -k * f + tolerance_noise_std * noise(rng)));
  }
  return trace;
}

double aoa_uncertainty(const AoaProfile& measured, const AoaProfile& reconstructed,
                       const Direction& peak, KappaNormalization normalization,
                       double crop_width) {
  if (!measured.same_axes(reconstructed)) {
    throw std::invalid_argument("aoa_uncertainty: profiles have different axes");
  }
  const AngleAxis& az = measured.azimuth_axis();
  const AngleAxis& ze = measured.zenith_axis();
  const double half = 0.5 * crop_width + 1e-9;

  std::vector<int> az_idx;
  for (int i = 0; i < az.count; ++i) {
    if (std::abs(wrap_angle(az[i] - peak.azimuth)) <= half) az_idx.push_back(i);
  }
  std::vector<int> ze_idx;
  for (int j = 0; j < ze.count; ++j) {
    if (std::abs(ze[j] - peak.zenith) <= half) ze_idx.push_back(j);
  }
  if (az_idx.empty() || ze_idx.empty()) {
    throw std::invalid_argument("aoa_uncertainty: peak does not lie on the profile axes");
  }

  double sum_m = 0.0;
  double sum_r = 0.0;
  if (normalization == KappaNormalization::kCrop) {
    for (int j : ze_idx) {
      for (int i : az_idx) {
        sum_m += measured.at(i, j);
        sum_r += reconstructed.at(i, j);
      }
    }
  } else {
    for (double v : measured.values()) sum_m += v;
    for (double v : reconstructed.values()) sum_r += v;
  }
  const double cells = static_cast<double>(az_idx.size() * ze_idx.size());
  double overlap = 0.0;
  for (int j : ze_idx) {
    for (int i : az_idx) {
      // An all-zero crop carries no concentration; treat it as uniform.
      const double p = sum_m > 0.0 ? measured.at(i, j) / sum_m : 1.0 / cells;
      const double q = sum_r > 0.0 ? reconstructed.at(i, j) / sum_r : 1.0 / cells;
      overlap += p * q;
    }
  }
  return 1.0 / overlap;
}

void write_profile(std::ostream& os, const AoaProfile& profile) {
  const auto& az = profile.azimuth_axis();
  const auto& ze = profile.zenith_axis();
  os.precision(17);
  os << "aoa-profile\n";
  os << "azimuth " << az.count << ' ' << az.start << ' ' << az.step << '\n';
  os << "zenith " << ze.count << ' ' << ze.start << ' ' << ze.step << '\n';
  for (int j = 0; j < ze.count; ++j) {
    for (int i = 0; i < az.count; ++i) {
      if (i) os << ' ';
      os << profile.at(i, j);
    }
    os << '\n';
  }
}

AoaProfile read_profile(std::istream& is) {
  std::string tag;
  if (!(is >> tag) || tag != "aoa-profile") throw std::runtime_error("read_profile: bad header");
  auto read_axis = [&](const char* name) {
    std::string key;
    AngleAxis axis;
    if (!(is >> key >> axis.count >> axis.start >> axis.step) || key != name) {
      throw std::runtime_error(std::string("read_profile: bad ") + name + " axis");
    }
    return axis;
  };
  const AngleAxis az = read_axis("azimuth");
  const AngleAxis ze = read_axis("zenith");
  AoaProfile profile(az, ze);
  for (int j = 0; j < ze.count; ++j) {
    for (int i = 0; i < az.count; ++i) {
      if (!(is >> profile.at(i, j))) throw std::runtime_error("read_profile: truncated body");
    }
  }
  return profile;
}

void write_trace_csv(std::ostream& os, const ChannelTrace& trace) {
  os.precision(17);
  os << "t,re,im\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << trace.timestamps[i] << ',' << trace.samples[i].real() << ','
       << trace.samples[i].imag() << '\n';
  }
}

}  // namespace wirefield
