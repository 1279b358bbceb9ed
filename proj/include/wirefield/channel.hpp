#pragma once

#include "wirefield/geometry.hpp"

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace wirefield {

using Complex = std::complex<double>;

/// Channel samples recorded while the receiving antenna moves along
/// `local_poses` (the receiver's own odometry frame).
struct ChannelTrace {
  std::vector<Complex> samples;
  std::vector<double> timestamps;
  double wavelength = 0.06;
  std::vector<Pose> local_poses;

  void validate() const;
  std::size_t size() const { return samples.size(); }
};

/// Arrival direction: azimuth in [0, 2π) from +x toward +y, zenith in [0, π]
/// from +z.
struct Direction {
  double azimuth = 0.0;
  double zenith = 0.0;
};

/// Unit vector for a direction.
Vec3 direction_vector(double azimuth, double zenith);

/// Uniform angle axis: values start + i * step.
struct AngleAxis {
  double start = 0.0;
  double step = 0.0;
  int count = 0;

  double operator[](int i) const { return start + i * step; }
  bool operator==(const AngleAxis&) const = default;
  /// Nearest sample index for `angle` (azimuth axes wrap).
  int nearest(double angle, bool periodic) const;

  static AngleAxis azimuth(int bins);
  static AngleAxis zenith(int bins);
};

/// Beamforming power over (azimuth, zenith).
class AoaProfile {
 public:
  AoaProfile(AngleAxis azimuth, AngleAxis zenith);

  const AngleAxis& azimuth_axis() const { return azimuth_; }
  const AngleAxis& zenith_axis() const { return zenith_; }

  double& at(int azimuth_index, int zenith_index) {
    return values_[static_cast<std::size_t>(zenith_index) * azimuth_.count + azimuth_index];
  }
  double at(int azimuth_index, int zenith_index) const {
    return values_[static_cast<std::size_t>(zenith_index) * azimuth_.count + azimuth_index];
  }
  std::span<const double> values() const { return values_; }
  bool same_axes(const AoaProfile& other) const {
    return azimuth_ == other.azimuth_ && zenith_ == other.zenith_;
  }

 private:
  AngleAxis azimuth_;
  AngleAxis zenith_;
  std::vector<double> values_;  // zenith-major
};

inline constexpr int kDefaultAzimuthBins = 360;
inline constexpr int kDefaultZenithBins = 90;
/// Phase-noise std used when reconstructing a channel for the uncertainty metric.
inline constexpr double kReconstructionNoiseStd = 0.5;
/// Full width of the crop rectangle around the peak, both axes.
inline constexpr double kCropWidth = 10.0 * 3.14159265358979323846 / 180.0;

/// Ideal free-space channel h = exp(-2πi d / λ) / d at every receiver pose,
/// with zero-mean Gaussian phase noise. Throws when any d is zero.
ChannelTrace simulate_channel(const Vec3& tx_position, std::span<const Pose> rx_trajectory,
                              double wavelength, double phase_noise_std, std::uint64_t seed,
                              double sample_period = 0.01);

/// Path-length change toward (azimuth, zenith) of `pose` relative to `origin`:
/// -(p - p0) · u(φ, θ).
double projected_displacement(const Pose& origin, const Pose& pose, double azimuth,
                              double zenith);

/// Bartlett synthetic-aperture profile:
///   F(φ, θ) = |Σ_t h(t) exp(+2πi/λ · f(t, φ, θ))|²
/// Rejects traces whose antenna never moves.
AoaProfile compute_profile(const ChannelTrace& trace, int azimuth_bins = kDefaultAzimuthBins,
                           int zenith_bins = kDefaultZenithBins);

/// Global maximum; ties go to the smallest zenith index, then azimuth index.
Direction peak(const AoaProfile& profile);

/// Maximum over azimuth restricted to the zenith row nearest `zenith`. Used
/// for coplanar robots where the elevation is known.
Direction peak_at_zenith(const AoaProfile& profile, double zenith);

/// Unit-magnitude channel a source at (azimuth, zenith) would have produced
/// along `poses`, with tolerance phase noise ν(t).
ChannelTrace reconstruct_channel(std::span<const Pose> poses, double azimuth, double zenith,
                                 double wavelength,
                                 double tolerance_noise_std = kReconstructionNoiseStd,
                                 std::uint64_t seed = 0, double sample_period = 0.01);

enum class KappaNormalization {
  /// Each profile divided by its total power over the whole grid: κ measures
  /// how much of both profiles' power sits inside the crop around the peak.
  kFullProfile,
  /// Each cropped profile divided by its own sum.
  kCrop,
};

/// κ = 1 / Σ_R p̄ p′ where p̄, p′ are the measured and reconstructed profiles,
/// normalized to unit sum (see KappaNormalization) and cropped to a
/// `crop_width` square around `peak`. Azimuth wraps, zenith clamps. κ ≥ 1,
/// with 1 for two identical single-bin profiles.
double aoa_uncertainty(const AoaProfile& measured, const AoaProfile& reconstructed,
                       const Direction& peak,
                       KappaNormalization normalization = KappaNormalization::kFullProfile,
                       double crop_width = kCropWidth);

/// Wrapped azimuth difference in (-π, π].
double wrap_angle(double a);

// Grid text format: "aoa-profile", azimuth/zenith axis lines, then one row of
// azimuth magnitudes per zenith sample.
void write_profile(std::ostream& os, const AoaProfile& profile);
AoaProfile read_profile(std::istream& is);
/// CSV with header t,re,im.
void write_trace_csv(std::ostream& os, const ChannelTrace& trace);

}  // namespace wirefield
