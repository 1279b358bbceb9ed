#pragma once

#include "wirefield/geometry.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

namespace wirefield {

struct AoaEstimate {
  double azimuth = 0.0;
  double zenith = 0.0;
  /// Profile-correlation uncertainty; larger means less reliable.
  double kappa = 1.0;
};

/// One directed range + AoA observation: `source` sees `target` at distance
/// `range` along `aoa`, expressed in the source's body frame.
struct WirelessMeasurement {
  double timestamp = 0.0;
  std::string source;
  std::string target;
  double range = 1.0;
  double range_std = 0.05;
  AoaEstimate aoa;

  void validate() const;
};

struct UncertaintyEllipse {
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double ci = 0.95;
  double scale = 0.0;
  double area = 0.0;
};

enum class WeightingMode {
  kDownWeight,     // sigmoid(-γ/scale): uncertain frames count less
  kUpWeight,       // sigmoid(+γ/scale)
};

struct WeightedFrame {
  std::string image_id;
  Pose pose;
  double weight = 0.5;
  std::optional<UncertaintyEllipse> ellipse;
};

/// Gaussian density of the measured range at `d`.
double ranging_pdf(double d, const WirelessMeasurement& m);

/// Von Mises density of the azimuth at `phi`, centred on the measured
/// azimuth with concentration 1/κ².
double aoa_pdf(double phi, const WirelessMeasurement& m);

/// Body pose of the target at measurement time, in the source's body frame.
/// Translation has length `range` along the measured AoA; yaw follows from the
/// reciprocal azimuth (target looking back at source) when available.
Pose relative_body_pose(const WirelessMeasurement& m,
                        std::optional<double> reciprocal_azimuth = std::nullopt);

/// Frame change taking the target robot's local odometry frame into the
/// source's: anchor_pose ∘ relative ∘ peer_pose⁻¹.
RigidTransform frame_alignment(const WirelessMeasurement& m, const Pose& anchor_pose,
                               const Pose& peer_pose,
                               std::optional<double> reciprocal_azimuth = std::nullopt);

inline constexpr double kDefaultStalenessHorizon = 1.0;

class StaleMeasurementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pose of the peer (at the measurement) in the anchor's local frame.
/// Throws StaleMeasurementError when the measurement is older than
/// `staleness_horizon` seconds relative to `peer_local_pose`.
Pose estimate_extrinsic(const WirelessMeasurement& m, const Pose& anchor_pose,
                        const StampedPose& peer_local_pose,
                        std::optional<double> reciprocal_azimuth = std::nullopt,
                        double staleness_horizon = kDefaultStalenessHorizon);

/// k = sqrt(-2 ln(1 - ci)).
double confidence_scale(double ci);

/// Planar error ellipse of range σ and angular uncertainty κ, rotated by the
/// measured azimuth. Axes are ordered so semi_major >= semi_minor.
UncertaintyEllipse error_ellipse(const WirelessMeasurement& m, double ci = 0.95);

UncertaintyEllipse zero_ellipse(double ci = 0.95);

double sigmoid(double x);

double loss_weight(const UncertaintyEllipse& e, WeightingMode mode, double area_scale);

/// Median of the ellipse areas (used as the default sigmoid scale).
double median_area(std::span<const UncertaintyEllipse> ellipses);

/// Measurement log columns: timestamp,src,dst,range_m,sigma_m,phi_rad,theta_rad,kappa
void write_measurements_csv(std::ostream& os, std::span<const WirelessMeasurement> ms);
std::vector<WirelessMeasurement> read_measurements_csv(std::istream& is);

/// Manifest lines: image path, 12-number pose, weight, γ (0 when no ellipse).
void write_frame_manifest(std::ostream& os, std::span<const WeightedFrame> frames);

}  // namespace wirefield
