#include "wirefield/localization.hpp"

#include "wirefield/channel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wirefield {

namespace {

// Above this the Bessel normalizer overflows; switch to the asymptotic
// expansion of exp(-c) I0(c).
constexpr double kBesselAsymptoticThreshold = 500.0;

double log_scaled_bessel_i0(double c) {
  if (c < kBesselAsymptoticThreshold) return std::log(std::cyl_bessel_i(0.0, c)) - c;
  const double inv = 1.0 / (8.0 * c);
  const double series = 1.0 + inv + 9.0 * inv * inv / 2.0 + 225.0 * inv * inv * inv / 6.0;
  return std::log(series) - 0.5 * std::log(2.0 * std::numbers::pi * c);
}

}  // namespace

void WirelessMeasurement::validate() const {
  if (!(range > 0.0)) throw std::invalid_argument("WirelessMeasurement: range must be > 0");
  if (!(range_std > 0.0)) throw std::invalid_argument("WirelessMeasurement: range_std must be > 0");
  if (!(aoa.kappa > 0.0)) throw std::invalid_argument("WirelessMeasurement: kappa must be > 0");
}

double ranging_pdf(double d, const WirelessMeasurement& m) {
  m.validate();
  const double z = (d - m.range) / m.range_std;
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi * m.range_std * m.range_std);
}

double aoa_pdf(double phi, const WirelessMeasurement& m) {
  m.validate();
  const double concentration = 1.0 / (m.aoa.kappa * m.aoa.kappa);
  const double log_density = concentration * (std::cos(phi - m.aoa.azimuth) - 1.0) -
                             log_scaled_bessel_i0(concentration) -
                             std::log(2.0 * std::numbers::pi);
  return std::exp(log_density);
}

Pose relative_body_pose(const WirelessMeasurement& m, std::optional<double> reciprocal_azimuth) {
  m.validate();
  const Vec3 t = m.range * direction_vector(m.aoa.azimuth, m.aoa.zenith);
  const double yaw =
      reciprocal_azimuth ? m.aoa.azimuth - (*reciprocal_azimuth + std::numbers::pi) : 0.0;
  return Pose::from_yaw(wrap_angle(yaw), t);
}

RigidTransform frame_alignment(const WirelessMeasurement& m, const Pose& anchor_pose,
                               const Pose& peer_pose, std::optional<double> reciprocal_azimuth) {
  return compose(compose(anchor_pose, relative_body_pose(m, reciprocal_azimuth)),
                 invert(peer_pose));
}

Pose estimate_extrinsic(const WirelessMeasurement& m, const Pose& anchor_pose,
                        const StampedPose& peer_local_pose,
                        std::optional<double> reciprocal_azimuth, double staleness_horizon) {
  if (peer_local_pose.timestamp - m.timestamp > staleness_horizon) {
    std::ostringstream msg;
    msg << "measurement " << m.source << "->" << m.target << " at t=" << m.timestamp
        << " is stale for pose at t=" << peer_local_pose.timestamp;
    throw StaleMeasurementError(msg.str());
  }
  const RigidTransform alignment =
      frame_alignment(m, anchor_pose, peer_local_pose.pose, reciprocal_azimuth);
  return compose(alignment, peer_local_pose.pose);
}

double confidence_scale(double ci) {
  if (!(ci > 0.0 && ci < 1.0)) throw std::invalid_argument("confidence level must be in (0,1)");
  return std::sqrt(-2.0 * std::log(1.0 - ci));
}

UncertaintyEllipse error_ellipse(const WirelessMeasurement& m, double ci) {
  m.validate();
  const double c = std::cos(m.aoa.azimuth);
  const double s = std::sin(m.aoa.azimuth);
  const double sigma2 = m.range_std * m.range_std;
  const double lateral2 = m.range * m.range * m.aoa.kappa * m.aoa.kappa;
  const double a2 = sigma2 * c * c + lateral2 * s * s;
  const double b2 = sigma2 * s * s + lateral2 * c * c;

  UncertaintyEllipse e;
  e.semi_major = std::sqrt(std::max(a2, b2));
  e.semi_minor = std::sqrt(std::min(a2, b2));
  e.ci = ci;
  e.scale = confidence_scale(ci);
  e.area = e.scale * e.scale * std::numbers::pi * e.semi_major * e.semi_minor;
  return e;
}

UncertaintyEllipse zero_ellipse(double ci) {
  UncertaintyEllipse e;
  e.ci = ci;
  e.scale = confidence_scale(ci);
  return e;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double loss_weight(const UncertaintyEllipse& e, WeightingMode mode, double area_scale) {
  if (!(area_scale > 0.0)) throw std::invalid_argument("loss_weight: area scale must be > 0");
  const double x = e.area / area_scale;
  return mode == WeightingMode::kDownWeight ? sigmoid(-x) : sigmoid(x);
}

double median_area(std::span<const UncertaintyEllipse> ellipses) {
  if (ellipses.empty()) throw std::invalid_argument("median_area: no ellipses");
  std::vector<double> areas;
  areas.reserve(ellipses.size());
  for (const auto& e : ellipses) areas.push_back(e.area);
  std::sort(areas.begin(), areas.end());
  const std::size_t n = areas.size();
  return n % 2 ? areas[n / 2] : 0.5 * (areas[n / 2 - 1] + areas[n / 2]);
}

void write_measurements_csv(std::ostream& os, std::span<const WirelessMeasurement> ms) {
  os.precision(17);
  os << "timestamp,src,dst,range_m,sigma_m,phi_rad,theta_rad,kappa\n";
  for (const auto& m : ms) {
    os << m.timestamp << ',' << m.source << ',' << m.target << ',' << m.range << ','
       << m.range_std << ',' << m.aoa.azimuth << ',' << m.aoa.zenith << ',' << m.aoa.kappa
       << '\n';
  }
}

std::vector<WirelessMeasurement> read_measurements_csv(std::istream& is) {
  std::vector<WirelessMeasurement> out;
  std::string line;
  std::getline(is, line);  // header
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw std::runtime_error("measurement csv line " + std::to_string(line_no) +
                               ": expected 8 columns");
    }
    WirelessMeasurement m;
    m.timestamp = std::stod(cells[0]);
    m.source = cells[1];
    m.target = cells[2];
    m.range = std::stod(cells[3]);
    m.range_std = std::stod(cells[4]);
    m.aoa.azimuth = std::stod(cells[5]);
    m.aoa.zenith = std::stod(cells[6]);
    m.aoa.kappa = std::stod(cells[7]);
    out.push_back(m);
  }
  return out;
}

void write_frame_manifest(std::ostream& os, std::span<const WeightedFrame> frames) {
  os.precision(17);
  os << "# image pose[12] weight gamma\n";
  for (const auto& f : frames) {
    os << f.image_id << ' ' << format_pose(f.pose) << ' ' << f.weight << ' '
       << (f.ellipse ? f.ellipse->area : 0.0) << '\n';
  }
}

}  // namespace wirefield
