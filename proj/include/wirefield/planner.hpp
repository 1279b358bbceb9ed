#pragma once

#include "wirefield/field.hpp"
#include "wirefield/geometry.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace wirefield {

struct CandidateView {
  Pose pose;
  /// Ray-origin localization std (meters).
  double origin_std = 0.0;
  bool reachable = true;
};

struct ViewScore {
  CandidateView candidate;
  double prior_variance_sum = 0.0;
  double posterior_variance_sum = 0.0;
  double reduction = 0.0;
};

/// Posterior color variance of one field point after observing a ray through
/// it with compositing weight `alpha`, pixel variance `ray_variance` and
/// ray-origin std `origin_std`:
///   (α² / (α² σ² + B²) + 1 / β̄²)⁻¹
double posterior_variance(double point_variance, double ray_variance, double alpha,
                          double origin_std);

/// Predictive pixel variance with the ray origin marginalized out:
/// Σ α_i σ² + β̄².
double predictive_variance(std::span<const double> alphas, double origin_std,
                           double point_variance);

struct ScoreOptions {
  int n_rays = 256;
  RenderOptions render;
  /// Samples with α below this carry no information and are skipped.
  double visibility_cutoff = 1e-4;
};

/// Sum over sampled points of (prior − posterior) variance for `n_rays`
/// random pixel rays from the candidate pose.
ViewScore score_candidate(const VoxelField& field, const CandidateView& candidate,
                          const CameraModel& camera, const ScoreOptions& options,
                          std::uint64_t seed);

/// Maps a planar displacement to the localization std at its end point.
using OriginStdFn = std::function<double(const Vec3& displacement)>;

/// σ(d) = base_std · (1 + growth_per_meter · ‖d‖).
OriginStdFn linear_origin_std(double base_std, double growth_per_meter = 0.5);

inline constexpr double kDefaultCandidateStep = 0.5;
inline constexpr int kDefaultCandidateDirections = 8;

/// `n_directions` camera poses displaced by `step` in the x-y plane at equal
/// angles, starting straight ahead, each looking at `scene_center`.
std::vector<CandidateView> propose_candidates(const Pose& current, double step, int n_directions,
                                              const Vec3& scene_center,
                                              const OriginStdFn& origin_std);

class NoReachableCandidateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index of the reachable candidate with the largest reduction; ties go to the
/// lower origin std, then the lower index.
std::size_t select_best(std::span<const ViewScore> scores);

}  // namespace wirefield
