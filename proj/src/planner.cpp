#include "wirefield/planner.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace wirefield {

double posterior_variance(double point_variance, double ray_variance, double alpha,
                          double origin_std) {
  if (!(point_variance > 0.0) || !(ray_variance > 0.0)) {
    throw std::invalid_argument("posterior_variance: variances must be > 0");
  }
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("posterior_variance: alpha not in [0,1]");
  if (origin_std < 0.0) throw std::invalid_argument("posterior_variance: negative origin std");
  if (alpha == 0.0) return point_variance;
  const double a2 = alpha * alpha;
  const double observation_precision = a2 / (a2 * origin_std * origin_std + ray_variance);
  return 1.0 / (observation_precision + 1.0 / point_variance);
}

double predictive_variance(std::span<const double> alphas, double origin_std,
                           double point_variance) {
  double sum = 0.0;
  for (double a : alphas) sum += a;
  return sum * origin_std * origin_std + point_variance;
}

ViewScore score_candidate(const VoxelField& field, const CandidateView& candidate,
                          const CameraModel& camera, const ScoreOptions& options,
                          std::uint64_t seed) {
  ViewScore score;
  score.candidate = candidate;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_x(0, camera.width - 1);
  std::uniform_int_distribution<int> pick_y(0, camera.height - 1);
  RayTrace trace;
  for (int r = 0; r < options.n_rays; ++r) {
    const int x = pick_x(rng);
    const int y = pick_y(rng);
    trace_ray(field, camera_ray(camera, candidate.pose, x + 0.5, y + 0.5), options.render,
              nullptr, trace);
    for (const RaySample& s : trace.samples) {
      if (s.alpha <= options.visibility_cutoff) continue;
      const double post =
          posterior_variance(s.variance, trace.variance, s.alpha, candidate.origin_std);
      score.prior_variance_sum += s.variance;
      score.posterior_variance_sum += post;
      score.reduction += s.variance - post;
    }
  }
  return score;
}

OriginStdFn linear_origin_std(double base_std, double growth_per_meter) {
  if (base_std < 0.0) throw std::invalid_argument("linear_origin_std: negative base std");
  return [=](const Vec3& d) { return base_std * (1.0 + growth_per_meter * d.norm()); };
}

std::vector<CandidateView> propose_candidates(const Pose& current, double step, int n_directions,
                                              const Vec3& scene_center,
                                              const OriginStdFn& origin_std) {
  if (!(step > 0.0)) throw std::invalid_argument("propose_candidates: step must be > 0");
  if (n_directions < 1) throw std::invalid_argument("propose_candidates: need >= 1 direction");
  Vec3 forward = current.rotate(Vec3::UnitZ());
  forward.z() = 0.0;
  const double heading = forward.norm() > 1e-12 ? std::atan2(forward.y(), forward.x()) : 0.0;

  std::vector<CandidateView> out;
  out.reserve(n_directions);
  for (int k = 0; k < n_directions; ++k) {
    const double angle = heading + 2.0 * std::numbers::pi * k / n_directions;
    const Vec3 displacement(step * std::cos(angle), step * std::sin(angle), 0.0);
    const Vec3 position = current.translation() + displacement;
    CandidateView c;
    c.pose = Pose::look_at(position, scene_center);
    c.origin_std = origin_std ? origin_std(displacement) : 0.0;
    out.push_back(c);
  }
  return out;
}

std::size_t select_best(std::span<const ViewScore> scores) {
  if (scores.empty()) throw std::invalid_argument("select_best: no candidates");
  std::size_t best = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i].candidate.reachable) continue;
    if (best == scores.size()) {
      best = i;
      continue;
    }
    const ViewScore& a = scores[i];
    const ViewScore& b = scores[best];
    if (a.reduction > b.reduction ||
        (a.reduction == b.reduction && a.candidate.origin_std < b.candidate.origin_std)) {
      best = i;
    }
  }
  if (best == scores.size()) throw NoReachableCandidateError("no reachable candidate");
  return best;
}

}  // namespace wirefield
