#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "forklift/geometry.hpp"

namespace forklift::path {

// Curve with curvature affine in arclength: kappa(s) = kappa0 + dkappa * s.
// Circular arcs and straight lines are the dkappa = 0 special cases.
struct ClothoidSegment {
  Pose2D start;
  double kappa0 = 0.0;
  double dkappa = 0.0;
  double length = 0.0;

  double heading(double s) const { return start.psi + kappa0 * s + 0.5 * dkappa * s * s; }
  double curvature(double s) const { return kappa0 + dkappa * s; }
  // Pose at arclength s in [0, length], by adaptive quadrature.
  Pose2D pose_at(double s) const;
};

struct PathSample {
  Vec2 p;
  double psi = 0.0;
  double s = 0.0;
  double kappa = 0.0;
  std::uint32_t segment = 0;  // owning segment
  double local_s = 0.0;       // arclength within that segment
};

// Fixed reference curve from the start pose to the goal pose, optionally
// continued by a straight lead-in past the goal.
class ReferencePath {
 public:
  ReferencePath() = default;

  const Pose2D& start_pose() const { return start_; }
  const Pose2D& goal_pose() const { return goal_; }
  std::span<const ClothoidSegment> segments() const { return segments_; }
  std::span<const PathSample> samples() const { return samples_; }
  // True when the single-clothoid fit was rejected and two arcs were used.
  bool is_fallback() const { return fallback_; }
  // Arclength up to the goal pose (excludes any lead-in).
  double goal_arclength() const { return goal_s_; }
  double length() const;

  // Pose at arclength s (clamped to the path), integrated from the nearest
  // sample below it.
  Pose2D pose_at(double s) const;

  // Copy of this path with a straight segment of length `lead` appended at the goal.
  ReferencePath with_lead_in(double lead, int samples = 50) const;

  friend ReferencePath build_reference(const Pose2D&, const Pose2D&, int);

 private:
  void resample(int count);

  Pose2D start_;
  Pose2D goal_;
  std::vector<ClothoidSegment> segments_;
  std::vector<double> offsets_;  // arclength at each segment start
  std::vector<PathSample> samples_;
  double goal_s_ = 0.0;
  bool fallback_ = false;
};

// Solution of the G1 Hermite problem for a single clothoid: matches both
// endpoint positions and headings.
struct ClothoidFit {
  double kappa0 = 0.0;
  double dkappa = 0.0;
  double length = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Newton iteration on the reduced one-unknown form of the G1 equations.
ClothoidFit fit_clothoid(const Pose2D& start, const Pose2D& goal, int max_iterations = 100);

// Two circular arcs with a common tangent (biarc); splits at an intermediate
// waypoint when the direct biarc is degenerate.
std::vector<ClothoidSegment> two_arc_path(const Pose2D& start, const Pose2D& goal);

// Builds the reference with at least `samples` polyline points. Falls back to
// two_arc_path (with a logged warning) when the clothoid fit fails.
ReferencePath build_reference(const Pose2D& start, const Pose2D& goal, int samples = 1000);

struct PathQuery {
  double r_cd = 0.0;    // distance to the nearest path point
  double r_cpsi = 0.0;  // |heading - tangent| in [0, pi]
  double s = 0.0;       // arclength of the nearest point
};

// Coarse argmin over the polyline vertices, then golden-section refinement
// of the arclength between the neighbouring vertices.
PathQuery nearest_point(const ReferencePath& path, Vec2 p, double heading);

// Generalized Fresnel integrals X = int_0^1 cos(a/2 t^2 + b t + c) dt and
// Y = int_0^1 sin(...) dt.
struct Fresnel {
  double x = 0.0;
  double y = 0.0;
};
Fresnel generalized_fresnel(double a, double b, double c);

}  // namespace forklift::path
