#include "forklift/refpath.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "forklift/error.hpp"

namespace forklift::path {

namespace {

using boost::math::quadrature::gauss;
using boost::math::quadrature::gauss_kronrod;

// Relative error target for the Kronrod estimate; the estimate is pessimistic
// for these smooth integrands, actual errors sit near machine precision.
constexpr double kQuadTol = 1e-12;
constexpr unsigned kQuadDepth = 15;

template <class F>
double adaptive(F f, double lo = 0.0, double hi = 1.0) {
  return gauss_kronrod<double, 31>::integrate(f, lo, hi, kQuadDepth, kQuadTol);
}

// Displacement along a segment between two local arclengths, fixed 10-point
// Gauss-Legendre; only used across short spans between polyline samples.
Vec2 short_span(const ClothoidSegment& seg, double s0, double s1) {
  if (s1 == s0) return {0.0, 0.0};
  auto cx = [&](double s) { return std::cos(seg.heading(s)); };
  auto sy = [&](double s) { return std::sin(seg.heading(s)); };
  return {gauss<double, 10>::integrate(cx, s0, s1), gauss<double, 10>::integrate(sy, s0, s1)};
}

// Pose at arclength s, integrated from the nearest sample at or below s.
Pose2D pose_from_samples(std::span<const PathSample> samples, std::span<const ClothoidSegment> segments,
                         double s) {
  std::size_t j = std::upper_bound(samples.begin(), samples.end(), s,
                                   [](double v, const PathSample& ps) { return v < ps.s; }) -
                  samples.begin();
  j = j == 0 ? 0 : j - 1;
  if (j + 1 >= samples.size()) j = samples.size() - 2;
  std::size_t k = samples[j].segment;
  double local0 = samples[j].local_s;
  if (local0 >= segments[k].length && k + 1 < segments.size()) {
    ++k;
    local0 = 0.0;
  }
  const double local1 = local0 + (s - samples[j].s);
  const Vec2 p = samples[j].p + short_span(segments[k], local0, local1);
  return {p.x, p.y, normalize_angle(segments[k].heading(local1))};
}

}  // namespace

Fresnel generalized_fresnel(double a, double b, double c) {
  auto phase = [=](double t) { return 0.5 * a * t * t + b * t + c; };
  return {adaptive([&](double t) { return std::cos(phase(t)); }),
          adaptive([&](double t) { return std::sin(phase(t)); })};
}

Pose2D ClothoidSegment::pose_at(double s) const {
  const Fresnel f = generalized_fresnel(dkappa * s * s, kappa0 * s, start.psi);
  return {start.x + s * f.x, start.y + s * f.y, normalize_angle(heading(s))};
}

ClothoidFit fit_clothoid(const Pose2D& start, const Pose2D& goal, int max_iterations) {
  ClothoidFit fit;
  const double dx = goal.x - start.x, dy = goal.y - start.y;
  const double r = std::hypot(dx, dy);
  if (!(r > 0)) return fit;
  const double phi = std::atan2(dy, dx);
  const double phi0 = normalize_angle(start.psi - phi);
  const double phi1 = normalize_angle(goal.psi - phi);
  constexpr double kPi = std::numbers::pi;
  // Headings pointing straight back along the chord have no single-clothoid
  // solution in the principal branch.
  if (kPi - std::abs(phi0) < 1e-9 || kPi - std::abs(phi1) < 1e-9) return fit;

  const double delta = phi1 - phi0;
  double A = 3.0 * (phi0 + phi1);
  for (int it = 1; it <= max_iterations; ++it) {
    fit.iterations = it;
    const double a = 2.0 * A, b = delta - A;
    auto phase = [=](double t) { return 0.5 * a * t * t + b * t + phi0; };
    const double g = adaptive([&](double t) { return std::sin(phase(t)); });
    const double dg_da = adaptive([&](double t) { return 0.5 * t * t * std::cos(phase(t)); });
    const double dg_db = adaptive([&](double t) { return t * std::cos(phase(t)); });
    const double dg = 2.0 * dg_da - dg_db;
    if (!std::isfinite(g) || !std::isfinite(dg) || dg == 0.0) return fit;
    const double step = g / dg;
    A -= step;
    if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(A)) || std::abs(g) < 1e-16) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged) return fit;

  const Fresnel f = generalized_fresnel(2.0 * A, delta - A, phi0);
  if (!(f.x > 0)) {
    fit.converged = false;
    return fit;
  }
  fit.length = r / f.x;
  fit.kappa0 = (delta - A) / fit.length;
  fit.dkappa = 2.0 * A / (fit.length * fit.length);
  return fit;
}

namespace {

// Arc leaving p with heading psi and passing through m.
bool arc_through(Vec2 p, double psi, Vec2 m, std::vector<ClothoidSegment>& out) {
  const Vec2 c = m - p;
  const double chord = norm(c);
  if (chord < 1e-15) return true;
  const Vec2 t = unit(psi);
  const double alpha = std::atan2(cross(t, c), dot(t, c));
  if (std::abs(alpha) > std::numbers::pi - 1e-6) return false;
  const double length = alpha == 0.0 ? chord : chord * alpha / std::sin(alpha);
  out.push_back({Pose2D{p.x, p.y, psi}, 2.0 * alpha / length, 0.0, length});
  return true;
}

bool biarc(const Pose2D& a, const Pose2D& b, std::vector<ClothoidSegment>& out) {
  const Vec2 p1 = a.position(), p2 = b.position();
  const Vec2 t1 = a.heading(), t2 = b.heading();
  const Vec2 v = p2 - p1;
  const Vec2 t = t1 + t2;
  const double c = dot(t1, t2);
  double d;
  if (1.0 - c < 1e-12) {
    if (dot(v, t) <= 1e-12) return false;
    d = dot(v, v) / (2.0 * dot(v, t));
  } else {
    const double k = 2.0 * (1.0 - c);
    d = (-dot(v, t) + std::sqrt(dot(v, t) * dot(v, t) + k * dot(v, v))) / k;
  }
  if (!(d > 0) || !std::isfinite(d)) return false;
  const Vec2 q1 = p1 + t1 * d, q2 = p2 - t2 * d;
  const Vec2 m = (q1 + q2) * 0.5;
  const Vec2 qm = q2 - q1;
  const double psi_m = norm(qm) > 1e-15 ? std::atan2(qm.y, qm.x) : a.psi;
  std::vector<ClothoidSegment> arcs;
  if (!arc_through(p1, a.psi, m, arcs) || !arc_through(m, psi_m, p2, arcs)) return false;
  // A vanishing second arc (m == p2) leaves the goal heading unmatched.
  const double end_psi = arcs.empty() ? a.psi : arcs.back().heading(arcs.back().length);
  if (angle_distance(end_psi, b.psi) > 1e-9) return false;
  out.insert(out.end(), arcs.begin(), arcs.end());
  return true;
}

}  // namespace

std::vector<ClothoidSegment> two_arc_path(const Pose2D& start, const Pose2D& goal) {
  std::vector<ClothoidSegment> out;
  if (biarc(start, goal, out)) return out;
  const Vec2 v = goal.position() - start.position();
  const Vec2 mid = (start.position() + goal.position()) * 0.5;
  const double chord_dir = std::atan2(v.y, v.x);
  for (double side : {1.0, -1.0}) {
    const Vec2 w = mid + perp(v) * (0.5 * side);
    const Pose2D way{w.x, w.y, chord_dir};
    out.clear();
    if (biarc(start, way, out) && biarc(way, goal, out)) return out;
  }
  throw ContractViolation("two_arc_path: no two-arc construction for these poses");
}

double ReferencePath::length() const {
  return segments_.empty() ? 0.0 : offsets_.back() + segments_.back().length;
}

Pose2D ReferencePath::pose_at(double s) const {
  s = std::clamp(s, 0.0, length());
  return pose_from_samples(samples_, segments_, s);
}

void ReferencePath::resample(int count) {
  offsets_.clear();
  samples_.clear();
  double total = 0.0;
  for (const auto& seg : segments_) {
    offsets_.push_back(total);
    total += seg.length;
  }
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const ClothoidSegment& seg = segments_[k];
    const int n = std::max(2, static_cast<int>(std::ceil(count * seg.length / total)));
    Vec2 p = seg.start.position();
    double prev = 0.0;
    for (int j = (k == 0 ? 0 : 1); j <= n; ++j) {
      const double s = seg.length * j / n;
      p += short_span(seg, prev, s);
      prev = s;
      samples_.push_back({p, normalize_angle(seg.heading(s)), offsets_[k] + s, seg.curvature(s),
                          static_cast<std::uint32_t>(k), s});
    }
  }
}

ReferencePath ReferencePath::with_lead_in(double lead, int samples) const {
  ReferencePath out = *this;
  if (!(lead > 0)) return out;
  const PathSample& end = samples_.back();
  out.segments_.push_back({Pose2D{end.p.x, end.p.y, end.psi}, 0.0, 0.0, lead});
  // Keep the existing samples; append the straight part.
  const double s0 = length();
  out.offsets_.push_back(s0);
  for (int j = 1; j <= samples; ++j) {
    const double s = lead * j / samples;
    out.samples_.push_back({end.p + unit(end.psi) * s, end.psi, s0 + s, 0.0,
                            static_cast<std::uint32_t>(out.segments_.size() - 1), s});
  }
  return out;
}

ReferencePath build_reference(const Pose2D& start, const Pose2D& goal, int samples) {
  if (std::hypot(goal.x - start.x, goal.y - start.y) < 1e-9) {
    throw ContractViolation("build_reference: start and goal coincide");
  }
  ReferencePath path;
  path.start_ = start;
  path.goal_ = goal;
  const ClothoidFit fit = fit_clothoid(start, goal);
  bool ok = fit.converged;
  if (ok) {
    const ClothoidSegment seg{start, fit.kappa0, fit.dkappa, fit.length};
    const Pose2D end = seg.pose_at(fit.length);
    ok = std::hypot(end.x - goal.x, end.y - goal.y) < 1e-8 && angle_distance(end.psi, goal.psi) < 1e-8;
    if (ok) path.segments_ = {seg};
  }
  if (!ok) {
    spdlog::warn("clothoid fit failed from ({:.3f}, {:.3f}, {:.3f}) to ({:.3f}, {:.3f}, {:.3f}); using two arcs",
                 start.x, start.y, start.psi, goal.x, goal.y, goal.psi);
    path.segments_ = two_arc_path(start, goal);
    path.fallback_ = true;
  }
  path.resample(std::max(samples, 2));
  path.goal_s_ = path.length();
  return path;
}

PathQuery nearest_point(const ReferencePath& path, Vec2 p, double heading) {
  const auto samples = path.samples();
  const auto segments = path.segments();
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec2 d = samples[i].p - p;
    const double d2 = dot(d, d);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }

  auto locate = [&](double s) { return pose_from_samples(samples, segments, s); };

  const double lo0 = samples[best == 0 ? 0 : best - 1].s;
  const double hi0 = samples[std::min(best + 1, samples.size() - 1)].s;
  auto f = [&](double s) {
    const Vec2 d = locate(s).position() - p;
    return dot(d, d);
  };

  constexpr double kInvPhi = 0.6180339887498949;
  double lo = lo0, hi = hi0;
  double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-12; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kInvPhi * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kInvPhi * (hi - lo);
      f2 = f(x2);
    }
  }
  double s_star = 0.5 * (lo + hi);
  double d2 = f(s_star);
  double psi = locate(s_star).psi;
  if (best_d2 <= d2) {
    s_star = samples[best].s;
    d2 = best_d2;
    psi = samples[best].psi;
  }
  return {std::sqrt(d2), angle_distance(heading, psi), s_star};
}

}  // namespace forklift::path
