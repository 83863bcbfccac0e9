#pragma once

// Quadrature-free oracles for reference paths.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "forklift/refpath.hpp"

namespace forklift::testdata {

using path::ClothoidSegment;
using path::ReferencePath;

// Composite Simpson on the heading function of every segment, chained:
// independent of the library's quadrature and sampling.
inline Pose2D simpson_end(const ReferencePath& p, int intervals = 4000) {
  Pose2D cur = p.start_pose();
  for (const ClothoidSegment& seg : p.segments()) {
    const double h = seg.length / intervals;
    double sx = 0.0, sy = 0.0;
    for (int i = 0; i <= intervals; ++i) {
      const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      sx += w * std::cos(seg.heading(i * h));
      sy += w * std::sin(seg.heading(i * h));
    }
    cur = {cur.x + sx * h / 3.0, cur.y + sy * h / 3.0, seg.heading(seg.length)};
  }
  return cur;
}

// Dense polyline by midpoint-heading steps; used as brute-force oracle.
inline std::vector<Vec2> dense_points(const ReferencePath& p, int n) {
  std::vector<Vec2> pts;
  pts.reserve(n + p.segments().size());
  Vec2 cur = p.start_pose().position();
  pts.push_back(cur);
  const double total = p.length();
  for (const ClothoidSegment& seg : p.segments()) {
    const int k = std::max(1, static_cast<int>(n * seg.length / total));
    const double h = seg.length / k;
    for (int i = 0; i < k; ++i) {
      const double th = seg.heading((i + 0.5) * h);
      // chord of a short arc with the mid heading
      const double dth = seg.heading((i + 1) * h) - seg.heading(i * h);
      const double chord = std::abs(dth) < 1e-8 ? h : h * std::sin(0.5 * dth) / (0.5 * dth);
      cur = cur + unit(th) * chord;
      pts.push_back(cur);
    }
  }
  return pts;
}

inline double brute_distance(const std::vector<Vec2>& pts, Vec2 q) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec2 d = pts[i + 1] - pts[i];
    const double len2 = dot(d, d);
    const double t = len2 > 0 ? std::clamp(dot(q - pts[i], d) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, norm(q - (pts[i] + d * t)));
  }
  return best;
}

}  // namespace forklift::testdata
