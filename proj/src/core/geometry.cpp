#include "forklift/geometry.hpp"

#include <algorithm>
#include <limits>

namespace forklift {

Quad make_rect(const Pose2D& center, double length, double width) {
  const double hl = 0.5 * length, hw = 0.5 * width;
  return {center.to_world({-hl, -hw}), center.to_world({hl, -hw}), center.to_world({hl, hw}),
          center.to_world({-hl, hw})};
}

Quad make_box(Vec2 lo, Vec2 hi) { return {Vec2{lo.x, lo.y}, {hi.x, lo.y}, {hi.x, hi.y}, {lo.x, hi.y}}; }

namespace {

void project(const Quad& q, Vec2 axis, double& lo, double& hi) {
  lo = hi = dot(q[0], axis);
  for (int i = 1; i < 4; ++i) {
    const double p = dot(q[i], axis);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
}

}  // namespace

std::optional<Vec2> separating_translation(const Quad& a, const Quad& b) {
  double best = std::numeric_limits<double>::infinity();
  Vec2 best_dir{};
  for (const Quad* q : {&a, &b}) {
    for (int i = 0; i < 2; ++i) {  // rectangles: two unique edge normals each
      const Vec2 e = (*q)[i + 1] - (*q)[i];
      const double len = norm(e);
      if (len == 0.0) continue;
      const Vec2 axis = perp(e) * (1.0 / len);
      double alo, ahi, blo, bhi;
      project(a, axis, alo, ahi);
      project(b, axis, blo, bhi);
      // Push distances for moving b along +axis and along -axis.
      const double up = ahi - blo, down = bhi - alo;
      if (up <= 0.0 || down <= 0.0) return std::nullopt;
      if (up < best) {
        best = up;
        best_dir = axis;
      }
      if (down < best) {
        best = down;
        best_dir = -axis;
      }
    }
  }
  return best_dir * best;
}

double polygon_area(std::span<const Vec2> poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) acc += cross(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * acc;
}

int clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip, std::span<Vec2> out) {
  std::array<Vec2, 32> buf_a{}, buf_b{};
  int n = static_cast<int>(subject.size());
  std::copy(subject.begin(), subject.end(), buf_a.begin());
  Vec2* cur = buf_a.data();
  Vec2* nxt = buf_b.data();
  for (std::size_t e = 0; e < clip.size() && n > 0; ++e) {
    const Vec2 p0 = clip[e];
    const Vec2 p1 = clip[(e + 1) % clip.size()];
    const Vec2 edge = p1 - p0;
    int m = 0;
    for (int i = 0; i < n; ++i) {
      const Vec2 s = cur[i];
      const Vec2 t = cur[(i + 1) % n];
      const double ds = cross(edge, s - p0);
      const double dt = cross(edge, t - p0);
      if (ds >= 0.0) nxt[m++] = s;
      if ((ds >= 0.0) != (dt >= 0.0)) {
        const double u = ds / (ds - dt);
        nxt[m++] = s + (t - s) * u;
      }
    }
    std::swap(cur, nxt);
    n = m;
  }
  const int count = std::min<int>(n, static_cast<int>(out.size()));
  std::copy(cur, cur + count, out.begin());
  return count;
}

double overlap_area(const Quad& a, const Quad& b) {
  std::array<Vec2, 16> out{};
  const int n = clip_convex(a, b, out);
  if (n < 3) return 0.0;
  return std::abs(polygon_area(std::span<const Vec2>(out.data(), n)));
}

std::optional<double> ray_segment(Vec2 origin, Vec2 dir, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double den = cross(dir, e);
  if (den == 0.0) return std::nullopt;  // parallel, including collinear grazing
  const Vec2 w = s.a - origin;
  const double t = cross(w, e) / den;
  const double u = cross(w, dir) / den;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

Barycentric barycentric(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const double den = cross(b - a, c - a);
  const double l1 = cross(p - a, c - a) / den;
  const double l2 = cross(b - a, p - a) / den;
  return {1.0 - l1 - l2, l1, l2};
}

bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c, double tol) {
  const auto [l0, l1, l2] = barycentric(p, a, b, c);
  return l0 >= -tol && l1 >= -tol && l2 >= -tol;
}

}  // namespace forklift
