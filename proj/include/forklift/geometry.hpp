#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>

namespace forklift {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

// Wraps to (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

// |a - b| wrapped to [0, pi].
inline double angle_distance(double a, double b) { return std::abs(normalize_angle(a - b)); }

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;  // CCW from +x

  Vec2 position() const { return {x, y}; }
  Vec2 heading() const { return unit(psi); }
  // Local (forward, left) coordinates to world.
  Vec2 to_world(Vec2 local) const {
    const double c = std::cos(psi), s = std::sin(psi);
    return {x + c * local.x - s * local.y, y + s * local.x + c * local.y};
  }
  Vec2 to_local(Vec2 world) const {
    const double c = std::cos(psi), s = std::sin(psi);
    const double dx = world.x - x, dy = world.y - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }
  bool operator==(const Pose2D&) const = default;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

// Four corners, counter-clockwise.
using Quad = std::array<Vec2, 4>;

// Rectangle with the given center pose, extent along the pose heading
// (length) and across it (width).
Quad make_rect(const Pose2D& center, double length, double width);

// Axis-aligned rectangle from two corners.
Quad make_box(Vec2 lo, Vec2 hi);

// Minimum translation that moves `b` out of `a` (separating axis test).
// Empty when the shapes do not overlap (touching counts as separated).
std::optional<Vec2> separating_translation(const Quad& a, const Quad& b);

// Overlap area of two convex polygons.
double overlap_area(const Quad& a, const Quad& b);

double polygon_area(std::span<const Vec2> poly);

// Clips `subject` (convex, CCW) by the half-plane-intersection of `clip`
// (convex, CCW). Writes into `out`, returns vertex count.
int clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip, std::span<Vec2> out);

// Parametric distance t >= 0 along origin + t*dir to the segment, if hit.
std::optional<double> ray_segment(Vec2 origin, Vec2 dir, const Segment& s);

struct Barycentric {
  double l0, l1, l2;
};
Barycentric barycentric(Vec2 p, Vec2 a, Vec2 b, Vec2 c);
bool point_in_triangle(Vec2 p, Vec2 a, Vec2 b, Vec2 c, double tol = 1e-12);

}  // namespace forklift
