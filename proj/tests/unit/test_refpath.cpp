#include "../common/path_oracle.hpp"

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "forklift/refpath.hpp"
#include "forklift/rng.hpp"

using namespace forklift;
using namespace forklift::path;
using doctest::Approx;


TEST_CASE("generalized Fresnel reduces to elementary integrals") {
  const Fresnel f0 = generalized_fresnel(0.0, 0.0, 0.3);
  CHECK(f0.x == Approx(std::cos(0.3)).epsilon(1e-14));
  CHECK(f0.y == Approx(std::sin(0.3)).epsilon(1e-14));
  const Fresnel f1 = generalized_fresnel(0.0, 1.0, 0.0);
  CHECK(f1.x == Approx(std::sin(1.0)).epsilon(1e-14));
  CHECK(f1.y == Approx(1.0 - std::cos(1.0)).epsilon(1e-14));
}

TEST_CASE("aligned collinear poses give a straight segment") {
  const ReferencePath p = build_reference({0, 0, 0}, {1, 0, 0});
  REQUIRE(p.segments().size() == 1);
  CHECK_FALSE(p.is_fallback());
  CHECK(std::abs(p.segments()[0].kappa0) < 1e-12);
  CHECK(std::abs(p.segments()[0].dkappa) < 1e-12);
  CHECK(p.length() == Approx(1.0).epsilon(1e-12));
  CHECK(p.samples().size() >= 1000);
}

TEST_CASE("quarter turn endpoint matches a Simpson oracle") {
  const Pose2D goal{1, 1, std::numbers::pi / 2};
  const ReferencePath p = build_reference({0, 0, 0}, goal);
  CHECK_FALSE(p.is_fallback());
  const Pose2D end = testdata::simpson_end(p);
  CHECK(std::hypot(end.x - goal.x, end.y - goal.y) < 1e-6);
  CHECK(angle_distance(end.psi, goal.psi) < 1e-6);
  const auto& last = p.samples().back();
  CHECK(std::hypot(last.p.x - goal.x, last.p.y - goal.y) < 1e-6);
  CHECK(angle_distance(last.psi, goal.psi) < 1e-6);
}

TEST_CASE("reversed goal heading uses the two-arc fallback") {
  const Pose2D goal{1, 0, std::numbers::pi};
  const ReferencePath p = build_reference({0, 0, 0}, goal);
  CHECK(p.is_fallback());
  const Pose2D end = testdata::simpson_end(p);
  CHECK(std::hypot(end.x - goal.x, end.y - goal.y) < 1e-6);
  CHECK(angle_distance(end.psi, goal.psi) < 1e-6);
}

TEST_CASE("curvature is affine in arclength") {
  const ReferencePath p = build_reference({0.2, 0.3, 0.4}, {1.3, 0.9, -0.3});
  REQUIRE_FALSE(p.is_fallback());
  // Discrete curvature from consecutive sample headings, regressed on s.
  const auto smp = p.samples();
  std::vector<double> s, k;
  for (std::size_t i = 1; i < smp.size(); ++i) {
    const double ds = smp[i].s - smp[i - 1].s;
    s.push_back(0.5 * (smp[i].s + smp[i - 1].s));
    k.push_back(normalize_angle(smp[i].psi - smp[i - 1].psi) / ds);
  }
  const double n = static_cast<double>(s.size());
  double ms = 0, mk = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ms += s[i] / n;
    mk += k[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sxy += (s[i] - ms) * (k[i] - mk);
    sxx += (s[i] - ms) * (s[i] - ms);
    syy += (k[i] - mk) * (k[i] - mk);
  }
  CHECK(sxy * sxy / (sxx * syy) > 0.999);
}

TEST_CASE("nearest point on a straight path") {
  const ReferencePath p = build_reference({0, 0, 0}, {1, 0, 0});
  const PathQuery q = nearest_point(p, {0.5, 0.1}, 0.0);
  CHECK(q.r_cd == Approx(0.1).epsilon(1e-9));
  CHECK(q.r_cpsi == Approx(0.0));
  CHECK(q.s == Approx(0.5).epsilon(1e-6));
  const PathQuery on = nearest_point(p, {0.3, 0.0}, 0.0);
  CHECK(on.r_cd < 1e-9);
  CHECK(on.r_cpsi < 1e-12);
}

TEST_CASE("points on a curved path query as zero distance") {
  const ReferencePath p = build_reference({0, 0, 0}, {1, 1, std::numbers::pi / 2});
  for (double s : {0.1, 0.5, 1.0, 1.4}) {
    const Pose2D at = p.pose_at(s);
    const PathQuery q = nearest_point(p, at.position(), at.psi);
    CHECK(q.r_cd < 1e-7);
    CHECK(q.r_cpsi < 1e-6);
  }
}

TEST_CASE("nearest point agrees with a dense brute-force search") {
  RngStream rng(21, "nearest");
  for (int trial = 0; trial < 4; ++trial) {
    const Pose2D a{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(-1, 1)};
    const Pose2D b{a.x + rng.uniform(0.5, 1.0), a.y + rng.uniform(-0.5, 0.5), rng.uniform(-1, 1)};
    const ReferencePath p = build_reference(a, b);
    const auto pts = testdata::dense_points(p, 1'000'000);
    for (int i = 0; i < 5; ++i) {
      const Vec2 q{rng.uniform(a.x - 0.3, b.x + 0.3), rng.uniform(-0.5, 1.5)};
      const PathQuery r = nearest_point(p, q, 0.0);
      CHECK(std::abs(r.r_cd - testdata::brute_distance(pts, q)) < 1e-5);
    }
  }
}

TEST_CASE("refinement never does worse than the polyline vertices") {
  const ReferencePath p = build_reference({0.3, 0.5, 0.2}, {1.4, 0.9, 0.0});
  RngStream rng(4, "refine");
  for (int i = 0; i < 500; ++i) {
    const Vec2 q{rng.uniform(0, 1.8), rng.uniform(0, 1.8)};
    double coarse = std::numeric_limits<double>::infinity();
    for (const auto& s : p.samples()) coarse = std::min(coarse, norm(q - s.p));
    CHECK(nearest_point(p, q, 0.0).r_cd <= coarse + 1e-15);
  }
}

TEST_CASE("mirroring the endpoints mirrors the path") {
  const Pose2D a{0.2, 0.4, 0.3}, b{1.3, 0.8, -0.2};
  const ReferencePath p = build_reference(a, b);
  const ReferencePath m = build_reference({a.x, -a.y, -a.psi}, {b.x, -b.y, -b.psi});
  REQUIRE(p.samples().size() == m.samples().size());
  for (std::size_t i = 0; i < p.samples().size(); i += 37) {
    CHECK(std::abs(p.samples()[i].p.x - m.samples()[i].p.x) < 1e-9);
    CHECK(std::abs(p.samples()[i].p.y + m.samples()[i].p.y) < 1e-9);
  }
}

TEST_CASE("lead-in continues straight past the goal") {
  const Pose2D goal{1.0, 0.5, 0.0};
  const ReferencePath p = build_reference({0, 0.2, 0.3}, goal).with_lead_in(0.2);
  CHECK(p.goal_arclength() == Approx(p.length() - 0.2));
  const Pose2D end = p.pose_at(p.length());
  CHECK(end.x == Approx(1.2).epsilon(1e-9));
  CHECK(end.y == Approx(0.5).epsilon(1e-9));
  const PathQuery q = nearest_point(p, {1.1, 0.52}, 0.0);
  CHECK(q.r_cd == Approx(0.02).epsilon(1e-6));
}

TEST_CASE("random pose pairs fit to 1e-6") {
  RngStream rng(8, "fidelity");
  for (int i = 0; i < 50; ++i) {
    const Pose2D a{rng.uniform(0, 1.8), rng.uniform(0, 1.8), rng.uniform(-3, 3)};
    const Pose2D b{rng.uniform(0, 1.8), rng.uniform(0, 1.8), rng.uniform(-3, 3)};
    if (norm(a.position() - b.position()) < 0.05) continue;
    const ReferencePath p = build_reference(a, b);
    const Pose2D end = testdata::simpson_end(p);
    CAPTURE(i);
    CHECK(std::hypot(end.x - b.x, end.y - b.y) < 1e-6);
    CHECK(angle_distance(end.psi, b.psi) < 1e-6);
  }
}
