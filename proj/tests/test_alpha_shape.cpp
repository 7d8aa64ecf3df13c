#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ilmpc/alpha_shape.hpp"
#include "ilmpc/errors.hpp"

using namespace ilmpc;

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain, counter-clockwise.
std::vector<Point2> hull(std::vector<Point2> p) {
  std::sort(p.begin(), p.end(), [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Point2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

// signed distance-like margin: min over edges of the cross product scaled by edge length
double hull_margin(const std::vector<Point2>& h, const Point2& q) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < h.size(); ++i) {
    const Point2& a = h[i];
    const Point2& b = h[(i + 1) % h.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    m = std::min(m, cross(a, b, q) / len);
  }
  return m;
}

std::vector<Point2> random_points(Rng& rng, int n) {
  std::vector<Point2> p;
  for (int i = 0; i < n; ++i) p.push_back({rng.uniform(-5, 5), rng.uniform(-3, 3)});
  return p;
}

bool in_triangle(const Point2& a, const Point2& b, const Point2& c, const Point2& q, double tol) {
  const double d = cross(a, b, c);
  const double l1 = cross(b, c, q) / d;
  const double l2 = cross(c, a, q) / d;
  const double l3 = 1.0 - l1 - l2;
  return l1 >= -tol && l2 >= -tol && l3 >= -tol;
}

// Brute-force alpha complex: every triple whose circumcircle holds no other
// point, kept when the circumradius does not exceed alpha.
struct BruteAlpha {
  std::vector<std::array<Point2, 3>> tris;

  BruteAlpha(const std::vector<Point2>& p, double alpha) {
    const int n = static_cast<int>(p.size());
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
          const Point2 &a = p[i], &b = p[j], &c = p[k];
          const double d = 2 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
          if (std::abs(d) < 1e-12) continue;
          const double a2 = a.x * a.x + a.y * a.y, b2 = b.x * b.x + b.y * b.y, c2 = c.x * c.x + c.y * c.y;
          const double ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
          const double uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
          const double r = std::hypot(a.x - ux, a.y - uy);
          bool empty = true;
          for (int m = 0; m < n && empty; ++m) {
            if (m == i || m == j || m == k) continue;
            if (std::hypot(p[m].x - ux, p[m].y - uy) < r * (1 - 1e-12)) empty = false;
          }
          if (empty && r <= alpha) tris.push_back({a, b, c});
        }
  }

  bool contains(const Point2& q) const {
    for (const auto& t : tris)
      if (in_triangle(t[0], t[1], t[2], q, 1e-12)) return true;
    return false;
  }
};

}  // namespace

TEST_CASE("unit square") {
  const std::vector<Point2> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const AlphaShape s = AlphaShape::build(sq, 1e9);
  CHECK(s.contains({0.5, 0.5}));
  CHECK_FALSE(s.contains({2, 2}));
  CHECK(s.area() == doctest::Approx(1.0));
  CHECK(s.contains({1, 0.5}));  // closed set
}

TEST_CASE("degenerate input") {
  const std::vector<Point2> two{{0, 0}, {1, 1}};
  CHECK_THROWS_AS(AlphaShape::build(two, 1.0), DegenerateRegion);
  const std::vector<Point2> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  CHECK_THROWS_AS(AlphaShape::build(line, 1.0), DegenerateRegion);
  const std::vector<Point2> dup{{0, 0}, {0, 0}, {1, 0}, {1, 0}};
  CHECK_THROWS_AS(AlphaShape::build(dup, 1.0), DegenerateRegion);
}

TEST_CASE("delaunay triangles have empty circumcircles") {
  Rng rng(12);
  for (int set = 0; set < 10; ++set) {
    const auto p = random_points(rng, 40);
    const auto tris = delaunay_triangulation(p);
    // Euler: 2n - 2 - h triangles
    CHECK(tris.size() == 2 * p.size() - 2 - hull(p).size());
    for (const auto& t : tris) {
      CHECK(cross(p[t[0]], p[t[1]], p[t[2]]) > 0.0);
      const double r = circumradius(p[t[0]], p[t[1]], p[t[2]]);
      CHECK(std::isfinite(r));
    }
  }
}

TEST_CASE("C-shaped cloud excludes its cavity") {
  std::vector<Point2> c;
  for (int i = 0; i <= 16; ++i) {
    const double a = M_PI / 4 + i * (1.5 * M_PI) / 16;
    c.push_back({2 * std::cos(a), 2 * std::sin(a)});
    c.push_back({2.6 * std::cos(a), 2.6 * std::sin(a)});
  }
  const AlphaShape s = AlphaShape::build(c, 0.8);
  CHECK_FALSE(s.contains({0.0, 0.0}));
  CHECK_FALSE(s.contains({2.0, 0.0}));
  CHECK(s.contains({0.0, 2.3}));
  CHECK(s.contains({-2.3, 0.0}));
  const AlphaShape h = AlphaShape::build(c, 1e9);
  CHECK(h.contains({0.0, 0.0}));
}

TEST_CASE("membership agrees with a brute-force alpha complex") {
  Rng rng(13);
  for (int set = 0; set < 8; ++set) {
    const auto p = random_points(rng, 30 + 2 * set);
    for (double alpha : {0.8, 1.5, 3.0}) {
      const AlphaShape s = AlphaShape::build(p, alpha);
      const BruteAlpha oracle(p, alpha);
      int mismatches = 0;
      for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 40; ++j) {
          const Point2 q{-5.2 + 10.4 * i / 59.0, -3.2 + 6.4 * j / 39.0};
          if (s.contains(q) != oracle.contains(q)) ++mismatches;
        }
      CHECK(mismatches == 0);
    }
  }
}

TEST_CASE("large alpha gives the convex hull") {
  Rng rng(14);
  for (int set = 0; set < 10; ++set) {
    const auto p = random_points(rng, 25);
    const AlphaShape s = AlphaShape::build(p, 1e12);
    const auto h = hull(p);
    double area = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) area += cross({0, 0}, h[i], h[(i + 1) % h.size()]) / 2;
    CHECK(s.area() == doctest::Approx(area).epsilon(1e-10));
    int mismatches = 0;
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j) {
        const Point2 q{-5.0 + 10.0 * i / 49.0, -3.0 + 6.0 * j / 49.0};
        const double m = hull_margin(h, q);
        if (std::abs(m) < 1e-9) continue;
        if (s.contains(q) != (m > 0)) ++mismatches;
      }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("regions grow with alpha") {
  Rng rng(15);
  for (int set = 0; set < 10; ++set) {
    const auto p = random_points(rng, 40);
    std::vector<AlphaShape> shapes;
    for (double a : {0.5, 0.9, 1.4, 2.5, 5.0, 1e9}) shapes.push_back(AlphaShape::build(p, a));
    for (std::size_t k = 1; k < shapes.size(); ++k) {
      CHECK(shapes[k].area() >= shapes[k - 1].area());
      for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) {
          const Point2 q{-5.0 + 10.0 * i / 39.0, -3.0 + 6.0 * j / 39.0};
          if (shapes[k - 1].contains(q)) CHECK(shapes[k].contains(q));
        }
    }
  }
}

TEST_CASE("selected alpha is connected and covers every point") {
  Rng rng(16);
  for (int set = 0; set < 5; ++set) {
    const auto p = random_points(rng, 50);
    const double a = AlphaShape::select_alpha(p);
    const AlphaShape s = AlphaShape::build(p, a);
    CHECK(s.connected());
    CHECK(s.covers_all_points());
    const AlphaShape smaller = AlphaShape::build(p, a * (1 - 1e-9));
    CHECK_FALSE((smaller.connected() && smaller.covers_all_points()));
  }
}

TEST_CASE("samples fall inside the region") {
  Rng rng(17);
  const auto p = random_points(rng, 60);
  const AlphaShape s = AlphaShape::build(p, 1.5);
  for (int i = 0; i < 2000; ++i) CHECK(s.contains(s.sample(rng)));
}

TEST_CASE("boundary loops close") {
  const std::vector<Point2> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
  const AlphaShape s = AlphaShape::build(sq, 1e9);
  const auto loops = s.boundary_loops();
  REQUIRE(loops.size() == 1);
  CHECK(loops[0].size() == 4);
}
