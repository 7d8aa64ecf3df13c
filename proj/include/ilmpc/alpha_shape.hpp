#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ilmpc/random.hpp"

namespace ilmpc {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

using Triangle = std::array<int, 3>;

/// Delaunay triangulation (Bowyer-Watson). Duplicate points must have been
/// removed; triangles are returned counter-clockwise.
std::vector<Triangle> delaunay_triangulation(std::span<const Point2> points);

/// Removes exact and near-exact (1e-12) duplicates, preserving first occurrence.
std::vector<Point2> unique_points(std::span<const Point2> points);

/// Circumradius of a triangle; +inf for degenerate triangles.
double circumradius(const Point2& a, const Point2& b, const Point2& c);

/// Alpha shape as a union of Delaunay triangles whose circumradius does not
/// exceed alpha. As alpha grows the region grows monotonically and ends at
/// the convex hull.
class AlphaShape {
 public:
  /// Throws DegenerateRegion for fewer than three distinct points or
  /// collinear input.
  static AlphaShape build(std::span<const Point2> points, double alpha);

  /// Smallest alpha (over the triangulation's circumradii) for which the
  /// region is edge-connected and every input point is a vertex of a kept
  /// triangle.
  static double select_alpha(std::span<const Point2> points);

  double alpha() const { return alpha_; }
  const std::vector<Point2>& points() const { return points_; }
  const std::vector<Triangle>& triangles() const { return kept_; }
  bool empty() const { return kept_.empty(); }

  /// Closed-set membership, tolerance 1e-12 in barycentric coordinates.
  bool contains(const Point2& p) const;
  double area() const { return total_area_; }
  /// Uniform draw from the region. Requires !empty().
  Point2 sample(Rng& rng) const;

  bool connected() const;
  bool covers_all_points() const;

  /// Boundary edges chained into closed vertex loops.
  std::vector<std::vector<Point2>> boundary_loops() const;

 private:
  AlphaShape() = default;
  void finalize();
  std::vector<std::size_t> candidates(const Point2& p) const;

  double alpha_ = 0.0;
  std::vector<Point2> points_;
  std::vector<Triangle> all_;
  std::vector<double> radius_;
  std::vector<Triangle> kept_;
  std::vector<double> cumulative_area_;
  double total_area_ = 0.0;

  // uniform bucket grid over the kept triangles' bounding box
  double gx0_ = 0.0, gy0_ = 0.0, gdx_ = 1.0, gdy_ = 1.0;
  int gnx_ = 0, gny_ = 0;
  std::vector<std::vector<std::size_t>> buckets_;
};

}  // namespace ilmpc
