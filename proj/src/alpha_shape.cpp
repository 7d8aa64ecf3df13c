#include "ilmpc/alpha_shape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "ilmpc/errors.hpp"

namespace ilmpc {

namespace {

double orient(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// > 0 when p lies strictly inside the circumcircle of the CCW triangle abc.
double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& p) {
  const double adx = a.x - p.x, ady = a.y - p.y;
  const double bdx = b.x - p.x, bdy = b.y - p.y;
  const double cdx = c.x - p.x, cdy = c.y - p.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return ad * (bdx * cdy - cdx * bdy) - bd * (adx * cdy - cdx * ady) + cd * (adx * bdy - bdx * ady);
}

double tri_area(const Point2& a, const Point2& b, const Point2& c) {
  return 0.5 * std::abs(orient(a, b, c));
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

using EdgeKey = std::pair<int, int>;
EdgeKey edge_key(int a, int b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

bool region_ok(const std::vector<Triangle>& tris, const std::vector<double>& radius, double alpha,
               std::size_t num_points) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < tris.size(); ++i)
    if (radius[i] <= alpha) kept.push_back(i);
  if (kept.empty()) return false;
  std::vector<char> covered(num_points, 0);
  for (auto i : kept)
    for (int v : tris[i]) covered[v] = 1;
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) return false;
  UnionFind uf(kept.size());
  std::map<EdgeKey, int> owner;
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& t = tris[kept[k]];
    for (int e = 0; e < 3; ++e) {
      auto key = edge_key(t[e], t[(e + 1) % 3]);
      auto [it, inserted] = owner.emplace(key, static_cast<int>(k));
      if (!inserted) uf.unite(static_cast<int>(k), it->second);
    }
  }
  const int root = uf.find(0);
  for (std::size_t k = 1; k < kept.size(); ++k)
    if (uf.find(static_cast<int>(k)) != root) return false;
  return true;
}

bool inside_or_on(const Point2& a, const Point2& b, const Point2& c, const Point2& p) {
  return orient(a, b, p) >= 0 && orient(b, c, p) >= 0 && orient(c, a, p) >= 0;
}

// Bowyer-Watson with a finite super triangle can leave pockets between the
// triangulated region and the convex hull. Close them with ears.
void fill_hull_pockets(const std::vector<Point2>& pts, std::vector<Triangle>& tris) {
  while (true) {
    std::map<EdgeKey, int> count;
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e) ++count[edge_key(t[e], t[(e + 1) % 3])];
    std::multimap<int, int> boundary;  // directed, interior on the left
    for (const auto& t : tris)
      for (int e = 0; e < 3; ++e)
        if (count[edge_key(t[e], t[(e + 1) % 3])] == 1) boundary.emplace(t[e], t[(e + 1) % 3]);
    bool added = false;
    for (const auto& [a, b] : boundary) {
      auto [lo, hi] = boundary.equal_range(b);
      for (auto it = lo; it != hi && !added; ++it) {
        const int c = it->second;
        if (c == a || orient(pts[a], pts[b], pts[c]) >= 0.0) continue;
        if (count.count(edge_key(a, c))) continue;
        bool empty = true;
        for (int m = 0; m < static_cast<int>(pts.size()) && empty; ++m)
          if (m != a && m != b && m != c && inside_or_on(pts[a], pts[c], pts[b], pts[m])) empty = false;
        if (!empty) continue;
        tris.push_back({a, c, b});
        added = true;
      }
      if (added) break;
    }
    if (!added) return;
  }
}

void lawson_flips(const std::vector<Point2>& pts, std::vector<Triangle>& tris) {
  for (int pass = 0; pass < 1000; ++pass) {
    std::map<std::pair<int, int>, std::size_t> owner;  // directed edge -> triangle
    for (std::size_t t = 0; t < tris.size(); ++t)
      for (int e = 0; e < 3; ++e) owner[{tris[t][e], tris[t][(e + 1) % 3]}] = t;
    std::vector<char> touched(tris.size(), 0);
    bool flipped = false;
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (touched[t]) continue;
      for (int e = 0; e < 3; ++e) {
        const int a = tris[t][e], b = tris[t][(e + 1) % 3], c = tris[t][(e + 2) % 3];
        auto it = owner.find({b, a});
        if (it == owner.end() || touched[it->second]) continue;
        const std::size_t u = it->second;
        int d = -1;
        for (int v : tris[u])
          if (v != a && v != b) d = v;
        if (incircle(pts[a], pts[b], pts[c], pts[d]) <= 0.0) continue;
        if (orient(pts[a], pts[d], pts[c]) <= 0.0 || orient(pts[d], pts[b], pts[c]) <= 0.0) continue;
        tris[t] = {a, d, c};
        tris[u] = {d, b, c};
        touched[t] = touched[u] = 1;
        flipped = true;
        break;
      }
    }
    if (!flipped) return;
  }
}

}  // namespace

double circumradius(const Point2& a, const Point2& b, const Point2& c) {
  const double ab = std::hypot(b.x - a.x, b.y - a.y);
  const double bc = std::hypot(c.x - b.x, c.y - b.y);
  const double ca = std::hypot(a.x - c.x, a.y - c.y);
  const double twice_area = std::abs(orient(a, b, c));
  if (twice_area <= 0.0) return std::numeric_limits<double>::infinity();
  return ab * bc * ca / (2.0 * twice_area);
}

std::vector<Point2> unique_points(std::span<const Point2> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (points[i].x != points[j].x) return points[i].x < points[j].x;
    if (points[i].y != points[j].y) return points[i].y < points[j].y;
    return i < j;
  });
  std::vector<char> drop(points.size(), 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (drop[order[k]]) continue;
    const Point2& p = points[order[k]];
    for (std::size_t m = k + 1; m < order.size(); ++m) {
      const Point2& q = points[order[m]];
      if (q.x - p.x > 1e-12) break;
      if (std::abs(q.y - p.y) <= 1e-12) drop[order[m]] = 1;
    }
  }
  std::vector<Point2> out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!drop[i]) out.push_back(points[i]);
  return out;
}

std::vector<Triangle> delaunay_triangulation(std::span<const Point2> input) {
  const int n = static_cast<int>(input.size());
  if (n < 3) throw DegenerateRegion("alpha shape needs at least three distinct points");
  double xmin = input[0].x, xmax = xmin, ymin = input[0].y, ymax = ymin;
  for (const auto& p : input) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  const double cx = 0.5 * (xmin + xmax);
  const double cy = 0.5 * (ymin + ymax);

  std::vector<Point2> pts(input.begin(), input.end());
  pts.push_back({cx - 20.0 * span, cy - 10.0 * span});
  pts.push_back({cx + 20.0 * span, cy - 10.0 * span});
  pts.push_back({cx, cy + 20.0 * span});

  std::vector<Triangle> tris{{n, n + 1, n + 2}};
  std::vector<char> alive{1};
  std::vector<std::size_t> bad;
  std::vector<std::pair<int, int>> edges;

  for (int i = 0; i < n; ++i) {
    const Point2& p = pts[i];
    bad.clear();
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!alive[t]) continue;
      const auto& tr = tris[t];
      if (incircle(pts[tr[0]], pts[tr[1]], pts[tr[2]], p) > 0.0) bad.push_back(t);
    }
    if (bad.empty()) {
      // p is cocircular with every triangle around it; fall back to the
      // triangle that contains it
      for (std::size_t t = 0; t < tris.size(); ++t) {
        if (!alive[t]) continue;
        const auto& tr = tris[t];
        if (orient(pts[tr[0]], pts[tr[1]], p) >= 0 && orient(pts[tr[1]], pts[tr[2]], p) >= 0 &&
            orient(pts[tr[2]], pts[tr[0]], p) >= 0) {
          bad.push_back(t);
          break;
        }
      }
    }
    edges.clear();
    for (auto t : bad) {
      const auto& tr = tris[t];
      for (int e = 0; e < 3; ++e) edges.emplace_back(tr[e], tr[(e + 1) % 3]);
      alive[t] = 0;
    }
    for (std::size_t a = 0; a < edges.size(); ++a) {
      bool shared = false;
      for (std::size_t b = 0; b < edges.size(); ++b) {
        if (a != b && edges[a].first == edges[b].second && edges[a].second == edges[b].first) {
          shared = true;
          break;
        }
      }
      if (shared) continue;
      Triangle nt{edges[a].first, edges[a].second, i};
      if (orient(pts[nt[0]], pts[nt[1]], pts[nt[2]]) <= 0.0) continue;  // p on the edge
      tris.push_back(nt);
      alive.push_back(1);
    }
    if (tris.size() > 8 * static_cast<std::size_t>(n) + 64) {
      std::vector<Triangle> compact;
      for (std::size_t t = 0; t < tris.size(); ++t)
        if (alive[t]) compact.push_back(tris[t]);
      tris.swap(compact);
      alive.assign(tris.size(), 1);
    }
  }

  std::vector<Triangle> out;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (!alive[t]) continue;
    const auto& tr = tris[t];
    if (tr[0] >= n || tr[1] >= n || tr[2] >= n) continue;
    out.push_back(tr);
  }
  if (out.empty()) throw DegenerateRegion("alpha shape input is collinear");
  pts.resize(n);
  fill_hull_pockets(pts, out);
  lawson_flips(pts, out);
  return out;
}

AlphaShape AlphaShape::build(std::span<const Point2> points, double alpha) {
  AlphaShape s;
  s.points_ = unique_points(points);
  if (s.points_.size() < 3) throw DegenerateRegion("alpha shape needs at least three distinct points");
  s.all_ = delaunay_triangulation(s.points_);
  s.radius_.reserve(s.all_.size());
  for (const auto& t : s.all_)
    s.radius_.push_back(circumradius(s.points_[t[0]], s.points_[t[1]], s.points_[t[2]]));
  s.alpha_ = alpha;
  s.finalize();
  return s;
}

double AlphaShape::select_alpha(std::span<const Point2> points) {
  const auto pts = unique_points(points);
  if (pts.size() < 3) throw DegenerateRegion("alpha shape needs at least three distinct points");
  const auto tris = delaunay_triangulation(pts);
  std::vector<double> radius;
  for (const auto& t : tris) radius.push_back(circumradius(pts[t[0]], pts[t[1]], pts[t[2]]));
  std::vector<double> sorted = radius;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::size_t lo = 0, hi = sorted.size() - 1;
  if (!region_ok(tris, radius, sorted[hi], pts.size()))
    throw DegenerateRegion("triangulation does not cover the input points");
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (region_ok(tris, radius, sorted[mid], pts.size()))
      hi = mid;
    else
      lo = mid + 1;
  }
  return sorted[lo];
}

void AlphaShape::finalize() {
  kept_.clear();
  for (std::size_t i = 0; i < all_.size(); ++i)
    if (radius_[i] <= alpha_) kept_.push_back(all_[i]);
  cumulative_area_.clear();
  total_area_ = 0.0;
  for (const auto& t : kept_) {
    total_area_ += tri_area(points_[t[0]], points_[t[1]], points_[t[2]]);
    cumulative_area_.push_back(total_area_);
  }
  buckets_.clear();
  gnx_ = gny_ = 0;
  if (kept_.empty()) return;

  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const auto& t : kept_)
    for (int v : t) {
      xmin = std::min(xmin, points_[v].x);
      xmax = std::max(xmax, points_[v].x);
      ymin = std::min(ymin, points_[v].y);
      ymax = std::max(ymax, points_[v].y);
    }
  const int side = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(kept_.size()))), 1, 512);
  gnx_ = gny_ = side;
  gx0_ = xmin;
  gy0_ = ymin;
  gdx_ = std::max((xmax - xmin) / side, 1e-12);
  gdy_ = std::max((ymax - ymin) / side, 1e-12);
  buckets_.assign(static_cast<std::size_t>(gnx_) * gny_, {});
  auto cell = [&](double v, double v0, double d, int nmax) {
    return std::clamp(static_cast<int>(std::floor((v - v0) / d)), 0, nmax - 1);
  };
  for (std::size_t k = 0; k < kept_.size(); ++k) {
    const auto& t = kept_[k];
    double tx0 = points_[t[0]].x, tx1 = tx0, ty0 = points_[t[0]].y, ty1 = ty0;
    for (int v : t) {
      tx0 = std::min(tx0, points_[v].x);
      tx1 = std::max(tx1, points_[v].x);
      ty0 = std::min(ty0, points_[v].y);
      ty1 = std::max(ty1, points_[v].y);
    }
    const int i0 = cell(tx0 - 1e-9, gx0_, gdx_, gnx_), i1 = cell(tx1 + 1e-9, gx0_, gdx_, gnx_);
    const int j0 = cell(ty0 - 1e-9, gy0_, gdy_, gny_), j1 = cell(ty1 + 1e-9, gy0_, gdy_, gny_);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) buckets_[static_cast<std::size_t>(j) * gnx_ + i].push_back(k);
  }
}

std::vector<std::size_t> AlphaShape::candidates(const Point2& p) const {
  if (kept_.empty()) return {};
  const double fx = (p.x - gx0_) / gdx_;
  const double fy = (p.y - gy0_) / gdy_;
  if (fx < -1e-6 || fy < -1e-6 || fx > gnx_ + 1e-6 || fy > gny_ + 1e-6) return {};
  const int i = std::clamp(static_cast<int>(std::floor(fx)), 0, gnx_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor(fy)), 0, gny_ - 1);
  return buckets_[static_cast<std::size_t>(j) * gnx_ + i];
}

bool AlphaShape::contains(const Point2& p) const {
  for (auto k : candidates(p)) {
    const auto& t = kept_[k];
    const Point2& a = points_[t[0]];
    const Point2& b = points_[t[1]];
    const Point2& c = points_[t[2]];
    const double area2 = orient(a, b, c);
    const double l0 = orient(b, c, p) / area2;
    const double l1 = orient(c, a, p) / area2;
    const double l2 = 1.0 - l0 - l1;
    if (l0 >= -1e-12 && l1 >= -1e-12 && l2 >= -1e-12) return true;
  }
  return false;
}

Point2 AlphaShape::sample(Rng& rng) const {
  if (kept_.empty()) throw DegenerateRegion("cannot sample an empty alpha shape; increase alpha");
  const double r = rng.uniform() * total_area_;
  auto it = std::upper_bound(cumulative_area_.begin(), cumulative_area_.end(), r);
  const std::size_t k = std::min<std::size_t>(it - cumulative_area_.begin(), kept_.size() - 1);
  const auto& t = kept_[k];
  double s = rng.uniform();
  double u = rng.uniform();
  if (s + u > 1.0) {
    s = 1.0 - s;
    u = 1.0 - u;
  }
  const Point2& a = points_[t[0]];
  const Point2& b = points_[t[1]];
  const Point2& c = points_[t[2]];
  return {a.x + s * (b.x - a.x) + u * (c.x - a.x), a.y + s * (b.y - a.y) + u * (c.y - a.y)};
}

bool AlphaShape::connected() const {
  if (kept_.empty()) return false;
  UnionFind uf(kept_.size());
  std::map<EdgeKey, int> owner;
  for (std::size_t k = 0; k < kept_.size(); ++k)
    for (int e = 0; e < 3; ++e) {
      auto [it, inserted] = owner.emplace(edge_key(kept_[k][e], kept_[k][(e + 1) % 3]), static_cast<int>(k));
      if (!inserted) uf.unite(static_cast<int>(k), it->second);
    }
  const int root = uf.find(0);
  for (std::size_t k = 1; k < kept_.size(); ++k)
    if (uf.find(static_cast<int>(k)) != root) return false;
  return true;
}

bool AlphaShape::covers_all_points() const {
  std::vector<char> covered(points_.size(), 0);
  for (const auto& t : kept_)
    for (int v : t) covered[v] = 1;
  return std::find(covered.begin(), covered.end(), 0) == covered.end();
}

std::vector<std::vector<Point2>> AlphaShape::boundary_loops() const {
  std::map<EdgeKey, int> count;
  for (const auto& t : kept_)
    for (int e = 0; e < 3; ++e) ++count[edge_key(t[e], t[(e + 1) % 3])];
  // directed boundary edges keep the CCW orientation of their triangle
  std::multimap<int, int> next;
  for (const auto& t : kept_)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      if (count[edge_key(a, b)] == 1) next.emplace(a, b);
    }
  std::vector<std::vector<Point2>> loops;
  while (!next.empty()) {
    auto it = next.begin();
    const int first = it->first;
    int cur = it->second;
    next.erase(it);
    std::vector<Point2> loop{points_[first]};
    while (cur != first) {
      loop.push_back(points_[cur]);
      auto nit = next.find(cur);
      if (nit == next.end()) break;
      cur = nit->second;
      next.erase(nit);
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

}  // namespace ilmpc
