#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cgc/common.hpp"

namespace cgc {

struct Coord {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

enum class GridShape { kSquare, kRectangle, kCircle, kFan };

inline std::string to_string(GridShape s) {
  switch (s) {
    case GridShape::kSquare: return "square";
    case GridShape::kRectangle: return "rectangle";
    case GridShape::kCircle: return "circle";
    case GridShape::kFan: return "fan";
  }
  return "?";
}

inline GridShape parse_grid_shape(const std::string& s) {
  if (s == "square") return GridShape::kSquare;
  if (s == "rectangle") return GridShape::kRectangle;
  if (s == "circle") return GridShape::kCircle;
  if (s == "fan") return GridShape::kFan;
  throw ConfigError("unknown grid shape '" + s + "'");
}

// Lattice shape parameters. Square uses width == height; circle and fan use
// radius, fan additionally splits the disc into `sectors` wedges separated by
// one-cell-wide gaps along the sector boundary rays.
struct GridSpec {
  GridShape shape = GridShape::kSquare;
  int width = 0;
  int height = 0;
  int radius = 0;
  int sectors = 0;

  static GridSpec square(int side) { return {GridShape::kSquare, side, side, 0, 0}; }
  static GridSpec rectangle(int w, int h) { return {GridShape::kRectangle, w, h, 0, 0}; }
  static GridSpec circle(int r) { return {GridShape::kCircle, 0, 0, r, 0}; }
  static GridSpec fan(int r, int k) { return {GridShape::kFan, 0, 0, r, k}; }
};

// Spatial regions with a symmetric 0/1 adjacency and closed neighbourhoods
// N_i = {i} plus the adjacent regions. Immutable after construction.
class RegionGraph {
 public:
  RegionGraph(std::vector<Coord> coords, const std::vector<std::pair<int, int>>& edges,
              std::optional<GridSpec> grid = std::nullopt)
      : coords_(std::move(coords)), grid_(grid) {
    const int r = static_cast<int>(coords_.size());
    if (r == 0) throw std::invalid_argument("RegionGraph: no regions");
    std::set<std::pair<double, double>> seen;
    for (const auto& c : coords_) {
      if (!seen.insert({c.x, c.y}).second)
        throw std::invalid_argument("RegionGraph: duplicate coordinates");
    }
    adjacency_ = Eigen::MatrixXd::Zero(r, r);
    for (auto [a, b] : edges) {
      if (a < 0 || b < 0 || a >= r || b >= r)
        throw std::invalid_argument("RegionGraph: edge index out of range");
      if (a == b) throw std::invalid_argument("RegionGraph: self loop");
      adjacency_(a, b) = 1.0;
      adjacency_(b, a) = 1.0;
    }
    neighbourhoods_.resize(r);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < r; ++j) {
        if (j == i || adjacency_(i, j) != 0.0) neighbourhoods_[i].push_back(j);
      }
      max_degree_ = std::max(max_degree_, degree(i));
    }
  }

  // Regions with no adjacency at all (the SUTVA case, N_i = {i}).
  static RegionGraph isolated(std::vector<Coord> coords) {
    return RegionGraph(std::move(coords), {});
  }

  int size() const { return static_cast<int>(coords_.size()); }
  const Coord& coord(int i) const { return coords_.at(i); }
  const std::vector<Coord>& coords() const { return coords_; }
  const Eigen::MatrixXd& adjacency() const { return adjacency_; }
  bool adjacent(int i, int j) const { return adjacency_(i, j) != 0.0; }

  // Closed neighbourhood, sorted ascending, always contains i.
  std::span<const int> neighbourhood(int i) const { return neighbourhoods_.at(i); }
  int degree(int i) const { return static_cast<int>(neighbourhoods_.at(i).size()) - 1; }
  int max_degree() const { return max_degree_; }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < size(); ++i)
      for (int j : neighbourhoods_[i])
        if (j > i) out.emplace_back(i, j);
    return out;
  }

  const std::optional<GridSpec>& grid() const { return grid_; }

 private:
  std::vector<Coord> coords_;
  std::optional<GridSpec> grid_;
  Eigen::MatrixXd adjacency_;
  std::vector<std::vector<int>> neighbourhoods_;
  int max_degree_ = 0;
};

// A partition of regions into m non-empty clusters labelled 0..m-1.
class Clustering {
 public:
  explicit Clustering(std::vector<int> labels) : labels_(std::move(labels)) {
    int m = 0;
    for (int l : labels_) m = std::max(m, l + 1);
    validate(m);
  }
  Clustering(std::vector<int> labels, int m) : labels_(std::move(labels)) { validate(m); }

  static Clustering global(int regions) { return Clustering(std::vector<int>(regions, 0), 1); }
  static Clustering individual(int regions) {
    std::vector<int> l(regions);
    for (int i = 0; i < regions; ++i) l[i] = i;
    return Clustering(std::move(l), regions);
  }

  int region_count() const { return static_cast<int>(labels_.size()); }
  int cluster_count() const { return clusters_; }
  int label(int i) const { return labels_.at(i); }
  const std::vector<int>& labels() const { return labels_; }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(clusters_);
    for (int i = 0; i < region_count(); ++i) out[labels_[i]].push_back(i);
    return out;
  }

  // Relabels clusters in order of first appearance.
  Clustering canonical() const {
    std::vector<int> map(clusters_, -1);
    std::vector<int> out(labels_.size());
    int next = 0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      int& slot = map[labels_[i]];
      if (slot < 0) slot = next++;
      out[i] = slot;
    }
    return Clustering(std::move(out), clusters_);
  }

  friend bool operator==(const Clustering& a, const Clustering& b) {
    return a.clusters_ == b.clusters_ && a.labels_ == b.labels_;
  }

 private:
  void validate(int m) {
    const int r = static_cast<int>(labels_.size());
    if (r == 0) throw std::invalid_argument("Clustering: no regions");
    if (m < 1 || m > r) throw std::invalid_argument("Clustering: cluster count out of range");
    std::vector<char> used(m, 0);
    for (int l : labels_) {
      if (l < 0 || l >= m) throw std::invalid_argument("Clustering: label out of range");
      used[l] = 1;
    }
    if (std::find(used.begin(), used.end(), 0) != used.end())
      throw std::invalid_argument("Clustering: empty cluster");
    clusters_ = m;
  }

  std::vector<int> labels_;
  int clusters_ = 0;
};

namespace detail {

inline std::vector<std::pair<int, int>> lattice_edges(const std::vector<Coord>& coords) {
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t j = i + 1; j < coords.size(); ++j) {
      double d = std::abs(coords[i].x - coords[j].x) + std::abs(coords[i].y - coords[j].y);
      if (std::abs(d - 1.0) < 1e-9) edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  return edges;
}

// Distance from point to the ray starting at the origin with direction angle phi.
inline double ray_distance(double x, double y, double phi) {
  double ux = std::cos(phi), uy = std::sin(phi);
  double along = x * ux + y * uy;
  if (along <= 0.0) return std::hypot(x, y);
  return std::abs(x * uy - y * ux);
}

// Recognises a full w x h lattice stored row-major from (0, 0).
inline std::optional<GridSpec> infer_lattice(const std::vector<Coord>& coords) {
  double max_x = 0.0;
  for (const auto& c : coords) max_x = std::max(max_x, c.x);
  const int w = static_cast<int>(max_x) + 1;
  if (w <= 0 || coords.size() % w != 0) return std::nullopt;
  const int h = static_cast<int>(coords.size()) / w;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (coords[i].x != double(int(i) % w) || coords[i].y != double(int(i) / w)) return std::nullopt;
  }
  return w == h ? GridSpec::square(w) : GridSpec::rectangle(w, h);
}

}  // namespace detail

// Lattice grid with 4-connectivity. Regions are indexed row-major: by
// ascending l_y, then ascending l_x.
inline RegionGraph build_grid(const GridSpec& spec) {
  std::vector<Coord> cells;
  switch (spec.shape) {
    case GridShape::kSquare:
    case GridShape::kRectangle: {
      if (spec.shape == GridShape::kSquare && spec.width != spec.height)
        throw std::invalid_argument("build_grid: square needs width == height");
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) cells.push_back({double(x), double(y)});
      break;
    }
    case GridShape::kCircle:
    case GridShape::kFan: {
      const int r = spec.radius;
      if (spec.shape == GridShape::kFan && spec.sectors < 1)
        throw std::invalid_argument("build_grid: fan needs at least one sector");
      for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
          if (x * x + y * y > r * r) continue;
          if (spec.shape == GridShape::kFan) {
            bool in_gap = false;
            for (int b = 0; b < spec.sectors && !in_gap; ++b) {
              double phi = 2.0 * std::numbers::pi * b / spec.sectors;
              in_gap = detail::ray_distance(x, y, phi) <= 0.5 + 1e-12;
            }
            if (in_gap) continue;
          }
          cells.push_back({double(x), double(y)});
        }
      }
      break;
    }
  }
  if (cells.empty()) throw std::invalid_argument("build_grid: shape yields zero regions");
  auto edges = detail::lattice_edges(cells);
  return RegionGraph(std::move(cells), edges, spec);
}

// Clusters touched by each closed neighbourhood, as sorted label lists.
class TouchTable {
 public:
  TouchTable(const RegionGraph& g, const Clustering& c) : touched_(g.size()) {
    if (g.size() != c.region_count())
      throw std::invalid_argument("TouchTable: graph/clustering size mismatch");
    for (int i = 0; i < g.size(); ++i) {
      auto& t = touched_[i];
      for (int j : g.neighbourhood(i)) t.push_back(c.label(j));
      std::sort(t.begin(), t.end());
      t.erase(std::unique(t.begin(), t.end()), t.end());
    }
  }

  std::span<const int> touched(int i) const { return touched_[i]; }
  int count(int i) const { return static_cast<int>(touched_[i].size()); }

  bool touches(int i, int cluster) const {
    return std::binary_search(touched_[i].begin(), touched_[i].end(), cluster);
  }

  // m_{ii'}: clusters intersecting both N_i and N_{i'}.
  int shared(int i, int i2) const {
    const auto& a = touched_[i];
    const auto& b = touched_[i2];
    int n = 0;
    auto p = a.begin();
    auto q = b.begin();
    while (p != a.end() && q != b.end()) {
      if (*p < *q) {
        ++p;
      } else if (*q < *p) {
        ++q;
      } else {
        ++n;
        ++p;
        ++q;
      }
    }
    return n;
  }

 private:
  std::vector<std::vector<int>> touched_;
};

namespace detail {
inline void check_pair(const RegionGraph& g, const Clustering& c) {
  if (g.size() != c.region_count())
    throw std::invalid_argument("graph/clustering size mismatch");
}
inline void check_region(const RegionGraph& g, int i) {
  if (i < 0 || i >= g.size()) throw std::out_of_range("region index out of range");
}
}  // namespace detail

// Regions of cluster j with at least one neighbour outside j.
inline std::vector<int> boundary_regions(const RegionGraph& g, const Clustering& c, int j) {
  detail::check_pair(g, c);
  if (j < 0 || j >= c.cluster_count()) throw std::out_of_range("invalid cluster label");
  std::vector<int> out;
  for (int i = 0; i < g.size(); ++i) {
    if (c.label(i) != j) continue;
    for (int k : g.neighbourhood(i)) {
      if (c.label(k) != j) {
        out.push_back(i);
        break;
      }
    }
  }
  return out;
}

inline std::vector<int> interior_regions(const RegionGraph& g, const Clustering& c, int j) {
  auto boundary = boundary_regions(g, c, j);
  std::vector<int> out;
  for (int i = 0; i < g.size(); ++i)
    if (c.label(i) == j && !std::binary_search(boundary.begin(), boundary.end(), i))
      out.push_back(i);
  return out;
}

inline bool is_boundary(const RegionGraph& g, const Clustering& c, int i) {
  for (int k : g.neighbourhood(i))
    if (c.label(k) != c.label(i)) return true;
  return false;
}

inline int cluster_touch_count(const RegionGraph& g, const Clustering& c, int i) {
  detail::check_pair(g, c);
  detail::check_region(g, i);
  std::vector<int> labels;
  for (int j : g.neighbourhood(i)) labels.push_back(c.label(j));
  std::sort(labels.begin(), labels.end());
  return static_cast<int>(std::unique(labels.begin(), labels.end()) - labels.begin());
}

inline int shared_cluster_count(const RegionGraph& g, const Clustering& c, int i, int i2) {
  detail::check_pair(g, c);
  detail::check_region(g, i);
  detail::check_region(g, i2);
  TouchTable t(g, c);
  return t.shared(i, i2);
}

// Axis-aligned tiles, tiles_per_side along each axis. When a side is not
// divisible the last tile row/column absorbs the remainder.
inline Clustering tiling_partition(const RegionGraph& g, int tiles_per_side) {
  const auto& grid = g.grid();
  if (!grid || (grid->shape != GridShape::kSquare && grid->shape != GridShape::kRectangle))
    throw std::invalid_argument("tiling_partition: graph is not a square/rectangle grid");
  if (tiles_per_side < 1) throw std::invalid_argument("tiling_partition: tiles_per_side < 1");
  if (tiles_per_side > grid->width || tiles_per_side > grid->height)
    throw std::invalid_argument("tiling_partition: more tiles than cells along a side");
  const int tw = grid->width / tiles_per_side;
  const int th = grid->height / tiles_per_side;
  std::vector<int> labels(g.size());
  for (int i = 0; i < g.size(); ++i) {
    int tx = std::min(static_cast<int>(g.coord(i).x) / tw, tiles_per_side - 1);
    int ty = std::min(static_cast<int>(g.coord(i).y) / th, tiles_per_side - 1);
    labels[i] = ty * tiles_per_side + tx;
  }
  return Clustering(std::move(labels), tiles_per_side * tiles_per_side);
}

// Line-oriented region file: header "R m", then "index l_x l_y label" per
// region, then an optional "edges E" section of "a b" pairs. Without the edge
// section adjacency is rebuilt from unit lattice distance between coords.
inline void write_region_file(std::ostream& os, const RegionGraph& g, const Clustering& c) {
  detail::check_pair(g, c);
  os << g.size() << ' ' << c.cluster_count() << '\n';
  for (int i = 0; i < g.size(); ++i) {
    os << i << ' ' << format_double(g.coord(i).x) << ' ' << format_double(g.coord(i).y) << ' '
       << c.label(i) << '\n';
  }
  auto edges = g.edges();
  if (edges != detail::lattice_edges(g.coords())) {
    os << "edges " << edges.size() << '\n';
    for (auto [a, b] : edges) os << a << ' ' << b << '\n';
  }
}

inline void write_region_file(const std::string& path, const RegionGraph& g, const Clustering& c) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_region_file(os, g, c);
}

struct RegionFile {
  RegionGraph graph;
  Clustering clustering;
};

inline RegionFile read_region_file(std::istream& is) {
  int r = 0, m = 0;
  if (!(is >> r >> m) || r < 1) throw ConfigError("region file: bad header");
  std::vector<Coord> coords(r);
  std::vector<int> labels(r, -1);
  std::vector<char> filled(r, 0);
  for (int n = 0; n < r; ++n) {
    int idx = 0, label = 0;
    std::string sx, sy;
    if (!(is >> idx >> sx >> sy >> label)) throw ConfigError("region file: truncated region list");
    if (idx < 0 || idx >= r || filled[idx]) throw ConfigError("region file: bad region index");
    filled[idx] = 1;
    coords[idx] = {parse_double(sx), parse_double(sy)};
    labels[idx] = label;
  }
  std::vector<std::pair<int, int>> edges;
  std::string word;
  if (is >> word) {
    if (word != "edges") throw ConfigError("region file: unexpected token '" + word + "'");
    std::size_t e = 0;
    if (!(is >> e)) throw ConfigError("region file: bad edge count");
    for (std::size_t k = 0; k < e; ++k) {
      int a = 0, b = 0;
      if (!(is >> a >> b)) throw ConfigError("region file: truncated edge list");
      edges.emplace_back(a, b);
    }
  } else {
    edges = detail::lattice_edges(coords);
  }
  try {
    auto grid = detail::infer_lattice(coords);
    return {RegionGraph(std::move(coords), edges, grid), Clustering(std::move(labels), m)};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("region file: ") + e.what());
  }
}

inline RegionFile read_region_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open region file: " + path);
  return read_region_file(is);
}

}  // namespace cgc
