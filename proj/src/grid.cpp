#include "tcontrol/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tcontrol/common.hpp"

namespace tcontrol {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

// Flat-top axial neighbor offsets.
constexpr int kHexDirections[6][2] = {{1, 0}, {1, -1}, {0, -1}, {-1, 0}, {-1, 1}, {0, 1}};

std::string lower(std::string s) {
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::size_t cell_count(double extent, double size) {
  // Guard against 1.0 / 0.5 landing a hair above 2.
  const double n = std::ceil(extent / size - 1e-9);
  return std::max<std::size_t>(1, static_cast<std::size_t>(n));
}

// Length of the overlap of two projected intervals.
double overlap_on_axis(const std::vector<LonLat>& a, const std::vector<LonLat>& b, double ax,
                       double ay) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (const auto& p : a) {
    const double d = p.lon * ax + p.lat * ay;
    amin = std::min(amin, d);
    amax = std::max(amax, d);
  }
  for (const auto& p : b) {
    const double d = p.lon * ax + p.lat * ay;
    bmin = std::min(bmin, d);
    bmax = std::max(bmax, d);
  }
  return std::min(amax, bmax) - std::max(amin, bmin);
}

bool inside_convex(const std::vector<LonLat>& ring, double x, double y, double tol) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const LonLat& p = ring[i];
    const LonLat& q = ring[(i + 1) % n];
    const double cross = (q.lon - p.lon) * (y - p.lat) - (q.lat - p.lat) * (x - p.lon);
    if (cross < -tol) return false;
  }
  return true;
}

}  // namespace

std::string to_string(CellShape shape) { return shape == CellShape::kSquare ? "square" : "hex"; }

CellShape parse_cell_shape(const std::string& text) {
  const std::string s = lower(text);
  if (s == "square") return CellShape::kSquare;
  if (s == "hex" || s == "hexagon") return CellShape::kHex;
  throw ConfigError("grid.shape: expected 'square' or 'hex', got '" + text + "'");
}

std::string to_string(Neighborhood n) { return n == Neighborhood::kRook ? "rook" : "queen"; }

Neighborhood parse_neighborhood(const std::string& text) {
  const std::string s = lower(text);
  if (s == "rook") return Neighborhood::kRook;
  if (s == "queen") return Neighborhood::kQueen;
  throw ConfigError("grid.neighborhood: expected 'rook' or 'queen', got '" + text + "'");
}

void GridSpec::validate() const {
  for (double v : {min_lon, min_lat, max_lon, max_lat, cell_size}) {
    if (!std::isfinite(v)) throw ConfigError("grid: non-finite bounding box or cell_size");
  }
  if (!(cell_size > 0.0)) throw ConfigError("grid.cell_size must be positive");
  if (!(max_lon > min_lon)) throw ConfigError("grid: max_lon must exceed min_lon");
  if (!(max_lat > min_lat)) throw ConfigError("grid: max_lat must exceed min_lat");
  if (cell_size > max_lon - min_lon) {
    throw ConfigError("grid.cell_size must not exceed the box width");
  }
}

std::size_t NeighborGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& row : adjacency) total += row.size();
  return total / 2;
}

std::vector<LonLat> clip_to_box(const std::vector<LonLat>& polygon, double min_x, double min_y,
                                double max_x, double max_y) {
  // Sutherland-Hodgman against the four half-planes.
  std::vector<LonLat> out = polygon;
  auto clip = [&out](auto inside, auto intersect) {
    std::vector<LonLat> in = std::move(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const LonLat& cur = in[i];
      const LonLat& prev = in[(i + n - 1) % n];
      const bool cur_in = inside(cur);
      const bool prev_in = inside(prev);
      if (cur_in) {
        if (!prev_in) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(intersect(prev, cur));
      }
    }
  };
  auto at_x = [](double x) {
    return [x](const LonLat& p, const LonLat& q) {
      const double t = (x - p.lon) / (q.lon - p.lon);
      return LonLat{x, p.lat + t * (q.lat - p.lat)};
    };
  };
  auto at_y = [](double y) {
    return [y](const LonLat& p, const LonLat& q) {
      const double t = (y - p.lat) / (q.lat - p.lat);
      return LonLat{p.lon + t * (q.lon - p.lon), y};
    };
  };
  clip([&](const LonLat& p) { return p.lon >= min_x; }, at_x(min_x));
  clip([&](const LonLat& p) { return p.lon <= max_x; }, at_x(max_x));
  clip([&](const LonLat& p) { return p.lat >= min_y; }, at_y(min_y));
  clip([&](const LonLat& p) { return p.lat <= max_y; }, at_y(max_y));
  return out;
}

std::pair<double, LonLat> polygon_area_centroid(const std::vector<LonLat>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return {0.0, {}};
  // Shift to the first vertex for better conditioning.
  const LonLat o = ring[0];
  double area2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = ring[i].lon - o.lon, y0 = ring[i].lat - o.lat;
    const double x1 = ring[(i + 1) % n].lon - o.lon, y1 = ring[(i + 1) % n].lat - o.lat;
    const double cross = x0 * y1 - x1 * y0;
    area2 += cross;
    cx += (x0 + x1) * cross;
    cy += (y0 + y1) * cross;
  }
  if (area2 == 0.0) return {0.0, o};
  return {area2 / 2.0, LonLat{o.lon + cx / (3.0 * area2), o.lat + cy / (3.0 * area2)}};
}

Grid::Grid(const GridSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.shape == CellShape::kSquare) {
    build_square();
  } else {
    build_hex();
  }
}

void Grid::build_square() {
  const GridSpec& s = spec_;
  n_cols_ = cell_count(s.max_lon - s.min_lon, s.cell_size);
  n_rows_ = cell_count(s.max_lat - s.min_lat, s.cell_size);
  cells_.reserve(n_cols_ * n_rows_);
  for (std::size_t row = 0; row < n_rows_; ++row) {
    for (std::size_t col = 0; col < n_cols_; ++col) {
      const double x0 = s.min_lon + static_cast<double>(col) * s.cell_size;
      const double y0 = s.min_lat + static_cast<double>(row) * s.cell_size;
      const double x1 = std::min(x0 + s.cell_size, s.max_lon);
      const double y1 = std::min(y0 + s.cell_size, s.max_lat);
      CellGeometry g;
      g.id = CellId{cells_.size()};
      g.ring = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
      g.centroid = {0.5 * (x0 + x1), 0.5 * (y0 + y1)};
      g.area = (x1 - x0) * (y1 - y0);
      g.a = static_cast<int>(col);
      g.b = static_cast<int>(row);
      g.interior = x0 + s.cell_size <= s.max_lon && y0 + s.cell_size <= s.max_lat;
      cells_.push_back(std::move(g));
    }
  }

  graph_.adjacency.assign(cells_.size(), {});
  const bool queen = s.neighborhood == Neighborhood::kQueen;
  for (std::size_t row = 0; row < n_rows_; ++row) {
    for (std::size_t col = 0; col < n_cols_; ++col) {
      auto& adj = graph_.adjacency[row * n_cols_ + col];
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (!queen && dr != 0 && dc != 0) continue;
          const long r2 = static_cast<long>(row) + dr;
          const long c2 = static_cast<long>(col) + dc;
          if (r2 < 0 || c2 < 0 || r2 >= static_cast<long>(n_rows_) ||
              c2 >= static_cast<long>(n_cols_)) {
            continue;
          }
          adj.push_back(static_cast<std::size_t>(r2) * n_cols_ + static_cast<std::size_t>(c2));
        }
      }
      std::sort(adj.begin(), adj.end());
    }
  }
}

std::vector<LonLat> Grid::hex_vertices(int q, int r) const {
  const double R = hex_radius_;
  const double cx = spec_.min_lon + 1.5 * R * q;
  const double cy = spec_.min_lat + kSqrt3 * R * (r + 0.5 * q);
  std::vector<LonLat> v;
  v.reserve(6);
  for (int i = 0; i < 6; ++i) {
    const double theta = (M_PI / 3.0) * i;
    v.push_back({cx + R * std::cos(theta), cy + R * std::sin(theta)});
  }
  return v;
}

void Grid::build_hex() {
  const GridSpec& s = spec_;
  // Equal area with a cell_size x cell_size square.
  hex_radius_ = s.cell_size * std::sqrt(2.0 / (3.0 * kSqrt3));
  const double R = hex_radius_;
  const double width = s.max_lon - s.min_lon;
  const double height = s.max_lat - s.min_lat;

  const std::vector<LonLat> box = {
      {s.min_lon, s.min_lat}, {s.max_lon, s.min_lat}, {s.max_lon, s.max_lat}, {s.min_lon, s.max_lat}};
  const double tol = 1e-12 * s.cell_size;
  const double axes[5][2] = {{1.0, 0.0},
                             {0.0, 1.0},
                             {kSqrt3 / 2.0, 0.5},
                             {-kSqrt3 / 2.0, 0.5},
                             {0.5, kSqrt3 / 2.0}};

  const int q_lo = -1;
  const int q_hi = static_cast<int>(std::ceil(width / (1.5 * R))) + 1;
  for (int q = q_lo; q <= q_hi; ++q) {
    const int r_lo = static_cast<int>(std::floor(-0.5 * q - 1.0)) - 1;
    const int r_hi = static_cast<int>(std::ceil(height / (kSqrt3 * R) - 0.5 * q + 1.0)) + 1;
    for (int r = r_lo; r <= r_hi; ++r) {
      const std::vector<LonLat> hex = hex_vertices(q, r);
      bool separated = false;
      for (const auto& ax : axes) {
        if (overlap_on_axis(hex, box, ax[0], ax[1]) <= tol) {
          separated = true;
          break;
        }
      }
      if (separated) continue;

      std::vector<LonLat> clipped = clip_to_box(hex, s.min_lon, s.min_lat, s.max_lon, s.max_lat);
      auto [area, centroid] = polygon_area_centroid(clipped);
      if (!(area > 0.0)) continue;

      CellGeometry g;
      g.id = CellId{cells_.size()};
      g.a = q;
      g.b = r;
      g.area = area;
      g.centroid = centroid;
      g.interior = std::all_of(hex.begin(), hex.end(), [&](const LonLat& p) {
        return p.lon >= s.min_lon && p.lon <= s.max_lon && p.lat >= s.min_lat &&
               p.lat <= s.max_lat;
      });
      g.ring = std::move(clipped);
      g.ring.push_back(g.ring.front());
      hex_index_.emplace(std::make_pair(q, r), cells_.size());
      cells_.push_back(std::move(g));
    }
  }

  graph_.adjacency.assign(cells_.size(), {});
  for (const auto& g : cells_) {
    auto& adj = graph_.adjacency[g.id.value];
    for (const auto& d : kHexDirections) {
      auto it = hex_index_.find({g.a + d[0], g.b + d[1]});
      if (it != hex_index_.end()) adj.push_back(it->second);
    }
    std::sort(adj.begin(), adj.end());
  }
}

std::optional<CellId> Grid::locate(double lon, double lat) const {
  if (!std::isfinite(lon) || !std::isfinite(lat)) {
    throw DataError("locate: non-finite coordinate");
  }
  const GridSpec& s = spec_;
  if (!(lon >= s.min_lon && lon < s.max_lon && lat >= s.min_lat && lat < s.max_lat)) {
    return std::nullopt;
  }
  if (s.shape == CellShape::kHex) return locate_hex(lon, lat);
  auto col = static_cast<std::size_t>(std::floor((lon - s.min_lon) / s.cell_size));
  auto row = static_cast<std::size_t>(std::floor((lat - s.min_lat) / s.cell_size));
  col = std::min(col, n_cols_ - 1);
  row = std::min(row, n_rows_ - 1);
  return CellId{row * n_cols_ + col};
}

std::optional<CellId> Grid::locate_hex(double lon, double lat) const {
  const double R = hex_radius_;
  const double dx = lon - spec_.min_lon;
  const double dy = lat - spec_.min_lat;
  const double fq = (2.0 / 3.0) * dx / R;
  const double fr = (-dx / 3.0 + kSqrt3 / 3.0 * dy) / R;
  const double fs = -fq - fr;
  double rq = std::round(fq), rr = std::round(fr), rs = std::round(fs);
  const double eq = std::fabs(rq - fq), er = std::fabs(rr - fr), es = std::fabs(rs - fs);
  if (eq > er && eq > es) {
    rq = -rr - rs;
  } else if (er > es) {
    rr = -rq - rs;
  }
  const int q = static_cast<int>(rq);
  const int r = static_cast<int>(rr);
  if (auto it = hex_index_.find({q, r}); it != hex_index_.end()) return CellId{it->second};

  // The rounded hex only touches the box along this point; one of its
  // neighbors containing the point is the owner. Lowest id wins.
  std::optional<CellId> best;
  const double tol = 1e-9 * spec_.cell_size;
  for (const auto& d : kHexDirections) {
    auto it = hex_index_.find({q + d[0], r + d[1]});
    if (it == hex_index_.end()) continue;
    if (!inside_convex(hex_vertices(q + d[0], r + d[1]), lon, lat, tol)) continue;
    if (!best || it->second < best->value) best = CellId{it->second};
  }
  return best;
}

}  // namespace tcontrol
