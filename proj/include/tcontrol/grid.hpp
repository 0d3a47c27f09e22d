#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tcontrol {

enum class CellShape { kSquare, kHex };
enum class Neighborhood { kRook, kQueen };

std::string to_string(CellShape shape);
CellShape parse_cell_shape(const std::string& text);
std::string to_string(Neighborhood n);
Neighborhood parse_neighborhood(const std::string& text);

/// Bounding box and tiling rule, all in raw decimal degrees.
///
/// For hexagons, cell_size is the side of the square with the same area, so
/// SQUARE and HEX specs with equal cell_size produce cells of equal area.
struct GridSpec {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 1.0;
  double max_lat = 1.0;
  double cell_size = 0.5;
  CellShape shape = CellShape::kSquare;
  Neighborhood neighborhood = Neighborhood::kRook;

  /// Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

struct CellId {
  std::size_t value = 0;
  auto operator<=>(const CellId&) const = default;
};

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

struct CellGeometry {
  CellId id;
  /// Closed ring (first vertex repeated last), counter-clockwise, clipped to
  /// the bounding box.
  std::vector<LonLat> ring;
  LonLat centroid;
  /// Area of the clipped polygon in square degrees.
  double area = 0.0;
  /// (col, row) for squares, axial (q, r) for hexes.
  int a = 0;
  int b = 0;
  /// True when the unclipped cell lies entirely inside the box.
  bool interior = false;
};

/// Sorted adjacency lists; symmetric and irreflexive.
struct NeighborGraph {
  std::vector<std::vector<std::size_t>> adjacency;

  std::size_t size() const { return adjacency.size(); }
  const std::vector<std::size_t>& neighbors(std::size_t cell) const { return adjacency[cell]; }
  std::size_t edge_count() const;
};

class Grid {
 public:
  explicit Grid(const GridSpec& spec);

  const GridSpec& spec() const { return spec_; }
  std::size_t size() const { return cells_.size(); }
  const std::vector<CellGeometry>& cells() const { return cells_; }
  const CellGeometry& cell(std::size_t i) const { return cells_[i]; }
  const NeighborGraph& graph() const { return graph_; }

  std::size_t n_cols() const { return n_cols_; }
  std::size_t n_rows() const { return n_rows_; }

  /// Half-open assignment: every point with min <= coord < max maps to
  /// exactly one cell, anything else to nullopt. Throws DataError on
  /// non-finite input.
  std::optional<CellId> locate(double lon, double lat) const;

  /// Circumradius of the hexagons (0 for square grids).
  double hex_radius() const { return hex_radius_; }

 private:
  void build_square();
  void build_hex();
  std::optional<CellId> locate_hex(double lon, double lat) const;
  std::vector<LonLat> hex_vertices(int q, int r) const;

  GridSpec spec_;
  std::vector<CellGeometry> cells_;
  NeighborGraph graph_;
  std::size_t n_cols_ = 0;
  std::size_t n_rows_ = 0;
  double hex_radius_ = 0.0;
  std::map<std::pair<int, int>, std::size_t> hex_index_;
};

/// Convenience wrapper matching build_grid(spec) -> (cells, graph).
inline Grid build_grid(const GridSpec& spec) { return Grid(spec); }

/// Clips a convex counter-clockwise polygon (open ring) to an axis-aligned
/// box. Returns an open ring, possibly empty.
std::vector<LonLat> clip_to_box(const std::vector<LonLat>& polygon, double min_x,
                                double min_y, double max_x, double max_y);

/// Signed area and centroid of an open ring.
std::pair<double, LonLat> polygon_area_centroid(const std::vector<LonLat>& ring);

}  // namespace tcontrol
