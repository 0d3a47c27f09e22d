#include "tcontrol/geojson.hpp"

#include <cmath>

namespace tcontrol {

nlohmann::json cells_geojson(const Grid& grid, const PropertyFiller& fill) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& cell : grid.cells()) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& p : cell.ring) ring.push_back({p.lon, p.lat});
    nlohmann::json props = {{"cell_id", cell.id.value}};
    if (fill) fill(cell.id.value, props);
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}},
                        {"properties", props}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

std::string geojson_problem(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    return "top level is not a FeatureCollection";
  }
  if (!doc.contains("features") || !doc["features"].is_array()) return "missing features array";
  for (const auto& f : doc["features"]) {
    if (f.value("type", "") != "Feature") return "feature without type Feature";
    if (!f.contains("properties") || !f["properties"].is_object()) return "feature without properties";
    const auto& g = f["geometry"];
    if (!g.is_object() || g.value("type", "") != "Polygon") return "geometry is not a Polygon";
    const auto& rings = g["coordinates"];
    if (!rings.is_array() || rings.empty()) return "polygon without rings";
    for (std::size_t r = 0; r < rings.size(); ++r) {
      const auto& ring = rings[r];
      if (!ring.is_array() || ring.size() < 4) return "ring with fewer than four positions";
      if (ring.front() != ring.back()) return "ring is not closed";
      double area2 = 0.0;
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const auto& p = ring[i];
        if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
          return "position is not a numeric pair";
        }
        const double lon = p[0].get<double>(), lat = p[1].get<double>();
        if (!std::isfinite(lon) || !std::isfinite(lat) || std::fabs(lon) > 180.0 ||
            std::fabs(lat) > 90.0) {
          return "position outside lon/lat range";
        }
        if (i + 1 < ring.size()) {
          const double lon2 = ring[i + 1][0].get<double>(), lat2 = ring[i + 1][1].get<double>();
          area2 += lon * lat2 - lon2 * lat;
        }
      }
      if (r == 0 && !(area2 > 0.0)) return "exterior ring is not counter-clockwise";
    }
  }
  return {};
}

}  // namespace tcontrol
