#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include <json.hpp>

#include "tcontrol/grid.hpp"

namespace tcontrol {

using PropertyFiller = std::function<void(std::size_t cell, nlohmann::json& properties)>;

/// FeatureCollection with one Polygon feature per cell, property "cell_id"
/// plus whatever `fill` adds. Coordinates are [lon, lat]; exterior rings are
/// closed and counter-clockwise.
nlohmann::json cells_geojson(const Grid& grid, const PropertyFiller& fill = {});

/// Checks the geometry rules the exporter promises: FeatureCollection of
/// Polygon features, closed rings of at least four positions, [lon, lat]
/// positions within [-180, 180] x [-90, 90], counter-clockwise exterior.
/// Returns an empty string when valid, otherwise the first problem found.
std::string geojson_problem(const nlohmann::json& doc);

}  // namespace tcontrol
