#include "tcontrol/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "tcontrol/common.hpp"
#include "tcontrol/csv.hpp"

namespace tcontrol {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool same_label(const std::string& a, const std::string& b) {
  return normalize_label(a) == normalize_label(b);
}

}  // namespace

std::string normalize_label(const std::string& text) {
  std::string out = trim(text);
  for (char& ch : out) {
    if (ch == ' ' || ch == '_') ch = '-';
    else ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

ParsedEvents parse_events(std::istream& in, const EventSchema& schema) {
  ParsedEvents result;
  std::string line;
  if (!csv::next_line(in, line)) throw DataError("events CSV has no header row");

  std::map<std::string, std::size_t> columns;
  const auto header = csv::split_line(line);
  for (std::size_t i = 0; i < header.size(); ++i) columns.emplace(trim(header[i]), i);

  auto required = [&](const std::string& field, const std::string& name) {
    auto it = columns.find(name);
    if (name.empty() || it == columns.end()) {
      throw ConfigError("events CSV: missing required column '" + name + "' (schema." + field +
                        ")");
    }
    return it->second;
  };
  auto optional_col = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    auto it = columns.find(name);
    if (it == columns.end()) return std::nullopt;
    return it->second;
  };

  const std::size_t lon_col = required("lon", schema.lon);
  const std::size_t lat_col = required("lat", schema.lat);
  const std::size_t year_col = required("year", schema.year);
  const std::size_t source_col = required("source", schema.source);
  const auto category_col = optional_col(schema.category);
  const auto target_col = optional_col(schema.target_type);
  const auto precision_col = optional_col(schema.geo_precision);

  std::size_t row = 0;
  while (csv::next_line(in, line)) {
    ++row;
    const auto fields = csv::split_line(line);
    auto field = [&](std::size_t col) -> std::string {
      return col < fields.size() ? trim(fields[col]) : std::string();
    };
    try {
      EventRecord e;
      e.lon = parse_double(field(lon_col));
      e.lat = parse_double(field(lat_col));
      if (!std::isfinite(e.lon) || !std::isfinite(e.lat)) throw DataError("non-finite coordinate");
      e.year = static_cast<int>(parse_integer(field(year_col)));
      const std::string src = field(source_col);
      if (same_label(src, schema.gtd_label)) {
        e.source = EventSource::kGtdLike;
      } else if (same_label(src, schema.ged_label)) {
        e.source = EventSource::kGedLike;
      } else {
        throw DataError("unknown source '" + src + "'");
      }
      if (category_col) e.category = field(*category_col);
      if (target_col) e.target_type = field(*target_col);
      if (precision_col) {
        const std::string p = field(*precision_col);
        if (!p.empty()) e.geo_precision = static_cast<int>(parse_integer(p));
      }
      result.events.push_back(std::move(e));
    } catch (const DataError& err) {
      result.report.errors.push_back({row, err.what()});
    }
  }
  result.report.rows_read = row;
  return result;
}

ParsedEvents parse_events(const std::string& path, const EventSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open events file: " + path);
  return parse_events(in, schema);
}

FilterPolicy FilterPolicy::permissive() {
  FilterPolicy p;
  p.max_precision.reset();
  p.ged_excluded_categories.clear();
  p.gtd_excluded_target_types.clear();
  return p;
}

namespace {

enum class Verdict { kKeep, kPrecision, kGedCategory, kGtdTarget };

bool contains_label(const std::set<std::string>& set, const std::string& value) {
  const std::string v = normalize_label(value);
  return std::any_of(set.begin(), set.end(),
                     [&](const std::string& s) { return normalize_label(s) == v; });
}

Verdict judge(const EventRecord& e, const FilterPolicy& policy) {
  if (policy.max_precision && e.geo_precision > *policy.max_precision) return Verdict::kPrecision;
  if (e.source == EventSource::kGedLike &&
      contains_label(policy.ged_excluded_categories, e.category)) {
    return Verdict::kGedCategory;
  }
  if (e.source == EventSource::kGtdLike &&
      contains_label(policy.gtd_excluded_target_types, e.target_type)) {
    return Verdict::kGtdTarget;
  }
  return Verdict::kKeep;
}

}  // namespace

bool passes(const EventRecord& e, const FilterPolicy& policy) {
  return judge(e, policy) == Verdict::kKeep;
}

std::vector<EventRecord> filter_events(std::span<const EventRecord> events,
                                       const FilterPolicy& policy, FilterStats* stats) {
  std::vector<EventRecord> out;
  FilterStats local;
  for (const auto& e : events) {
    switch (judge(e, policy)) {
      case Verdict::kKeep:
        out.push_back(e);
        ++local.kept;
        break;
      case Verdict::kPrecision: ++local.dropped_precision; break;
      case Verdict::kGedCategory: ++local.dropped_ged_category; break;
      case Verdict::kGtdTarget: ++local.dropped_gtd_target; break;
    }
  }
  if (stats) *stats = local;
  return out;
}

CountPanel::CountPanel(std::size_t n_cells, int first_year, std::size_t n_years)
    : n_cells_(n_cells),
      first_year_(first_year),
      n_years_(n_years),
      t_(n_cells * n_years, 0),
      c_(n_cells * n_years, 0) {}

std::uint64_t CountPanel::total_t() const {
  std::uint64_t s = 0;
  for (auto v : t_) s += v;
  return s;
}

std::uint64_t CountPanel::total_c() const {
  std::uint64_t s = 0;
  for (auto v : c_) s += v;
  return s;
}

Aggregated aggregate(std::span<const EventRecord> events, const Grid& grid, int first_year,
                     int last_year) {
  if (last_year < first_year) throw ConfigError("year range: last_year precedes first_year");
  Aggregated out{CountPanel(grid.size(), first_year,
                            static_cast<std::size_t>(last_year - first_year + 1)),
                 {}};
  for (const auto& e : events) {
    const bool gtd = e.source == EventSource::kGtdLike;
    if (e.year < first_year || e.year > last_year) {
      ++(gtd ? out.skipped.gtd_outside_years : out.skipped.ged_outside_years);
      continue;
    }
    const auto cell = grid.locate(e.lon, e.lat);
    if (!cell) {
      ++(gtd ? out.skipped.gtd_outside_grid : out.skipped.ged_outside_grid);
      continue;
    }
    const auto yi = static_cast<std::size_t>(e.year - first_year);
    ++(gtd ? out.panel.t(cell->value, yi) : out.panel.c(cell->value, yi));
  }
  return out;
}

void write_panel_csv(const CountPanel& panel, std::ostream& out) {
  out << "cell_id,year,t_count,c_count\n";
  for (std::size_t cell = 0; cell < panel.n_cells(); ++cell) {
    for (std::size_t y = 0; y < panel.n_years(); ++y) {
      out << cell << ',' << panel.first_year() + static_cast<int>(y) << ',' << panel.t(cell, y)
          << ',' << panel.c(cell, y) << '\n';
    }
  }
}

CountPanel read_panel_csv(std::istream& in) {
  std::string line;
  if (!csv::next_line(in, line)) throw DataError("panel CSV is empty");
  const auto header = csv::split_line(line);
  if (header != std::vector<std::string>{"cell_id", "year", "t_count", "c_count"}) {
    throw DataError("panel CSV: expected header cell_id,year,t_count,c_count");
  }
  struct Row {
    long long cell, year, t, c;
  };
  std::vector<Row> rows;
  long long max_cell = -1, min_year = 0, max_year = 0;
  std::size_t line_no = 1;
  while (csv::next_line(in, line)) {
    ++line_no;
    const auto f = csv::split_line(line);
    if (f.size() != 4) throw DataError("panel CSV line " + std::to_string(line_no) + ": 4 fields expected");
    Row r{parse_integer(f[0]), parse_integer(f[1]), parse_integer(f[2]), parse_integer(f[3])};
    if (r.cell < 0 || r.t < 0 || r.c < 0 || r.t > UINT32_MAX || r.c > UINT32_MAX) {
      throw DataError("panel CSV line " + std::to_string(line_no) + ": negative or oversized value");
    }
    if (rows.empty()) {
      min_year = max_year = r.year;
    } else {
      min_year = std::min(min_year, r.year);
      max_year = std::max(max_year, r.year);
    }
    max_cell = std::max(max_cell, r.cell);
    rows.push_back(r);
  }
  if (rows.empty()) throw DataError("panel CSV has no rows");
  const auto n_cells = static_cast<std::size_t>(max_cell + 1);
  const auto n_years = static_cast<std::size_t>(max_year - min_year + 1);
  if (rows.size() != n_cells * n_years) {
    throw DataError("panel CSV is not dense: " + std::to_string(rows.size()) + " rows for " +
                    std::to_string(n_cells) + " cells x " + std::to_string(n_years) + " years");
  }
  CountPanel panel(n_cells, static_cast<int>(min_year), n_years);
  std::vector<char> seen(n_cells * n_years, 0);
  for (const auto& r : rows) {
    const auto cell = static_cast<std::size_t>(r.cell);
    const auto y = static_cast<std::size_t>(r.year - min_year);
    if (seen[cell * n_years + y]++) {
      throw DataError("panel CSV: duplicate row for cell " + std::to_string(r.cell) + " year " +
                      std::to_string(r.year));
    }
    panel.t(cell, y) = static_cast<std::uint32_t>(r.t);
    panel.c(cell, y) = static_cast<std::uint32_t>(r.c);
  }
  return panel;
}

CountPanel read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel file: " + path);
  return read_panel_csv(in);
}

void write_events_csv(std::span<const EventRecord> events, std::ostream& out,
                      const EventSchema& schema) {
  out << schema.lon << ',' << schema.lat << ',' << schema.year << ',' << schema.source << '\n';
  for (const auto& e : events) {
    out << format_exact(e.lon) << ',' << format_exact(e.lat) << ',' << e.year << ','
        << (e.source == EventSource::kGtdLike ? schema.gtd_label : schema.ged_label) << '\n';
  }
}

}  // namespace tcontrol
