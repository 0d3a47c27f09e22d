#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tcontrol/grid.hpp"

namespace tcontrol {

/// GED-like rows count as conventional war acts (C), GTD-like rows as
/// terrorist attacks (T).
enum class EventSource { kGedLike, kGtdLike };

struct EventRecord {
  double lon = 0.0;
  double lat = 0.0;
  int year = 0;
  EventSource source = EventSource::kGedLike;
  std::string category;
  std::string target_type;
  /// 1 = exact; larger codes are coarser.
  int geo_precision = 1;
};

/// Maps logical fields to CSV column names. lon, lat, year and source are
/// required; the remaining columns are optional and fall back to neutral
/// values (empty category/target, precision 1) when absent from the file.
struct EventSchema {
  std::string lon = "lon";
  std::string lat = "lat";
  std::string year = "year";
  std::string source = "source";
  std::string category = "category";
  std::string target_type = "target_type";
  std::string geo_precision = "geo_precision";
  std::string ged_label = "GED";
  std::string gtd_label = "GTD";
};

struct RowError {
  std::size_t row = 0;  // 1-based data row, header excluded
  std::string message;
};

struct ParseReport {
  std::size_t rows_read = 0;
  std::vector<RowError> errors;
};

struct ParsedEvents {
  std::vector<EventRecord> events;
  ParseReport report;
};

/// Throws ConfigError when a required column is missing from the header.
ParsedEvents parse_events(std::istream& in, const EventSchema& schema);
ParsedEvents parse_events(const std::string& path, const EventSchema& schema);

/// Inclusion rules for events. The defaults keep events located to the
/// second administrative level or better, drop GED-like one-sided and
/// non-state violence, and drop GTD-like attacks on military targets.
/// Category and target matching ignores case and treats spaces and
/// underscores as hyphens.
struct FilterPolicy {
  /// nullopt = no precision limit.
  std::optional<int> max_precision = 3;
  std::set<std::string> ged_excluded_categories = {"violence-against-civilians", "non-state"};
  std::set<std::string> gtd_excluded_target_types = {"military"};

  /// No exclusions at all.
  static FilterPolicy permissive();
};

struct FilterStats {
  std::size_t kept = 0;
  std::size_t dropped_precision = 0;
  std::size_t dropped_ged_category = 0;
  std::size_t dropped_gtd_target = 0;
};

std::string normalize_label(const std::string& text);

bool passes(const EventRecord& e, const FilterPolicy& policy);

/// Order-preserving subset of events passing every policy rule.
std::vector<EventRecord> filter_events(std::span<const EventRecord> events,
                                       const FilterPolicy& policy, FilterStats* stats = nullptr);

/// Dense annual counts per cell. Storage is cell-major so one cell's series
/// is contiguous.
class CountPanel {
 public:
  CountPanel() = default;
  CountPanel(std::size_t n_cells, int first_year, std::size_t n_years);

  std::size_t n_cells() const { return n_cells_; }
  std::size_t n_years() const { return n_years_; }
  int first_year() const { return first_year_; }
  int last_year() const { return first_year_ + static_cast<int>(n_years_) - 1; }

  std::uint32_t t(std::size_t cell, std::size_t year_index) const {
    return t_[cell * n_years_ + year_index];
  }
  std::uint32_t c(std::size_t cell, std::size_t year_index) const {
    return c_[cell * n_years_ + year_index];
  }
  std::uint32_t& t(std::size_t cell, std::size_t year_index) {
    return t_[cell * n_years_ + year_index];
  }
  std::uint32_t& c(std::size_t cell, std::size_t year_index) {
    return c_[cell * n_years_ + year_index];
  }

  std::span<const std::uint32_t> t_series(std::size_t cell) const {
    return {t_.data() + cell * n_years_, n_years_};
  }
  std::span<const std::uint32_t> c_series(std::size_t cell) const {
    return {c_.data() + cell * n_years_, n_years_};
  }

  std::uint64_t total_t() const;
  std::uint64_t total_c() const;

  bool operator==(const CountPanel&) const = default;

 private:
  std::size_t n_cells_ = 0;
  int first_year_ = 0;
  std::size_t n_years_ = 0;
  std::vector<std::uint32_t> t_;
  std::vector<std::uint32_t> c_;
};

struct SkipReport {
  std::size_t gtd_outside_grid = 0;
  std::size_t ged_outside_grid = 0;
  std::size_t gtd_outside_years = 0;
  std::size_t ged_outside_years = 0;

  std::size_t gtd_total() const { return gtd_outside_grid + gtd_outside_years; }
  std::size_t ged_total() const { return ged_outside_grid + ged_outside_years; }
};

struct Aggregated {
  CountPanel panel;
  SkipReport skipped;
};

Aggregated aggregate(std::span<const EventRecord> events, const Grid& grid, int first_year,
                     int last_year);

/// cell_id,year,t_count,c_count; one row per cell-year, cells outer.
void write_panel_csv(const CountPanel& panel, std::ostream& out);
/// Inverse of write_panel_csv. Throws DataError when the panel is not dense.
CountPanel read_panel_csv(std::istream& in);
CountPanel read_panel_csv(const std::string& path);

/// lon,lat,year,source with GED/GTD labels from the schema.
void write_events_csv(std::span<const EventRecord> events, std::ostream& out,
                      const EventSchema& schema = {});

}  // namespace tcontrol
