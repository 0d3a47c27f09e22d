#include <doctest.h>

#include <sstream>

#include "tcontrol/common.hpp"
#include "tcontrol/csv.hpp"
#include "tcontrol/ingest.hpp"

using namespace tcontrol;

namespace {

ParsedEvents parse(const std::string& text, const EventSchema& schema = {}) {
  std::istringstream in(text);
  return parse_events(in, schema);
}

EventRecord ged(double lon, double lat, int year, std::string category = "state-based",
                int precision = 1) {
  return {lon, lat, year, EventSource::kGedLike, std::move(category), "", precision};
}

EventRecord gtd(double lon, double lat, int year, std::string target = "private citizens",
                int precision = 1) {
  return {lon, lat, year, EventSource::kGtdLike, "", std::move(target), precision};
}

GridSpec unit_box() {
  GridSpec s;
  s.min_lon = 0;
  s.min_lat = 0;
  s.max_lon = 1;
  s.max_lat = 1;
  s.cell_size = 0.5;
  return s;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("csv splitting handles quotes and carriage returns") {
  CHECK(csv::split_line("a,\"b,c\",d\r") == std::vector<std::string>{"a", "b,c", "d"});
  CHECK(csv::split_line("\"x\"\"y\",") == std::vector<std::string>{"x\"y", ""});
  CHECK(csv::escape("a,b") == "\"a,b\"");
}

TEST_CASE("header only gives an empty list and no errors") {
  const auto p = parse("lon,lat,year,source\n");
  CHECK(p.events.empty());
  CHECK(p.report.errors.empty());
  CHECK(p.report.rows_read == 0);
}

TEST_CASE("a row with an empty latitude is reported by its data row number") {
  const auto p = parse(
      "lon,lat,year,source\n"
      "1.0,2.0,2001,GED\n"
      "1.5,2.5,2002,GTD\n"
      "0.5,0.5,2003,ged\n"
      "0.7,,2003,GED\n");
  CHECK(p.events.size() == 3);
  REQUIRE(p.report.errors.size() == 1);
  CHECK(p.report.errors[0].row == 4);
  CHECK(p.events[2].source == EventSource::kGedLike);
  CHECK(p.events[1].source == EventSource::kGtdLike);
}

TEST_CASE("bad values and unknown sources are row errors") {
  const auto p = parse(
      "lon,lat,year,source\n"
      "abc,2.0,2001,GED\n"
      "1.0,2.0,20x1,GED\n"
      "1.0,2.0,2001,ACLED\n"
      "1.0,2.0\n");
  CHECK(p.events.empty());
  CHECK(p.report.errors.size() == 4);
  CHECK(p.report.rows_read == 4);
}

TEST_CASE("missing required column is a config error") {
  CHECK_THROWS_AS(parse("lon,year,source\n1,2000,GED\n"), ConfigError);
}

TEST_CASE("schema remaps column names and labels") {
  EventSchema s;
  s.lon = "longitude";
  s.lat = "latitude";
  s.source = "dataset";
  s.gtd_label = "terror";
  s.target_type = "targtype";
  const auto p = parse("latitude,longitude,dataset,year,targtype\n2,1,terror,2005,Military\n", s);
  REQUIRE(p.events.size() == 1);
  CHECK(p.events[0].lon == 1.0);
  CHECK(p.events[0].lat == 2.0);
  CHECK(p.events[0].source == EventSource::kGtdLike);
  CHECK(p.events[0].target_type == "Military");
}

TEST_CASE("label normalization") {
  CHECK(normalize_label("Violence against civilians") == "violence-against-civilians");
  CHECK(normalize_label("NON_STATE") == "non-state");
}

TEST_CASE("a military-target attack parses but is filtered out") {
  const auto p = parse("lon,lat,year,source,target_type\n1,1,2000,GTD,Military\n");
  REQUIRE(p.events.size() == 1);
  FilterStats st;
  CHECK(filter_events(p.events, FilterPolicy{}, &st).empty());
  CHECK(st.dropped_gtd_target == 1);
}

TEST_CASE("each default rule drops exactly its own events") {
  const FilterPolicy policy;
  CHECK(passes(ged(0, 0, 2000, "state-based", 3), policy));
  CHECK_FALSE(passes(ged(0, 0, 2000, "state-based", 4), policy));
  CHECK_FALSE(passes(ged(0, 0, 2000, "non-state"), policy));
  CHECK_FALSE(passes(ged(0, 0, 2000, "Violence against civilians"), policy));
  CHECK(passes(gtd(0, 0, 2000, "non-state"), policy));
  CHECK_FALSE(passes(gtd(0, 0, 2000, "military"), policy));
  CHECK(passes(ged(0, 0, 2000, "military"), policy));
  CHECK_FALSE(passes(gtd(0, 0, 2000, "business", 6), policy));
}

TEST_CASE("permissive policy is the identity") {
  const std::vector<EventRecord> ev = {ged(0, 0, 2000, "non-state", 7), gtd(0, 0, 2000, "military", 9),
                                       ged(1, 1, 2001)};
  FilterStats st;
  const auto kept = filter_events(ev, FilterPolicy::permissive(), &st);
  CHECK(kept.size() == ev.size());
  CHECK(st.kept == 3);
}

TEST_CASE("aggregation") {
  const Grid grid(unit_box());
  SUBCASE("no events gives an all-zero panel") {
    const auto a = aggregate({}, grid, 2000, 2004);
    CHECK(a.panel.n_cells() == 4);
    CHECK(a.panel.n_years() == 5);
    CHECK(a.panel.total_t() + a.panel.total_c() == 0);
  }
  SUBCASE("three attacks at one point in one year") {
    const std::vector<EventRecord> ev(3, gtd(0.7, 0.2, 2001));
    const auto a = aggregate(ev, grid, 2000, 2004);
    CHECK(a.panel.t(1, 1) == 3);
    CHECK(a.panel.c(1, 1) == 0);
    CHECK(a.panel.total_t() == 3);
  }
  SUBCASE("one war act per year in one cell") {
    std::vector<EventRecord> ev;
    for (int y = 2000; y < 2005; ++y) ev.push_back(ged(0.1, 0.9, y));
    const auto a = aggregate(ev, grid, 2000, 2004);
    const auto row = a.panel.c_series(2);
    CHECK(std::vector<std::uint32_t>(row.begin(), row.end()) == std::vector<std::uint32_t>(5, 1));
  }
  SUBCASE("events outside the grid or the years are counted as skipped") {
    const std::vector<EventRecord> ev = {gtd(1.0, 0.5, 2000), ged(-0.1, 0.5, 2000), gtd(0.5, 0.5, 1999),
                                         ged(0.5, 0.5, 2005), ged(0.5, 0.5, 2004)};
    const auto a = aggregate(ev, grid, 2000, 2004);
    CHECK(a.skipped.gtd_outside_grid == 1);
    CHECK(a.skipped.ged_outside_grid == 1);
    CHECK(a.skipped.gtd_outside_years == 1);
    CHECK(a.skipped.ged_outside_years == 1);
    CHECK(a.panel.total_c() == 1);
  }
}

TEST_CASE("panel csv round-trips and rejects sparse input") {
  const Grid grid(unit_box());
  const std::vector<EventRecord> ev = {gtd(0.7, 0.2, 2001), ged(0.2, 0.7, 2000), ged(0.2, 0.7, 2000)};
  const CountPanel panel = aggregate(ev, grid, 2000, 2002).panel;
  std::stringstream ss;
  write_panel_csv(panel, ss);
  CHECK(read_panel_csv(ss) == panel);

  std::istringstream sparse("cell_id,year,t_count,c_count\n0,2000,1,0\n0,2002,1,0\n");
  CHECK_THROWS_AS(read_panel_csv(sparse), DataError);
  std::istringstream dup("cell_id,year,t_count,c_count\n0,2000,1,0\n0,2000,1,0\n");
  CHECK_THROWS_AS(read_panel_csv(dup), DataError);
  std::istringstream neg("cell_id,year,t_count,c_count\n0,2000,-1,0\n");
  CHECK_THROWS_AS(read_panel_csv(neg), DataError);
}

TEST_CASE("events csv written by the library parses back exactly") {
  const std::vector<EventRecord> ev = {gtd(0.123456789012345, 0.9, 2001), ged(1.0 / 3.0, 0.25, 2000)};
  std::stringstream ss;
  write_events_csv(ev, ss);
  const auto back = parse_events(ss, EventSchema{});
  REQUIRE(back.events.size() == 2);
  CHECK(back.events[0].lon == ev[0].lon);
  CHECK(back.events[1].lon == ev[1].lon);
  CHECK(back.events[0].source == EventSource::kGtdLike);
}

}
