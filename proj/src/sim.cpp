#include "tcontrol/sim.hpp"

#include <algorithm>
#include <cmath>

#include "tcontrol/parallel.hpp"
#include "tcontrol/random.hpp"

namespace tcontrol {

namespace {

constexpr std::size_t kParallelMin = 512;

struct ColorClasses {
  std::vector<std::vector<std::size_t>> classes;

  explicit ColorClasses(const NeighborGraph& graph) {
    const auto color = greedy_coloring(graph);
    for (std::size_t i = 0; i < color.size(); ++i) {
      const auto c = static_cast<std::size_t>(color[i]);
      if (classes.size() <= c) classes.resize(c + 1);
      classes[c].push_back(i);
    }
  }
};

// One chromatic Gibbs sweep over the Potts prior for a single year. When
// `year > 0` the draw is also weighted by the transition from last year.
void potts_sweep(StateField& field, std::size_t year, const Grid& grid, const ColorClasses& cc,
                 const SimConfig& cfg, std::uint64_t stream_tag, std::uint64_t sweep) {
  const std::size_t K = cfg.truth.n_states();
  for (const auto& cls : cc.classes) {
    const unsigned threads = cls.size() >= kParallelMin ? cfg.threads : 1;
    parallel_for(cls.size(), threads, [&](std::size_t idx) {
      const std::size_t cell = cls[idx];
      std::vector<double> w(K);
      double m = -INFINITY;
      for (std::size_t k = 0; k < K; ++k) {
        std::size_t same = 0;
        for (std::size_t n : grid.graph().neighbors(cell)) same += field.at(n, year) == static_cast<int>(k);
        double lw = cfg.beta * static_cast<double>(same);
        if (year > 0) {
          const Matrix& A = cfg.cell_transitions.empty() ? cfg.truth.transition : cfg.cell_transitions[cell];
          const double a = A(static_cast<std::size_t>(field.at(cell, year - 1)), k);
          lw = a > 0.0 ? lw + std::log(a) : -INFINITY;
        }
        w[k] = lw;
        m = std::max(m, lw);
      }
      for (double& v : w) v = std::isinf(v) ? 0.0 : std::exp(v - m);
      KeyedStream rng(cfg.seed, {stream_tag, year, sweep, cell});
      field.at(cell, year) = static_cast<int>(rng.categorical(w));
    });
  }
}

}  // namespace

void SimConfig::validate() const {
  grid.validate();
  truth.validate();
  if (n_years < 1) throw ConfigError("years must be at least 1");
  if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("beta must be finite and >= 0");
}

SimConfig default_sim_config() {
  SimConfig cfg;
  cfg.grid = GridSpec{0.0, 0.0, 5.0, 5.0, 0.5, CellShape::kSquare, Neighborhood::kRook};
  cfg.truth = make_params({6.0, 2.0, 0.3}, {0.3, 3.0, 6.0}, 0.85);
  return cfg;
}

StateField simulate_field(const SimConfig& cfg, const Grid& grid) {
  cfg.validate();
  const std::size_t K = cfg.truth.n_states();
  const std::size_t n = grid.size();
  if (!cfg.cell_transitions.empty() && cfg.cell_transitions.size() != n) {
    throw ConfigError("simulate_field: need one transition matrix per cell");
  }
  StateField field(n, cfg.n_years);
  const ColorClasses cc(grid.graph());

  for (std::size_t cell = 0; cell < n; ++cell) {
    KeyedStream rng(cfg.seed, {tag(StreamTag::kFieldInit), cell});
    field.at(cell, 0) = static_cast<int>(rng.below(K));
  }
  if (cfg.beta > 0.0) {
    for (std::size_t sweep = 0; sweep < cfg.burn_in_sweeps; ++sweep) {
      potts_sweep(field, 0, grid, cc, cfg, tag(StreamTag::kFieldPrior), sweep);
    }
  }

  for (std::size_t y = 1; y < cfg.n_years; ++y) {
    parallel_for(n, n >= kParallelMin ? cfg.threads : 1, [&](std::size_t cell) {
      const Matrix& A = cfg.cell_transitions.empty() ? cfg.truth.transition : cfg.cell_transitions[cell];
      const auto prev = static_cast<std::size_t>(field.at(cell, y - 1));
      std::vector<double> row(K);
      for (std::size_t k = 0; k < K; ++k) row[k] = A(prev, k);
      KeyedStream rng(cfg.seed, {tag(StreamTag::kFieldTransition), y, cell});
      field.at(cell, y) = static_cast<int>(rng.categorical(row));
    });
    if (cfg.beta > 0.0) {
      for (std::size_t sweep = 0; sweep < cfg.within_year_sweeps; ++sweep) {
        potts_sweep(field, y, grid, cc, cfg, tag(StreamTag::kFieldSmoothing), sweep);
      }
    }
  }
  return field;
}

CountPanel simulate_counts(const StateField& field, const HmmParams& params, int first_year,
                           std::uint64_t seed) {
  CountPanel panel(field.n_cells(), first_year, field.n_years());
  for (std::size_t cell = 0; cell < field.n_cells(); ++cell) {
    for (std::size_t y = 0; y < field.n_years(); ++y) {
      const auto s = static_cast<std::size_t>(field.at(cell, y));
      KeyedStream rt(seed, {tag(StreamTag::kCounts), cell, y, 0});
      KeyedStream rc(seed, {tag(StreamTag::kCounts), cell, y, 1});
      panel.t(cell, y) = static_cast<std::uint32_t>(rt.poisson(params.lambda_t[s]));
      panel.c(cell, y) = static_cast<std::uint32_t>(rc.poisson(params.lambda_c[s]));
    }
  }
  return panel;
}

PointEvents simulate_point_events(const Grid& fine, const StateField& field,
                                  const HmmParams& params, int first_year,
                                  std::span<const GridSpec> targets, std::uint64_t seed) {
  if (fine.spec().shape != CellShape::kSquare) {
    throw ConfigError("point events need a square reference grid");
  }
  if (field.n_cells() != fine.size()) throw ConfigError("field does not match the reference grid");
  for (const auto& t : targets) {
    t.validate();
    if (!(t.cell_size > fine.spec().cell_size)) {
      throw ConfigError("target cell_size must exceed the reference cell_size");
    }
  }

  PointEvents out;
  out.fine_panel = simulate_counts(field, params, first_year, seed);
  for (std::size_t cell = 0; cell < fine.size(); ++cell) {
    const auto& ring = fine.cell(cell).ring;
    const double x0 = ring[0].lon, y0 = ring[0].lat;
    const double x1 = ring[2].lon, y1 = ring[2].lat;
    for (std::size_t y = 0; y < field.n_years(); ++y) {
      for (int kind = 0; kind < 2; ++kind) {
        const std::uint32_t count = kind == 0 ? out.fine_panel.t(cell, y) : out.fine_panel.c(cell, y);
        for (std::uint32_t i = 0; i < count; ++i) {
          KeyedStream rng(seed, {tag(StreamTag::kScatter), cell, y, static_cast<std::uint64_t>(kind), i});
          EventRecord e;
          e.year = first_year + static_cast<int>(y);
          e.source = kind == 0 ? EventSource::kGtdLike : EventSource::kGedLike;
          // Redraw the rare point that rounds onto a neighbor's edge.
          bool placed = false;
          for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            e.lon = x0 + rng.uniform() * (x1 - x0);
            e.lat = y0 + rng.uniform() * (y1 - y0);
            const auto loc = fine.locate(e.lon, e.lat);
            placed = loc && loc->value == cell;
          }
          if (!placed) {
            e.lon = fine.cell(cell).centroid.lon;
            e.lat = fine.cell(cell).centroid.lat;
          }
          out.events.push_back(e);
        }
      }
    }
  }
  const int last_year = first_year + static_cast<int>(field.n_years()) - 1;
  for (const auto& spec : targets) {
    out.target_panels.push_back(aggregate(out.events, Grid(spec), first_year, last_year).panel);
  }
  return out;
}

GroundTruth simulate(const SimConfig& config, bool point_events) {
  const Grid grid(config.grid);
  GroundTruth gt;
  gt.field = simulate_field(config, grid);
  if (point_events) {
    PointEvents pe = simulate_point_events(grid, gt.field, config.truth, config.first_year, {},
                                           config.seed);
    gt.panel = std::move(pe.fine_panel);
    gt.events = std::move(pe.events);
  } else {
    gt.panel = simulate_counts(gt.field, config.truth, config.first_year, config.seed);
  }
  return gt;
}

}  // namespace tcontrol
