#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fkmc/rng.hpp"

namespace fkmc {

/// Uniform grid 0 = s_0 < s_1 < ... < s_n = t on the time interval [0, t].
struct TimeGrid {
  double t;
  int n_steps;

  TimeGrid(double t_, int n_steps_);

  double dt() const { return t / n_steps; }
  int n_nodes() const { return n_steps + 1; }
  /// s_k = k t / n_steps; the last node is exactly t.
  double node(int k) const {
    return t * (static_cast<double>(k) / static_cast<double>(n_steps));
  }
};

/// One discretized Brownian-bridge realization pinned at (start, 0) and
/// (end, t). Positions are stored node-major: node k occupies
/// positions[k*dim .. k*dim+dim).
struct BridgePath {
  int dim;
  TimeGrid grid;
  std::vector<double> start;
  std::vector<double> end;
  std::vector<double> positions;

  BridgePath(std::span<const double> start_, std::span<const double> end_,
             const TimeGrid& grid_);

  std::span<const double> node(int k) const {
    return {positions.data() + static_cast<std::size_t>(k) * dim,
            static_cast<std::size_t>(dim)};
  }
  double pos(int k, int j) const {
    return positions[static_cast<std::size_t>(k) * dim + j];
  }
};

/// Fills `path.positions` with a fresh bridge realization drawn from `rng`.
/// Components are independent; at the grid nodes the law is the exact pinned
/// Gaussian: a standard Brownian path W is built from i.i.d. increments and
/// b(s_k) = start + (end-start) s_k/t + (W(s_k) - (s_k/t) W(t)). The two
/// endpoints are assigned verbatim, never recomputed.
void sample_bridge_into(BridgePath& path, CounterRng& rng);

/// Single-shot sampling entry point; identical seed gives a bit-identical
/// path.
BridgePath sample_bridge(std::uint64_t seed, std::span<const double> start,
                         std::span<const double> end, const TimeGrid& grid);

/// Axis-aligned box, closed on both sides; +-infinity bounds are allowed.
/// A box with lo[j] > hi[j] in any axis is degenerate (empty region).
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  static Box everything(int dim);
  bool degenerate() const;
  bool contains(std::span<const double> x) const;
};

/// Trapezoid-rule approximation of the sojourn time
/// zeta(region) = int_0^t 1_region(b(s)) ds over the path grid. Returns a
/// value in [0, t]; a degenerate box yields 0.
double sojourn_time(const BridgePath& path, const Box& region);

}  // namespace fkmc
