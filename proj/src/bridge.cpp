#include "fkmc/bridge.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fkmc {

TimeGrid::TimeGrid(double t_, int n_steps_) : t(t_), n_steps(n_steps_) {
  if (!(t > 0.0) || !std::isfinite(t))
    throw std::invalid_argument("TimeGrid: t must be positive and finite");
  if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be >= 1");
}

BridgePath::BridgePath(std::span<const double> start_,
                       std::span<const double> end_, const TimeGrid& grid_)
    : dim(static_cast<int>(start_.size())),
      grid(grid_),
      start(start_.begin(), start_.end()),
      end(end_.begin(), end_.end()) {
  if (start_.size() != end_.size())
    throw std::invalid_argument("BridgePath: start/end dimension mismatch");
  if (dim < 1) throw std::invalid_argument("BridgePath: dimension must be >= 1");
  positions.assign(static_cast<std::size_t>(grid.n_nodes()) * dim, 0.0);
}

void sample_bridge_into(BridgePath& path, CounterRng& rng) {
  const int n = path.grid.n_steps;
  const int d = path.dim;
  const double t = path.grid.t;
  const double sqrt_dt = std::sqrt(path.grid.dt());

  // Brownian path first (interleaved component draws, fixed order), bridge
  // transform second.
  double* p = path.positions.data();
  for (int j = 0; j < d; ++j) p[j] = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double* prev = p + static_cast<std::size_t>(k - 1) * d;
    double* cur = p + static_cast<std::size_t>(k) * d;
    for (int j = 0; j < d; ++j) cur[j] = prev[j] + sqrt_dt * rng.normal();
  }

  const double* w_end = p + static_cast<std::size_t>(n) * d;
  for (int j = 0; j < d; ++j) {
    const double wt = w_end[j];
    const double x0 = path.start[j];
    const double dx = path.end[j] - x0;
    for (int k = 1; k < n; ++k) {
      const double frac = path.grid.node(k) / t;
      double& b = p[static_cast<std::size_t>(k) * d + j];
      b = x0 + dx * frac + (b - frac * wt);
    }
  }
  // Endpoints are pinned bit-exactly.
  for (int j = 0; j < d; ++j) {
    p[j] = path.start[j];
    p[static_cast<std::size_t>(n) * d + j] = path.end[j];
  }
}

BridgePath sample_bridge(std::uint64_t seed, std::span<const double> start,
                         std::span<const double> end, const TimeGrid& grid) {
  BridgePath path(start, end, grid);
  CounterRng rng(seed, RngStream::BridgePath, 0);
  sample_bridge_into(path, rng);
  return path;
}

Box Box::everything(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  Box b;
  b.lo.assign(dim, -inf);
  b.hi.assign(dim, inf);
  return b;
}

bool Box::degenerate() const {
  if (lo.size() != hi.size() || lo.empty()) return true;
  for (std::size_t j = 0; j < lo.size(); ++j)
    if (!(lo[j] <= hi[j])) return true;
  return false;
}

bool Box::contains(std::span<const double> x) const {
  for (std::size_t j = 0; j < lo.size(); ++j)
    if (x[j] < lo[j] || x[j] > hi[j]) return false;
  return true;
}

double sojourn_time(const BridgePath& path, const Box& region) {
  if (region.degenerate()) return 0.0;
  if (static_cast<int>(region.lo.size()) != path.dim)
    throw std::invalid_argument("sojourn_time: region dimension mismatch");
  const int n = path.grid.n_steps;
  double acc = 0.5 * (region.contains(path.node(0)) ? 1.0 : 0.0);
  for (int k = 1; k < n; ++k)
    if (region.contains(path.node(k))) acc += 1.0;
  acc += 0.5 * (region.contains(path.node(n)) ? 1.0 : 0.0);
  return acc * path.grid.dt();
}

}  // namespace fkmc
