#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "hamgov/world.hpp"

namespace hamgov {

OccupancyGrid::OccupancyGrid(const Vec3& lo, const Vec3& hi, double resolution, double inflation)
    : lo_(lo), res_(resolution), inflation_(inflation) {
  if (!(resolution > 0.0)) throw std::invalid_argument("grid resolution must be positive");
  if (!(inflation >= 0.0)) throw std::invalid_argument("inflation must be non-negative");
  if (!(lo.array() < hi.array()).all()) throw std::invalid_argument("grid bounds need min < max");
  for (int i = 0; i < 3; ++i) n_[i] = std::max(1, static_cast<int>(std::ceil((hi(i) - lo(i)) / res_ - 1e-9)));
  const std::size_t total = static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];
  occ_.assign(total, 0);
  infl_.assign(total, 0);
}

bool OccupancyGrid::in_bounds(const Cell& c) const {
  return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < n_[0] && c[1] < n_[1] && c[2] < n_[2];
}

Cell OccupancyGrid::cell_of(const Vec3& p) const {
  Cell c;
  for (int i = 0; i < 3; ++i) c[i] = static_cast<int>(std::floor((p(i) - lo_(i)) / res_));
  return c;
}

Vec3 OccupancyGrid::center(const Cell& c) const {
  return lo_ + res_ * Vec3(c[0] + 0.5, c[1] + 0.5, c[2] + 0.5);
}

std::size_t OccupancyGrid::index(const Cell& c) const {
  return (static_cast<std::size_t>(c[2]) * n_[1] + c[1]) * n_[0] + c[0];
}

bool OccupancyGrid::occupied(const Cell& c) const { return in_bounds(c) && occ_[index(c)]; }

bool OccupancyGrid::blocked(const Cell& c) const { return !in_bounds(c) || occ_[index(c)] || infl_[index(c)]; }

void OccupancyGrid::set_blocked(const Cell& c) {
  if (!in_bounds(c)) throw std::out_of_range("cell outside grid");
  occ_[index(c)] = 1;
  infl_[index(c)] = 1;
}

void OccupancyGrid::update(const std::vector<Vec3>& points) {
  const double r2 = inflation_ * inflation_;
  for (const Vec3& p : points) {
    const Cell c = cell_of(p);
    if (!in_bounds(c)) continue;
    occ_[index(c)] = 1;
    infl_[index(c)] = 1;
    const Cell a = cell_of(p - Vec3::Constant(inflation_)), b = cell_of(p + Vec3::Constant(inflation_));
    for (int z = std::max(0, a[2]); z <= std::min(n_[2] - 1, b[2]); ++z) {
      for (int y = std::max(0, a[1]); y <= std::min(n_[1] - 1, b[1]); ++y) {
        for (int x = std::max(0, a[0]); x <= std::min(n_[0] - 1, b[0]); ++x) {
          const Cell n{x, y, z};
          if ((center(n) - p).squaredNorm() <= r2) infl_[index(n)] = 1;
        }
      }
    }
  }
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occ_.begin(), occ_.end(), 1));
}

std::size_t OccupancyGrid::blocked_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < occ_.size(); ++i) n += (occ_[i] || infl_[i]) ? 1 : 0;
  return n;
}

GridPlan astar_cells(const OccupancyGrid& grid, const Cell& start, const Cell& goal) {
  if (!grid.in_bounds(start) || !grid.in_bounds(goal)) throw std::runtime_error("no path");
  if (start == goal) return {{start}, 0.0};
  if (!grid.free(goal)) throw std::runtime_error("no path");

  const int nx = grid.nx(), ny = grid.ny(), nz = grid.nz();
  const std::size_t cells = static_cast<std::size_t>(nx) * ny * nz;
  auto id = [&](const Cell& c) { return (static_cast<std::size_t>(c[2]) * ny + c[1]) * nx + c[0]; };
  auto cell = [&](std::size_t i) {
    return Cell{static_cast<int>(i % nx), static_cast<int>((i / nx) % ny), static_cast<int>(i / (static_cast<std::size_t>(nx) * ny))};
  };
  const double res = grid.resolution();
  auto h = [&](const Cell& c) {
    return res * std::sqrt(double((c[0] - goal[0]) * (c[0] - goal[0]) + (c[1] - goal[1]) * (c[1] - goal[1]) +
                                  (c[2] - goal[2]) * (c[2] - goal[2])));
  };

  // a move may not clip an occupied cell: every cell in the box spanned by
  // the two endpoints has to be unoccupied, otherwise the straight segment
  // between them can cut an obstacle corner
  auto clear_move = [&](const Cell& c, int dx, int dy, int dz) {
    for (int z = std::min(0, dz); z <= std::max(0, dz); ++z)
      for (int y = std::min(0, dy); y <= std::max(0, dy); ++y)
        for (int x = std::min(0, dx); x <= std::max(0, dx); ++x)
          if (grid.occupied({c[0] + x, c[1] + y, c[2] + z})) return false;
    return true;
  };

  // state = 2 * cell + escaped; before escaping the inflation band only
  // occupied cells are off limits
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> cost(2 * cells, inf);
  std::vector<std::size_t> parent(2 * cells, std::numeric_limits<std::size_t>::max());
  std::vector<std::uint8_t> closed(2 * cells, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;

  const std::size_t s0 = 2 * id(start) + (grid.free(start) ? 1 : 0);
  cost[s0] = 0.0;
  open.push({h(start), s0});
  const std::size_t target = 2 * id(goal) + 1;

  while (!open.empty()) {
    const auto [f, s] = open.top();
    open.pop();
    if (closed[s]) continue;
    closed[s] = 1;
    if (s == target) break;
    const Cell c = cell(s / 2);
    const bool escaped = s % 2;
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          const Cell n{c[0] + dx, c[1] + dy, c[2] + dz};
          if (!grid.in_bounds(n) || !clear_move(c, dx, dy, dz)) continue;
          const bool nfree = !grid.blocked(n);
          if (escaped && !nfree) continue;
          const std::size_t ns = 2 * id(n) + ((escaped || nfree) ? 1 : 0);
          if (closed[ns]) continue;
          const double nc = cost[s] + res * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          if (nc < cost[ns]) {
            cost[ns] = nc;
            parent[ns] = s;
            open.push({nc + h(n), ns});
          }
        }
      }
    }
  }
  if (!closed[target]) throw std::runtime_error("no path");

  GridPlan plan;
  plan.cost = cost[target];
  for (std::size_t s = target; s != std::numeric_limits<std::size_t>::max(); s = parent[s]) {
    plan.cells.push_back(cell(s / 2));
  }
  std::reverse(plan.cells.begin(), plan.cells.end());
  return plan;
}

Path astar_plan(const OccupancyGrid& grid, const Vec3& start, const Vec3& goal) {
  const GridPlan plan = astar_cells(grid, grid.cell_of(start), grid.cell_of(goal));
  if (plan.cells.size() == 1) {
    if (start == goal) return Path({start});
    return Path({start, goal});
  }
  std::vector<Vec3> w{start};
  const auto& c = plan.cells;
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    const bool straight = c[i][0] - c[i - 1][0] == c[i + 1][0] - c[i][0] &&
                          c[i][1] - c[i - 1][1] == c[i + 1][1] - c[i][1] &&
                          c[i][2] - c[i - 1][2] == c[i + 1][2] - c[i][2];
    if (!straight) w.push_back(grid.center(c[i]));
  }
  w.push_back(goal);
  return Path(w);
}

}  // namespace hamgov
