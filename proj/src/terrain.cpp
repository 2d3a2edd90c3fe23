#include "emgrid/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <set>

namespace emgrid {

namespace {

Direction step_direction(CellRef from, CellRef to) {
  const std::int64_t dr = static_cast<std::int64_t>(to.row) - static_cast<std::int64_t>(from.row);
  const std::int64_t dc = static_cast<std::int64_t>(to.col) - static_cast<std::int64_t>(from.col);
  for (Direction d : kFlowDirections)
    if (kRowStep[static_cast<std::uint8_t>(d)] == dr &&
        kColStep[static_cast<std::uint8_t>(d)] == dc)
      return d;
  throw_error(errc::invalid_argument, "cells are not neighbours");
}

}  // namespace

MeanderResult gen_meander(const MeanderParams& params) {
  const std::uint64_t n = params.n;
  if (n < 8) throw_error(errc::infeasible_params, "meander grid needs n >= 8");
  const GridDims dims{n, n};

  const std::uint64_t amplitude =
      static_cast<std::uint64_t>(std::llround(params.c2 * static_cast<double>(n)));
  if (amplitude < 2 || amplitude > n - 2)
    throw_error(errc::infeasible_params, "amplitude c2*n must lie in [2, n-2]");
  const std::uint64_t meanders =
      static_cast<std::uint64_t>(std::llround(params.c1 * static_cast<double>(n)));
  const std::uint64_t legs = std::max<std::uint64_t>(2, 2 * meanders);
  const std::uint64_t pitch = legs > 1 ? (n - 2) / (legs - 1) : n - 2;
  if (pitch < 2)
    throw_error(errc::infeasible_params,
                "c1*n meanders of pitch >= 2 do not fit in the grid width");

  const std::uint64_t row_hi = n - 1;
  const std::uint64_t row_lo = n - 1 - amplitude;

  // Build the river from source (lower right) to mouth (upper left):
  // alternating vertical legs inside the band, joined by westward runs,
  // then a final climb up column zero.
  std::vector<CellRef> path;
  path.push_back(CellRef{row_hi, n - 1});
  auto walk_to = [&](CellRef target) {
    CellRef cur = path.back();
    while (cur.row != target.row) {
      cur.row += cur.row < target.row ? 1 : -1;
      path.push_back(cur);
    }
    while (cur.col != target.col) {
      cur.col += cur.col < target.col ? 1 : -1;
      path.push_back(cur);
    }
  };
  for (std::uint64_t leg = 0; leg < legs; ++leg) {
    const std::uint64_t col = n - 1 - leg * pitch;
    walk_to(CellRef{leg % 2 == 0 ? row_lo : row_hi, col});
    if (leg + 1 < legs) {
      const std::uint64_t next_col = n - 1 - (leg + 1) * pitch;
      walk_to(CellRef{path.back().row, next_col});
    }
  }
  walk_to(CellRef{path.back().row, 0});
  walk_to(CellRef{0, 0});

  MeanderResult result;
  result.fd = FlowDirGrid(dims, Layout::RowMajor, Direction::Sink);
  result.elev = ElevationGrid(dims, Layout::RowMajor, 0.0f);
  result.river_cells = path.size();

  const std::uint64_t w = n;
  std::vector<std::uint64_t> river_rank(n * n, ~0ull);
  for (std::uint64_t k = 0; k < path.size(); ++k) {
    const std::uint64_t idx = path[k].row * w + path[k].col;
    if (river_rank[idx] != ~0ull)
      throw_error(errc::infeasible_params, "river path self-intersects");
    river_rank[idx] = k;
    if (k + 1 < path.size())
      result.fd.cells[idx] = step_direction(path[k], path[k + 1]);
  }

  // Off-river cells drain to the nearest river cell along shortest
  // 8-neighbour paths; elevation = river base of the inherited anchor plus
  // the hop distance, which descends strictly along every flow edge.
  const float len = static_cast<float>(path.size());
  std::vector<float> base(n * n, 0.0f);
  std::deque<std::uint64_t> frontier;
  std::vector<std::uint8_t> seen(n * n, 0);
  for (std::uint64_t k = 0; k < path.size(); ++k) {
    const std::uint64_t idx = path[k].row * w + path[k].col;
    base[idx] = len - static_cast<float>(k);
    result.elev.cells[idx] = base[idx];
    seen[idx] = 1;
    frontier.push_back(idx);
  }
  while (!frontier.empty()) {
    const std::uint64_t idx = frontier.front();
    frontier.pop_front();
    const CellRef cell{idx / w, idx % w};
    for (Direction d : kFlowDirections) {
      const auto nb = out_neighbor(dims, cell, d);
      if (!nb) continue;
      const std::uint64_t nidx = nb->row * w + nb->col;
      if (seen[nidx]) continue;
      seen[nidx] = 1;
      result.fd.cells[nidx] = opposite(d);
      base[nidx] = base[idx];
      result.elev.cells[nidx] = result.elev.cells[idx] + 1.0f;
      frontier.push_back(nidx);
    }
  }
  return result;
}

FlowDirGrid gen_random_drainage(GridDims dims, std::uint64_t seed) {
  check_dims(dims);
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;
  std::mt19937_64 rng(seed);

  FlowDirGrid fd(dims, Layout::RowMajor, Direction::Sink);
  std::vector<std::uint8_t> in_tree(n, 0);

  const std::uint64_t outlets = 1 + rng() % 3;
  struct Candidate {
    std::uint64_t cell;
    Direction towards_tree;
  };
  std::vector<Candidate> frontier;

  auto add_frontier = [&](std::uint64_t idx) {
    const CellRef cell{idx / w, idx % w};
    for (Direction d : kFlowDirections) {
      const auto nb = out_neighbor(dims, cell, d);
      if (!nb) continue;
      const std::uint64_t nidx = nb->row * w + nb->col;
      if (!in_tree[nidx]) frontier.push_back({nidx, opposite(d)});
    }
  };

  for (std::uint64_t k = 0; k < outlets; ++k) {
    const std::uint64_t idx = rng() % n;
    if (in_tree[idx]) continue;
    in_tree[idx] = 1;
    fd.cells[idx] = Direction::Sink;
    add_frontier(idx);
  }

  while (!frontier.empty()) {
    const std::uint64_t pick = rng() % frontier.size();
    const Candidate cand = frontier[pick];
    frontier[pick] = frontier.back();
    frontier.pop_back();
    if (in_tree[cand.cell]) continue;
    in_tree[cand.cell] = 1;
    fd.cells[cand.cell] = cand.towards_tree;
    add_frontier(cand.cell);
  }
  return fd;
}

std::vector<CellRef> first_far_cells(const FlowDirGrid& fd, CellRef q, std::uint64_t d) {
  const GridDims dims = fd.dims;
  if (d == 0) throw_error(errc::invalid_argument, "window size must be positive");
  if (q.row < d || q.col < d || q.row + 2 * d > dims.height || q.col + 2 * d > dims.width)
    throw_error(errc::out_of_bounds,
                "the 3d x 3d square around Q does not fit in the grid");

  const std::uint64_t top = q.row - d, left = q.col - d;
  const std::uint64_t bottom = q.row + 2 * d - 1, right = q.col + 2 * d - 1;
  auto on_ring = [&](CellRef c) {
    return c.row == top || c.row == bottom || c.col == left || c.col == right;
  };

  std::set<std::pair<std::uint64_t, std::uint64_t>> far;
  const std::uint64_t step_cap = 9 * d * d + 1;
  for (std::uint64_t r = q.row; r < q.row + d; ++r) {
    for (std::uint64_t c = q.col; c < q.col + d; ++c) {
      CellRef cur{r, c};
      if (fd.at(cur) == Direction::NoData) continue;
      for (std::uint64_t steps = 0; steps < step_cap; ++steps) {
        if (on_ring(cur)) {
          far.emplace(cur.row, cur.col);
          break;
        }
        const auto nb = out_neighbor(fd.dims, cur, fd.at(cur));
        if (!nb) break;
        cur = *nb;
      }
    }
  }
  std::vector<CellRef> result;
  result.reserve(far.size());
  for (const auto& [r, c] : far) result.push_back(CellRef{r, c});
  return result;
}

ConfluenceReport estimate_confluence(const FlowDirGrid& fd,
                                     std::span<const std::uint64_t> window_sizes,
                                     const ConfluenceSampling& sampling) {
  ConfluenceReport report;
  std::mt19937_64 rng(sampling.seed);
  for (std::uint64_t d : window_sizes) {
    if (fd.dims.height < 3 * d || fd.dims.width < 3 * d) continue;
    const std::uint64_t row_max = fd.dims.height - 2 * d;
    const std::uint64_t col_max = fd.dims.width - 2 * d;

    std::vector<std::pair<std::uint64_t, std::uint64_t>> placements;
    for (std::uint64_t r = d; r <= row_max; r += d)
      for (std::uint64_t c = d; c <= col_max; c += d) placements.emplace_back(r, c);
    if (sampling.max_samples_per_window > 0 &&
        placements.size() > sampling.max_samples_per_window) {
      std::shuffle(placements.begin(), placements.end(), rng);
      placements.resize(sampling.max_samples_per_window);
    }
    if (placements.empty()) continue;

    std::vector<std::uint64_t> counts;
    counts.reserve(placements.size());
    for (const auto& [r, c] : placements)
      counts.push_back(first_far_cells(fd, CellRef{r, c}, d).size());
    std::sort(counts.begin(), counts.end());

    ConfluenceReport::Window window;
    window.d = d;
    window.samples = counts.size();
    window.max = counts.back();
    window.p50 = counts[(counts.size() - 1) / 2];
    window.p99 = counts[(counts.size() - 1) * 99 / 100];
    report.windows.push_back(window);
    report.gamma_hat = std::max(report.gamma_hat, window.max);
  }
  return report;
}

}  // namespace emgrid
