#include "emgrid/grid.hpp"

namespace emgrid {

std::vector<CellRef> in_neighbors(const FlowDirGrid& fd, CellRef c) {
  std::vector<CellRef> result;
  for (Direction d : kFlowDirections) {
    auto n = out_neighbor(fd.dims, c, d);
    if (!n) continue;
    Direction nd = fd.at(*n);
    if (is_flow(nd) && nd == opposite(d)) result.push_back(*n);
  }
  return result;
}

std::uint64_t normalize_to_sinks(FlowDirGrid& fd) {
  std::uint64_t changed = 0;
  for (std::uint64_t r = 0; r < fd.dims.height; ++r) {
    for (std::uint64_t w = 0; w < fd.dims.width; ++w) {
      Direction d = fd.at(r, w);
      if (!is_flow(d)) continue;
      auto n = out_neighbor(fd.dims, CellRef{r, w}, d);
      if (!n || fd.at(*n) == Direction::NoData) {
        fd.at(r, w) = Direction::Sink;
        ++changed;
      }
    }
  }
  return changed;
}

std::optional<CellRef> validate_acyclic(const FlowDirGrid& fd) {
  const std::uint64_t n = fd.dims.cell_count();
  // 0 = unvisited, 1 = on current path, 2 = finished
  std::vector<std::uint8_t> state(n, 0);
  std::vector<std::uint64_t> path;
  for (std::uint64_t start = 0; start < n; ++start) {
    if (state[start] != 0) continue;
    std::uint64_t cur = start;
    path.clear();
    while (true) {
      if (state[cur] == 1)
        return CellRef{cur / fd.dims.width, cur % fd.dims.width};
      if (state[cur] == 2) break;
      state[cur] = 1;
      path.push_back(cur);
      Direction d = fd.cells[cur];
      if (!is_flow(d)) break;
      auto next = out_neighbor(fd.dims,
                               CellRef{cur / fd.dims.width, cur % fd.dims.width}, d);
      if (!next) break;
      cur = next->row * fd.dims.width + next->col;
    }
    for (std::uint64_t cell : path) state[cell] = 2;
  }
  return std::nullopt;
}

}  // namespace emgrid
