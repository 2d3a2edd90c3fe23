#ifndef EMGRID_GRID_HPP
#define EMGRID_GRID_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "emgrid/direction.hpp"
#include "emgrid/errors.hpp"

namespace emgrid {

enum class Layout : std::uint8_t {
  RowMajor = 0,
  ZOrder = 1,
};

enum class GridKind : std::uint8_t {
  FlowDir = 1,
  FlowAcc = 2,
  Elevation = 3,
};

struct GridDims {
  std::uint64_t height = 0;
  std::uint64_t width = 0;

  std::uint64_t cell_count() const { return height * width; }
  bool operator==(const GridDims&) const = default;
};

/// Validates height >= 1, width >= 1 and that height*width does not
/// overflow 64 bits.
inline void check_dims(const GridDims& dims) {
  if (dims.height == 0 || dims.width == 0)
    throw_error(errc::invalid_argument, "grid dimensions must be at least 1x1");
  if (dims.width > std::numeric_limits<std::uint64_t>::max() / dims.height)
    throw_error(errc::invalid_argument, "grid cell count overflows 64 bits");
}

struct CellRef {
  std::uint64_t row = 0;
  std::uint64_t col = 0;
  bool operator==(const CellRef&) const = default;
};

/// Dense grid with row-major in-memory cells. `layout` records the
/// associated on-disk cell order; it does not affect in-memory indexing.
template <typename T>
struct Grid {
  GridDims dims;
  Layout layout = Layout::RowMajor;
  std::vector<T> cells;

  Grid() = default;
  Grid(GridDims d, Layout l, T fill = T{})
      : dims(d), layout(l) {
    check_dims(d);
    cells.assign(d.cell_count(), fill);
  }

  bool contains(CellRef c) const {
    return c.row < dims.height && c.col < dims.width;
  }
  std::uint64_t index(CellRef c) const { return c.row * dims.width + c.col; }
  T& at(CellRef c) { return cells[index(c)]; }
  const T& at(CellRef c) const { return cells[index(c)]; }
  T& at(std::uint64_t row, std::uint64_t col) { return cells[row * dims.width + col]; }
  const T& at(std::uint64_t row, std::uint64_t col) const {
    return cells[row * dims.width + col];
  }
};

using FlowDirGrid = Grid<Direction>;
using FlowAccGrid = Grid<std::uint64_t>;
using ElevationGrid = Grid<float>;

inline bool is_nodata(float elevation) { return std::isnan(elevation); }
inline float elevation_nodata() {
  return std::numeric_limits<float>::quiet_NaN();
}

/// Neighbour of `c` in direction `d`, or nothing for sinks and steps that
/// leave the grid. `d` must not be NoData.
inline std::optional<CellRef> out_neighbor(const GridDims& dims, CellRef c,
                                           Direction d) {
  if (!is_flow(d)) return std::nullopt;
  const auto i = static_cast<std::uint8_t>(d);
  if (kRowStep[i] < 0 && c.row == 0) return std::nullopt;
  if (kColStep[i] < 0 && c.col == 0) return std::nullopt;
  CellRef n{c.row + static_cast<std::uint64_t>(kRowStep[i]),
            c.col + static_cast<std::uint64_t>(kColStep[i])};
  if (n.row >= dims.height || n.col >= dims.width) return std::nullopt;
  return n;
}

/// Out-neighbour of `c` under the grid's own flow direction.
inline std::optional<CellRef> out_neighbor(const FlowDirGrid& fd, CellRef c) {
  return out_neighbor(fd.dims, c, fd.at(c));
}

/// Cells u among the eight neighbours of `c` with out_neighbor(u) == c,
/// scanned in the fixed order E, SE, S, SW, W, NW, N, NE.
std::vector<CellRef> in_neighbors(const FlowDirGrid& fd, CellRef c);

/// Rewrites directions that point off-grid or into a NoData cell to Sink
/// (water leaves the terrain there). Returns how many cells were changed.
std::uint64_t normalize_to_sinks(FlowDirGrid& fd);

/// Checks the cell -> out-neighbour graph for directed cycles by pointer
/// following with tri-state marks. Returns a witness cell on some cycle, or
/// nothing when the grid is acyclic.
std::optional<CellRef> validate_acyclic(const FlowDirGrid& fd);

}  // namespace emgrid

#endif
