#ifndef EMGRID_FLOOD_HPP
#define EMGRID_FLOOD_HPP

#include <vector>

#include "emgrid/accum_separator.hpp"
#include "emgrid/block_device.hpp"
#include "emgrid/grid.hpp"

namespace emgrid {

/// Points every cell at its strictly lowest strictly-lower neighbour, ties
/// broken by the fixed direction order E, SE, S, SW, W, NW, N, NE. Cells
/// without a lower neighbour become sinks, so the result is acyclic.
FlowDirGrid steepest_descent_directions(const ElevationGrid& elev);

/// Watershed labels: for each non-NoData cell the row-major index of the
/// sink its downhill path ends in.
struct WatershedLabels {
  GridDims dims;
  std::vector<std::uint64_t> sink_of;  // row-major; UINT64_MAX for NoData
  std::vector<std::uint64_t> sinks;    // row-major indices, ascending
};

WatershedLabels watershed_decompose(const FlowDirGrid& fd,
                                    TraversalOrder order = TraversalOrder::RowByRow);

/// One node per sink plus the virtual outside node; undirected edges carry
/// the lowest pass elevation between adjacent watersheds. Watersheds
/// touching the grid edge (or a NoData void) get an outside edge at the
/// touching cell's elevation.
struct WatershedGraph {
  static constexpr std::uint32_t kOutside = 0xffffffffu;
  struct Edge {
    std::uint32_t u, v;  // node ids; v may be kOutside
    float height;
  };
  std::vector<std::uint64_t> sinks;  // node id -> sink cell (row-major index)
  std::vector<Edge> edges;
};

WatershedGraph build_watershed_graph(const WatershedLabels& labels,
                                     const ElevationGrid& elev);

/// Flood height per watershed node: the minimax path height from the node
/// to the outside, by best-first expansion from the outside. Throws
/// Unreachable if some node has no path out.
std::vector<float> flood_heights(const WatershedGraph& graph);

/// flooded(c) = max(elev(c), flood height of c's watershed), single scan.
ElevationGrid apply_flooding(const ElevationGrid& elev, const WatershedLabels& labels,
                             const std::vector<float>& heights);

/// The decompose -> graph -> heights -> apply pipeline in one call.
ElevationGrid flood_watershed(const ElevationGrid& elev);

/// Oracle: best-first expansion from all boundary cells inward;
/// flooded(c) = max(elev(c), lowest path height from c to the boundary).
ElevationGrid brute_force_flood(const ElevationGrid& elev);

/// Boundary-only contraction of a subgrid: vertices are the subgrid's
/// boundary cells, edges preserve every boundary-pair minimax path height.
/// Built by contracting the lowest-path forest of the interior, keeping
/// the lowest parallel edge. Planar, so it has O(side) edges.
struct SubstituteGraph {
  std::vector<CellRef> vertices;  // boundary cells of the subgrid
  struct Edge {
    std::uint32_t a, b;
    float height;
  };
  std::vector<Edge> edges;
};

SubstituteGraph substitute_graph(const ElevationGrid& subgrid);

struct FloodResult {
  ElevationGrid flooded;
  IoStats stats;
};

/// Separator-based flooding on a device-resident elevation payload:
/// substitute graphs per subgrid, combined lowest-path heights for all
/// separator cells, then a per-subgrid sweep for the remaining cells.
FloodResult separator_flooding(BlockDevice& dev, GridDims dims, Layout layout,
                               const SeparatorOptions& options = {});

}  // namespace emgrid

#endif
