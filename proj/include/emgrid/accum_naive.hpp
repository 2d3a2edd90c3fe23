#ifndef EMGRID_ACCUM_NAIVE_HPP
#define EMGRID_ACCUM_NAIVE_HPP

#include "emgrid/block_device.hpp"
#include "emgrid/grid.hpp"

namespace emgrid {

enum class TraversalOrder : std::uint8_t {
  RowByRow = 0,
  ZOrderTraversal = 1,
};

struct AccumResult {
  FlowAccGrid acc;
  IoStats stats;
  std::uint64_t pointer_records = 0;  // cache-oblivious variant only
};

/// Seeds a fresh device with the flow-direction payload of `fd` in its
/// layout order. The payload occupies [0, cell_count) and the seeding is
/// not counted as I/O.
BlockDevice make_flowdir_device(const FlowDirGrid& fd, const DeviceConfig& config);

/// Linear-time flow accumulation, one unit of rain per cell, forwarded
/// downstream as soon as every in-neighbour has delivered. The outer loop
/// runs in the given traversal order over a payload stored in `layout`
/// order; all cell accesses go through the device. Flow values carry the
/// marking bit in their top bit while the algorithm runs; a final pass
/// clears it. Expects directions already normalized and acyclic; a cycle
/// that slipped validation trips the non-termination guard after 4N inner
/// steps.
AccumResult naive_accumulation(BlockDevice& dev, GridDims dims, Layout layout,
                               TraversalOrder order);

/// Oracle: walks the downstream path of every cell, incrementing every
/// visited cell. Quadratic in the worst case, in-memory only.
FlowAccGrid brute_force_accumulation(const FlowDirGrid& fd);

}  // namespace emgrid

#endif
