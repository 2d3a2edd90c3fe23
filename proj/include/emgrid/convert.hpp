#ifndef EMGRID_CONVERT_HPP
#define EMGRID_CONVERT_HPP

#include "emgrid/block_device.hpp"
#include "emgrid/grid.hpp"

namespace emgrid {

enum class ConversionStrategy : std::uint8_t {
  ZOrderScan = 0,   // pass over the grid in Z-order
  RowByRowScan = 1, // pass over the grid row by row
  MergeSort = 2,    // external merge sort keyed on the target offset
};

enum class ConvertDirection : std::uint8_t {
  RowToZ = 0,
  ZToRow = 1,
};

/// Rewrites the grid payload held by `src` into `dst` in the other cell
/// order. The scan strategies run a single pass over the grid; the merge
/// sort builds (target offset, cell) records and merges K = M/B - 1 runs
/// at a time through a scratch device. Returns the combined I/O of all
/// devices touched.
IoStats convert_layout(BlockDevice& src, BlockDevice& dst, GridDims dims,
                       std::uint32_t cell_size, ConversionStrategy strategy,
                       ConvertDirection direction);

}  // namespace emgrid

#endif
