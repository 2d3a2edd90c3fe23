#ifndef EMGRID_ZORDER_HPP
#define EMGRID_ZORDER_HPP

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "emgrid/grid.hpp"

namespace emgrid {

// Bit-interleaving for Z-order (Morton) indices. The row coordinate
// occupies the odd (more significant) bit of each pair, the column the
// even bit, so a cell (y, x) with bits y1..ym / x1..xm gets the index
// y1 x1 y2 x2 ... ym xm. Spreading and compacting go through byte-wide
// lookup tables.

/// Spreads the low 32 bits of `v` onto the even bit positions of a 64-bit
/// word.
std::uint64_t dilate(std::uint32_t v);

/// Inverse of dilate: collects the even bit positions of `z`.
std::uint32_t compact(std::uint64_t z);

inline std::uint64_t interleave(std::uint32_t y, std::uint32_t x) {
  return (dilate(y) << 1) | dilate(x);
}

inline std::pair<std::uint32_t, std::uint32_t> deinterleave(std::uint64_t z) {
  return {compact(z >> 1), compact(z)};
}

/// Offset tables for grids whose height or width is not a power of two.
///
/// The Z-order traversal of the enclosing 2^m x 2^m matrix decomposes into
/// alternating runs D_1, N_1, D_2, N_2, ... of in-grid and out-of-grid
/// cells. For each in-grid run i the tables store its start offset in the
/// Z-order *file* (which holds only in-grid cells) and in the Z-order
/// traversal of the enclosing matrix. Built in O(height + width) time by
/// recursing over quadrants, never by enumerating cells.
class SegmentTables {
public:
  static SegmentTables build(GridDims dims);

  GridDims dims() const { return dims_; }
  std::uint32_t level_count() const { return m_; }
  std::uint64_t segment_count() const { return file_start_.size(); }
  const std::vector<std::uint64_t>& file_offsets() const { return file_start_; }
  const std::vector<std::uint64_t>& z_offsets() const { return z_start_; }

  /// Grid coordinates of the cell stored at `file_offset` in a Z-order file.
  CellRef cell_at(std::uint64_t file_offset) const;

  /// Z-order file offset of cell `c`; inverse of cell_at.
  std::uint64_t offset_of(CellRef c) const;

  /// File offset of the neighbour of the cell at `file_offset` in direction
  /// `d`, or nothing for sinks and off-grid steps. Uses dilated add/subtract
  /// on the interleaved index instead of a full coordinate round trip.
  std::optional<std::uint64_t> neighbor_offset(std::uint64_t file_offset,
                                               Direction d) const;

  /// Z-order index within the enclosing matrix for a file offset, and back.
  std::uint64_t z_index_of(std::uint64_t file_offset) const;
  std::uint64_t offset_of_z_index(std::uint64_t z_index) const;

private:
  GridDims dims_;
  std::uint32_t m_ = 0;
  std::vector<std::uint64_t> file_start_;  // F, 0-indexed
  std::vector<std::uint64_t> z_start_;     // Z, 0-indexed
  std::uint64_t max_row_dilated_ = 0;      // dilate(height-1) << 1
  std::uint64_t max_col_dilated_ = 0;      // dilate(width-1)
};

}  // namespace emgrid

#endif
