#ifndef EMGRID_ACCUM_SEPARATOR_HPP
#define EMGRID_ACCUM_SEPARATOR_HPP

#include <optional>
#include <vector>

#include "emgrid/accum_naive.hpp"

namespace emgrid {

/// Largest subgrid side z such that z rows of FlowAcc (8 bytes/cell) and
/// FlowDir (1 byte/cell) plus four rows of each separator file fit in an
/// M-byte memory of B-byte blocks:
///   z*ceil(8z/B) + z*ceil(z/B) + 4*ceil(8z/B) + 4*ceil(8z/B) <= M/B
/// Evaluated through the sufficient closed form (sqrt(1+8M/B^2)-1)*B/9,
/// stepped down if the exact inequality still fails. Throws
/// too_small_memory when no z >= 3 works.
std::uint64_t choose_subgrid_size(std::uint64_t memory_bytes,
                                  std::uint64_t block_bytes);

/// Predicted I/O volume of the cache-aware algorithm divided by the
/// input+output size: 10/9 + 4/(sqrt(8M/B^2+1)-1).
double predicted_io_overhead(std::uint64_t memory_bytes,
                             std::uint64_t block_bytes);

struct SeparatorOptions {
  std::optional<std::uint64_t> memory_bytes;  // defaults to the device config
  std::optional<std::uint64_t> block_bytes;
  std::optional<std::uint64_t> subgrid_side;  // overrides choose_subgrid_size
  std::uint64_t s_budget_bytes = 1ull << 30;  // in-memory budget for phase two
  bool pin_subgrids = true;                   // pin FlowDir while a subgrid is processed
};

/// Test introspection: separator cells in their canonical enumeration and
/// their flow values right after phase one.
struct SeparatorDebug {
  std::vector<CellRef> s_cells;
  std::vector<std::uint64_t> s_after_phase1;
};

/// Cache-aware separator accumulation over z x z subgrids with shared
/// boundary rows and columns. Phase one forwards interior rain to the
/// separator set S, phase two accumulates over S in memory, phase three
/// recomputes subgrid interiors with the incoming separator flow.
AccumResult cache_aware_accumulation(BlockDevice& dev, GridDims dims, Layout layout,
                                     const SeparatorOptions& options = {},
                                     SeparatorDebug* debug = nullptr);

/// Variant for Z-order files: disjoint power-of-two subgrids aligned to
/// the Z-order recursion, so each subgrid and its separator records are
/// contiguous on disk and both grid passes are pure scans.
AccumResult cache_aware_accumulation_z(BlockDevice& dev, GridDims dims,
                                       const SeparatorOptions& options = {},
                                       SeparatorDebug* debug = nullptr);

/// Number of separator cells the shared-boundary decomposition produces.
std::uint64_t separator_cell_count(GridDims dims, std::uint64_t z);
/// Same for the disjoint power-of-two decomposition of the Z variant.
std::uint64_t separator_cell_count_z(GridDims dims, std::uint64_t z);

/// Cache-oblivious accumulation over a hierarchy of subgrids of side
/// 2^i + 1 with shared boundaries. A post-order traversal pushes flow
/// towards coarser separators while recording (cell, first downstream
/// separator cell) pointers on a device-resident stack; the reverse
/// traversal pops them to push boundary inflow back down. base_side
/// selects the leaf size and must be a power of two plus one (2, 3, 5,
/// 9, 17, ...). Knows nothing about M or B.
AccumResult cache_oblivious_accumulation(BlockDevice& dev, GridDims dims,
                                         Layout layout, std::uint32_t base_side = 17);

}  // namespace emgrid

#endif
