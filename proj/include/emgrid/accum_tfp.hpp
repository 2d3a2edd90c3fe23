#ifndef EMGRID_ACCUM_TFP_HPP
#define EMGRID_ACCUM_TFP_HPP

#include <vector>

#include "emgrid/accum_naive.hpp"

namespace emgrid {

/// Topological numbers for the non-NoData cells, bijective onto
/// [0, data_cells). UINT64_MAX marks NoData slots.
struct TopoNumbering {
  GridDims dims;
  std::vector<std::uint64_t> numbers;  // row-major
  std::uint64_t data_cells = 0;
};

inline constexpr std::uint64_t kNoTopo = ~0ull;

/// In-degree peeling with row-major tie order among ready cells, so the
/// numbering is deterministic. Throws CycleError on cyclic directions.
TopoNumbering topological_numbering(const FlowDirGrid& fd);

struct TfpOptions {
  std::optional<std::uint64_t> memory_bytes;  // run size for the external sorts
  std::optional<std::uint64_t> block_bytes;
  /// Entries held by the priority queue beyond this budget are mirrored
  /// through a device region (written once on insert, read once on
  /// extract), the disk-backed regime of the pessimistic scenario.
  std::uint64_t pq_budget_bytes = ~0ull;
  /// Test instrumentation: queue extractions per processed cell, indexed
  /// by row-major cell location.
  std::vector<std::uint32_t>* extractions = nullptr;
};

/// Time-forward processing: streams cells in topological order, carrying
/// flow to each cell's out-neighbour through a priority queue keyed by the
/// neighbour's topological number. Builds the (location, topo, out-topo)
/// record stream by scanning FlowDir and the number grid with a 3x3
/// window, merge-sorts it by topo number, sweeps it, and finally sorts the
/// (location, flow) output back into grid order.
AccumResult tfp_accumulation(BlockDevice& dev, GridDims dims, Layout layout,
                             const TopoNumbering& topo, const TfpOptions& options = {});

enum class TfpScenario : std::uint8_t {
  Optimistic = 0,   // B=2^14, 1/3 data cells, 2-pass sorts, queue in memory
  Pessimistic = 1,  // B=2^16, all cells data, 3-pass sorts, queue on disk
};

struct TfpVolumePrediction {
  double bytes_per_cell = 0;
  double overhead_factor = 0;  // relative to the 9 bytes/cell input+output
  std::vector<std::pair<std::string, double>> components;
};

/// Component-wise I/O volume accounting for the two scenarios.
TfpVolumePrediction predicted_tfp_io_volume(TfpScenario scenario);

}  // namespace emgrid

#endif
