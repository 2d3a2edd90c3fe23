#ifndef EMGRID_TERRAIN_HPP
#define EMGRID_TERRAIN_HPP

#include <span>
#include <vector>

#include "emgrid/grid.hpp"

namespace emgrid {

struct MeanderParams {
  std::uint64_t n = 0;  // grid side; the grid has n*n cells
  double c1 = 0.125;    // meander count coefficient: about c1*n meanders
  double c2 = 0.25;     // amplitude coefficient: legs span about c2*n rows
};

struct MeanderResult {
  FlowDirGrid fd;
  ElevationGrid elev;
  std::uint64_t river_cells = 0;
};

/// Serpentine river entering at the lower right, meandering right to left
/// with c1*n vertical legs of amplitude c2*n, and draining at the upper
/// left. Every off-river cell flows to the nearest river cell along a
/// shortest 8-neighbour path. The elevation field descends strictly along
/// every flow edge and rises away from the river.
MeanderResult gen_meander(const MeanderParams& params);

/// Deterministic random drainage: multi-outlet randomized tree growth from
/// a few sink seeds, so branches merge into rivers. Always acyclic.
FlowDirGrid gen_random_drainage(GridDims dims, std::uint64_t seed);

/// First far cells of the d x d square with top-left corner `q`: follow
/// the downstream path of every cell of Q and collect the first cell it
/// touches on the boundary ring of the centred 3d x 3d square Q'. Paths
/// that end inside Q' without touching the ring contribute nothing.
/// Throws OutOfBounds when Q' does not fit in the grid.
std::vector<CellRef> first_far_cells(const FlowDirGrid& fd, CellRef q, std::uint64_t d);

struct ConfluenceSampling {
  std::uint64_t max_samples_per_window = 0;  // 0 = every aligned square
  std::uint64_t seed = 0;
};

struct ConfluenceReport {
  struct Window {
    std::uint64_t d = 0;
    std::uint64_t max = 0;
    std::uint64_t p50 = 0;
    std::uint64_t p99 = 0;
    std::uint64_t samples = 0;
  };
  std::vector<Window> windows;
  std::uint64_t gamma_hat = 0;  // max over all windows
};

/// Evaluates first_far_cells over aligned squares for each window size
/// and reports the count distribution per size.
ConfluenceReport estimate_confluence(const FlowDirGrid& fd,
                                     std::span<const std::uint64_t> window_sizes,
                                     const ConfluenceSampling& sampling = {});

}  // namespace emgrid

#endif
