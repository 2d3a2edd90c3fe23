#include "emgrid/accum_naive.hpp"

#include <vector>

#include "emgrid/grid_io.hpp"
#include "emgrid/zorder.hpp"
#include "device_grid.hpp"

namespace emgrid {

BlockDevice make_flowdir_device(const FlowDirGrid& fd, const DeviceConfig& config) {
  const std::vector<std::byte> payload = payload_bytes(fd);
  BlockDevice dev = BlockDevice::in_memory(payload.size(), config);
  dev.raw_write(0, payload);
  return dev;
}

namespace {

// Every in-neighbour of `slot` delivered already? In-neighbours are the
// neighbours whose direction byte points back at us.
bool in_neighbors_marked(const FlowDirView& fd, const FlowAccView& acc,
                         std::uint64_t slot) {
  for (Direction d : kFlowDirections) {
    const auto n = fd.neighbor_slot(slot, d);
    if (!n) continue;
    const Direction nd = fd.dir_at(*n);
    if (is_flow(nd) && nd == opposite(d) && !acc.marked(*n)) return false;
  }
  return true;
}

FlowAccGrid materialize_flowacc(BlockDevice& dev, std::uint64_t region,
                                GridDims dims, Layout layout) {
  std::vector<std::byte> payload(dims.cell_count() * 8);
  dev.raw_read(region, payload);
  return flowacc_from_payload(dims, layout, payload);
}

}  // namespace

AccumResult naive_accumulation(BlockDevice& dev, GridDims dims, Layout layout,
                               TraversalOrder order) {
  check_dims(dims);
  const std::uint64_t n = dims.cell_count();
  if (dev.size() < n)
    throw_error(errc::invalid_argument, "device lacks the flow-direction payload");

  SegmentTables tables_storage;
  const SegmentTables* tables = nullptr;
  if (layout == Layout::ZOrder || order == TraversalOrder::ZOrderTraversal) {
    tables_storage = SegmentTables::build(dims);
    tables = &tables_storage;
  }

  const std::uint64_t acc_region = dev.extend(n * 8);
  FlowDirView fd(dev, 0, dims, layout, 1, tables);
  FlowAccView acc(dev, acc_region, dims, layout, 8, tables);

  // Flow value 1 and clear mark everywhere; NoData cells stay at 0.
  for (std::uint64_t slot = 0; slot < n; ++slot)
    acc.raw_set(slot, fd.dir_at(slot) == Direction::NoData ? 0 : 1);

  const std::uint64_t step_limit = 4 * n + 8;
  std::uint64_t steps = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t slot = i;
    if (order == TraversalOrder::ZOrderTraversal && layout == Layout::RowMajor) {
      const CellRef c = tables->cell_at(i);
      slot = c.row * dims.width + c.col;
    } else if (order == TraversalOrder::RowByRow && layout == Layout::ZOrder) {
      slot = tables->offset_of(CellRef{i / dims.width, i % dims.width});
    }
    if (fd.dir_at(slot) == Direction::NoData) continue;
    if (acc.marked(slot)) continue;

    std::uint64_t d = slot;
    while (true) {
      const Direction dir = fd.dir_at(d);
      if (!is_flow(dir)) break;
      const auto out = fd.neighbor_slot(d, dir);
      if (!out) break;
      if (!in_neighbors_marked(fd, acc, d)) break;
      if (++steps > step_limit)
        throw_error(errc::non_terminating,
                    "flow forwarding exceeded 4N steps; directions contain a cycle");
      acc.mark(d);
      acc.add(*out, acc.value_at(d));
      d = *out;
    }
  }

  // Strip marking bits before the values leave the device. A cell that has
  // an out-neighbour but never got marked can only sit on a cycle that
  // slipped validation: in an acyclic grid the walk reaches every such cell
  // after its last in-neighbour delivers.
  for (std::uint64_t slot = 0; slot < n; ++slot) {
    const std::uint64_t raw = acc.raw_at(slot);
    if (raw & FlowAccView::kMarkBit) {
      acc.raw_set(slot, raw & ~FlowAccView::kMarkBit);
    } else {
      const Direction dir = fd.dir_at(slot);
      if (is_flow(dir) && fd.neighbor_slot(slot, dir))
        throw_error(errc::non_terminating,
                    "unforwarded flow left behind; directions contain a cycle");
    }
  }

  AccumResult result;
  result.stats = dev.flush();
  result.acc = materialize_flowacc(dev, acc_region, dims, layout);
  return result;
}

FlowAccGrid brute_force_accumulation(const FlowDirGrid& fd) {
  const GridDims dims = fd.dims;
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;
  FlowAccGrid acc(dims, fd.layout, 0);

  // Precompute out-slot per cell so the walks below are pointer chasing.
  constexpr std::uint64_t kStop = ~0ull;
  std::vector<std::uint64_t> out(n, kStop);
  for (std::uint64_t i = 0; i < n; ++i) {
    const Direction d = fd.cells[i];
    if (!is_flow(d)) continue;
    const auto nb = out_neighbor(dims, CellRef{i / w, i % w}, d);
    if (nb) out[i] = nb->row * w + nb->col;
  }

  for (std::uint64_t i = 0; i < n; ++i) {
    if (fd.cells[i] == Direction::NoData) continue;
    std::uint64_t cur = i;
    while (cur != kStop) {
      ++acc.cells[cur];
      cur = out[cur];
    }
  }
  return acc;
}

}  // namespace emgrid
