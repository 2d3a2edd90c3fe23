#include "emgrid/accum_separator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <vector>

#include "emgrid/grid_io.hpp"
#include "emgrid/zorder.hpp"
#include "device_grid.hpp"

namespace emgrid {

namespace {

constexpr std::uint64_t kUndef = ~0ull;

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

bool subgrid_inequality_holds(std::uint64_t z, std::uint64_t M, std::uint64_t B) {
  const std::uint64_t acc_rows = z * ceil_div(8 * z, B);
  const std::uint64_t dir_rows = z * ceil_div(z, B);
  const std::uint64_t s_rows = 8 * ceil_div(8 * z, B);
  return acc_rows + dir_rows + s_rows <= M / B;
}

// ---------------------------------------------------------------------------
// Local subgrid workspace. Cells are addressed by (local row, local col)
// within a clipped rectangle; the ring is the rectangle edge in the
// decomposition's frame (which may lie outside the real grid).

struct LocalGrid {
  std::uint64_t row0 = 0, col0 = 0;  // global origin
  std::uint64_t rows = 0, cols = 0;  // clipped extent
  std::vector<Direction> dir;
  std::vector<std::uint64_t> value;
  std::vector<std::uint8_t> ring;  // 1 = separator cell of this subgrid

  std::uint64_t idx(std::uint64_t lr, std::uint64_t lc) const { return lr * cols + lc; }
  bool exists(std::uint64_t i) const { return dir[i] != Direction::NoData; }

  // local out-neighbour, or kUndef when the flow leaves the rectangle or
  // the cell has no out-neighbour
  std::uint64_t local_out(std::uint64_t i) const {
    const Direction d = dir[i];
    if (!is_flow(d)) return kUndef;
    const std::uint64_t lr = i / cols, lc = i % cols;
    const int drow = kRowStep[static_cast<std::uint8_t>(d)];
    const int dcol = kColStep[static_cast<std::uint8_t>(d)];
    if (drow < 0 && lr == 0) return kUndef;
    if (dcol < 0 && lc == 0) return kUndef;
    const std::uint64_t nr = lr + static_cast<std::uint64_t>(drow);
    const std::uint64_t nc = lc + static_cast<std::uint64_t>(dcol);
    if (nr >= rows || nc >= cols) return kUndef;
    return idx(nr, nc);
  }
};

// Reads the flow directions of a clipped rectangle; whole rows at a time
// on row-major payloads, cell by cell otherwise.
void load_local_dirs(const FlowDirView& fd, LocalGrid& local) {
  local.dir.resize(local.rows * local.cols);
  if (fd.layout() == Layout::RowMajor) {
    std::vector<std::byte> row(local.cols);
    for (std::uint64_t lr = 0; lr < local.rows; ++lr) {
      const std::uint64_t slot = (local.row0 + lr) * fd.dims().width + local.col0;
      fd.device().read_bytes(fd.byte_at(slot), row);
      for (std::uint64_t lc = 0; lc < local.cols; ++lc)
        local.dir[local.idx(lr, lc)] =
            decode_direction(std::to_integer<std::uint8_t>(row[lc]));
    }
  } else {
    for (std::uint64_t lr = 0; lr < local.rows; ++lr)
      for (std::uint64_t lc = 0; lc < local.cols; ++lc)
        local.dir[local.idx(lr, lc)] =
            fd.dir_at(fd.slot_of(CellRef{local.row0 + lr, local.col0 + lc}));
  }
}

// First ring cell on the downstream path of every cell, kUndef where the
// path dies inside the rectangle. Path compression keeps this linear.
std::vector<std::uint64_t> first_ring_hit(const LocalGrid& local) {
  const std::uint64_t n = local.rows * local.cols;
  constexpr std::uint64_t kUnknown = ~0ull - 1;
  std::vector<std::uint64_t> hit(n, kUnknown);
  std::vector<std::uint64_t> path;
  for (std::uint64_t start = 0; start < n; ++start) {
    if (hit[start] != kUnknown) continue;
    if (!local.exists(start)) {
      hit[start] = kUndef;
      continue;
    }
    path.clear();
    std::uint64_t cur = start;
    std::uint64_t result = kUndef;
    while (true) {
      if (local.ring[cur]) {
        result = cur;
        break;
      }
      if (hit[cur] != kUnknown) {
        result = hit[cur];
        break;
      }
      path.push_back(cur);
      hit[cur] = kUndef;  // breaks would-be cycles; overwritten below
      const std::uint64_t next = local.local_out(cur);
      if (next == kUndef) {
        result = kUndef;
        break;
      }
      cur = next;
    }
    for (std::uint64_t cell : path) hit[cell] = result;
  }
  return hit;
}

// Marking-loop accumulation over the interior of a subgrid. Interior data
// cells forward their running total to their local out-neighbour; ring
// cells never forward and never receive: forwarding stops on the last
// interior cell, since ring totals are settled by phase two.
void accumulate_interior(LocalGrid& local) {
  const std::uint64_t n = local.rows * local.cols;
  std::vector<std::uint8_t> marked(n, 0);

  auto interior_in_neighbors_marked = [&](std::uint64_t i) {
    const std::uint64_t lr = i / local.cols, lc = i % local.cols;
    for (Direction d : kFlowDirections) {
      const int drow = kRowStep[static_cast<std::uint8_t>(d)];
      const int dcol = kColStep[static_cast<std::uint8_t>(d)];
      if (drow < 0 && lr == 0) continue;
      if (dcol < 0 && lc == 0) continue;
      const std::uint64_t nr = lr + static_cast<std::uint64_t>(drow);
      const std::uint64_t nc = lc + static_cast<std::uint64_t>(dcol);
      if (nr >= local.rows || nc >= local.cols) continue;
      const std::uint64_t u = local.idx(nr, nc);
      if (local.ring[u]) continue;
      if (local.dir[u] == opposite(d) && !marked[u]) return false;
    }
    return true;
  };

  for (std::uint64_t i = 0; i < n; ++i) {
    if (local.ring[i] || !local.exists(i) || marked[i]) continue;
    std::uint64_t d = i;
    while (true) {
      if (local.ring[d] || marked[d]) break;
      const std::uint64_t out = local.local_out(d);
      if (out == kUndef) break;
      if (!interior_in_neighbors_marked(d)) break;
      marked[d] = 1;
      if (local.ring[out]) break;
      local.value[out] += local.value[d];
      d = out;
    }
  }
}

// ---------------------------------------------------------------------------
// In-memory accumulation over the separator graph (phase two): the plain
// marking loop on values[] with out[] edges.

void accumulate_separator_graph(std::vector<std::uint64_t>& value,
                                const std::vector<std::uint64_t>& out) {
  const std::uint64_t n = value.size();
  std::vector<std::uint32_t> unmarked_in(n, 0);
  for (std::uint64_t i = 0; i < n; ++i)
    if (out[i] != kUndef) ++unmarked_in[out[i]];
  std::vector<std::uint8_t> marked(n, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t d = i;
    while (!marked[d] && unmarked_in[d] == 0 && out[d] != kUndef) {
      marked[d] = 1;
      value[out[d]] += value[d];
      --unmarked_in[out[d]];
      d = out[d];
    }
  }
}

}  // namespace

std::uint64_t choose_subgrid_size(std::uint64_t memory_bytes, std::uint64_t block_bytes) {
  if (block_bytes == 0 || memory_bytes < 2 * block_bytes)
    throw_error(errc::invalid_argument, "need B >= 1 and M >= 2B");
  const double ratio = 8.0 * static_cast<double>(memory_bytes) /
                       (static_cast<double>(block_bytes) * static_cast<double>(block_bytes));
  std::uint64_t z = static_cast<std::uint64_t>(
      std::floor((std::sqrt(1.0 + ratio) - 1.0) * static_cast<double>(block_bytes) / 9.0));
  while (z >= 3 && !subgrid_inequality_holds(z, memory_bytes, block_bytes)) --z;
  if (z < 3)
    throw_error(errc::too_small_memory,
                "no subgrid of side >= 3 fits in M=" + std::to_string(memory_bytes) +
                    " with B=" + std::to_string(block_bytes));
  return z;
}

namespace {

// Default side for measured runs: the largest power of two p with p <= B/8
// and p+1 within the chosen budget, plus one. With (z-1)*8 dividing B,
// subgrid rows repeat the same block alignment no matter how wide the
// grid is, so per-subgrid transfer counts are a constant of (M, B).
std::uint64_t default_shared_side(std::uint64_t memory_bytes, std::uint64_t block_bytes) {
  const std::uint64_t budget = choose_subgrid_size(memory_bytes, block_bytes);
  if (block_bytes % 8 == 0) {
    const std::uint64_t cells = block_bytes / 8;
    if (cells >= 2 && (cells & (cells - 1)) == 0) {
      std::uint64_t p = 1;
      while (p * 2 <= std::min(budget - 1, cells)) p *= 2;
      if (p >= 2) return p + 1;
    }
  }
  return budget;
}

}  // namespace

double predicted_io_overhead(std::uint64_t memory_bytes, std::uint64_t block_bytes) {
  if (memory_bytes == 0 || block_bytes == 0)
    throw_error(errc::domain_error, "M and B must be positive");
  const double ratio = 8.0 * static_cast<double>(memory_bytes) /
                       (static_cast<double>(block_bytes) * static_cast<double>(block_bytes));
  return 10.0 / 9.0 + 4.0 / (std::sqrt(ratio + 1.0) - 1.0);
}

// ---------------------------------------------------------------------------
// Shared-boundary decomposition (row-major files)

namespace {

// Separator bookkeeping for the shared-boundary decomposition: boundary
// rows sit at multiples of z-1 plus the last row, and likewise for
// columns. The canonical enumeration stores the full separator rows first
// (row by row), then the leftover cells of separator columns (column by
// column), which keeps the pieces a subgrid needs contiguous.
struct SharedSeparator {
  GridDims dims;
  std::uint64_t z = 0;
  std::vector<std::uint64_t> sep_rows, sep_cols;    // sorted positions
  std::vector<std::uint64_t> row_ord, col_ord;      // position -> ordinal among separators, kUndef otherwise
  std::vector<std::uint64_t> row_rank;              // position -> rank among non-separator rows
  std::uint64_t col_section_base = 0;               // first S index of the column section
  std::uint64_t non_sep_rows = 0;

  static SharedSeparator build(GridDims dims, std::uint64_t z) {
    SharedSeparator s;
    s.dims = dims;
    s.z = z;
    auto lines = [&](std::uint64_t extent) {
      std::vector<std::uint64_t> out;
      for (std::uint64_t p = 0; p + 1 < extent; p += z - 1) out.push_back(p);
      out.push_back(extent - 1);
      return out;
    };
    s.sep_rows = lines(dims.height);
    s.sep_cols = lines(dims.width);
    s.row_ord.assign(dims.height, kUndef);
    s.col_ord.assign(dims.width, kUndef);
    for (std::uint64_t i = 0; i < s.sep_rows.size(); ++i) s.row_ord[s.sep_rows[i]] = i;
    for (std::uint64_t i = 0; i < s.sep_cols.size(); ++i) s.col_ord[s.sep_cols[i]] = i;
    s.row_rank.assign(dims.height, kUndef);
    std::uint64_t rank = 0;
    for (std::uint64_t r = 0; r < dims.height; ++r)
      if (s.row_ord[r] == kUndef) s.row_rank[r] = rank++;
    s.non_sep_rows = rank;
    s.col_section_base = s.sep_rows.size() * dims.width;
    return s;
  }

  bool contains(std::uint64_t r, std::uint64_t c) const {
    return row_ord[r] != kUndef || col_ord[c] != kUndef;
  }

  std::uint64_t cell_count() const {
    return col_section_base + sep_cols.size() * non_sep_rows;
  }

  std::uint64_t index_of(std::uint64_t r, std::uint64_t c) const {
    if (row_ord[r] != kUndef) return row_ord[r] * dims.width + c;
    return col_section_base + col_ord[c] * non_sep_rows + row_rank[r];
  }

  CellRef cell_at(std::uint64_t s_index) const {
    if (s_index < col_section_base)
      return CellRef{sep_rows[s_index / dims.width], s_index % dims.width};
    const std::uint64_t rest = s_index - col_section_base;
    const std::uint64_t col = sep_cols[rest / non_sep_rows];
    const std::uint64_t rank = rest % non_sep_rows;
    // rank -> row: non-separator rows in order; linear scan is fine for
    // the enumeration used in tests, index_of is the hot direction.
    std::uint64_t seen = 0;
    for (std::uint64_t r = 0; r < dims.height; ++r) {
      if (row_ord[r] != kUndef) continue;
      if (seen++ == rank) return CellRef{r, col};
    }
    throw_error(errc::out_of_range, "separator index beyond enumeration");
  }
};

}  // namespace

std::uint64_t separator_cell_count(GridDims dims, std::uint64_t z) {
  return SharedSeparator::build(dims, z).cell_count();
}

AccumResult cache_aware_accumulation(BlockDevice& dev, GridDims dims, Layout layout,
                                     const SeparatorOptions& options,
                                     SeparatorDebug* debug) {
  check_dims(dims);
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t M = options.memory_bytes.value_or(dev.config().memory_bytes);
  const std::uint64_t B = options.block_bytes.value_or(dev.config().block_bytes);
  const std::uint64_t z = options.subgrid_side.value_or(default_shared_side(M, B));
  if (z < 3) throw_error(errc::too_small_memory, "subgrid side must be at least 3");

  SegmentTables tables_storage;
  const SegmentTables* tables = nullptr;
  if (layout == Layout::ZOrder) {
    tables_storage = SegmentTables::build(dims);
    tables = &tables_storage;
  }

  const SharedSeparator sep = SharedSeparator::build(dims, z);
  const std::uint64_t s_count = sep.cell_count();
  if (s_count * 16 > options.s_budget_bytes)
    throw_error(errc::phase_two_overflow,
                "separator set needs " + std::to_string(s_count * 16) +
                    " bytes in memory, budget is " + std::to_string(options.s_budget_bytes));

  const std::uint64_t acc_region = dev.extend(n * 8);
  const std::uint64_t sacc_region = dev.extend(s_count * 8);
  const std::uint64_t snb_region = dev.extend(s_count * 8);
  FlowDirView fd(dev, 0, dims, layout, 1, tables);
  FlowAccView acc(dev, acc_region, dims, layout, 8, tables);

  const bool pinning = options.pin_subgrids &&
                       dev.config().policy == CachePolicy::LRUWithPinning &&
                       layout == Layout::RowMajor;
  auto pin_dirs = [&](std::uint64_t r0, std::uint64_t rows, std::uint64_t c0,
                      std::uint64_t cols, bool pin) {
    if (!pinning) return;
    for (std::uint64_t lr = 0; lr < rows; ++lr) {
      const std::uint64_t off = (r0 + lr) * dims.width + c0;
      if (pin)
        dev.pin(off, cols);
      else
        dev.unpin(off, cols);
    }
  };

  // SFlowAcc cells are created by their owning subgrid in phase one (one
  // unit of rain plus the incoming interior flow, zero on NoData cells);
  // SNeighbours entries hold s-index + 1 so that untouched blocks read
  // back as "undefined".
  // after a band of subgrids, the separator buffers the band touched are
  // handed back so the next band pays for its own transfers
  auto release_separator_files = [&] {
    dev.release(sacc_region, s_count * 8);
    dev.release(snb_region, s_count * 8);
  };

  auto for_each_subgrid = [&](auto&& body) {
    std::uint64_t r0 = 0;
    while (true) {
      const std::uint64_t r1 = std::min(r0 + z - 1, dims.height - 1);
      std::uint64_t c0 = 0;
      while (true) {
        const std::uint64_t c1 = std::min(c0 + z - 1, dims.width - 1);
        body(r0, r1, c0, c1);
        if (c1 == dims.width - 1) break;
        c0 = c1;
      }
      release_separator_files();
      if (r1 == dims.height - 1) break;
      r0 = r1;
    }
  };

  auto make_local = [&](std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                        std::uint64_t c1) {
    LocalGrid local;
    local.row0 = r0;
    local.col0 = c0;
    local.rows = r1 - r0 + 1;
    local.cols = c1 - c0 + 1;
    load_local_dirs(fd, local);
    local.ring.assign(local.rows * local.cols, 0);
    for (std::uint64_t lr = 0; lr < local.rows; ++lr)
      for (std::uint64_t lc = 0; lc < local.cols; ++lc)
        if (sep.contains(r0 + lr, c0 + lc)) local.ring[local.idx(lr, lc)] = 1;
    return local;
  };

  // --- phase one: push interior rain to S, record local destinations ----
  for_each_subgrid([&](std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                       std::uint64_t c1) {
    pin_dirs(r0, r1 - r0 + 1, c0, c1 - c0 + 1, true);
    LocalGrid local = make_local(r0, r1, c0, c1);
    const std::vector<std::uint64_t> hit = first_ring_hit(local);

    // inflow delivered from this subgrid's interior to each ring cell
    std::unordered_map<std::uint64_t, std::uint64_t> inflow;
    for (std::uint64_t i = 0; i < local.rows * local.cols; ++i) {
      if (local.ring[i] || !local.exists(i)) continue;
      if (hit[i] != kUndef) ++inflow[hit[i]];
    }

    for (std::uint64_t i = 0; i < local.rows * local.cols; ++i) {
      if (!local.ring[i]) continue;
      const std::uint64_t gr = r0 + i / local.cols;
      const std::uint64_t gc = c0 + i % local.cols;
      const std::uint64_t s_idx = sep.index_of(gr, gc);
      // the top-left-most subgrid containing a shared cell runs first and
      // creates its record; later subgrids only add their inflow
      const bool owner = (gr > r0 || r0 == 0) && (gc > c0 || c0 == 0);
      if (!local.exists(i)) {
        if (owner) dev.write_u64(sacc_region + s_idx * 8, 0);
        continue;
      }
      std::uint64_t delta = owner ? 1 : 0;
      if (auto it = inflow.find(i); it != inflow.end()) delta += it->second;
      if (owner) {
        dev.write_u64(sacc_region + s_idx * 8, delta);
      } else if (delta > 0) {
        const std::uint64_t prev = dev.read_u64(sacc_region + s_idx * 8);
        dev.write_u64(sacc_region + s_idx * 8, prev + delta);
      }
      // local destination: first ring cell downstream when the flow stays
      // in this subgrid
      const std::uint64_t out = local.local_out(i);
      if (out == kUndef) continue;
      const std::uint64_t target = local.ring[out] ? out : hit[out];
      if (target != kUndef) {
        const std::uint64_t target_s =
            sep.index_of(r0 + target / local.cols, c0 + target % local.cols);
        dev.write_u64(snb_region + s_idx * 8, target_s + 1);
      }
    }
    pin_dirs(r0, r1 - r0 + 1, c0, c1 - c0 + 1, false);
  });

  // phase boundary: hand the phase-one working set back
  dev.release(0, n);
  dev.release(sacc_region, s_count * 8);
  dev.release(snb_region, s_count * 8);

  // --- phase two: accumulate over S in memory ---------------------------
  std::vector<std::uint64_t> s_value(s_count), s_out(s_count);
  for (std::uint64_t i = 0; i < s_count; ++i) s_value[i] = dev.read_u64(sacc_region + i * 8);
  for (std::uint64_t i = 0; i < s_count; ++i) {
    const std::uint64_t raw = dev.read_u64(snb_region + i * 8);
    s_out[i] = raw == 0 ? kUndef : raw - 1;
  }
  if (debug) {
    debug->s_cells.clear();
    for (std::uint64_t i = 0; i < s_count; ++i) debug->s_cells.push_back(sep.cell_at(i));
    debug->s_after_phase1 = s_value;
  }
  accumulate_separator_graph(s_value, s_out);
  for (std::uint64_t i = 0; i < s_count; ++i) dev.write_u64(sacc_region + i * 8, s_value[i]);
  dev.release(sacc_region, s_count * 8);

  // --- phase three: recompute interiors with separator inflow -----------
  for_each_subgrid([&](std::uint64_t r0, std::uint64_t r1, std::uint64_t c0,
                       std::uint64_t c1) {
    pin_dirs(r0, r1 - r0 + 1, c0, c1 - c0 + 1, true);
    LocalGrid local = make_local(r0, r1, c0, c1);
    const std::uint64_t cells = local.rows * local.cols;
    local.value.assign(cells, 0);

    for (std::uint64_t i = 0; i < cells; ++i)
      if (!local.ring[i] && local.exists(i)) local.value[i] = 1;

    // boundary cells take their phase-two totals and seed interior targets
    for (std::uint64_t i = 0; i < cells; ++i) {
      if (!local.ring[i] || !local.exists(i)) continue;
      const std::uint64_t s_idx =
          sep.index_of(r0 + i / local.cols, c0 + i % local.cols);
      const std::uint64_t total = dev.read_u64(sacc_region + s_idx * 8);
      local.value[i] = total;
      const std::uint64_t out = local.local_out(i);
      if (out != kUndef && !local.ring[out]) local.value[out] += total;
    }

    accumulate_interior(local);

    // write back the rows and columns this subgrid uniquely owns: its
    // bottom and right boundary lines are written by the neighbours with
    // identical values, so the output is written as an exact disjoint
    // tiling and every block is written once
    const std::uint64_t last_row = r1 == dims.height - 1 ? r1 : r1 - 1;
    const std::uint64_t last_col = c1 == dims.width - 1 ? c1 : c1 - 1;
    if (layout == Layout::RowMajor) {
      const std::uint64_t out_cols = last_col - c0 + 1;
      std::vector<std::byte> row(out_cols * 8);
      for (std::uint64_t gr = r0; gr <= last_row; ++gr) {
        std::memcpy(row.data(), local.value.data() + (gr - r0) * local.cols, out_cols * 8);
        dev.write_bytes(acc_region + (gr * dims.width + c0) * 8, row);
      }
    } else {
      for (std::uint64_t gr = r0; gr <= last_row; ++gr)
        for (std::uint64_t gc = c0; gc <= last_col; ++gc)
          acc.raw_set(acc.slot_of(CellRef{gr, gc}),
                      local.value[local.idx(gr - r0, gc - c0)]);
    }
    pin_dirs(r0, r1 - r0 + 1, c0, c1 - c0 + 1, false);
  });

  AccumResult result;
  result.stats = dev.flush();
  std::vector<std::byte> payload(n * 8);
  dev.raw_read(acc_region, payload);
  result.acc = flowacc_from_payload(dims, layout, payload);
  return result;
}

// ---------------------------------------------------------------------------
// Disjoint power-of-two decomposition (Z-order files)

namespace {

// Tiles of side z (a power of two) aligned to the Z-order recursion, so
// every tile is one contiguous range of the file. Separator records are
// laid out per tile in tile Z-order, ring cells row-major within a tile.
struct TileSeparator {
  GridDims dims;
  std::uint64_t z = 0;
  GridDims tile_dims;                     // tile grid extent
  std::vector<std::uint64_t> ring_base;   // per tile (z-file order of tiles)
  std::uint64_t total = 0;

  struct TileRect {
    std::uint64_t row0, col0, rows, cols;
    std::uint64_t ring_cells() const {
      if (rows == 1) return cols;
      if (cols == 1) return rows;
      return 2 * cols + 2 * (rows - 2);
    }
  };

  TileRect rect(std::uint64_t tr, std::uint64_t tc) const {
    TileRect r;
    r.row0 = tr * z;
    r.col0 = tc * z;
    r.rows = std::min(z, dims.height - r.row0);
    r.cols = std::min(z, dims.width - r.col0);
    return r;
  }

  static TileSeparator build(GridDims dims, std::uint64_t z,
                             const SegmentTables& tile_tables) {
    TileSeparator t;
    t.dims = dims;
    t.z = z;
    t.tile_dims = GridDims{ceil_div(dims.height, z), ceil_div(dims.width, z)};
    const std::uint64_t tiles = t.tile_dims.cell_count();
    t.ring_base.assign(tiles, 0);
    std::uint64_t pos = 0;
    for (std::uint64_t f = 0; f < tiles; ++f) {
      const CellRef tile = tile_tables.cell_at(f);
      t.ring_base[f] = pos;
      pos += t.rect(tile.row, tile.col).ring_cells();
    }
    t.total = pos;
    return t;
  }

  // rank of a ring cell inside its tile, row-major over the ring
  std::uint64_t ring_rank(const TileRect& r, std::uint64_t lr, std::uint64_t lc) const {
    if (lr == 0) return lc;
    if (r.rows == 1) return lc;
    if (lr == r.rows - 1)
      return r.cols + (r.rows >= 2 ? (r.rows - 2) * (r.cols == 1 ? 1 : 2) : 0) + lc;
    // middle row: left cell then right cell
    const std::uint64_t base = r.cols + (lr - 1) * (r.cols == 1 ? 1 : 2);
    return lc == 0 ? base : base + 1;
  }
};

}  // namespace

std::uint64_t separator_cell_count_z(GridDims dims, std::uint64_t z) {
  const GridDims tile_dims{ceil_div(dims.height, z), ceil_div(dims.width, z)};
  const SegmentTables tile_tables = SegmentTables::build(tile_dims);
  return TileSeparator::build(dims, z, tile_tables).total;
}

AccumResult cache_aware_accumulation_z(BlockDevice& dev, GridDims dims,
                                       const SeparatorOptions& options,
                                       SeparatorDebug* debug) {
  check_dims(dims);
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t M = options.memory_bytes.value_or(dev.config().memory_bytes);
  const std::uint64_t B = options.block_bytes.value_or(dev.config().block_bytes);
  std::uint64_t z = options.subgrid_side.value_or(0);
  if (z == 0) {
    const std::uint64_t shared = choose_subgrid_size(M, B);
    z = 1;
    while (z * 2 <= shared) z *= 2;
  }
  if (z < 2 || (z & (z - 1)) != 0)
    throw_error(errc::invalid_argument, "subgrid side must be a power of two >= 2");

  const SegmentTables tables = SegmentTables::build(dims);
  const GridDims tile_dims{ceil_div(dims.height, z), ceil_div(dims.width, z)};
  const SegmentTables tile_tables = SegmentTables::build(tile_dims);
  const TileSeparator sep = TileSeparator::build(dims, z, tile_tables);
  if (sep.total * 16 > options.s_budget_bytes)
    throw_error(errc::phase_two_overflow,
                "separator set needs " + std::to_string(sep.total * 16) +
                    " bytes in memory, budget is " + std::to_string(options.s_budget_bytes));

  const std::uint64_t acc_region = dev.extend(n * 8);
  const std::uint64_t sacc_region = dev.extend(sep.total * 8);
  const std::uint64_t snb_region = dev.extend(sep.total * 8);
  FlowDirView fd(dev, 0, dims, Layout::ZOrder, 1, &tables);

  const std::uint64_t tiles = tile_dims.cell_count();

  auto tile_file_range = [&](const TileSeparator::TileRect& r) {
    const std::uint64_t start = tables.offset_of(CellRef{r.row0, r.col0});
    return std::pair{start, r.rows * r.cols};
  };

  // ring s-index of a GLOBAL cell (may live in a neighbouring tile)
  auto s_index_of = [&](std::uint64_t gr, std::uint64_t gc) {
    const std::uint64_t tr = gr / z, tc = gc / z;
    const auto r = sep.rect(tr, tc);
    const std::uint64_t file = tile_tables.offset_of(CellRef{tr, tc});
    return sep.ring_base[file] + sep.ring_rank(r, gr - r.row0, gc - r.col0);
  };

  auto is_ring = [&](const TileSeparator::TileRect& r, std::uint64_t lr, std::uint64_t lc) {
    return lr == 0 || lc == 0 || lr == r.rows - 1 || lc == r.cols - 1;
  };

  // --- phase one: one Z-order scan over the tiles -----------------------
  for (std::uint64_t f = 0; f < tiles; ++f) {
    const CellRef tile = tile_tables.cell_at(f);
    const auto r = sep.rect(tile.row, tile.col);
    const auto [file_start, cell_count] = tile_file_range(r);

    // tile payload is one contiguous stretch of the Z-order file
    std::vector<std::byte> raw(cell_count);
    dev.read_direct(file_start, raw);
    LocalGrid local;
    local.row0 = r.row0;
    local.col0 = r.col0;
    local.rows = r.rows;
    local.cols = r.cols;
    local.dir.assign(cell_count, Direction::NoData);
    local.ring.assign(cell_count, 0);
    for (std::uint64_t p = 0; p < cell_count; ++p) {
      const CellRef c = tables.cell_at(file_start + p);
      local.dir[local.idx(c.row - r.row0, c.col - r.col0)] =
          decode_direction(std::to_integer<std::uint8_t>(raw[p]));
    }
    for (std::uint64_t lr = 0; lr < r.rows; ++lr)
      for (std::uint64_t lc = 0; lc < r.cols; ++lc)
        if (is_ring(r, lr, lc)) local.ring[local.idx(lr, lc)] = 1;

    const std::vector<std::uint64_t> hit = first_ring_hit(local);
    std::unordered_map<std::uint64_t, std::uint64_t> inflow;
    for (std::uint64_t i = 0; i < cell_count; ++i) {
      if (local.ring[i] || !local.exists(i)) continue;
      if (hit[i] != kUndef) ++inflow[hit[i]];
    }

    // emit this tile's ring records as two contiguous runs
    const std::uint64_t base = sep.ring_base[f];
    const std::uint64_t ring_cells = r.ring_cells();
    std::vector<std::uint64_t> ring_value(ring_cells, 0), ring_nb(ring_cells, kUndef);
    for (std::uint64_t lr = 0; lr < r.rows; ++lr) {
      for (std::uint64_t lc = 0; lc < r.cols; ++lc) {
        if (!is_ring(r, lr, lc)) continue;
        const std::uint64_t i = local.idx(lr, lc);
        const std::uint64_t rank = sep.ring_rank(r, lr, lc);
        if (!local.exists(i)) continue;
        std::uint64_t v = 1;
        if (auto it = inflow.find(i); it != inflow.end()) v += it->second;
        ring_value[rank] = v;

        const Direction d = local.dir[i];
        if (!is_flow(d)) continue;
        const std::uint64_t out_local = local.local_out(i);
        if (out_local != kUndef) {
          const std::uint64_t target = local.ring[out_local] ? out_local : hit[out_local];
          if (target != kUndef)
            ring_nb[rank] = base + sep.ring_rank(r, target / local.cols, target % local.cols);
        } else {
          // crossing into a neighbouring tile: the neighbour cell is on
          // that tile's ring, hence itself a separator cell
          const std::uint64_t gr = r.row0 + lr, gc = r.col0 + lc;
          const auto nb = out_neighbor(dims, CellRef{gr, gc}, d);
          if (nb) ring_nb[rank] = s_index_of(nb->row, nb->col);
        }
      }
    }
    dev.write_bytes(sacc_region + base * 8,
                    std::span(reinterpret_cast<const std::byte*>(ring_value.data()),
                              ring_cells * 8));
    dev.write_bytes(snb_region + base * 8,
                    std::span(reinterpret_cast<const std::byte*>(ring_nb.data()),
                              ring_cells * 8));
  }

  // phase boundary: drop the separator buffers
  dev.release(sacc_region, sep.total * 8);
  dev.release(snb_region, sep.total * 8);

  // --- phase two ---------------------------------------------------------
  std::vector<std::uint64_t> s_value(sep.total), s_out(sep.total);
  dev.read_bytes(sacc_region, std::span(reinterpret_cast<std::byte*>(s_value.data()),
                                        sep.total * 8));
  dev.read_bytes(snb_region, std::span(reinterpret_cast<std::byte*>(s_out.data()),
                                       sep.total * 8));
  if (debug) {
    debug->s_cells.clear();
    debug->s_cells.resize(sep.total);
    for (std::uint64_t f = 0; f < tiles; ++f) {
      const CellRef tile = tile_tables.cell_at(f);
      const auto r = sep.rect(tile.row, tile.col);
      for (std::uint64_t lr = 0; lr < r.rows; ++lr)
        for (std::uint64_t lc = 0; lc < r.cols; ++lc)
          if (is_ring(r, lr, lc))
            debug->s_cells[sep.ring_base[f] + sep.ring_rank(r, lr, lc)] =
                CellRef{r.row0 + lr, r.col0 + lc};
    }
    debug->s_after_phase1 = s_value;
  }
  accumulate_separator_graph(s_value, s_out);
  dev.write_bytes(sacc_region, std::span(reinterpret_cast<const std::byte*>(s_value.data()),
                                         sep.total * 8));
  dev.release(sacc_region, sep.total * 8);

  // --- phase three: second Z-order scan, one contiguous write per tile --
  for (std::uint64_t f = 0; f < tiles; ++f) {
    const CellRef tile = tile_tables.cell_at(f);
    const auto r = sep.rect(tile.row, tile.col);
    const auto [file_start, cell_count] = tile_file_range(r);

    std::vector<std::byte> raw(cell_count);
    dev.read_direct(file_start, raw);
    LocalGrid local;
    local.row0 = r.row0;
    local.col0 = r.col0;
    local.rows = r.rows;
    local.cols = r.cols;
    local.dir.assign(cell_count, Direction::NoData);
    local.ring.assign(cell_count, 0);
    local.value.assign(cell_count, 0);
    for (std::uint64_t p = 0; p < cell_count; ++p) {
      const CellRef c = tables.cell_at(file_start + p);
      local.dir[local.idx(c.row - r.row0, c.col - r.col0)] =
          decode_direction(std::to_integer<std::uint8_t>(raw[p]));
    }
    for (std::uint64_t lr = 0; lr < r.rows; ++lr)
      for (std::uint64_t lc = 0; lc < r.cols; ++lc)
        if (is_ring(r, lr, lc)) local.ring[local.idx(lr, lc)] = 1;

    const std::uint64_t base = sep.ring_base[f];
    std::vector<std::uint64_t> ring_total(r.ring_cells());
    dev.read_bytes(sacc_region + base * 8,
                   std::span(reinterpret_cast<std::byte*>(ring_total.data()),
                             ring_total.size() * 8));

    for (std::uint64_t i = 0; i < cell_count; ++i)
      if (!local.ring[i] && local.exists(i)) local.value[i] = 1;
    for (std::uint64_t lr = 0; lr < r.rows; ++lr) {
      for (std::uint64_t lc = 0; lc < r.cols; ++lc) {
        if (!is_ring(r, lr, lc)) continue;
        const std::uint64_t i = local.idx(lr, lc);
        if (!local.exists(i)) continue;
        const std::uint64_t total = ring_total[sep.ring_rank(r, lr, lc)];
        local.value[i] = total;
        const std::uint64_t out = local.local_out(i);
        if (out != kUndef && !local.ring[out]) local.value[out] += total;
      }
    }
    accumulate_interior(local);

    std::vector<std::uint64_t> out_cells(cell_count);
    for (std::uint64_t p = 0; p < cell_count; ++p) {
      const CellRef c = tables.cell_at(file_start + p);
      out_cells[p] = local.value[local.idx(c.row - r.row0, c.col - r.col0)];
    }
    dev.write_direct(acc_region + file_start * 8,
                     std::span(reinterpret_cast<const std::byte*>(out_cells.data()),
                               cell_count * 8));
  }

  AccumResult result;
  result.stats = dev.flush();
  std::vector<std::byte> payload(n * 8);
  dev.raw_read(acc_region, payload);
  result.acc = flowacc_from_payload(dims, Layout::ZOrder, payload);
  return result;
}

// ---------------------------------------------------------------------------
// Cache-oblivious hierarchy

namespace {

std::uint64_t pack_cell(std::uint64_t r, std::uint64_t c) { return (r << 32) | c; }
CellRef unpack_cell(std::uint64_t packed) {
  return CellRef{packed >> 32, packed & 0xffffffffull};
}

struct ObliviousState {
  GridDims dims;
  FlowDirView* fd = nullptr;
  FlowAccView* acc = nullptr;
  BlockDevice* dev = nullptr;
  std::uint32_t base_level = 0;

  std::uint64_t stack_region = 0;
  std::uint64_t stack_capacity = 0;  // bytes
  std::uint64_t stack_top = 0;       // record count
  std::uint64_t total_records = 0;
  std::vector<std::uint64_t> node_records;  // per node, post-order

  bool in_grid(std::uint64_t r, std::uint64_t c) const {
    return r < dims.height && c < dims.width;
  }
  Direction dir_of(std::uint64_t r, std::uint64_t c) const {
    return fd->dir_at(fd->slot_of(CellRef{r, c}));
  }
  std::uint64_t acc_read(std::uint64_t r, std::uint64_t c) const {
    return acc->raw_at(acc->slot_of(CellRef{r, c}));
  }
  void acc_write(std::uint64_t r, std::uint64_t c, std::uint64_t v) const {
    acc->raw_set(acc->slot_of(CellRef{r, c}), v);
  }

  void push_record(std::uint64_t src, std::uint64_t dst) {
    const std::uint64_t offset = stack_top * 16;
    if (offset + 16 > stack_capacity) {
      const std::uint64_t grow = std::max<std::uint64_t>(stack_capacity, 1 << 16);
      dev->extend(grow);
      stack_capacity += grow;
    }
    dev->write_u64(stack_region + offset, src);
    dev->write_u64(stack_region + offset + 8, dst);
    ++stack_top;
    ++total_records;
  }
  std::pair<std::uint64_t, std::uint64_t> pop_record() {
    --stack_top;
    const std::uint64_t offset = stack_top * 16;
    return {dev->read_u64(stack_region + offset), dev->read_u64(stack_region + offset + 8)};
  }
};

// S_j membership in the virtual (2^k+1)-frame: on a horizontal or
// vertical line whose coordinate is a multiple of 2^j.
bool on_level(std::uint64_t r, std::uint64_t c, std::uint32_t level) {
  const std::uint64_t mask = (1ull << level) - 1;
  return (r & mask) == 0 || (c & mask) == 0;
}

struct NodeRect {
  std::uint64_t row0, col0;
  std::uint32_t level;
  std::uint64_t side() const { return (1ull << level) + 1; }
  std::uint64_t row1() const { return row0 + (1ull << level); }
  std::uint64_t col1() const { return col0 + (1ull << level); }
  bool contains(std::uint64_t r, std::uint64_t c) const {
    return r >= row0 && r <= row1() && c >= col0 && c <= col1();
  }
  bool on_ring(std::uint64_t r, std::uint64_t c) const {
    return r == row0 || r == row1() || c == col0 || c == col1();
  }
};

// dest map: boundary cell (packed) -> first own-ring cell downstream
// (packed) for cells whose out-neighbour lies strictly inside the node;
// kUndef when the path dies inside.
using DestMap = std::unordered_map<std::uint64_t, std::uint64_t>;

// Enumerates the existing cells of the ring and the centre cross of an
// internal node, boundary first.
template <typename Fn>
void for_each_v_cell(const ObliviousState& st, const NodeRect& q, Fn&& fn) {
  const std::uint64_t half = 1ull << (q.level - 1);
  auto visit = [&](std::uint64_t r, std::uint64_t c, bool ring) {
    if (st.in_grid(r, c)) fn(r, c, ring);
  };
  for (std::uint64_t c = q.col0; c <= q.col1(); ++c) visit(q.row0, c, true);
  if (q.row1() != q.row0)
    for (std::uint64_t c = q.col0; c <= q.col1(); ++c) visit(q.row1(), c, true);
  for (std::uint64_t r = q.row0 + 1; r < q.row1(); ++r) {
    visit(r, q.col0, true);
    if (q.col1() != q.col0) visit(r, q.col1(), true);
  }
  // centre cross, centre cell once
  const std::uint64_t cr = q.row0 + half;
  const std::uint64_t cc = q.col0 + half;
  for (std::uint64_t c = q.col0 + 1; c < q.col1(); ++c) visit(cr, c, false);
  for (std::uint64_t r = q.row0 + 1; r < q.row1(); ++r)
    if (r != cr) visit(r, cc, false);
}

DestMap process_leaf_phase1(ObliviousState& st, const NodeRect& q) {
  DestMap dest;
  LocalGrid local;
  local.row0 = q.row0;
  local.col0 = q.col0;
  local.rows = std::min(q.row1(), st.dims.height - 1) - q.row0 + 1;
  local.cols = std::min(q.col1(), st.dims.width - 1) - q.col0 + 1;
  load_local_dirs(*st.fd, local);
  const std::uint64_t cells = local.rows * local.cols;
  local.ring.assign(cells, 0);
  for (std::uint64_t i = 0; i < cells; ++i) {
    const std::uint64_t r = q.row0 + i / local.cols;
    const std::uint64_t c = q.col0 + i % local.cols;
    if (q.on_ring(r, c)) local.ring[i] = 1;
  }

  const std::vector<std::uint64_t> hit = first_ring_hit(local);
  std::unordered_map<std::uint64_t, std::uint64_t> inflow;
  for (std::uint64_t i = 0; i < cells; ++i) {
    if (local.ring[i] || !local.exists(i)) continue;
    if (hit[i] != kUndef) ++inflow[hit[i]];
  }
  for (const auto& [ring_cell, amount] : inflow) {
    const std::uint64_t r = q.row0 + ring_cell / local.cols;
    const std::uint64_t c = q.col0 + ring_cell % local.cols;
    st.acc_write(r, c, st.acc_read(r, c) + amount);
  }
  for (std::uint64_t i = 0; i < cells; ++i) {
    if (!local.ring[i] || !local.exists(i)) continue;
    const std::uint64_t out = local.local_out(i);
    if (out == kUndef || local.ring[out]) continue;  // parent resolves these
    const std::uint64_t target = hit[out];
    const std::uint64_t r = q.row0 + i / local.cols;
    const std::uint64_t c = q.col0 + i % local.cols;
    if (target == kUndef) {
      dest[pack_cell(r, c)] = kUndef;
    } else {
      dest[pack_cell(r, c)] =
          pack_cell(q.row0 + target / local.cols, q.col0 + target % local.cols);
    }
  }
  return dest;
}

DestMap phase1(ObliviousState& st, const NodeRect& q);

DestMap process_internal_phase1(ObliviousState& st, const NodeRect& q,
                                std::array<DestMap, 4>& child_dest) {
  const std::uint32_t child_level = q.level - 1;
  const std::uint64_t half = 1ull << child_level;

  // hop(v) = first S_{i-1} cell downstream of v, resolved either directly
  // or through the child that owns out(v)
  std::unordered_map<std::uint64_t, std::uint64_t> hop;
  std::vector<std::uint64_t> v_cells;
  for_each_v_cell(st, q, [&](std::uint64_t r, std::uint64_t c, bool) {
    const Direction d = st.dir_of(r, c);
    if (d == Direction::NoData) return;
    v_cells.push_back(pack_cell(r, c));
    if (!is_flow(d)) return;
    const auto nb = out_neighbor(st.dims, CellRef{r, c}, d);
    if (!nb || !q.contains(nb->row, nb->col)) return;
    if (on_level(nb->row, nb->col, child_level)) {
      hop[pack_cell(r, c)] = pack_cell(nb->row, nb->col);
      return;
    }
    const std::size_t child = (nb->row >= q.row0 + half ? 2 : 0) +
                              (nb->col >= q.col0 + half ? 1 : 0);
    const auto it = child_dest[child].find(pack_cell(r, c));
    if (it != child_dest[child].end() && it->second != kUndef)
      hop[pack_cell(r, c)] = it->second;
  });

  // stack records for the reverse traversal
  std::uint64_t pushed = 0;
  for (std::uint64_t v : v_cells) {
    const auto it = hop.find(v);
    if (it == hop.end()) continue;
    st.push_record(v, it->second);
    ++pushed;
  }
  st.node_records.push_back(pushed);

  // chase hops to the node's own ring with path compression
  std::unordered_map<std::uint64_t, std::uint64_t> terminal;
  auto chase = [&](std::uint64_t start) {
    std::vector<std::uint64_t> path;
    std::uint64_t cur = start;
    std::uint64_t result = kUndef;
    while (true) {
      const CellRef cell = unpack_cell(cur);
      if (q.on_ring(cell.row, cell.col)) {
        result = cur;
        break;
      }
      if (auto it = terminal.find(cur); it != terminal.end()) {
        result = it->second;
        break;
      }
      path.push_back(cur);
      const auto it = hop.find(cur);
      if (it == hop.end()) break;
      cur = it->second;
    }
    for (std::uint64_t cell : path) terminal[cell] = result;
    return result;
  };

  // forward cross totals to the ring
  for (std::uint64_t v : v_cells) {
    const CellRef cell = unpack_cell(v);
    if (q.on_ring(cell.row, cell.col)) continue;
    const auto it = hop.find(v);
    if (it == hop.end()) continue;
    const std::uint64_t target = chase(it->second);
    if (target == kUndef) continue;
    const CellRef t = unpack_cell(target);
    st.acc_write(t.row, t.col, st.acc_read(t.row, t.col) + st.acc_read(cell.row, cell.col));
  }

  // dest map for the parent: ring cells whose flow dives into the interior
  DestMap dest;
  for (std::uint64_t v : v_cells) {
    const CellRef cell = unpack_cell(v);
    if (!q.on_ring(cell.row, cell.col)) continue;
    const Direction d = st.dir_of(cell.row, cell.col);
    if (!is_flow(d)) continue;
    const auto nb = out_neighbor(st.dims, cell, d);
    if (!nb || !q.contains(nb->row, nb->col) || q.on_ring(nb->row, nb->col)) continue;
    const auto it = hop.find(v);
    dest[v] = it == hop.end() ? kUndef : chase(it->second);
  }
  return dest;
}

DestMap phase1(ObliviousState& st, const NodeRect& q) {
  if (q.row0 >= st.dims.height || q.col0 >= st.dims.width) return {};
  if (q.level == st.base_level) return process_leaf_phase1(st, q);
  const std::uint64_t half = 1ull << (q.level - 1);
  std::array<DestMap, 4> child_dest;
  child_dest[0] = phase1(st, NodeRect{q.row0, q.col0, q.level - 1});
  child_dest[1] = phase1(st, NodeRect{q.row0, q.col0 + half, q.level - 1});
  child_dest[2] = phase1(st, NodeRect{q.row0 + half, q.col0, q.level - 1});
  child_dest[3] = phase1(st, NodeRect{q.row0 + half, q.col0 + half, q.level - 1});
  return process_internal_phase1(st, q, child_dest);
}

// Final accumulation over the outermost boundary: the root ring is not
// anyone's centre cross, so its along-the-ring flow is resolved here.
void finalize_root_ring(ObliviousState& st, const NodeRect& root, const DestMap& dest_root) {
  std::vector<std::uint64_t> ring;
  auto visit = [&](std::uint64_t r, std::uint64_t c) {
    if (st.in_grid(r, c) && st.dir_of(r, c) != Direction::NoData)
      ring.push_back(pack_cell(r, c));
  };
  for (std::uint64_t c = root.col0; c <= root.col1(); ++c) visit(root.row0, c);
  if (root.row1() != root.row0)
    for (std::uint64_t c = root.col0; c <= root.col1(); ++c) visit(root.row1(), c);
  for (std::uint64_t r = root.row0 + 1; r < root.row1(); ++r) {
    visit(r, root.col0);
    if (root.col1() != root.col0) visit(r, root.col1());
  }

  std::unordered_map<std::uint64_t, std::uint32_t> index;
  for (std::uint32_t i = 0; i < ring.size(); ++i) index[ring[i]] = i;

  std::vector<std::uint64_t> value(ring.size()), out(ring.size(), kUndef);
  for (std::uint32_t i = 0; i < ring.size(); ++i) {
    const CellRef cell = unpack_cell(ring[i]);
    value[i] = st.acc_read(cell.row, cell.col);
    const Direction d = st.dir_of(cell.row, cell.col);
    if (!is_flow(d)) continue;
    const auto nb = out_neighbor(st.dims, cell, d);
    if (!nb) continue;
    std::uint64_t target = kUndef;
    if (root.on_ring(nb->row, nb->col)) {
      target = pack_cell(nb->row, nb->col);
    } else if (auto it = dest_root.find(ring[i]); it != dest_root.end()) {
      target = it->second;
    }
    if (target != kUndef)
      if (auto it = index.find(target); it != index.end()) out[i] = it->second;
  }
  accumulate_separator_graph(value, out);
  for (std::uint32_t i = 0; i < ring.size(); ++i) {
    const CellRef cell = unpack_cell(ring[i]);
    st.acc_write(cell.row, cell.col, value[i]);
  }
}

void process_leaf_phase2(ObliviousState& st, const NodeRect& q) {
  LocalGrid local;
  local.row0 = q.row0;
  local.col0 = q.col0;
  local.rows = std::min(q.row1(), st.dims.height - 1) - q.row0 + 1;
  local.cols = std::min(q.col1(), st.dims.width - 1) - q.col0 + 1;
  load_local_dirs(*st.fd, local);
  const std::uint64_t cells = local.rows * local.cols;
  local.ring.assign(cells, 0);
  local.value.assign(cells, 0);
  for (std::uint64_t i = 0; i < cells; ++i) {
    const std::uint64_t r = q.row0 + i / local.cols;
    const std::uint64_t c = q.col0 + i % local.cols;
    if (q.on_ring(r, c)) local.ring[i] = 1;
  }
  for (std::uint64_t i = 0; i < cells; ++i)
    if (!local.ring[i] && local.exists(i)) local.value[i] = 1;
  for (std::uint64_t i = 0; i < cells; ++i) {
    if (!local.ring[i] || !local.exists(i)) continue;
    const std::uint64_t total =
        st.acc_read(q.row0 + i / local.cols, q.col0 + i % local.cols);
    local.value[i] = total;
    const std::uint64_t out = local.local_out(i);
    if (out != kUndef && !local.ring[out]) local.value[out] += total;
  }
  accumulate_interior(local);
  for (std::uint64_t i = 0; i < cells; ++i) {
    if (local.ring[i] || !local.exists(i)) continue;
    st.acc_write(q.row0 + i / local.cols, q.col0 + i % local.cols, local.value[i]);
  }
}

void phase2(ObliviousState& st, const NodeRect& q) {
  if (q.row0 >= st.dims.height || q.col0 >= st.dims.width) return;
  if (q.level == st.base_level) {
    process_leaf_phase2(st, q);
    return;
  }

  const std::uint64_t expected = st.node_records.back();
  st.node_records.pop_back();
  std::unordered_map<std::uint64_t, std::uint64_t> hop;
  hop.reserve(expected);
  for (std::uint64_t i = 0; i < expected; ++i) {
    const auto [src, dst] = st.pop_record();
    hop.emplace(src, dst);
  }

  // finalize the centre cross using final ring values plus the popped hops
  const std::uint32_t child_level = q.level - 1;
  std::unordered_map<std::uint64_t, std::uint64_t> pending_value;
  std::unordered_map<std::uint64_t, std::uint32_t> pending_preds;
  std::vector<std::uint64_t> cross;
  for_each_v_cell(st, q, [&](std::uint64_t r, std::uint64_t c, bool ring) {
    if (st.dir_of(r, c) == Direction::NoData) return;
    if (!ring) cross.push_back(pack_cell(r, c));
  });
  for (std::uint64_t p : cross) {
    pending_value.emplace(p, 0);
    pending_preds.emplace(p, 0);
  }
  for_each_v_cell(st, q, [&](std::uint64_t r, std::uint64_t c, bool ring) {
    const std::uint64_t v = pack_cell(r, c);
    const auto it = hop.find(v);
    if (it == hop.end()) return;
    const auto target = pending_preds.find(it->second);
    if (target == pending_preds.end()) return;  // hop into the ring
    if (ring) {
      pending_value[it->second] += st.acc_read(r, c);
    } else {
      ++target->second;
    }
  });

  std::vector<std::uint64_t> ready;
  for (std::uint64_t p : cross)
    if (pending_preds[p] == 0) ready.push_back(p);
  std::uint64_t finalized = 0;
  while (!ready.empty()) {
    const std::uint64_t p = ready.back();
    ready.pop_back();
    const CellRef cell = unpack_cell(p);
    const std::uint64_t final_value = st.acc_read(cell.row, cell.col) + pending_value[p];
    st.acc_write(cell.row, cell.col, final_value);
    ++finalized;
    const auto it = hop.find(p);
    if (it != hop.end()) {
      const auto target = pending_preds.find(it->second);
      if (target != pending_preds.end()) {
        pending_value[it->second] += final_value;
        if (--target->second == 0) ready.push_back(it->second);
      }
    }
  }
  if (finalized != cross.size())
    throw_error(errc::non_terminating,
                "separator graph did not settle; directions contain a cycle");

  const std::uint64_t half = 1ull << child_level;
  phase2(st, NodeRect{q.row0 + half, q.col0 + half, child_level});
  phase2(st, NodeRect{q.row0 + half, q.col0, child_level});
  phase2(st, NodeRect{q.row0, q.col0 + half, child_level});
  phase2(st, NodeRect{q.row0, q.col0, child_level});
}

}  // namespace

AccumResult cache_oblivious_accumulation(BlockDevice& dev, GridDims dims,
                                         Layout layout, std::uint32_t base_side) {
  check_dims(dims);
  if (base_side < 2 || ((base_side - 1) & (base_side - 2)) != 0)
    throw_error(errc::invalid_argument,
                "base side must be a power of two plus one (2, 3, 5, 9, 17, ...)");
  const std::uint64_t n = dims.cell_count();

  std::uint32_t base_level = 0;
  while ((1ull << (base_level + 1)) < base_side) ++base_level;

  std::uint32_t top_level = base_level;
  while ((1ull << top_level) + 1 < std::max(dims.height, dims.width)) ++top_level;

  SegmentTables tables_storage;
  const SegmentTables* tables = nullptr;
  if (layout == Layout::ZOrder) {
    tables_storage = SegmentTables::build(dims);
    tables = &tables_storage;
  }

  const std::uint64_t acc_region = dev.extend(n * 8);
  FlowDirView fd(dev, 0, dims, layout, 1, tables);
  FlowAccView acc(dev, acc_region, dims, layout, 8, tables);

  ObliviousState st;
  st.dims = dims;
  st.fd = &fd;
  st.acc = &acc;
  st.dev = &dev;
  st.base_level = base_level;
  st.stack_region = dev.extend(1 << 16);
  st.stack_capacity = 1 << 16;

  // one unit of rain everywhere
  for (std::uint64_t slot = 0; slot < n; ++slot)
    acc.raw_set(slot, fd.dir_at(slot) == Direction::NoData ? 0 : 1);

  const NodeRect root{0, 0, top_level};
  DestMap dest_root = phase1(st, root);
  finalize_root_ring(st, root, dest_root);
  phase2(st, root);

  if (st.stack_top != 0)
    throw_error(errc::invalid_argument, "pointer stack not fully consumed");

  AccumResult result;
  result.stats = dev.flush();
  result.pointer_records = st.total_records;
  std::vector<std::byte> payload(n * 8);
  dev.raw_read(acc_region, payload);
  result.acc = flowacc_from_payload(dims, layout, payload);
  return result;
}

}  // namespace emgrid
