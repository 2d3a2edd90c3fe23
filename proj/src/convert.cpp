#include "emgrid/convert.hpp"

#include <algorithm>
#include <cstring>
#include <queue>
#include <vector>

#include "emgrid/zorder.hpp"

namespace emgrid {

namespace {

struct Record {
  std::uint64_t target = 0;
  std::array<std::byte, 8> cell{};
};
constexpr std::uint64_t kRecordBytes = 16;

void store_record(BlockDevice& dev, std::uint64_t offset, const Record& rec) {
  std::array<std::byte, kRecordBytes> buf{};
  std::memcpy(buf.data(), &rec.target, 8);
  std::memcpy(buf.data() + 8, rec.cell.data(), 8);
  dev.write_bytes(offset, buf);
}

Record load_record(BlockDevice& dev, std::uint64_t offset) {
  std::array<std::byte, kRecordBytes> buf{};
  dev.read_bytes(offset, buf);
  Record rec;
  std::memcpy(&rec.target, buf.data(), 8);
  std::memcpy(rec.cell.data(), buf.data() + 8, 8);
  return rec;
}

// source slot -> target slot for one conversion direction
std::uint64_t target_slot(const SegmentTables& tables, GridDims dims,
                          ConvertDirection direction, std::uint64_t source) {
  if (direction == ConvertDirection::RowToZ) {
    return tables.offset_of(CellRef{source / dims.width, source % dims.width});
  }
  const CellRef c = tables.cell_at(source);
  return c.row * dims.width + c.col;
}

void scan_convert(BlockDevice& src, BlockDevice& dst, GridDims dims,
                  std::uint32_t cell_size, ConversionStrategy strategy,
                  ConvertDirection direction) {
  const SegmentTables tables = SegmentTables::build(dims);
  const std::uint64_t n = dims.cell_count();
  std::array<std::byte, 8> cell{};
  auto span = std::span(cell.data(), cell_size);

  // The sequential side follows the scan order; the other side is
  // addressed through the offset maps. A Z-order pass keeps the scattered
  // side cached square by square, a row-by-row pass band by band.
  const bool scan_is_z = strategy == ConversionStrategy::ZOrderScan;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t row_slot, z_slot;
    if (scan_is_z) {
      z_slot = i;
      const CellRef c = tables.cell_at(i);
      row_slot = c.row * dims.width + c.col;
    } else {
      row_slot = i;
      z_slot = tables.offset_of(CellRef{i / dims.width, i % dims.width});
    }
    const std::uint64_t src_slot = direction == ConvertDirection::RowToZ ? row_slot : z_slot;
    const std::uint64_t dst_slot = direction == ConvertDirection::RowToZ ? z_slot : row_slot;
    src.read_bytes(src_slot * cell_size, span);
    dst.write_bytes(dst_slot * cell_size, span);
  }
}

void merge_convert(BlockDevice& src, BlockDevice& dst, GridDims dims,
                   std::uint32_t cell_size, ConvertDirection direction,
                   IoStats& scratch_io) {
  const SegmentTables tables = SegmentTables::build(dims);
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t M = src.config().memory_bytes;
  const std::uint64_t B = src.config().block_bytes;
  const std::uint64_t run_records = std::max<std::uint64_t>(1, M / kRecordBytes);

  DeviceConfig scratch_config = src.config();
  scratch_config.policy = CachePolicy::LRU;
  BlockDevice scratch =
      BlockDevice::in_memory(2 * n * kRecordBytes, scratch_config);
  const std::uint64_t ping = 0;
  const std::uint64_t pong = n * kRecordBytes;

  // Run formation: sort M-byte batches of records by target offset.
  std::vector<Record> batch;
  batch.reserve(std::min(run_records, n));
  std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;  // [begin, end) record idx
  std::uint64_t next_record = 0;
  for (std::uint64_t start = 0; start < n; start += run_records) {
    const std::uint64_t count = std::min(run_records, n - start);
    batch.clear();
    for (std::uint64_t i = 0; i < count; ++i) {
      Record rec;
      rec.target = target_slot(tables, dims, direction, start + i);
      src.read_bytes((start + i) * cell_size, std::span(rec.cell.data(), cell_size));
      batch.push_back(rec);
    }
    std::sort(batch.begin(), batch.end(),
              [](const Record& a, const Record& b) { return a.target < b.target; });
    const std::uint64_t begin = next_record;
    for (const Record& rec : batch)
      store_record(scratch, ping + kRecordBytes * next_record++, rec);
    runs.emplace_back(begin, next_record);
  }

  // K-way merge passes, ping-ponging between the two scratch halves. The
  // final pass emits cells straight into the destination, which is
  // sequential because records arrive in target order.
  const std::uint64_t fan_in = std::max<std::uint64_t>(2, M / B - 1);
  std::uint64_t from = ping, to = pong;
  while (true) {
    const bool last_pass = runs.size() <= fan_in;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> merged_runs;
    std::uint64_t out_record = 0;
    for (std::size_t group = 0; group < runs.size(); group += fan_in) {
      const std::size_t group_end = std::min(runs.size(), group + fan_in);
      using HeapItem = std::pair<std::uint64_t, std::size_t>;  // target, run idx
      std::priority_queue<HeapItem, std::vector<HeapItem>, std::greater<>> heap;
      std::vector<std::uint64_t> cursor(group_end - group);
      for (std::size_t r = group; r < group_end; ++r) {
        cursor[r - group] = runs[r].first;
        if (runs[r].first < runs[r].second) {
          Record rec = load_record(scratch, from + kRecordBytes * runs[r].first);
          heap.emplace(rec.target, r - group);
        }
      }
      const std::uint64_t out_begin = out_record;
      while (!heap.empty()) {
        const auto [target, r] = heap.top();
        heap.pop();
        Record rec = load_record(scratch, from + kRecordBytes * cursor[r]);
        if (last_pass) {
          dst.write_bytes(rec.target * cell_size, std::span(rec.cell.data(), cell_size));
        } else {
          store_record(scratch, to + kRecordBytes * out_record, rec);
        }
        ++out_record;
        ++cursor[r];
        if (cursor[r] < runs[group + r].second) {
          Record next = load_record(scratch, from + kRecordBytes * cursor[r]);
          heap.emplace(next.target, r);
        }
      }
      merged_runs.emplace_back(out_begin, out_record);
    }
    if (last_pass) break;
    runs = std::move(merged_runs);
    std::swap(from, to);
  }
  scratch_io = scratch.flush();
}

}  // namespace

IoStats convert_layout(BlockDevice& src, BlockDevice& dst, GridDims dims,
                       std::uint32_t cell_size, ConversionStrategy strategy,
                       ConvertDirection direction) {
  check_dims(dims);
  if (cell_size == 0 || cell_size > 8)
    throw_error(errc::invalid_argument, "cell size must be between 1 and 8 bytes");
  const IoStats src_before = src.stats();
  const IoStats dst_before = dst.stats();
  IoStats scratch_io;
  scratch_io.block_bytes = src.config().block_bytes;

  if (strategy == ConversionStrategy::MergeSort) {
    merge_convert(src, dst, dims, cell_size, direction, scratch_io);
  } else {
    scan_convert(src, dst, dims, cell_size, strategy, direction);
  }
  dst.flush();
  src.flush();

  IoStats total = src.stats() - src_before;
  total += dst.stats() - dst_before;
  total += scratch_io;
  total.block_bytes = src.config().block_bytes;
  return total;
}

}  // namespace emgrid
