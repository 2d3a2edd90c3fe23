#include "emgrid/accum_tfp.hpp"

#include <algorithm>
#include <cstring>
#include <queue>

#include "emgrid/grid_io.hpp"
#include "emgrid/zorder.hpp"
#include "device_grid.hpp"

namespace emgrid {

TopoNumbering topological_numbering(const FlowDirGrid& fd) {
  const GridDims dims = fd.dims;
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t w = dims.width;

  std::vector<std::uint64_t> out(n, kNoTopo);
  std::vector<std::uint32_t> indegree(n, 0);
  for (std::uint64_t i = 0; i < n; ++i) {
    const Direction d = fd.cells[i];
    if (!is_flow(d)) continue;
    const auto nb = out_neighbor(dims, CellRef{i / w, i % w}, d);
    if (!nb) continue;
    out[i] = nb->row * w + nb->col;
    ++indegree[out[i]];
  }

  TopoNumbering topo;
  topo.dims = dims;
  topo.numbers.assign(n, kNoTopo);

  std::priority_queue<std::uint64_t, std::vector<std::uint64_t>, std::greater<>> ready;
  for (std::uint64_t i = 0; i < n; ++i)
    if (fd.cells[i] != Direction::NoData && indegree[i] == 0) ready.push(i);

  std::uint64_t next = 0;
  while (!ready.empty()) {
    const std::uint64_t cell = ready.top();
    ready.pop();
    topo.numbers[cell] = next++;
    if (out[cell] != kNoTopo && --indegree[out[cell]] == 0) ready.push(out[cell]);
  }
  topo.data_cells = next;

  for (std::uint64_t i = 0; i < n; ++i)
    if (fd.cells[i] != Direction::NoData && topo.numbers[i] == kNoTopo)
      throw CycleError(i / w, i % w);
  return topo;
}

namespace {

std::uint64_t read_key(const std::byte* rec, std::uint32_t key_off) {
  std::uint64_t k;
  std::memcpy(&k, rec + key_off, 8);
  return k;
}

// External merge sort of fixed-size records by a u64 key. Runs of
// `run_bytes` are sorted in memory; merge passes with the given fan-in
// ping-pong between two equally sized regions. Returns the region that
// holds the sorted records.
std::uint64_t external_sort(BlockDevice& dev, std::uint64_t region_a,
                            std::uint64_t region_b, std::uint64_t count,
                            std::uint32_t rec_bytes, std::uint32_t key_off,
                            std::uint64_t run_bytes, std::uint64_t fan_in) {
  if (count == 0) return region_a;
  const std::uint64_t run_records = std::max<std::uint64_t>(1, run_bytes / rec_bytes);

  // run formation in place on region_a
  std::vector<std::byte> buffer;
  std::vector<std::uint64_t> order;
  std::vector<std::byte> sorted;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> runs;
  for (std::uint64_t start = 0; start < count; start += run_records) {
    const std::uint64_t len = std::min(run_records, count - start);
    buffer.resize(len * rec_bytes);
    dev.read_bytes(region_a + start * rec_bytes, buffer);
    order.resize(len);
    for (std::uint64_t i = 0; i < len; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::uint64_t x, std::uint64_t y) {
      return read_key(buffer.data() + x * rec_bytes, key_off) <
             read_key(buffer.data() + y * rec_bytes, key_off);
    });
    sorted.resize(len * rec_bytes);
    for (std::uint64_t i = 0; i < len; ++i)
      std::memcpy(sorted.data() + i * rec_bytes, buffer.data() + order[i] * rec_bytes,
                  rec_bytes);
    dev.write_bytes(region_a + start * rec_bytes, sorted);
    runs.emplace_back(start, start + len);
  }

  std::uint64_t from = region_a, to = region_b;
  std::vector<std::byte> out_chunk;
  const std::uint64_t chunk_records = std::max<std::uint64_t>(1, run_bytes / rec_bytes / 4);
  while (runs.size() > 1) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> merged;
    std::uint64_t out_pos = 0;
    for (std::size_t group = 0; group < runs.size(); group += fan_in) {
      const std::size_t group_end = std::min(runs.size(), group + fan_in);
      using Item = std::pair<std::uint64_t, std::size_t>;
      std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
      std::vector<std::uint64_t> cursor(group_end - group);
      std::vector<std::byte> rec(rec_bytes);
      for (std::size_t r = group; r < group_end; ++r) {
        cursor[r - group] = runs[r].first;
        if (runs[r].first < runs[r].second) {
          dev.read_bytes(from + runs[r].first * rec_bytes, rec);
          heap.emplace(read_key(rec.data(), key_off), r - group);
        }
      }
      const std::uint64_t out_begin = out_pos;
      out_chunk.clear();
      while (!heap.empty()) {
        const auto [key, r] = heap.top();
        heap.pop();
        dev.read_bytes(from + cursor[r] * rec_bytes, rec);
        out_chunk.insert(out_chunk.end(), rec.begin(), rec.end());
        if (out_chunk.size() >= chunk_records * rec_bytes) {
          dev.write_bytes(to + out_pos * rec_bytes, out_chunk);
          out_pos += out_chunk.size() / rec_bytes;
          out_chunk.clear();
        }
        if (++cursor[r] < runs[group + r].second) {
          dev.read_bytes(from + cursor[r] * rec_bytes, rec);
          heap.emplace(read_key(rec.data(), key_off), r);
        }
      }
      if (!out_chunk.empty()) {
        dev.write_bytes(to + out_pos * rec_bytes, out_chunk);
        out_pos += out_chunk.size() / rec_bytes;
        out_chunk.clear();
      }
      merged.emplace_back(out_begin, out_pos);
    }
    runs = std::move(merged);
    std::swap(from, to);
  }
  return from;
}

struct QueueEntry {
  std::uint64_t key;
  std::uint64_t value;
  std::uint64_t spill_offset;  // kNoTopo when held in memory

  bool operator>(const QueueEntry& rhs) const { return key > rhs.key; }
};

}  // namespace

AccumResult tfp_accumulation(BlockDevice& dev, GridDims dims, Layout layout,
                             const TopoNumbering& topo, const TfpOptions& options) {
  check_dims(dims);
  if (topo.dims != dims)
    throw_error(errc::invalid_argument, "topological numbering dims mismatch");
  const std::uint64_t n = dims.cell_count();
  const std::uint64_t M = options.memory_bytes.value_or(dev.config().memory_bytes);
  const std::uint64_t B = options.block_bytes.value_or(dev.config().block_bytes);
  const std::uint64_t fan_in = std::max<std::uint64_t>(2, M / B - 1);

  SegmentTables tables_storage;
  const SegmentTables* tables = nullptr;
  if (layout == Layout::ZOrder) {
    tables_storage = SegmentTables::build(dims);
    tables = &tables_storage;
  }
  FlowDirView fd(dev, 0, dims, layout, 1, tables);

  // The topological-number grid is an input file in the same layout; seed
  // it uncounted, scanning it below is what costs I/O.
  const std::uint64_t topo_region = dev.extend(n * 8);
  {
    std::vector<std::uint64_t> slot_numbers(n);
    for (std::uint64_t r = 0; r < dims.height; ++r)
      for (std::uint64_t c = 0; c < dims.width; ++c) {
        const std::uint64_t slot = layout == Layout::RowMajor
                                       ? r * dims.width + c
                                       : tables->offset_of(CellRef{r, c});
        slot_numbers[slot] = topo.numbers[r * dims.width + c];
      }
    dev.raw_write(topo_region,
                  std::span(reinterpret_cast<const std::byte*>(slot_numbers.data()), n * 8));
  }

  const std::uint64_t nd = topo.data_cells;
  constexpr std::uint32_t kRecBytes = 24;  // location, topo, out-topo
  const std::uint64_t rec_region = dev.extend(nd * kRecBytes);
  const std::uint64_t rec_scratch = dev.extend(nd * kRecBytes);

  // Build the record stream with a row-major 3x3 window over FlowDir and
  // the number grid.
  {
    std::vector<std::byte> chunk;
    std::uint64_t emitted = 0;
    for (std::uint64_t r = 0; r < dims.height; ++r) {
      for (std::uint64_t c = 0; c < dims.width; ++c) {
        const std::uint64_t slot =
            layout == Layout::RowMajor ? r * dims.width + c : tables->offset_of(CellRef{r, c});
        const Direction d = fd.dir_at(slot);
        if (d == Direction::NoData) continue;
        std::uint64_t own = dev.read_u64(topo_region + slot * 8);
        std::uint64_t out_topo = kNoTopo;
        if (is_flow(d)) {
          if (const auto nb = fd.neighbor_slot(slot, d))
            out_topo = dev.read_u64(topo_region + *nb * 8);
        }
        const std::uint64_t loc = r * dims.width + c;
        std::array<std::byte, kRecBytes> rec;
        std::memcpy(rec.data(), &loc, 8);
        std::memcpy(rec.data() + 8, &own, 8);
        std::memcpy(rec.data() + 16, &out_topo, 8);
        chunk.insert(chunk.end(), rec.begin(), rec.end());
        if (chunk.size() >= (1u << 16)) {
          dev.write_bytes(rec_region + emitted * kRecBytes, chunk);
          emitted += chunk.size() / kRecBytes;
          chunk.clear();
        }
      }
    }
    if (!chunk.empty()) {
      dev.write_bytes(rec_region + emitted * kRecBytes, chunk);
      emitted += chunk.size() / kRecBytes;
    }
    if (emitted != nd)
      throw_error(errc::invalid_argument, "numbering does not match the grid's data cells");
  }

  const std::uint64_t sorted_region =
      external_sort(dev, rec_region, rec_scratch, nd, kRecBytes, 8, M, fan_in);

  // Output stream of (location, flow) pairs plus the priority queue.
  constexpr std::uint32_t kOutBytes = 16;
  const std::uint64_t out_region = dev.extend(nd * kOutBytes);
  const std::uint64_t out_scratch = dev.extend(nd * kOutBytes);
  std::uint64_t spill_region = 0, spill_next = 0, spill_capacity = 0;

  {
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> queue;
    std::vector<std::byte> out_chunk;
    std::uint64_t out_emitted = 0;
    std::array<std::byte, kRecBytes> rec;
    for (std::uint64_t i = 0; i < nd; ++i) {
      dev.read_bytes(sorted_region + i * kRecBytes, rec);
      std::uint64_t loc, own, out_topo;
      std::memcpy(&loc, rec.data(), 8);
      std::memcpy(&own, rec.data() + 8, 8);
      std::memcpy(&out_topo, rec.data() + 16, 8);

      std::uint64_t flow = 1;
      std::uint32_t extracted = 0;
      while (!queue.empty() && queue.top().key == own) {
        const QueueEntry entry = queue.top();
        queue.pop();
        ++extracted;
        if (entry.spill_offset != kNoTopo) {
          // disk-backed entry: the stored value is read back on extraction
          flow += dev.read_u64(spill_region + entry.spill_offset + 8);
        } else {
          flow += entry.value;
        }
      }
      if (options.extractions) (*options.extractions)[loc] = extracted;

      std::array<std::byte, kOutBytes> out_rec;
      std::memcpy(out_rec.data(), &loc, 8);
      std::memcpy(out_rec.data() + 8, &flow, 8);
      out_chunk.insert(out_chunk.end(), out_rec.begin(), out_rec.end());
      if (out_chunk.size() >= (1u << 16)) {
        dev.write_bytes(out_region + out_emitted * kOutBytes, out_chunk);
        out_emitted += out_chunk.size() / kOutBytes;
        out_chunk.clear();
      }

      if (out_topo != kNoTopo) {
        QueueEntry entry{out_topo, flow, kNoTopo};
        if ((queue.size() + 1) * 16 > options.pq_budget_bytes) {
          if (spill_capacity == 0) {
            spill_capacity = std::max<std::uint64_t>(1 << 16, B);
            spill_region = dev.extend(spill_capacity);
          }
          if (spill_next + 16 > spill_capacity) {
            dev.extend(spill_capacity);
            spill_capacity *= 2;
          }
          dev.write_u64(spill_region + spill_next, out_topo);
          dev.write_u64(spill_region + spill_next + 8, flow);
          entry.spill_offset = spill_next;
          spill_next += 16;
        }
        queue.push(entry);
      }
    }
    if (!out_chunk.empty())
      dev.write_bytes(out_region + out_emitted * kOutBytes, out_chunk);
    if (!queue.empty())
      throw_error(errc::invalid_argument, "flow left in the priority queue");
  }

  const std::uint64_t sorted_out =
      external_sort(dev, out_region, out_scratch, nd, kOutBytes, 0, M, fan_in);

  // Final pass: place flow values into a grid-ordered file. NoData cells
  // keep zero.
  const std::uint64_t acc_region = dev.extend(n * 8);
  {
    std::array<std::byte, kOutBytes> out_rec;
    for (std::uint64_t i = 0; i < nd; ++i) {
      dev.read_bytes(sorted_out + i * kOutBytes, out_rec);
      std::uint64_t loc, flow;
      std::memcpy(&loc, out_rec.data(), 8);
      std::memcpy(&flow, out_rec.data() + 8, 8);
      const std::uint64_t slot =
          layout == Layout::RowMajor
              ? loc
              : tables->offset_of(CellRef{loc / dims.width, loc % dims.width});
      dev.write_u64(acc_region + slot * 8, flow);
    }
  }

  AccumResult result;
  result.stats = dev.flush();
  std::vector<std::byte> payload(n * 8);
  dev.raw_read(acc_region, payload);
  result.acc = flowacc_from_payload(dims, layout, payload);
  return result;
}

TfpVolumePrediction predicted_tfp_io_volume(TfpScenario scenario) {
  TfpVolumePrediction p;
  // components carried in thirds of a byte so the totals come out exact
  std::uint64_t total_thirds = 0;
  auto add = [&](const std::string& name, std::uint64_t thirds) {
    p.components.emplace_back(name, static_cast<double>(thirds) / 3.0);
    total_thirds += thirds;
  };
  if (scenario == TfpScenario::Optimistic) {
    // one third of the cells carry data; 24-byte records, two sort passes,
    // queue entirely in memory
    add("scan flowdir+topo", 27);
    add("input sort pass 1 write", 24);
    add("input sort pass 2", 48);
    add("tfp read sorted stream", 24);
    add("tfp write output", 16);
    add("output sort pass 1", 32);
    add("output sort pass 2 read", 16);
    add("final grid write", 24);
  } else {
    // every cell carries data; three sort passes; queue entries cross the
    // disk once on average
    add("scan flowdir+topo", 27);
    add("input sort pass 1 write", 72);
    add("input sort pass 2", 144);
    add("input sort pass 3", 144);
    add("tfp read sorted stream", 72);
    add("priority queue disk traffic", 96);
    add("tfp write output", 48);
    add("output sort pass 1", 96);
    add("output sort pass 2", 96);
    add("output sort pass 3 read", 48);
    add("final grid write", 24);
  }
  p.bytes_per_cell = static_cast<double>(total_thirds) / 3.0;
  p.overhead_factor = p.bytes_per_cell / 27.0 * 3.0;
  return p;
}

}  // namespace emgrid
