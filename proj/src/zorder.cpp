#include "emgrid/zorder.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cassert>

namespace emgrid {

namespace {

// 8-bit chunk -> 16-bit word with source bits on even positions.
constexpr std::array<std::uint16_t, 256> kDilateByte = [] {
  std::array<std::uint16_t, 256> table{};
  for (unsigned v = 0; v < 256; ++v) {
    std::uint16_t out = 0;
    for (unsigned bit = 0; bit < 8; ++bit)
      if (v & (1u << bit)) out = static_cast<std::uint16_t>(out | (1u << (2 * bit)));
    table[v] = out;
  }
  return table;
}();

// 8-bit chunk -> its four even bits, packed.
constexpr std::array<std::uint8_t, 256> kCompactByte = [] {
  std::array<std::uint8_t, 256> table{};
  for (unsigned v = 0; v < 256; ++v) {
    std::uint8_t out = 0;
    for (unsigned bit = 0; bit < 4; ++bit)
      if (v & (1u << (2 * bit))) out = static_cast<std::uint8_t>(out | (1u << bit));
    table[v] = out;
  }
  return table;
}();

constexpr std::uint64_t kEvenBits = 0x5555555555555555ull;
constexpr std::uint64_t kOddBits = 0xaaaaaaaaaaaaaaaaull;

std::uint32_t ceil_log2(std::uint64_t v) {
  std::uint32_t m = 0;
  while ((1ull << m) < v) ++m;
  return m;
}

}  // namespace

std::uint64_t dilate(std::uint32_t v) {
  std::uint64_t out = 0;
  for (unsigned byte = 0; byte < 4; ++byte) {
    const std::uint8_t chunk = static_cast<std::uint8_t>(v >> (8 * byte));
    out |= static_cast<std::uint64_t>(kDilateByte[chunk]) << (16 * byte);
  }
  return out;
}

std::uint32_t compact(std::uint64_t z) {
  std::uint32_t out = 0;
  for (unsigned byte = 0; byte < 8; ++byte) {
    const std::uint8_t chunk = static_cast<std::uint8_t>(z >> (8 * byte));
    out |= static_cast<std::uint32_t>(kCompactByte[chunk]) << (4 * byte);
  }
  return out;
}

SegmentTables SegmentTables::build(GridDims dims) {
  check_dims(dims);
  if (std::max(dims.height, dims.width) > (1ull << 32))
    throw_error(errc::invalid_argument, "grid side exceeds 2^32 cells");
  SegmentTables t;
  t.dims_ = dims;
  t.m_ = ceil_log2(std::max(dims.height, dims.width));
  t.max_row_dilated_ = dilate(static_cast<std::uint32_t>(dims.height - 1)) << 1;
  t.max_col_dilated_ = dilate(static_cast<std::uint32_t>(dims.width - 1));

  // Walk quadrants of the enclosing matrix, appending maximal runs of
  // in-grid and out-of-grid cells. Only squares straddling the grid edge
  // recurse, so the run list has Theta(height + width) entries.
  std::uint64_t file_pos = 0;
  std::uint64_t z_pos = 0;
  bool last_in_grid = false;
  auto walk = [&](auto&& self, std::uint64_t size, std::uint64_t row0,
                  std::uint64_t col0) -> void {
    if (row0 >= dims.height || col0 >= dims.width) {
      z_pos += size * size;
      last_in_grid = false;
      return;
    }
    if (row0 + size <= dims.height && col0 + size <= dims.width) {
      if (!last_in_grid) {
        t.file_start_.push_back(file_pos);
        t.z_start_.push_back(z_pos);
        last_in_grid = true;
      }
      file_pos += size * size;
      z_pos += size * size;
      return;
    }
    const std::uint64_t half = size / 2;
    self(self, half, row0, col0);
    self(self, half, row0, col0 + half);
    self(self, half, row0 + half, col0);
    self(self, half, row0 + half, col0 + half);
  };
  walk(walk, 1ull << t.m_, 0, 0);
  return t;
}

std::uint64_t SegmentTables::z_index_of(std::uint64_t file_offset) const {
  auto it = std::upper_bound(file_start_.begin(), file_start_.end(), file_offset);
  const std::size_t seg = static_cast<std::size_t>(it - file_start_.begin()) - 1;
  return z_start_[seg] + (file_offset - file_start_[seg]);
}

std::uint64_t SegmentTables::offset_of_z_index(std::uint64_t z_index) const {
  auto it = std::upper_bound(z_start_.begin(), z_start_.end(), z_index);
  const std::size_t seg = static_cast<std::size_t>(it - z_start_.begin()) - 1;
  return file_start_[seg] + (z_index - z_start_[seg]);
}

CellRef SegmentTables::cell_at(std::uint64_t file_offset) const {
  auto [y, x] = deinterleave(z_index_of(file_offset));
  return CellRef{y, x};
}

std::uint64_t SegmentTables::offset_of(CellRef c) const {
  return offset_of_z_index(interleave(static_cast<std::uint32_t>(c.row),
                                      static_cast<std::uint32_t>(c.col)));
}

std::optional<std::uint64_t> SegmentTables::neighbor_offset(
    std::uint64_t file_offset, Direction d) const {
  if (!is_flow(d)) return std::nullopt;
  const std::uint64_t z = z_index_of(file_offset);
  std::uint64_t row_part = z & kOddBits;
  std::uint64_t col_part = z & kEvenBits;

  const int dr = kRowStep[static_cast<std::uint8_t>(d)];
  const int dc = kColStep[static_cast<std::uint8_t>(d)];

  if (dr > 0) {
    row_part = ((row_part | kEvenBits) + 2) & kOddBits;
    if (row_part > max_row_dilated_) return std::nullopt;
  } else if (dr < 0) {
    if (row_part == 0) return std::nullopt;
    row_part = (row_part - 1) & kOddBits;
  }
  if (dc > 0) {
    col_part = ((col_part | kOddBits) + 1) & kEvenBits;
    if (col_part > max_col_dilated_) return std::nullopt;
  } else if (dc < 0) {
    if (col_part == 0) return std::nullopt;
    col_part = (col_part - 1) & kEvenBits;
  }
  return offset_of_z_index(row_part | col_part);
}

}  // namespace emgrid
