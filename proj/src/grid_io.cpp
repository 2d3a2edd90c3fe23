#include "emgrid/grid_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "emgrid/zorder.hpp"

namespace emgrid {

namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'G', '1'};

void put_u64_le(std::byte* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_u64_le(const std::byte* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  return v;
}

// Maps payload slot -> row-major cell index for the given layout.
template <typename Fn>
void for_each_payload_cell(GridDims dims, Layout layout, Fn&& fn) {
  const std::uint64_t n = dims.cell_count();
  if (layout == Layout::RowMajor) {
    for (std::uint64_t i = 0; i < n; ++i) fn(i, i);
  } else {
    const SegmentTables tables = SegmentTables::build(dims);
    for (std::uint64_t p = 0; p < n; ++p) {
      const CellRef c = tables.cell_at(p);
      fn(p, c.row * dims.width + c.col);
    }
  }
}

template <typename T, typename Encode>
std::vector<std::byte> encode_payload(const Grid<T>& grid, std::uint32_t cell_size,
                                      Encode&& encode) {
  std::vector<std::byte> payload(grid.dims.cell_count() * cell_size);
  for_each_payload_cell(grid.dims, grid.layout, [&](std::uint64_t slot, std::uint64_t idx) {
    encode(payload.data() + slot * cell_size, grid.cells[idx]);
  });
  return payload;
}

template <typename T, typename Decode>
Grid<T> decode_payload(GridDims dims, Layout layout, std::uint32_t cell_size,
                       std::span<const std::byte> payload, Decode&& decode) {
  if (payload.size() != dims.cell_count() * cell_size)
    throw_error(errc::truncated_payload,
                "payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                    std::to_string(dims.cell_count() * cell_size));
  Grid<T> grid(dims, layout);
  for_each_payload_cell(dims, layout, [&](std::uint64_t slot, std::uint64_t idx) {
    grid.cells[idx] = decode(payload.data() + slot * cell_size);
  });
  return grid;
}

}  // namespace

std::uint32_t cell_size_bytes(GridKind kind) {
  switch (kind) {
    case GridKind::FlowDir: return 1;
    case GridKind::FlowAcc: return 8;
    case GridKind::Elevation: return 4;
  }
  throw_error(errc::bad_header, "unknown grid kind");
}

GridKind grid_kind(const FlowDirGrid&) { return GridKind::FlowDir; }
GridKind grid_kind(const FlowAccGrid&) { return GridKind::FlowAcc; }
GridKind grid_kind(const ElevationGrid&) { return GridKind::Elevation; }
GridKind grid_kind(const AnyGrid& grid) {
  return std::visit([](const auto& g) { return grid_kind(g); }, grid);
}

std::vector<std::byte> payload_bytes(const FlowDirGrid& grid) {
  return encode_payload(grid, 1, [](std::byte* out, Direction d) {
    *out = static_cast<std::byte>(encode_direction(d));
  });
}

std::vector<std::byte> payload_bytes(const FlowAccGrid& grid) {
  return encode_payload(grid, 8, [](std::byte* out, std::uint64_t v) {
    put_u64_le(out, v);
  });
}

std::vector<std::byte> payload_bytes(const ElevationGrid& grid) {
  return encode_payload(grid, 4, [](std::byte* out, float v) {
    std::memcpy(out, &v, 4);
  });
}

std::vector<std::byte> payload_bytes(const AnyGrid& grid) {
  return std::visit([](const auto& g) { return payload_bytes(g); }, grid);
}

FlowDirGrid flowdir_from_payload(GridDims dims, Layout layout,
                                 std::span<const std::byte> payload) {
  return decode_payload<Direction>(dims, layout, 1, payload, [](const std::byte* in) {
    return decode_direction(std::to_integer<std::uint8_t>(*in));
  });
}

FlowAccGrid flowacc_from_payload(GridDims dims, Layout layout,
                                 std::span<const std::byte> payload) {
  return decode_payload<std::uint64_t>(dims, layout, 8, payload, [](const std::byte* in) {
    return get_u64_le(in);
  });
}

ElevationGrid elevation_from_payload(GridDims dims, Layout layout,
                                     std::span<const std::byte> payload) {
  return decode_payload<float>(dims, layout, 4, payload, [](const std::byte* in) {
    float v;
    std::memcpy(&v, in, 4);
    return v;
  });
}

void write_grid(const AnyGrid& grid, const std::filesystem::path& path) {
  std::visit([&](const auto& g) { write_grid(g, path); }, grid);
}

namespace {

template <typename G>
void write_grid_impl(const G& grid, const std::filesystem::path& path) {
  check_dims(grid.dims);
  std::array<std::byte, kGridHeaderBytes> header{};
  std::memcpy(header.data(), kMagic.data(), 4);
  header[4] = static_cast<std::byte>(grid_kind(grid));
  header[5] = static_cast<std::byte>(grid.layout);
  put_u64_le(header.data() + 8, grid.dims.height);
  put_u64_le(header.data() + 16, grid.dims.width);

  const std::vector<std::byte> payload = payload_bytes(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw_error(errc::invalid_argument, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(header.data()), header.size());
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw_error(errc::invalid_argument, "short write to " + path.string());
}

}  // namespace

void write_grid(const FlowDirGrid& grid, const std::filesystem::path& path) {
  write_grid_impl(grid, path);
}
void write_grid(const FlowAccGrid& grid, const std::filesystem::path& path) {
  write_grid_impl(grid, path);
}
void write_grid(const ElevationGrid& grid, const std::filesystem::path& path) {
  write_grid_impl(grid, path);
}

AnyGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_error(errc::invalid_argument, "cannot open " + path.string());

  std::array<std::byte, kGridHeaderBytes> header;
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size()))
    throw_error(errc::bad_header, "file shorter than the 32-byte header");
  if (std::memcmp(header.data(), kMagic.data(), 4) != 0)
    throw_error(errc::bad_magic, "bad magic in " + path.string());

  const auto kind_byte = std::to_integer<std::uint8_t>(header[4]);
  if (kind_byte < 1 || kind_byte > 3)
    throw_error(errc::bad_header, "unknown grid kind " + std::to_string(kind_byte));
  const auto kind = static_cast<GridKind>(kind_byte);
  const auto layout_byte = std::to_integer<std::uint8_t>(header[5]);
  if (layout_byte > 1)
    throw_error(errc::bad_header, "unknown layout " + std::to_string(layout_byte));
  const auto layout = static_cast<Layout>(layout_byte);

  GridDims dims{get_u64_le(header.data() + 8), get_u64_le(header.data() + 16)};
  if (dims.height == 0 || dims.width == 0 ||
      (dims.height > 1 && dims.width > std::numeric_limits<std::uint64_t>::max() / dims.height))
    throw_error(errc::bad_header, "invalid dimensions in header");

  const std::uint64_t expected = dims.cell_count() * cell_size_bytes(kind);
  std::vector<std::byte> payload(expected);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::uint64_t>(in.gcount()) != expected)
    throw_error(errc::truncated_payload,
                "payload truncated: got " + std::to_string(in.gcount()) + " of " +
                    std::to_string(expected) + " bytes");

  switch (kind) {
    case GridKind::FlowDir: return flowdir_from_payload(dims, layout, payload);
    case GridKind::FlowAcc: return flowacc_from_payload(dims, layout, payload);
    case GridKind::Elevation: return elevation_from_payload(dims, layout, payload);
  }
  throw_error(errc::bad_header, "unreachable");
}

}  // namespace emgrid
