#ifndef EMGRID_GRID_IO_HPP
#define EMGRID_GRID_IO_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "emgrid/grid.hpp"

namespace emgrid {

// Grid file format (little-endian), 32-byte header:
//   magic "EMG1" | kind u8 | layout u8 | 2 reserved | height u64 |
//   width u64 | 8 reserved
// followed by the payload in the cell order given by the layout flag.
// Z-order payloads hold only in-grid cells. Cell sizes: flowdir 1 byte,
// flowacc 8 bytes unsigned, elevation 4-byte IEEE float.

inline constexpr std::size_t kGridHeaderBytes = 32;

using AnyGrid = std::variant<FlowDirGrid, FlowAccGrid, ElevationGrid>;

std::uint32_t cell_size_bytes(GridKind kind);

GridKind grid_kind(const FlowDirGrid&);
GridKind grid_kind(const FlowAccGrid&);
GridKind grid_kind(const ElevationGrid&);
GridKind grid_kind(const AnyGrid&);

/// Payload bytes of a grid in its file layout order.
std::vector<std::byte> payload_bytes(const FlowDirGrid&);
std::vector<std::byte> payload_bytes(const FlowAccGrid&);
std::vector<std::byte> payload_bytes(const ElevationGrid&);
std::vector<std::byte> payload_bytes(const AnyGrid&);

/// Rebuilds a grid from payload bytes laid out per `layout`. FlowDir
/// payloads are decoded strictly: an invalid direction byte throws.
FlowDirGrid flowdir_from_payload(GridDims dims, Layout layout,
                                 std::span<const std::byte> payload);
FlowAccGrid flowacc_from_payload(GridDims dims, Layout layout,
                                 std::span<const std::byte> payload);
ElevationGrid elevation_from_payload(GridDims dims, Layout layout,
                                     std::span<const std::byte> payload);

void write_grid(const AnyGrid& grid, const std::filesystem::path& path);
void write_grid(const FlowDirGrid& grid, const std::filesystem::path& path);
void write_grid(const FlowAccGrid& grid, const std::filesystem::path& path);
void write_grid(const ElevationGrid& grid, const std::filesystem::path& path);

AnyGrid read_grid(const std::filesystem::path& path);

}  // namespace emgrid

#endif
