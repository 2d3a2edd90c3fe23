#ifndef EMGRID_DIRECTION_HPP
#define EMGRID_DIRECTION_HPP

#include <array>
#include <cstdint>
#include <optional>

#include "emgrid/errors.hpp"

namespace emgrid {

/// D8 flow direction of a cell. The first eight values are the compass
/// neighbours in the fixed scan order used throughout this library;
/// Sink means "no out-neighbour", NoData marks cells outside the data area.
enum class Direction : std::uint8_t {
  E = 0,
  SE,
  S,
  SW,
  W,
  NW,
  N,
  NE,
  Sink,
  NoData,
};

inline constexpr std::array<Direction, 8> kFlowDirections = {
    Direction::E,  Direction::SE, Direction::S, Direction::SW,
    Direction::W,  Direction::NW, Direction::N, Direction::NE,
};

// Row/column steps indexed by Direction (rows grow downward).
inline constexpr std::array<int, 8> kRowStep = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr std::array<int, 8> kColStep = {1, 1, 0, -1, -1, -1, 0, 1};

constexpr bool is_flow(Direction d) {
  return static_cast<std::uint8_t>(d) < 8;
}

constexpr Direction opposite(Direction d) {
  return static_cast<Direction>((static_cast<std::uint8_t>(d) + 4) % 8);
}

/// Byte codec: powers of two 1=E, 2=SE, 4=S, 8=SW, 16=W, 32=NW, 64=N,
/// 128=NE; 0 encodes a sink and 255 a nodata cell.
constexpr std::uint8_t encode_direction(Direction d) {
  if (d == Direction::Sink) return 0;
  if (d == Direction::NoData) return 0xff;
  return static_cast<std::uint8_t>(1u << static_cast<std::uint8_t>(d));
}

inline Direction decode_direction(std::uint8_t byte) {
  if (byte == 0) return Direction::Sink;
  if (byte == 0xff) return Direction::NoData;
  if ((byte & (byte - 1)) != 0)
    throw_error(errc::malformed_direction,
                "invalid direction byte " + std::to_string(byte));
  unsigned idx = 0;
  while ((byte & 1u) == 0) {
    byte = static_cast<std::uint8_t>(byte >> 1);
    ++idx;
  }
  return static_cast<Direction>(idx);
}

}  // namespace emgrid

#endif
