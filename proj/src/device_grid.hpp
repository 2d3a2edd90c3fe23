#ifndef EMGRID_SRC_DEVICE_GRID_HPP
#define EMGRID_SRC_DEVICE_GRID_HPP

#include <optional>

#include "emgrid/block_device.hpp"
#include "emgrid/grid.hpp"
#include "emgrid/zorder.hpp"

namespace emgrid {

// Addressing over a grid payload stored in a device region. A cell's
// "slot" is its position in the payload: row*width+col for row-major
// regions, the Z-order file offset otherwise. Every byte moved for the
// grid goes through the device so it is counted.
class DeviceGrid {
public:
  DeviceGrid(BlockDevice& dev, std::uint64_t region, GridDims dims, Layout layout,
             std::uint32_t cell_size, const SegmentTables* tables)
      : dev_(&dev),
        region_(region),
        dims_(dims),
        layout_(layout),
        cell_size_(cell_size),
        tables_(tables) {}

  GridDims dims() const { return dims_; }
  Layout layout() const { return layout_; }
  std::uint64_t region() const { return region_; }
  std::uint64_t cell_count() const { return dims_.cell_count(); }
  std::uint64_t byte_at(std::uint64_t slot) const {
    return region_ + slot * cell_size_;
  }

  std::uint64_t slot_of(CellRef c) const {
    if (layout_ == Layout::RowMajor) return c.row * dims_.width + c.col;
    return tables_->offset_of(c);
  }

  CellRef cell_of(std::uint64_t slot) const {
    if (layout_ == Layout::RowMajor)
      return CellRef{slot / dims_.width, slot % dims_.width};
    return tables_->cell_at(slot);
  }

  std::optional<std::uint64_t> neighbor_slot(std::uint64_t slot, Direction d) const {
    if (!is_flow(d)) return std::nullopt;
    if (layout_ == Layout::ZOrder) return tables_->neighbor_offset(slot, d);
    const std::uint64_t row = slot / dims_.width;
    const std::uint64_t col = slot % dims_.width;
    const auto i = static_cast<std::uint8_t>(d);
    if (kRowStep[i] < 0 && row == 0) return std::nullopt;
    if (kColStep[i] < 0 && col == 0) return std::nullopt;
    const std::uint64_t nr = row + static_cast<std::uint64_t>(kRowStep[i]);
    const std::uint64_t nc = col + static_cast<std::uint64_t>(kColStep[i]);
    if (nr >= dims_.height || nc >= dims_.width) return std::nullopt;
    return nr * dims_.width + nc;
  }

  BlockDevice& device() const { return *dev_; }

private:
  BlockDevice* dev_;
  std::uint64_t region_;
  GridDims dims_;
  Layout layout_;
  std::uint32_t cell_size_;
  const SegmentTables* tables_;
};

// FlowDir payload view: one direction byte per cell.
class FlowDirView : public DeviceGrid {
public:
  using DeviceGrid::DeviceGrid;
  Direction dir_at(std::uint64_t slot) const {
    return decode_direction(device().read_u8(byte_at(slot)));
  }
};

// FlowAcc payload view: 8-byte flow value whose most significant bit
// doubles as the marking bit while an algorithm runs.
class FlowAccView : public DeviceGrid {
public:
  static constexpr std::uint64_t kMarkBit = 1ull << 63;

  using DeviceGrid::DeviceGrid;
  std::uint64_t raw_at(std::uint64_t slot) const {
    return device().read_u64(byte_at(slot));
  }
  void raw_set(std::uint64_t slot, std::uint64_t v) const {
    device().write_u64(byte_at(slot), v);
  }
  std::uint64_t value_at(std::uint64_t slot) const { return raw_at(slot) & ~kMarkBit; }
  bool marked(std::uint64_t slot) const { return (raw_at(slot) & kMarkBit) != 0; }
  void mark(std::uint64_t slot) const { raw_set(slot, raw_at(slot) | kMarkBit); }
  void add(std::uint64_t slot, std::uint64_t delta) const {
    raw_set(slot, raw_at(slot) + delta);
  }
};

}  // namespace emgrid

#endif
