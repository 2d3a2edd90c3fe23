#ifndef EMGRID_BLOCK_DEVICE_HPP
#define EMGRID_BLOCK_DEVICE_HPP

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "emgrid/errors.hpp"

namespace emgrid {

enum class CachePolicy : std::uint8_t {
  LRU = 0,
  LRUWithPinning = 1,
};

struct DeviceConfig {
  std::uint64_t block_bytes = 4096;        // B
  std::uint64_t memory_bytes = 1ull << 20; // M
  CachePolicy policy = CachePolicy::LRU;
};

struct IoStats {
  std::uint64_t block_reads = 0;
  std::uint64_t block_writes = 0;
  std::uint64_t block_bytes = 0;
  std::uint64_t peak_pinned_bytes = 0;

  std::uint64_t io_volume() const {
    return (block_reads + block_writes) * block_bytes;
  }
  IoStats operator-(const IoStats& rhs) const {
    IoStats d = *this;
    d.block_reads -= rhs.block_reads;
    d.block_writes -= rhs.block_writes;
    return d;
  }
  IoStats& operator+=(const IoStats& rhs) {
    block_reads += rhs.block_reads;
    block_writes += rhs.block_writes;
    if (block_bytes == 0) block_bytes = rhs.block_bytes;
    peak_pinned_bytes = std::max(peak_pinned_bytes, rhs.peak_pinned_bytes);
    return *this;
  }
};

/// Simulated two-level store: an unbounded backing partitioned into
/// B-byte blocks behind an M-byte cache with write-back, write-allocate
/// LRU replacement. Every cache miss counts one block read, every dirty
/// eviction or flush one block write. Blocks that were never written to
/// the backing are "holes": touching them materialises zeroes without a
/// transfer, which is how freshly created files behave.
///
/// With CachePolicy::LRUWithPinning, pinned byte ranges are exempt from
/// eviction until unpinned, so a cache-aware algorithm can keep a chosen
/// working set resident.
class BlockDevice {
public:
  static BlockDevice in_memory(std::uint64_t size, const DeviceConfig& config);
  static BlockDevice file_backed(const std::filesystem::path& path,
                                 std::uint64_t size, const DeviceConfig& config);
  ~BlockDevice();
  BlockDevice(BlockDevice&&) noexcept;
  BlockDevice& operator=(BlockDevice&&) noexcept;
  BlockDevice(const BlockDevice&) = delete;
  BlockDevice& operator=(const BlockDevice&) = delete;

  const DeviceConfig& config() const { return config_; }
  std::uint64_t size() const { return size_; }

  /// Grows the backing by `bytes` and returns the offset of the new region.
  /// Growth is allocation, not I/O; the new blocks start as holes.
  std::uint64_t extend(std::uint64_t bytes);

  void read_bytes(std::uint64_t offset, std::span<std::byte> out);
  void write_bytes(std::uint64_t offset, std::span<const std::byte> data);

  std::uint8_t read_u8(std::uint64_t offset);
  void write_u8(std::uint64_t offset, std::uint8_t value);
  std::uint64_t read_u64(std::uint64_t offset);
  void write_u64(std::uint64_t offset, std::uint64_t value);
  float read_f32(std::uint64_t offset);
  void write_f32(std::uint64_t offset, float value);

  /// Pins all blocks overlapping [offset, offset+len). Requires the
  /// LRUWithPinning policy; throws PinOverflow if the pinned set would
  /// exceed M bytes. Loading a previously uncached block through pin
  /// counts as a read like any other miss.
  void pin(std::uint64_t offset, std::uint64_t len);
  void unpin(std::uint64_t offset, std::uint64_t len);
  std::uint64_t pinned_bytes() const { return pinned_blocks_ * config_.block_bytes; }

  /// Uncached block transfers for cache-aware algorithms that manage their
  /// own buffers: each touched block moves at most once. A direct write to
  /// a partially covered block that already exists on the backing performs
  /// the read-modify-write it implies (one read, one write); holes and
  /// fully covered blocks cost the write alone. Cached copies overlapping
  /// the range are written back and dropped first so the two paths stay
  /// coherent.
  void read_direct(std::uint64_t offset, std::span<std::byte> out);
  void write_direct(std::uint64_t offset, std::span<const std::byte> data);

  /// Writes back and drops every cached block overlapping the range: how a
  /// cache-aware algorithm hands memory back when it is done with a file
  /// for the current phase. Pinned blocks cannot be released.
  void release(std::uint64_t offset, std::uint64_t len);

  /// Writes all dirty cached blocks back and returns the stats snapshot.
  IoStats flush();
  IoStats stats() const { return stats_; }
  void reset_stats();

  // Uncounted backing access for seeding inputs and extracting results.
  // Raw reads observe cached data; raw writes require a clean cache for
  // the touched range (seed before running, extract after flush).
  void raw_read(std::uint64_t offset, std::span<std::byte> out) const;
  void raw_write(std::uint64_t offset, std::span<const std::byte> data);

private:
  struct CacheEntry {
    std::unique_ptr<std::byte[]> data;
    bool dirty = false;
    std::uint32_t pin_count = 0;
    std::list<std::uint64_t>::iterator lru_pos;
  };

  BlockDevice(std::uint64_t size, const DeviceConfig& config);

  std::uint64_t block_count() const {
    return (size_ + config_.block_bytes - 1) / config_.block_bytes;
  }
  void check_range(std::uint64_t offset, std::uint64_t len) const;
  void drop_cached(std::uint64_t first_block, std::uint64_t last_block);
  CacheEntry& fetch_block(std::uint64_t block, bool whole_block_overwrite);
  void evict_one();
  void write_back(std::uint64_t block, CacheEntry& entry);
  void backing_read(std::uint64_t block, std::byte* out);
  void backing_write(std::uint64_t block, const std::byte* data);
  void note_pinned();

  DeviceConfig config_;
  std::uint64_t size_ = 0;
  IoStats stats_;

  std::unordered_map<std::uint64_t, CacheEntry> cache_;
  std::list<std::uint64_t> lru_;  // front = least recently used
  std::uint64_t pinned_blocks_ = 0;

  std::vector<bool> allocated_;  // block ever written to backing

  // backing: exactly one of memory_ / file_ is active
  std::vector<std::byte> memory_;
  std::FILE* file_ = nullptr;
  std::filesystem::path file_path_;
};

}  // namespace emgrid

#endif
