#include "emgrid/block_device.hpp"

#include <algorithm>
#include <cstring>

namespace emgrid {

namespace {

void check_config(const DeviceConfig& config) {
  if (config.block_bytes == 0)
    throw_error(errc::invalid_argument, "block size must be at least 1");
  if (config.memory_bytes < 2 * config.block_bytes)
    throw_error(errc::invalid_argument, "memory must hold at least two blocks");
  if (config.memory_bytes % config.block_bytes != 0)
    throw_error(errc::invalid_argument, "memory must be a multiple of the block size");
}

}  // namespace

BlockDevice::BlockDevice(std::uint64_t size, const DeviceConfig& config)
    : config_(config), size_(size) {
  check_config(config);
  stats_.block_bytes = config.block_bytes;
  allocated_.assign(block_count(), false);
}

BlockDevice BlockDevice::in_memory(std::uint64_t size, const DeviceConfig& config) {
  BlockDevice dev(size, config);
  dev.memory_.assign(size, std::byte{0});
  return dev;
}

BlockDevice BlockDevice::file_backed(const std::filesystem::path& path,
                                     std::uint64_t size, const DeviceConfig& config) {
  BlockDevice dev(size, config);
  dev.file_ = std::fopen(path.string().c_str(), "wb+");
  if (!dev.file_)
    throw_error(errc::invalid_argument, "cannot open backing file " + path.string());
  dev.file_path_ = path;
  return dev;
}

BlockDevice::~BlockDevice() {
  if (file_) std::fclose(file_);
}

BlockDevice::BlockDevice(BlockDevice&& other) noexcept
    : config_(other.config_),
      size_(other.size_),
      stats_(other.stats_),
      cache_(std::move(other.cache_)),
      lru_(std::move(other.lru_)),
      pinned_blocks_(other.pinned_blocks_),
      allocated_(std::move(other.allocated_)),
      memory_(std::move(other.memory_)),
      file_(other.file_),
      file_path_(std::move(other.file_path_)) {
  other.file_ = nullptr;
}

BlockDevice& BlockDevice::operator=(BlockDevice&& other) noexcept {
  if (this != &other) {
    if (file_) std::fclose(file_);
    config_ = other.config_;
    size_ = other.size_;
    stats_ = other.stats_;
    cache_ = std::move(other.cache_);
    lru_ = std::move(other.lru_);
    pinned_blocks_ = other.pinned_blocks_;
    allocated_ = std::move(other.allocated_);
    memory_ = std::move(other.memory_);
    file_ = other.file_;
    file_path_ = std::move(other.file_path_);
    other.file_ = nullptr;
  }
  return *this;
}

std::uint64_t BlockDevice::extend(std::uint64_t bytes) {
  const std::uint64_t region = size_;
  size_ += bytes;
  allocated_.resize(block_count(), false);
  if (!file_) memory_.resize(size_, std::byte{0});
  return region;
}

void BlockDevice::check_range(std::uint64_t offset, std::uint64_t len) const {
  if (offset > size_ || len > size_ - offset)
    throw_error(errc::out_of_range,
                "access [" + std::to_string(offset) + ", " +
                    std::to_string(offset + len) + ") beyond device size " +
                    std::to_string(size_));
}

void BlockDevice::backing_read(std::uint64_t block, std::byte* out) {
  const std::uint64_t B = config_.block_bytes;
  const std::uint64_t start = block * B;
  const std::uint64_t len = std::min(B, size_ - start);
  if (file_) {
    std::fseek(file_, static_cast<long>(start), SEEK_SET);
    const std::size_t got = std::fread(out, 1, len, file_);
    if (got < len) std::memset(out + got, 0, len - got);
  } else {
    std::memcpy(out, memory_.data() + start, len);
  }
  if (len < B) std::memset(out + len, 0, B - len);
}

void BlockDevice::backing_write(std::uint64_t block, const std::byte* data) {
  const std::uint64_t B = config_.block_bytes;
  const std::uint64_t start = block * B;
  const std::uint64_t len = std::min(B, size_ - start);
  if (file_) {
    std::fseek(file_, static_cast<long>(start), SEEK_SET);
    std::fwrite(data, 1, len, file_);
  } else {
    std::memcpy(memory_.data() + start, data, len);
  }
  allocated_[block] = true;
}

void BlockDevice::write_back(std::uint64_t block, CacheEntry& entry) {
  if (!entry.dirty) return;
  backing_write(block, entry.data.get());
  entry.dirty = false;
  ++stats_.block_writes;
}

void BlockDevice::evict_one() {
  for (auto it = lru_.begin(); it != lru_.end(); ++it) {
    auto found = cache_.find(*it);
    if (found->second.pin_count > 0) continue;
    write_back(*it, found->second);
    cache_.erase(found);
    lru_.erase(it);
    return;
  }
  throw_error(errc::pin_overflow, "cache exhausted: all resident blocks are pinned");
}

BlockDevice::CacheEntry& BlockDevice::fetch_block(std::uint64_t block,
                                                  bool whole_block_overwrite) {
  auto it = cache_.find(block);
  if (it != cache_.end()) {
    lru_.splice(lru_.end(), lru_, it->second.lru_pos);
    return it->second;
  }
  const std::uint64_t capacity = config_.memory_bytes / config_.block_bytes;
  while (cache_.size() >= capacity) evict_one();

  CacheEntry entry;
  entry.data = std::make_unique<std::byte[]>(config_.block_bytes);
  if (allocated_[block] && !whole_block_overwrite) {
    backing_read(block, entry.data.get());
    ++stats_.block_reads;
  } else {
    // Hole or full overwrite: nothing worth transferring from the backing.
    std::memset(entry.data.get(), 0, config_.block_bytes);
  }
  entry.lru_pos = lru_.insert(lru_.end(), block);
  return cache_.emplace(block, std::move(entry)).first->second;
}

void BlockDevice::read_bytes(std::uint64_t offset, std::span<std::byte> out) {
  check_range(offset, out.size());
  const std::uint64_t B = config_.block_bytes;
  std::uint64_t pos = offset;
  std::size_t done = 0;
  while (done < out.size()) {
    const std::uint64_t block = pos / B;
    const std::uint64_t in_block = pos % B;
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(B - in_block, out.size() - done));
    CacheEntry& entry = fetch_block(block, false);
    std::memcpy(out.data() + done, entry.data.get() + in_block, chunk);
    pos += chunk;
    done += chunk;
  }
}

void BlockDevice::write_bytes(std::uint64_t offset, std::span<const std::byte> data) {
  check_range(offset, data.size());
  const std::uint64_t B = config_.block_bytes;
  std::uint64_t pos = offset;
  std::size_t done = 0;
  while (done < data.size()) {
    const std::uint64_t block = pos / B;
    const std::uint64_t in_block = pos % B;
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(B - in_block, data.size() - done));
    const bool whole = in_block == 0 && chunk == B;
    CacheEntry& entry = fetch_block(block, whole);
    std::memcpy(entry.data.get() + in_block, data.data() + done, chunk);
    entry.dirty = true;
    pos += chunk;
    done += chunk;
  }
}

std::uint8_t BlockDevice::read_u8(std::uint64_t offset) {
  std::uint8_t v;
  read_bytes(offset, std::span(reinterpret_cast<std::byte*>(&v), 1));
  return v;
}

void BlockDevice::write_u8(std::uint64_t offset, std::uint8_t value) {
  write_bytes(offset, std::span(reinterpret_cast<const std::byte*>(&value), 1));
}

std::uint64_t BlockDevice::read_u64(std::uint64_t offset) {
  std::uint64_t v;
  read_bytes(offset, std::span(reinterpret_cast<std::byte*>(&v), sizeof v));
  return v;
}

void BlockDevice::write_u64(std::uint64_t offset, std::uint64_t value) {
  write_bytes(offset, std::span(reinterpret_cast<const std::byte*>(&value), sizeof value));
}

float BlockDevice::read_f32(std::uint64_t offset) {
  float v;
  read_bytes(offset, std::span(reinterpret_cast<std::byte*>(&v), sizeof v));
  return v;
}

void BlockDevice::write_f32(std::uint64_t offset, float value) {
  write_bytes(offset, std::span(reinterpret_cast<const std::byte*>(&value), sizeof value));
}

void BlockDevice::drop_cached(std::uint64_t first_block, std::uint64_t last_block) {
  for (std::uint64_t b = first_block; b <= last_block; ++b) {
    auto it = cache_.find(b);
    if (it == cache_.end()) continue;
    if (it->second.pin_count > 0)
      throw_error(errc::invalid_argument, "direct access overlaps a pinned block");
    write_back(b, it->second);
    lru_.erase(it->second.lru_pos);
    cache_.erase(it);
  }
}

void BlockDevice::read_direct(std::uint64_t offset, std::span<std::byte> out) {
  if (out.empty()) return;
  check_range(offset, out.size());
  const std::uint64_t B = config_.block_bytes;
  const std::uint64_t first = offset / B;
  const std::uint64_t last = (offset + out.size() - 1) / B;
  drop_cached(first, last);

  std::vector<std::byte> block(B);
  for (std::uint64_t b = first; b <= last; ++b) {
    if (allocated_[b]) {
      backing_read(b, block.data());
      ++stats_.block_reads;
    } else {
      std::memset(block.data(), 0, B);
    }
    const std::uint64_t block_start = b * B;
    const std::uint64_t from = std::max(offset, block_start);
    const std::uint64_t to = std::min(offset + out.size(), block_start + B);
    std::memcpy(out.data() + (from - offset), block.data() + (from - block_start),
                to - from);
  }
}

void BlockDevice::write_direct(std::uint64_t offset, std::span<const std::byte> data) {
  if (data.empty()) return;
  check_range(offset, data.size());
  const std::uint64_t B = config_.block_bytes;
  const std::uint64_t first = offset / B;
  const std::uint64_t last = (offset + data.size() - 1) / B;
  drop_cached(first, last);

  std::vector<std::byte> block(B);
  for (std::uint64_t b = first; b <= last; ++b) {
    const std::uint64_t block_start = b * B;
    const std::uint64_t from = std::max(offset, block_start);
    const std::uint64_t to = std::min(offset + data.size(), block_start + B);
    const bool whole = from == block_start && to - block_start == B;
    if (!whole) {
      if (allocated_[b]) {
        backing_read(b, block.data());
        ++stats_.block_reads;
      } else {
        std::memset(block.data(), 0, B);
      }
    }
    std::memcpy(block.data() + (from - block_start), data.data() + (from - offset),
                to - from);
    backing_write(b, block.data());
    ++stats_.block_writes;
  }
}

void BlockDevice::release(std::uint64_t offset, std::uint64_t len) {
  if (len == 0) return;
  check_range(offset, len);
  drop_cached(offset / config_.block_bytes, (offset + len - 1) / config_.block_bytes);
}

void BlockDevice::note_pinned() {
  stats_.peak_pinned_bytes = std::max(stats_.peak_pinned_bytes, pinned_bytes());
}

void BlockDevice::pin(std::uint64_t offset, std::uint64_t len) {
  if (config_.policy != CachePolicy::LRUWithPinning)
    throw_error(errc::pinning_disabled, "device policy does not support pinning");
  if (len == 0) return;
  check_range(offset, len);
  const std::uint64_t B = config_.block_bytes;
  const std::uint64_t first = offset / B;
  const std::uint64_t last = (offset + len - 1) / B;
  std::uint64_t new_blocks = 0;
  for (std::uint64_t b = first; b <= last; ++b) {
    auto it = cache_.find(b);
    if (it == cache_.end() || it->second.pin_count == 0) ++new_blocks;
  }
  if ((pinned_blocks_ + new_blocks) * B > config_.memory_bytes)
    throw_error(errc::pin_overflow,
                "pin request exceeds memory: " +
                    std::to_string((pinned_blocks_ + new_blocks) * B) + " > " +
                    std::to_string(config_.memory_bytes));
  for (std::uint64_t b = first; b <= last; ++b) {
    CacheEntry& entry = fetch_block(b, false);
    if (entry.pin_count == 0) ++pinned_blocks_;
    ++entry.pin_count;
  }
  note_pinned();
}

void BlockDevice::unpin(std::uint64_t offset, std::uint64_t len) {
  if (config_.policy != CachePolicy::LRUWithPinning)
    throw_error(errc::pinning_disabled, "device policy does not support pinning");
  if (len == 0) return;
  check_range(offset, len);
  const std::uint64_t B = config_.block_bytes;
  const std::uint64_t first = offset / B;
  const std::uint64_t last = (offset + len - 1) / B;
  for (std::uint64_t b = first; b <= last; ++b) {
    auto it = cache_.find(b);
    if (it == cache_.end() || it->second.pin_count == 0)
      throw_error(errc::invalid_argument, "unpin of a block that is not pinned");
    if (--it->second.pin_count == 0) --pinned_blocks_;
  }
}

IoStats BlockDevice::flush() {
  for (auto& [block, entry] : cache_) write_back(block, entry);
  if (file_) std::fflush(file_);
  return stats_;
}

void BlockDevice::reset_stats() {
  stats_ = IoStats{};
  stats_.block_bytes = config_.block_bytes;
  note_pinned();
}

void BlockDevice::raw_read(std::uint64_t offset, std::span<std::byte> out) const {
  check_range(offset, out.size());
  auto* self = const_cast<BlockDevice*>(this);
  const std::uint64_t B = config_.block_bytes;
  std::size_t done = 0;
  std::uint64_t pos = offset;
  while (done < out.size()) {
    const std::uint64_t block = pos / B;
    const std::uint64_t in_block = pos % B;
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(B - in_block, out.size() - done));
    auto it = cache_.find(block);
    if (it != cache_.end()) {
      std::memcpy(out.data() + done, it->second.data.get() + in_block, chunk);
    } else if (allocated_[block]) {
      std::vector<std::byte> tmp(B);
      self->backing_read(block, tmp.data());
      std::memcpy(out.data() + done, tmp.data() + in_block, chunk);
    } else {
      std::memset(out.data() + done, 0, chunk);
    }
    pos += chunk;
    done += chunk;
  }
}

void BlockDevice::raw_write(std::uint64_t offset, std::span<const std::byte> data) {
  check_range(offset, data.size());
  const std::uint64_t B = config_.block_bytes;
  std::size_t done = 0;
  std::uint64_t pos = offset;
  while (done < data.size()) {
    const std::uint64_t block = pos / B;
    const std::uint64_t in_block = pos % B;
    const std::size_t chunk =
        static_cast<std::size_t>(std::min<std::uint64_t>(B - in_block, data.size() - done));
    if (cache_.contains(block))
      throw_error(errc::invalid_argument, "raw_write overlaps a cached block");
    std::vector<std::byte> tmp(B, std::byte{0});
    if (allocated_[block]) backing_read(block, tmp.data());
    std::memcpy(tmp.data() + in_block, data.data() + done, chunk);
    backing_write(block, tmp.data());
    pos += chunk;
    done += chunk;
  }
}

}  // namespace emgrid
