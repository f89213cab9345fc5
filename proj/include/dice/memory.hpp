#pragma once

// Flat little-endian global memory image with a named-region sidecar table.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dice {

class GlobalMemory {
 public:
  GlobalMemory() = default;
  explicit GlobalMemory(size_t bytes) : bytes_(bytes, 0) {}

  size_t size() const { return bytes_.size(); }
  void resize(size_t bytes) { bytes_.resize(bytes, 0); }

  /// Empty optional on out-of-bounds or unaligned access.
  std::optional<uint32_t> load32(uint32_t addr) const;
  bool store32(uint32_t addr, uint32_t value);

  const std::vector<uint8_t>& bytes() const { return bytes_; }
  std::vector<uint8_t>& bytes() { return bytes_; }

  bool operator==(const GlobalMemory&) const = default;

 private:
  std::vector<uint8_t> bytes_;
};

struct Region {
  uint32_t offset = 0;
  uint32_t length = 0;
  bool operator==(const Region&) const = default;
};

struct MemoryImage {
  GlobalMemory memory;
  std::map<std::string, Region> regions;

  /// Appends a 32-byte aligned region and returns its offset.
  uint32_t add_region(const std::string& name, const std::vector<uint32_t>& words);
  uint32_t add_region(const std::string& name, uint32_t length_bytes);
  std::vector<uint32_t> read_words(const std::string& name) const;
  const Region& region(const std::string& name) const;
};

/// Writes `<path>` (raw bytes) and `<path>.map` (lines "name offset length").
void save_image(const MemoryImage& image, const std::filesystem::path& path);
MemoryImage load_image(const std::filesystem::path& path);

}  // namespace dice
