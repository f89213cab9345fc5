#include "dice/memory.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "dice/common.hpp"

namespace dice {

std::optional<uint32_t> GlobalMemory::load32(uint32_t addr) const {
  if (addr % 4 != 0 || static_cast<size_t>(addr) + 4 > bytes_.size()) return std::nullopt;
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[addr + i];
  return v;
}

bool GlobalMemory::store32(uint32_t addr, uint32_t value) {
  if (addr % 4 != 0 || static_cast<size_t>(addr) + 4 > bytes_.size()) return false;
  for (int i = 0; i < 4; ++i) bytes_[addr + i] = static_cast<uint8_t>(value >> (8 * i));
  return true;
}

uint32_t MemoryImage::add_region(const std::string& name, uint32_t length_bytes) {
  size_t off = (memory.size() + kSectorBytes - 1) / kSectorBytes * kSectorBytes;
  memory.resize(off + length_bytes);
  regions[name] = Region{static_cast<uint32_t>(off), length_bytes};
  return static_cast<uint32_t>(off);
}

uint32_t MemoryImage::add_region(const std::string& name, const std::vector<uint32_t>& words) {
  uint32_t off = add_region(name, static_cast<uint32_t>(words.size() * 4));
  for (size_t i = 0; i < words.size(); ++i) memory.store32(off + static_cast<uint32_t>(4 * i), words[i]);
  return off;
}

const Region& MemoryImage::region(const std::string& name) const {
  auto it = regions.find(name);
  if (it == regions.end()) throw Error("unknown memory region '" + name + "'");
  return it->second;
}

std::vector<uint32_t> MemoryImage::read_words(const std::string& name) const {
  const Region& r = region(name);
  std::vector<uint32_t> out(r.length / 4);
  for (size_t i = 0; i < out.size(); ++i) out[i] = *memory.load32(r.offset + static_cast<uint32_t>(4 * i));
  return out;
}

void save_image(const MemoryImage& image, const std::filesystem::path& path) {
  std::ofstream bin(path, std::ios::binary);
  if (!bin) throw Error("cannot write " + path.string());
  bin.write(reinterpret_cast<const char*>(image.memory.bytes().data()),
            static_cast<std::streamsize>(image.memory.size()));
  std::ofstream map(path.string() + ".map");
  if (!map) throw Error("cannot write " + path.string() + ".map");
  for (const auto& [name, r] : image.regions) map << name << " " << r.offset << " " << r.length << "\n";
}

MemoryImage load_image(const std::filesystem::path& path) {
  MemoryImage image;
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw Error("cannot read memory image " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  image.memory.resize(bytes.size());
  image.memory.bytes() = std::move(bytes);
  std::ifstream map(path.string() + ".map");
  if (map) {
    std::string line;
    int line_no = 0;
    while (std::getline(map, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream is(line);
      std::string name;
      Region r;
      if (!(is >> name >> r.offset >> r.length))
        throw Error(path.string() + ".map:" + std::to_string(line_no) + ": expected 'name offset length'");
      if (static_cast<size_t>(r.offset) + r.length > image.memory.size())
        throw Error(path.string() + ".map:" + std::to_string(line_no) + ": region exceeds image");
      image.regions[name] = r;
    }
  }
  return image;
}

}  // namespace dice
