#include "dice/metadata.hpp"

#include <json.hpp>

#include "dice/bits.hpp"

namespace dice {

namespace {

void check_width(const char* field, uint64_t v, int bits) {
  if (bits < 64 && v >> bits)
    throw EncodeError(std::string("metadata field ") + field + " value " + std::to_string(v) + " exceeds " +
                      std::to_string(bits) + " bits");
}

int encode_unroll(int u) {
  switch (u) {
    case 1: return 0;
    case 2: return 1;
    case 4: return 2;
    default: throw EncodeError("unrolling factor " + std::to_string(u) + " is not 1, 2 or 4");
  }
}

}  // namespace

int PGraphMetadata::num_loads() const {
  int n = 0;
  for (int d : ld_dest) n += d >= 0;
  return n;
}

uint32_t pack_branch(const BranchMeta& b) {
  if (b.successor < 0 || b.successor > 0xFF) throw EncodeError("branch successor out of range");
  if (b.reconverge < 0 || b.reconverge > 0xFF) throw EncodeError("branch reconvergence out of range");
  if (b.pred < 0 || b.pred >= kNumPred) throw EncodeError("branch predicate out of range");
  return static_cast<uint32_t>(b.successor) | static_cast<uint32_t>(b.reconverge) << 8 |
         static_cast<uint32_t>(b.conditional) << 16 | static_cast<uint32_t>(b.backward) << 17 |
         static_cast<uint32_t>(b.pred) << 18 | static_cast<uint32_t>(b.negate) << 19 |
         static_cast<uint32_t>(b.exit) << 20;
}

BranchMeta unpack_branch(uint32_t w) {
  if (w >> 21) throw EncodeError("reserved branch bits set");
  BranchMeta b;
  b.successor = static_cast<int>(w & 0xFF);
  b.reconverge = static_cast<int>((w >> 8) & 0xFF);
  b.conditional = (w >> 16) & 1;
  b.backward = (w >> 17) & 1;
  b.pred = static_cast<int>((w >> 18) & 1);
  b.negate = (w >> 19) & 1;
  b.exit = (w >> 20) & 1;
  return b;
}

std::array<uint8_t, kMetadataBytes> encode_metadata(const PGraphMetadata& md) {
  check_width("BITSTREAM_LENGTH", static_cast<uint64_t>(md.bitstream_length), 8);
  check_width("LAT", static_cast<uint64_t>(md.lat), 8);
  check_width("NUM_STORES", static_cast<uint64_t>(md.num_stores), 3);
  if (md.bitstream_length < 0 || md.lat < 0 || md.num_stores < 0) throw EncodeError("negative metadata field");
  BitWriter w(kMetadataBytes);
  w.put(md.bitstream_addr, 32);
  w.put(static_cast<uint64_t>(md.bitstream_length), 8);
  w.put(static_cast<uint64_t>(encode_unroll(md.unroll)), 2);
  w.put(static_cast<uint64_t>(md.lat), 8);
  w.put(md.in_regs.to_ullong(), kRegBitmapWidth);
  w.put(md.out_regs.to_ullong(), kRegBitmapWidth);
  bool gap = false;
  for (int d : md.ld_dest) {
    if (d >= kNumGpr || d < -1) throw EncodeError("LD_DEST_REGS entry " + std::to_string(d) + " is not a GPR");
    if (d >= 0 && gap) throw EncodeError("LD_DEST_REGS entries must be packed from slot 0");
    gap |= d < 0;
    w.put(d < 0 ? 0 : static_cast<uint64_t>(d) | 0x20, 6);
  }
  w.put(static_cast<uint64_t>(md.num_stores), 3);
  w.put(pack_branch(md.branch), 32);
  w.put(md.barrier, 1);
  w.put(md.parameter_load, 1);
  auto v = w.take();
  std::array<uint8_t, kMetadataBytes> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

PGraphMetadata decode_metadata(std::span<const uint8_t> bytes) {
  if (bytes.size() != static_cast<size_t>(kMetadataBytes))
    throw EncodeError("metadata record is " + std::to_string(bytes.size()) + " bytes, expected " +
                      std::to_string(kMetadataBytes));
  BitReader r(bytes);
  PGraphMetadata md;
  md.bitstream_addr = static_cast<uint32_t>(r.get(32));
  md.bitstream_length = static_cast<int>(r.get(8));
  const auto u = r.get(2);
  if (u == 3) throw EncodeError("invalid UNROLLING_FACTOR code");
  md.unroll = 1 << u;
  md.lat = static_cast<int>(r.get(8));
  md.in_regs = RegSet(r.get(kRegBitmapWidth));
  md.out_regs = RegSet(r.get(kRegBitmapWidth));
  for (int& d : md.ld_dest) {
    const auto e = r.get(6);
    if (!(e & 0x20) && e) throw EncodeError("LD_DEST_REGS entry without valid bit");
    d = e & 0x20 ? static_cast<int>(e & 0x1F) : -1;
  }
  md.num_stores = static_cast<int>(r.get(3));
  md.branch = unpack_branch(static_cast<uint32_t>(r.get(32)));
  md.barrier = r.get(1) != 0;
  md.parameter_load = r.get(1) != 0;
  if (r.get(kMetadataBytes * 8 - kMetadataBits)) throw EncodeError("metadata padding bits set");
  return md;
}

PGraphMetadata gen_metadata(const PGraph& pg, const Mapping& placed, uint32_t addr, int length, int num_pgraphs) {
  PGraphMetadata md;
  md.bitstream_addr = addr;
  md.bitstream_length = length;
  md.unroll = placed.unroll;
  md.lat = placed.lat;
  md.in_regs = pg.in_regs;
  md.out_regs = pg.out_regs;
  const auto dests = pg.load_dests();
  if (static_cast<int>(dests.size()) > kMaxLoadDests)
    throw EncodeError("pg" + std::to_string(pg.id) + ": more loads than LD_DEST_REGS entries");
  for (size_t i = 0; i < dests.size(); ++i) md.ld_dest[i] = dests[i];
  md.num_stores = pg.store_count();
  const BranchInfo& br = pg.branch;
  BranchMeta& b = md.branch;
  switch (br.kind) {
    case BranchInfo::Kind::Exit: b.exit = true; break;
    case BranchInfo::Kind::Fallthrough:
    case BranchInfo::Kind::Jump: b.successor = br.target; break;
    case BranchInfo::Kind::Conditional: {
      const int next = pg.id + 1 < num_pgraphs ? pg.id + 1 : kNoPGraph;
      if (br.fallthrough != next)
        throw EncodeError("pg" + std::to_string(pg.id) + ": not-taken successor is not the next p-graph");
      b.conditional = true;
      b.successor = br.target;
      b.reconverge = br.reconverge;
      b.pred = br.pred;
      b.negate = br.negate;
      break;
    }
  }
  b.backward = br.backward;
  md.barrier = pg.barrier;
  md.parameter_load = pg.parameter_load;
  encode_metadata(md);  // width check
  return md;
}

std::string dump_metadata(const PGraphMetadata& md, int id) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["bitstream_addr"] = md.bitstream_addr;
  j["bitstream_length"] = md.bitstream_length;
  j["unroll"] = md.unroll;
  j["lat"] = md.lat;
  auto regs = [](const RegSet& s) {
    std::vector<std::string> v;
    for (int r = 0; r < kRegBitmapWidth; ++r)
      if (s.test(r)) v.push_back(r < kNumGpr ? "r" + std::to_string(r) : "p" + std::to_string(r - kNumGpr));
    return v;
  };
  j["in_regs"] = regs(md.in_regs);
  j["out_regs"] = regs(md.out_regs);
  nlohmann::json ld = nlohmann::json::array();
  for (int d : md.ld_dest) d < 0 ? ld.push_back(nullptr) : ld.push_back(d);
  j["ld_dest"] = ld;
  j["num_stores"] = md.num_stores;
  nlohmann::ordered_json b;
  b["successor"] = md.branch.successor;
  b["reconverge"] = md.branch.reconverge;
  b["conditional"] = md.branch.conditional;
  b["backward"] = md.branch.backward;
  b["pred"] = md.branch.pred;
  b["negate"] = md.branch.negate;
  b["exit"] = md.branch.exit;
  j["branch"] = b;
  j["barrier"] = md.barrier;
  j["parameter_load"] = md.parameter_load;
  return j.dump();
}

}  // namespace dice
