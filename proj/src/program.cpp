#include "dice/program.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

namespace dice {

bool CompileOptions::operator==(const CompileOptions& o) const {
  return grid.rows == o.grid.rows && grid.cols == o.grid.cols && grid.tracks == o.grid.tracks &&
         grid.sfu_latency == o.grid.sfu_latency && ldst_ports == o.ldst_ports && unroll == o.unroll &&
         predication_merge == o.predication_merge && renumber_attempts == o.renumber_attempts &&
         seed == o.seed && map_attempts == o.map_attempts;
}

std::span<const uint8_t> Program::bitstream(int id) const {
  const auto& md = meta.at(id);
  return std::span(pool).subspan(md.bitstream_addr, md.bitstream_length);
}

Kernel renumber_registers(const Kernel& k, const std::vector<int>& perm) {
  Kernel out = k;
  auto fix = [&](Operand& o) {
    if (o.is_reg()) o.index = perm.at(o.index);
  };
  for (auto& r : out.outputs) r = perm.at(r);
  for (auto& b : out.blocks)
    for (auto& inst : b.insts) {
      fix(inst.dst);
      for (auto& s : inst.srcs) fix(s);
      fix(inst.addr_base);
    }
  return out;
}

int unroll_score(const Partition& part, const std::vector<int>& perm, const ResourceBudget& budget) {
  int score = 0;
  for (const auto& pg : part.pgraphs) {
    PGraph renamed;
    renamed.parameter_load = pg.parameter_load;
    renamed.nodes = pg.nodes;
    renamed.sinks = pg.sinks;
    for (int r = 0; r < kRegBitmapWidth; ++r)
      if (pg.in_regs.test(r)) renamed.in_regs.set(r < kNumGpr ? perm[r] : r);
    score += compute_unroll_factor(renamed, budget);
  }
  return score;
}

namespace {

// Permutation of [0, num_regs) that maximizes the summed unroll factor; identity if nothing beats it.
std::vector<int> choose_renumbering(const Partition& part, int num_regs, const CompileOptions& opts) {
  std::vector<int> best(kNumGpr);
  std::iota(best.begin(), best.end(), 0);
  const ResourceBudget budget = opts.budget();
  int best_score = unroll_score(part, best, budget);
  std::mt19937 rng(opts.seed);
  const int n = std::clamp(num_regs, 0, kNumGpr);
  for (int a = 0; a < opts.renumber_attempts; ++a) {
    std::vector<int> perm(kNumGpr);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.begin() + n, rng);
    const int score = unroll_score(part, perm, budget);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  }
  return best;
}

}  // namespace

Program compile(const Kernel& kernel, const CompileOptions& opts) {
  opts.grid.validate();
  if (opts.ldst_ports < 1) throw ConfigError("ldst_ports must be positive");
  const ResourceBudget budget = opts.budget();
  Program p;
  p.original = kernel;
  p.options = opts;
  p.kernel = kernel;
  p.reg_map.resize(kNumGpr);
  std::iota(p.reg_map.begin(), p.reg_map.end(), 0);

  PartitionOptions po;
  po.predication_merge = opts.predication_merge;
  p.part = partition(p.kernel, budget, po);
  if (opts.unroll && opts.renumber_attempts > 0) {
    auto perm = choose_renumbering(p.part, kernel.num_regs, opts);
    if (perm != p.reg_map) {
      p.reg_map = perm;
      p.kernel = renumber_registers(kernel, perm);
      p.part = partition(p.kernel, budget, po);
    }
  }

  const MapOptions mo{opts.seed, opts.map_attempts};
  for (int round = 0;; ++round) {
    p.maps.clear();
    const PGraph* failed = nullptr;
    for (const auto& pg : p.part.pgraphs) {
      int u = opts.unroll ? compute_unroll_factor(pg, budget) : 1;
      while (true) {
        try {
          p.maps.push_back(place_and_route(pg, opts.grid, u, mo));
          break;
        } catch (const MapError&) {
          if (u == 1) {
            failed = &pg;
            break;
          }
          u /= 2;
          ++p.map_retries;
        }
      }
      if (failed) break;
    }
    if (!failed) break;
    // Split the offending block more finely and start over.
    ++p.map_retries;
    if (failed->merged && po.predication_merge) {
      po.predication_merge = false;
    } else {
      const int b = failed->block;
      const int limit = std::min(failed->compute_nodes(), budget.pes) - 1;
      if (b < 0 || limit < 1 || round > 4 * budget.pes)
        throw MapError("pg" + std::to_string(failed->id) + " cannot be mapped even as a single node");
      po.block_pe_limit.resize(p.kernel.blocks.size(), 0);
      po.block_pe_limit[b] = limit;
    }
    p.part = partition(p.kernel, budget, po);
  }

  const int n = p.size();
  for (int i = 0; i < n; ++i) {
    const PGraph& pg = p.part.pgraphs[i];
    std::vector<uint8_t> bits;
    if (!pg.parameter_load) bits = encode_bitstream(p.maps[i].config);
    const auto addr = static_cast<uint32_t>(p.pool.size());
    p.meta.push_back(gen_metadata(pg, p.maps[i], addr, static_cast<int>(bits.size()), n));
    p.pool.insert(p.pool.end(), bits.begin(), bits.end());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Program file

namespace {

constexpr char kMagic[8] = {'D', 'I', 'C', 'E', 'P', 'G', '0', '1'};

void put32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}
  std::span<const uint8_t> take(size_t n) {
    if (pos_ + n > in_.size()) throw EncodeError("program file truncated");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  uint32_t u32() {
    auto s = take(4);
    return s[0] | s[1] << 8 | s[2] << 16 | static_cast<uint32_t>(s[3]) << 24;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> serialize_program(const Program& p) {
  std::vector<uint8_t> out(std::begin(kMagic), std::end(kMagic));
  const CompileOptions& o = p.options;
  for (int v : {o.grid.rows, o.grid.cols, o.grid.tracks, o.grid.sfu_latency, o.ldst_ports, int(o.unroll),
                int(o.predication_merge), o.renumber_attempts, static_cast<int>(o.seed), o.map_attempts})
    put32(out, static_cast<uint32_t>(v));
  put32(out, static_cast<uint32_t>(p.meta.size()));
  for (const auto& md : p.meta) {
    auto rec = encode_metadata(md);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  put32(out, static_cast<uint32_t>(p.pool.size()));
  out.insert(out.end(), p.pool.begin(), p.pool.end());
  const std::string text = print_kernel(p.original);
  put32(out, static_cast<uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

Program deserialize_program(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(sizeof kMagic);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw EncodeError("not a DICE program file");
  CompileOptions o;
  o.grid.rows = static_cast<int>(r.u32());
  o.grid.cols = static_cast<int>(r.u32());
  o.grid.tracks = static_cast<int>(r.u32());
  o.grid.sfu_latency = static_cast<int>(r.u32());
  o.ldst_ports = static_cast<int>(r.u32());
  o.unroll = r.u32() != 0;
  o.predication_merge = r.u32() != 0;
  o.renumber_attempts = static_cast<int>(r.u32());
  o.seed = r.u32();
  o.map_attempts = static_cast<int>(r.u32());
  const uint32_t n = r.u32();
  if (n > 255) throw EncodeError("program file lists too many p-graphs");
  std::vector<PGraphMetadata> meta;
  for (uint32_t i = 0; i < n; ++i) meta.push_back(decode_metadata(r.take(kMetadataBytes)));
  auto pool = r.take(r.u32());
  auto text = r.take(r.u32());
  if (!r.done()) throw EncodeError("trailing bytes after program");
  Program p = compile(parse_kernel(std::string(text.begin(), text.end())), o);
  if (p.meta != meta || !std::equal(pool.begin(), pool.end(), p.pool.begin(), p.pool.end()))
    throw EncodeError("program file does not match its kernel");
  return p;
}

void save_program(const Program& p, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  auto bytes = serialize_program(p);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Program load_program(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_program(bytes);
}

std::string dump_program(const Program& p) {
  std::string out;
  for (int i = 0; i < p.size(); ++i) out += dump_metadata(p.meta[i], i) + "\n";
  return out;
}

}  // namespace dice
