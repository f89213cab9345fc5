#pragma once

// Control-data flow analysis over a parsed kernel: intra-block def-use edges,
// register liveness, may-defined warnings and immediate post-dominators.

#include <bitset>
#include <string>
#include <vector>

#include "dice/ir.hpp"

namespace dice {

/// GPRs in bits 0..31, predicates in bits 32..33.
using RegSet = std::bitset<kRegBitmapWidth>;

struct DfgEdge {
  int from = 0;  // producer instruction index within the block
  int to = 0;    // consumer instruction index within the block
  int reg = 0;   // bitmap index carrying the value
  bool load_to_use = false;
  bool operator==(const DfgEdge&) const = default;
};

struct BlockDataflow {
  std::vector<DfgEdge> edges;
  RegSet use;      // upward-exposed reads
  RegSet def;
  RegSet live_in;
  RegSet live_out;
};

struct Cdfg {
  std::vector<BlockDataflow> blocks;
  /// Immediate post-dominator block per block; kExitNode when it is the virtual exit.
  std::vector<int> ipdom;
  std::vector<std::string> warnings;
};

/// Standard liveness; at kernel exit only the kernel's declared outputs are live.
Cdfg build_cdfg(const Kernel& kernel);

/// Registers live immediately after instruction `index` of block `block`.
RegSet live_after(const Kernel& kernel, const Cdfg& cdfg, int block, int index);

}  // namespace dice
