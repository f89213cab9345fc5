#pragma once

// Kernel-to-program compilation: partition, register renumbering for unrolling,
// placement and routing, metadata generation and the bitstream pool.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dice/mapper.hpp"
#include "dice/metadata.hpp"
#include "dice/pgraph.hpp"

namespace dice {

struct CompileOptions {
  CgraGrid grid;
  int ldst_ports = 4;
  bool unroll = true;
  bool predication_merge = true;
  int renumber_attempts = 100;
  uint32_t seed = 1;
  int map_attempts = 48;

  ResourceBudget budget() const { return grid.budget(ldst_ports); }
  bool operator==(const CompileOptions& o) const;
};

struct Program {
  Kernel original;
  Kernel kernel;  // after register renumbering
  CompileOptions options;
  Partition part;
  std::vector<Mapping> maps;  // per p-graph
  std::vector<PGraphMetadata> meta;
  std::vector<uint8_t> pool;  // concatenated bitstreams
  std::vector<int> reg_map;   // original GPR -> renumbered GPR
  int map_retries = 0;        // unroll reductions plus repartitions

  const PGraph& pgraph(int id) const { return part.pgraphs.at(id); }
  int size() const { return static_cast<int>(part.pgraphs.size()); }
  std::span<const uint8_t> bitstream(int id) const;
};

/// Applies a GPR permutation (old -> new) to every operand of the kernel.
Kernel renumber_registers(const Kernel& k, const std::vector<int>& perm);

/// Sum of per-p-graph unroll factors after renumbering the live-in sets with `perm`.
int unroll_score(const Partition& part, const std::vector<int>& perm, const ResourceBudget& budget);

Program compile(const Kernel& kernel, const CompileOptions& opts = {});

/// Program file: "DICEPG01", options, metadata records, bitstream pool and the
/// kernel text. Loading recompiles the kernel and rejects any mismatch.
std::vector<uint8_t> serialize_program(const Program& p);
Program deserialize_program(std::span<const uint8_t> bytes);
void save_program(const Program& p, const std::string& path);
Program load_program(const std::string& path);

/// One JSON metadata record per line.
std::string dump_program(const Program& p);

}  // namespace dice
