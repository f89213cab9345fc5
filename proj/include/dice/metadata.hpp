#pragma once

// Fixed-width per-p-graph descriptor read by the control processor.
//
// Record layout (LSB-first, little-endian, 179 bits padded to 23 bytes):
//   BITSTREAM_ADDR 32 | BITSTREAM_LENGTH 8 | UNROLLING_FACTOR 2 | LAT 8 |
//   IN_REGS 34 | OUT_REGS 34 | LD_DEST_REGS 4x6 | NUM_STORES 3 | BRANCH 32 |
//   BARRIER 1 | PARAMETER_LOAD 1
//
// BRANCH: [7:0] successor, [15:8] reconvergence (0xFF = none), [16] conditional,
// [17] backward, [18] predicate register, [19] negate, [20] exit, [31:21] zero.
// A conditional branch's successor is the taken target; the not-taken
// successor is always the next p-graph id.

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "dice/mapper.hpp"
#include "dice/pgraph.hpp"

namespace dice {

inline constexpr int kMetadataBits = 179;
inline constexpr int kMetadataBytes = (kMetadataBits + 7) / 8;
inline constexpr int kMaxLoadDests = 4;

struct BranchMeta {
  int successor = kNoPGraph;
  int reconverge = kNoPGraph;
  bool conditional = false;
  bool backward = false;
  int pred = 0;
  bool negate = false;
  bool exit = false;
  bool operator==(const BranchMeta&) const = default;
};

struct PGraphMetadata {
  uint32_t bitstream_addr = 0;
  int bitstream_length = 0;
  int unroll = 1;  // 1, 2 or 4
  int lat = 1;
  RegSet in_regs;
  RegSet out_regs;
  std::array<int, kMaxLoadDests> ld_dest{-1, -1, -1, -1};  // GPR index, -1 unused
  int num_stores = 0;
  BranchMeta branch;
  bool barrier = false;
  bool parameter_load = false;
  bool operator==(const PGraphMetadata&) const = default;

  int num_loads() const;
};

uint32_t pack_branch(const BranchMeta& b);
BranchMeta unpack_branch(uint32_t word);

/// Throws EncodeError when a field does not fit its width.
std::array<uint8_t, kMetadataBytes> encode_metadata(const PGraphMetadata& md);
PGraphMetadata decode_metadata(std::span<const uint8_t> bytes);

/// Builds the descriptor for a placed p-graph whose bitstream sits at `addr`.
/// `num_pgraphs` bounds the not-taken successor check for conditional branches.
PGraphMetadata gen_metadata(const PGraph& pg, const Mapping& placed, uint32_t addr, int length, int num_pgraphs);

/// One-line JSON rendering of a record.
std::string dump_metadata(const PGraphMetadata& md, int id);

}  // namespace dice
