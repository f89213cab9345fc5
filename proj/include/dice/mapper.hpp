#pragma once

// Placement, routing and static II=1 scheduling of p-graphs on a spatial CGRA
// mesh, plus the fixed-width configuration bitstream.
//
// Timing model: an op fires at its scheduled cycle and its result is
// registered after the op latency (1, or the SFU latency). The first mesh link
// out of a cell is combinational; every pass-through switch hop registers the
// value for one cycle. Each input has a small delay line that aligns early
// arrivals with the consumer's fire time.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dice/pgraph.hpp"

namespace dice {

enum class Dir : uint8_t { N, E, S, W };
inline constexpr int kNumDirs = 4;
inline constexpr int kMaxTracks = 2;
inline constexpr int kMaxInputDelay = 7;
inline constexpr int kCellInputs = 4;  // three operands plus the old value

struct CgraGrid {
  int rows = 4;
  int cols = 5;  // the last column holds the SFU cells
  int tracks = 2;
  int sfu_latency = 4;

  int cells() const { return rows * cols; }
  bool is_sfu_cell(int cell) const { return cell % cols == cols - 1; }
  int pe_count() const { return rows * (cols - 1); }
  int sfu_count() const { return rows; }
  /// Neighbor in `d`, or -1 at the edge.
  int neighbor(int cell, Dir d) const;
  int distance(int a, int b) const;
  ResourceBudget budget(int ldst_ports = 4) const;
  void validate() const;
};

enum class InKind : uint8_t { None, Rf, Const, Special, Link };

struct InputSel {
  InKind kind = InKind::None;
  uint8_t index = 0;  // RF bitmap index, constant slot, special id, or side*tracks+track
  uint8_t delay = 0;
  bool operator==(const InputSel&) const = default;
};

enum class PredKind : uint8_t { None, Rf, Link };

struct PredSel {
  PredKind kind = PredKind::None;
  uint8_t index = 0;  // predicate register, or side*tracks+track
  bool negate = false;
  uint8_t delay = 0;
  bool operator==(const PredSel&) const = default;
};

/// Source for an outgoing (direction, track) switch port.
enum class SwitchSel : uint8_t { None, Alu, FromN, FromE, FromS, FromW };

struct CellConfig {
  bool active = false;
  Opcode op = Opcode::Mov;
  uint8_t lane = 0;  // unrolled copy index
  std::array<InputSel, kCellInputs> in{};
  PredSel pred;
  uint8_t fire = 0;
  bool out_bus = false;
  std::array<std::array<SwitchSel, kMaxTracks>, kNumDirs> sw{};
  bool operator==(const CellConfig&) const = default;
};

struct CgraConfig {
  CgraGrid grid;
  std::vector<CellConfig> cells;  // row-major
  bool operator==(const CgraConfig& o) const { return cells == o.cells; }
};

struct Mapping {
  CgraConfig config;
  int unroll = 1;
  std::vector<std::vector<int>> cell_of;  // [copy][node] -> cell
  int lat = 1;
};

struct MapOptions {
  uint32_t seed = 1;
  int attempts = 48;
};

/// Places `unroll` copies of the p-graph and routes every internal edge.
/// Throws MapError when no attempt succeeds.
Mapping place_and_route(const PGraph& pg, const CgraGrid& grid, int unroll = 1, const MapOptions& opts = {});

/// Max over output-bus cells of fire + op latency, at least 1.
int compute_latency(const CgraConfig& cfg);

inline constexpr int kCellRecordBits = 98;
int bitstream_bytes(const CgraGrid& grid);
std::vector<uint8_t> encode_bitstream(const CgraConfig& cfg);
CgraConfig decode_bitstream(std::span<const uint8_t> bytes, const CgraGrid& grid);

/// Independent re-derivation of routes and fire times. Empty result means valid.
std::vector<std::string> verify_schedule(const Mapping& m, const PGraph& pg);

/// Per-cycle simulation of the configured fabric. Thread group g enters at
/// cycle g (one group of `unroll` threads per cycle); thread id = g*unroll+lane.
struct PipelineRun {
  std::vector<PGraphResult> results;  // per thread, node values as seen on the fabric
  std::vector<int> ready_cycle;       // cycle each thread's output set is complete
  std::vector<std::string> violations;
};
PipelineRun simulate_pipeline(const Mapping& m, const PGraph& pg, std::span<const uint32_t> cbuf,
                              std::span<const ThreadInputs> threads);

/// Text grid showing the op, lane and fire time of every cell.
std::string dump_mapping(const Mapping& m, const PGraph& pg);

}  // namespace dice
