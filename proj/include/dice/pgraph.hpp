#pragma once

// p-graphs: statically schedulable partitions of a kernel CDFG.
//
// Every p-graph obeys four constraints: no internal control transfer (other
// than predication-merged diamonds), no load-to-use edge, barriers terminate
// it, and its node/sink counts fit the fabric budget.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dice/cdfg.hpp"
#include "dice/ir.hpp"

namespace dice {

struct ResourceBudget {
  int pes = 16;         // INT/FP processing elements
  int sfus = 4;         // special function units
  int ldst_ports = 4;   // memory sinks per thread
  int max_fanin = 3;    // value operands per PE
  int switch_tracks = 2;  // routing tracks per directed mesh link

  bool valid() const { return pes > 0 && sfus > 0 && ldst_ports > 0 && max_fanin > 0 && switch_tracks > 0; }
};

/// Shared constant buffer contents: kernel parameters first, then distinct immediates.
struct ConstantPool {
  static constexpr int kCapacity = 64;
  int num_params = 0;
  std::vector<uint32_t> immediates;

  int size() const { return num_params + static_cast<int>(immediates.size()); }
  /// Pool slot for an immediate, adding it if needed.
  int intern(uint32_t value);
  /// Full buffer for a launch: parameter words followed by immediates.
  std::vector<uint32_t> materialize(const std::vector<uint32_t>& params) const;
};

enum class SrcKind : uint8_t { None, Node, Reg, Const, Special };

struct NodeSrc {
  SrcKind kind = SrcKind::None;
  int index = 0;  // node index, register bitmap index, pool slot or special id

  static NodeSrc node(int i) { return {SrcKind::Node, i}; }
  static NodeSrc reg(int bit) { return {SrcKind::Reg, bit}; }
  bool present() const { return kind != SrcKind::None; }
  bool operator==(const NodeSrc&) const = default;
};

enum class GuardKind : uint8_t { None, RegPred, Node };

/// Enable condition: active iff (predicate value != negate).
/// RegPred reads predicate register `index` from the RF; Node reads the 1-bit
/// result of node `index` (a SETP or PSEL inside the same p-graph).
struct NodeGuard {
  GuardKind kind = GuardKind::None;
  int index = 0;
  bool negate = false;
  bool operator==(const NodeGuard&) const = default;
};

struct PNode {
  Opcode op = Opcode::Mov;
  std::vector<NodeSrc> srcs;
  NodeSrc old_value;   // value kept when the guard is off
  NodeGuard guard;
  int dst = -1;        // register bitmap index, -1 for PSEL
  int inst_id = -1;    // flat instruction index, -1 when synthesized

  bool is_sfu() const { return is_sfu_op(op); }
  int latency(int sfu_latency) const { return is_sfu() ? sfu_latency : 1; }
};

struct MemSink {
  bool is_store = false;
  MemSpace space = MemSpace::Global;
  NodeSrc addr;      // None for absolute addressing
  int32_t offset = 0;
  NodeSrc value;     // stores only
  int dst = -1;      // loads only, GPR index
  NodeGuard guard;
  int inst_id = -1;
};

struct POutput {
  int reg = 0;   // bitmap index
  int node = 0;  // producing node
};

struct BranchInfo {
  enum class Kind : uint8_t { Fallthrough, Jump, Conditional, Exit };
  Kind kind = Kind::Fallthrough;
  int target = kNoPGraph;       // taken / jump / fallthrough successor p-graph
  int fallthrough = kNoPGraph;  // not-taken successor (conditional)
  int reconverge = kNoPGraph;   // immediate post-dominator p-graph, kNoPGraph = exit
  int pred = 0;
  bool negate = false;
  bool backward = false;

  // Block-level targets used before p-graph numbering.
  int target_block = kExitNode;
  int fallthrough_block = kExitNode;
  int reconverge_block = kExitNode;
};

struct PGraph {
  int id = 0;
  std::vector<PNode> nodes;
  std::vector<MemSink> sinks;
  std::vector<POutput> outputs;
  RegSet in_regs;
  RegSet out_regs;
  BranchInfo branch;
  bool barrier = false;          // all prior e-blocks of the CTA must retire first
  bool parameter_load = false;
  bool merged = false;           // built by predication merge
  int block = -1;                // originating block (first one for merged graphs)
  int barrier_inst = -1;         // BAR terminating this p-graph, if any
  std::vector<std::string> source_blocks;
  bool is_block_tail = false;    // carries the block terminator

  int compute_nodes() const;
  int sfu_nodes() const;
  int load_count() const;
  int store_count() const;
  int sink_count() const { return static_cast<int>(sinks.size()); }
  std::vector<int> load_dests() const;
  bool fits(const ResourceBudget& b, int copies = 1) const;
  std::vector<int> instruction_ids() const;
};

struct Partition {
  std::vector<PGraph> pgraphs;  // [0] is the parameter-load p-graph
  ConstantPool pool;
  int entry = 1;
};

struct PartitionOptions {
  bool predication_merge = true;
  /// Per-block PE budget overrides (block index -> PEs), used when mapping retries.
  std::vector<int> block_pe_limit;
};

/// Greedy forward sweep per basic block, then a predication merge over eligible diamonds.
Partition partition(const Kernel& kernel, const ResourceBudget& budget, const PartitionOptions& opts = {});

/// Merges the two sides of a diamond into one predicated p-graph, or nullopt if the
/// combined graph does not fit or either side is ineligible.
std::optional<PGraph> merge_with_predication(const PGraph& then_pg, const PGraph& else_pg, Guard cond,
                                             const ResourceBudget& budget);

struct UnrollLane {
  int factor;
  int interval;  // K
};
inline constexpr UnrollLane kDefaultLanes[] = {{4, 8}, {2, 16}};

/// Largest factor whose copies fit the budget and whose co-dispatched input
/// registers land in distinct swizzled banks.
int compute_unroll_factor(const PGraph& pg, const ResourceBudget& budget, int num_banks = kNumGpr,
                          std::span<const UnrollLane> lanes = kDefaultLanes);

/// Bank indices (r + T + jK) mod N for every GPR input r and copy j.
std::vector<int> co_dispatch_banks(const RegSet& in_regs, int base_thread, int factor, int interval,
                                   int num_banks = kNumGpr);

/// Independent re-check of the p-graph constraints. Empty result means valid.
std::vector<std::string> validate_pgraph(const PGraph& pg, const Kernel& kernel, const ResourceBudget& budget);

/// Checks that every non-control instruction appears in exactly one p-graph.
std::vector<std::string> validate_partition(const Partition& part, const Kernel& kernel);

std::string dump_pgraph(const PGraph& pg);

/// Per-thread view of the values a p-graph may read: GPRs and predicates
/// (as 0/1 words) by bitmap index, plus special registers.
struct ThreadInputs {
  std::array<uint32_t, kRegBitmapWidth> regs{};
  std::array<uint32_t, kNumSpecials> specials{};
};

struct NodeValue {
  uint32_t value = 0;
  bool written = false;  // false when the guard suppressed the result
  bool operator==(const NodeValue&) const = default;
};

struct SinkRequest {
  bool valid = false;  // guard on
  uint32_t addr = 0;
  uint32_t value = 0;  // stores only
  bool operator==(const SinkRequest&) const = default;
};

struct PGraphResult {
  std::vector<NodeValue> nodes;
  std::vector<SinkRequest> sinks;
};

/// ALU semantics extended with the fabric-internal LDC and PSEL.
uint32_t apply_node_op(Opcode op, std::span<const uint32_t> srcs);

/// Direct dataflow evaluation of one thread through a p-graph.
PGraphResult evaluate_pgraph(const PGraph& pg, std::span<const uint32_t> cbuf, const ThreadInputs& in);

/// Register writes a thread performs when its p-graph outputs reach the RF.
std::vector<std::pair<int, uint32_t>> output_writes(const PGraph& pg, const PGraphResult& r);

}  // namespace dice
