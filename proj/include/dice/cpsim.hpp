#pragma once

// Cycle-level model of DICE CGRA Processors running a compiled program through
// CS -> FDR -> DE -> RE. Thread values are computed functionally at dispatch;
// the pipeline, scoreboard and memory system decide when things happen.

#include <boost/dynamic_bitset.hpp>
#include <cstdint>
#include <string>
#include <vector>

#include "dice/config.hpp"
#include "dice/interp.hpp"
#include "dice/memory.hpp"
#include "dice/program.hpp"

namespace dice {

using ThreadMask = boost::dynamic_bitset<uint64_t>;

struct PdomEntry {
  int pc = kNoPGraph;
  int rpc = kNoPGraph;  // reconvergence p-graph, kNoPGraph when none
  ThreadMask mask;
  int parent = -1;      // index of the entry this one diverged from
};

/// Per-CTA reconvergence stack. Exited threads leave every entry.
class PdomStack {
 public:
  explicit PdomStack(int threads);
  bool empty() const { return s_.empty(); }
  const PdomEntry& top() const { return s_.back(); }
  int depth() const { return static_cast<int>(s_.size()); }
  const std::vector<PdomEntry>& entries() const { return s_; }
  const ThreadMask& exited() const { return exited_; }

  /// Applies the outcome of the p-graph the top entry just executed.
  /// `taken` holds the threads whose conditional branch was taken.
  void resolve(const BranchMeta& b, int pc, const ThreadMask& taken);
  /// Successor the top entry would reach if every thread went the predicted way,
  /// or kNoPGraph when the branch exits.
  int predict(const BranchMeta& b, int pc) const;
  /// Conservation, subset and sibling-disjointness violations.
  std::vector<std::string> check() const;

 private:
  void exit_threads(const ThreadMask& m);
  void normalize();
  std::vector<PdomEntry> s_;
  ThreadMask exited_;
};

struct SimOptions {
  bool trace = false;         // per-event text trace
  bool mem_trace = false;     // one line per memory transaction
  bool record_dispatch = false;
  bool check_invariants = true;
  uint32_t shared_bytes = 0;  // 0 uses the config value
};

struct EBlockRecord {
  int id = 0;
  int cp = 0;
  int cta = 0;
  int pg = 0;
  bool speculative = false;
  bool discarded = false;
  uint64_t fdr_enter = 0;
  uint64_t fdr_ready = 0;
  uint64_t de_start = 0;
  uint64_t de_end = 0;     // cycle of the last writeback
  uint64_t retire = 0;
  int de_cycles = 0;       // de_end - de_start + 1
  int dispatch_cycles = 0; // cycles that dispatched a group
  int threads = 0;         // dispatched thread instances
  int active = 0;          // popcount of the active mask
  int unroll = 1;
};

struct DispatchEvent {
  uint64_t cycle = 0;
  int cp = 0;
  int cta = 0;
  int pg = 0;
  std::vector<int> tids;
};

struct CpCycles {
  uint64_t active = 0;
  uint64_t scoreboard = 0;
  uint64_t ldst_credit = 0;
  uint64_t brt_full = 0;
  uint64_t idle = 0;
  uint64_t total() const { return active + scoreboard + ldst_credit + brt_full + idle; }
};

struct SimStats {
  uint64_t cycles = 0;
  std::vector<CpCycles> cp;
  uint64_t dispatched_threads = 0;
  uint64_t dispatch_groups = 0;
  uint64_t eblocks = 0;    // executed, excluding discarded speculation
  uint64_t discarded = 0;
  RfCounts rf;
  RfCounts baseline_rf;
  uint64_t pe_fires = 0;   // compute-node executions
  double pe_utilization = 0;
  uint64_t loads = 0;      // valid load requests
  uint64_t stores = 0;
  uint64_t load_writebacks = 0;
  uint64_t store_acks = 0;
  uint64_t transactions = 0;
  uint64_t merges = 0;
  uint64_t l1_hits = 0;
  uint64_t l1_misses = 0;
  uint64_t backing_txns = 0;
  uint64_t pgcache_hits = 0;
  uint64_t pgcache_misses = 0;
  uint64_t bitstream_loads = 0;
  std::vector<uint64_t> pgraph_execs;
  // Runtime assertion counters; all zero on a correct run.
  uint64_t bank_violations = 0;
  uint64_t scoreboard_violations = 0;
  uint64_t pdom_violations = 0;
  uint64_t cm_violations = 0;
  uint64_t max_pdom_depth = 0;
};

struct SimResult {
  SimStats stats;
  GlobalMemory memory;
  std::vector<EBlockRecord> eblocks;
  std::vector<DispatchEvent> dispatches;
  std::vector<std::string> trace;
  std::vector<std::string> mem_trace;
  std::vector<std::string> violations;  // first few assertion messages
};

/// Effective unroll factor for an EBlock: the metadata factor when unrolling is
/// enabled, halved until factor * interval fits the CTA.
int effective_unroll(int meta_unroll, bool enabled, int max_unroll, int cta_size);
int unroll_interval(int factor);

/// Co-dispatch groups in order: for each block of U*K threads, {T + jK} for T in the block's first K.
std::vector<std::vector<int>> dispatch_groups(int cta_size, int factor);

struct CsCandidate {
  int cta = 0;
  int next_pc = kNoPGraph;
  bool blocked = false;  // barrier wait or no known next PC
};

/// CTA selection: among unblocked candidates whose next PC equals `last_fetched`,
/// the first after `last_selected` in CTA-id round-robin order; otherwise the same
/// round-robin over all unblocked candidates. Returns an index into `c` or -1.
int cs_pick(const std::vector<CsCandidate>& c, int last_fetched, int last_selected);

/// Runs the whole launch. Throws SimError on deadlock or max_cycles, Trap on bad accesses,
/// ConfigError when the program and config disagree.
SimResult simulate(const Program& prog, const SimConfig& cfg, const LaunchConfig& launch, const GlobalMemory& memory,
                   const SimOptions& opts = {});

}  // namespace dice
