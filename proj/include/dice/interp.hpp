#pragma once

// Scalar per-thread golden interpreter and the SIMD-baseline RF access counter.

#include <array>
#include <cstdint>
#include <vector>

#include "dice/ir.hpp"
#include "dice/memory.hpp"

namespace dice {

inline constexpr uint32_t kDefaultSharedBytes = 48 * 1024;

struct ThreadState {
  std::array<uint32_t, kNumGpr> regs{};
  std::array<bool, kNumPred> preds{};
  int pc = 0;  // flat instruction index
  bool active = true;
  bool operator==(const ThreadState&) const = default;
};

struct StoreRecord {
  MemSpace space = MemSpace::Global;
  uint32_t addr = 0;
  uint32_t value = 0;
  bool operator==(const StoreRecord&) const = default;
};

/// Baseline RF traffic: one read per register source, one write per register destination.
struct RfCounts {
  uint64_t reads = 0;
  uint64_t writes = 0;
  bool operator==(const RfCounts&) const = default;
  RfCounts& operator+=(const RfCounts& o) {
    reads += o.reads;
    writes += o.writes;
    return *this;
  }
};

struct ThreadResult {
  ThreadState state;
  std::vector<StoreRecord> stores;  // in program order
  RfCounts rf;
  uint64_t steps = 0;
};

/// Runs one thread to completion; BAR is a no-op. Stores are applied to `memory`
/// (global) and to a private zeroed shared-memory buffer.
ThreadResult interpret_thread(const Kernel& kernel, const LaunchConfig& launch, int cta, int tid,
                              GlobalMemory& memory, uint32_t shared_bytes = kDefaultSharedBytes);

struct CtaResult {
  std::vector<ThreadResult> threads;
};

/// Runs every thread of a CTA in barrier-separated phases: each thread runs until
/// its next BAR (or exit) in ascending tid order, then the next phase begins.
CtaResult interpret_cta(const Kernel& kernel, const LaunchConfig& launch, int cta, GlobalMemory& memory,
                        uint32_t shared_bytes = kDefaultSharedBytes);

struct OracleResult {
  GlobalMemory memory;
  std::vector<std::vector<ThreadState>> final_states;  // [cta][tid]
  RfCounts baseline_rf;
};

/// Whole-launch golden run, CTAs in ascending order.
OracleResult run_oracle(const Kernel& kernel, const LaunchConfig& launch, const GlobalMemory& memory,
                        uint32_t shared_bytes = kDefaultSharedBytes);

/// Baseline RF accesses over every thread of the launch. Guarded-off instructions
/// still count their operand reads (lockstep operand fetch) but not their write.
RfCounts count_baseline_rf(const Kernel& kernel, const LaunchConfig& launch, const GlobalMemory& memory,
                           uint32_t shared_bytes = kDefaultSharedBytes);

/// Value of a special register for thread `tid` of CTA `cta`.
uint32_t special_value(Special s, const LaunchConfig& launch, int cta, int tid);

}  // namespace dice
