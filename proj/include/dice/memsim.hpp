#pragma once

// LDST unit (per-port FIFOs with credits and one TMCU per port), a sectored
// write-through L1, a fixed-latency shared memory and a banded backing store.
// Data values are handled functionally by the caller; this model only times
// requests and reports completions.

#include <cstdint>
#include <deque>
#include <list>
#include <optional>
#include <string>
#include <vector>

#include "dice/ir.hpp"

namespace dice {

enum class ReqType : uint8_t { Load, Store };

struct MemRequest {
  ReqType type = ReqType::Load;
  MemSpace space = MemSpace::Global;
  uint32_t addr = 0;
  int tid = 0;
  int cta = 0;
  int dst = -1;  // loads: GPR index
  uint32_t value = 0;
  bool valid = true;
  int eblock = -1;
};

struct Participant {
  int tid = 0;
  int cta = 0;
  int dst = -1;
  uint32_t offset = 0;  // byte offset inside the sector
  int eblock = -1;
  bool operator==(const Participant&) const = default;
};

struct Transaction {
  ReqType type = ReqType::Load;
  uint32_t sector = 0;  // sector-aligned byte address
  uint32_t mask = 0;    // one bit per byte of the sector
  std::vector<Participant> parts;
  uint64_t cycle = 0;   // emission cycle
  int port = 0;
  bool operator==(const Transaction&) const = default;
};

/// One coalescing buffer driven by OutputCommand once per cycle.
class Tmcu {
 public:
  Tmcu(int max_interval, int sector_bytes) : max_interval_(max_interval), sector_bytes_(sector_bytes), timer_(max_interval) {}

  /// Runs one cycle. Popped transactions are appended to `out` in pop order.
  void tick(const MemRequest* in, uint64_t cycle, std::vector<Transaction>& out);
  bool busy() const { return valid_; }
  uint64_t merges() const { return merges_; }
  int timer() const { return timer_; }

 private:
  bool can_coalesce(const MemRequest& r) const;
  void initial(const MemRequest& r);
  void coalesce(const MemRequest& r);
  void pop(uint64_t cycle, std::vector<Transaction>& out);

  int max_interval_;
  int sector_bytes_;
  int timer_;
  bool valid_ = false;
  Transaction buf_;
  uint64_t merges_ = 0;
};

/// Transaction for a single uncoalesced request.
Transaction single_transaction(const MemRequest& r, int sector_bytes, uint64_t cycle);

struct MemConfig {
  int ports = 4;
  int fifo_depth = 8;
  bool tmcu = true;
  int max_interval = 8;
  int sector_bytes = 32;
  int line_bytes = 128;
  int l1_bytes = 96 * 1024;
  int l1_assoc = 4;
  int l1_mshrs = 32;
  int l1_hit_latency = 30;
  int l1_miss_latency = 120;
  int l1_throughput = 1;  // transactions accepted per cycle
  int channels = 8;
  int channel_bw = 1;     // transactions per cycle per channel
  int shared_latency = 24;
  void validate() const;
};

/// Per-port request FIFOs with credit accounting, draining into TMCUs.
class LdstUnit {
 public:
  LdstUnit(const MemConfig& cfg, int id);

  /// Credit check for the dispatcher: `need[p]` new requests on port p.
  bool has_credit(const std::vector<int>& need) const;
  void reserve(int port);
  /// Valid requests enter the FIFO (credit must have been reserved); invalid ones are dropped.
  void push(int port, const MemRequest& r);

  /// Drains one request per port into its TMCU. Global transactions go to `txns`,
  /// shared-memory requests to `shared`.
  void tick(uint64_t cycle, std::vector<Transaction>& txns, std::vector<MemRequest>& shared);
  bool idle() const;
  int id() const { return id_; }
  uint64_t merges() const;
  int credits_used(int port) const { return used_[port]; }

 private:
  MemConfig cfg_;
  int id_;
  std::vector<std::deque<MemRequest>> fifo_;
  std::vector<int> used_;  // reserved or occupied FIFO slots
  std::vector<Tmcu> tmcu_;
};

struct Completion {
  uint64_t cycle = 0;
  ReqType type = ReqType::Load;
  MemSpace space = MemSpace::Global;
  Participant who;
};

/// Sectored L1 (write-through, no write allocate) plus the backing channels.
class L1Model {
 public:
  explicit L1Model(const MemConfig& cfg);
  void accept(Transaction t) { queue_.push_back(std::move(t)); }
  /// Processes queued transactions and backing-store events; completions are appended.
  void tick(uint64_t cycle, std::vector<Completion>& done);
  bool idle() const;

  uint64_t hits = 0, misses = 0, mshr_merges = 0, mshr_stalls = 0, backing_txns = 0;
  bool probe(uint32_t sector) const;

 private:
  struct Line {
    uint32_t tag = 0;
    bool valid = false;
    uint32_t sectors = 0;
    uint64_t lru = 0;
  };
  struct Mshr {
    uint32_t sector = 0;
    std::vector<Participant> waiting;
  };
  struct Pending {
    uint64_t due = 0;
    Transaction txn;
  };
  bool try_issue(const Transaction& t, uint64_t cycle);
  void fill(uint32_t sector, uint64_t cycle);
  int channel_of(uint32_t sector) const;

  MemConfig cfg_;
  int sets_;
  std::vector<Line> lines_;
  std::deque<Transaction> queue_;
  std::list<Mshr> mshrs_;
  std::vector<std::deque<Transaction>> channel_q_;
  std::vector<Pending> inflight_;  // backing loads awaiting their fill
  std::vector<Pending> hit_q_;     // load hits awaiting the hit latency
  uint64_t tick_ = 0;
};

/// Fixed-latency shared memory with no bank conflicts.
class SharedMemUnit {
 public:
  explicit SharedMemUnit(int latency) : latency_(latency) {}
  void accept(const MemRequest& r, uint64_t cycle);
  void tick(uint64_t cycle, std::vector<Completion>& done);
  bool idle() const { return q_.empty(); }

 private:
  int latency_;
  std::deque<std::pair<uint64_t, MemRequest>> q_;
};

/// Memory hierarchy of one cluster: one LDST unit per CP, shared L1 and shared memory.
class MemSystem {
 public:
  MemSystem(const MemConfig& cfg, int cps);
  LdstUnit& ldst(int cp) { return ldst_[cp]; }
  /// One cycle: backing/L1/shared completions, then FIFO drain and coalescing
  /// (lowest CP id first). Returns completions of this cycle in deterministic order.
  std::vector<Completion> tick(uint64_t cycle);
  bool idle() const;
  const L1Model& l1() const { return l1_; }
  uint64_t transactions() const { return transactions_; }
  uint64_t merges() const;
  /// Emitted transactions, when recording is on.
  std::vector<Transaction> log;
  bool record = false;

 private:
  MemConfig cfg_;
  std::vector<LdstUnit> ldst_;
  L1Model l1_;
  SharedMemUnit shared_;
  uint64_t transactions_ = 0;
};

std::string format_transaction(const Transaction& t);

}  // namespace dice
