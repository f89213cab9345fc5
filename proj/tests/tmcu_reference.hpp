#pragma once

// Reference coalescer written from the pseudocode with explicit ages instead of
// a down-counting timer: a buffer initialized at cycle c is flushed at c + max_interval
// unless a non-matching request pops it first.

#include <optional>
#include <vector>

#include "dice/memsim.hpp"

namespace dice::fixtures {

struct RefTxn {
  uint64_t cycle;
  ReqType type;
  uint32_t sector;
  uint32_t mask;
  std::vector<int> tids;
  bool operator==(const RefTxn&) const = default;
};

inline std::vector<RefTxn> reference_coalesce(const std::vector<std::optional<MemRequest>>& trace, int max_interval,
                                              int sector_bytes, int drain_cycles) {
  std::vector<RefTxn> out;
  std::optional<RefTxn> buf;
  uint64_t born = 0;
  const uint64_t end = trace.size() + static_cast<uint64_t>(drain_cycles);
  for (uint64_t t = 0; t < end; ++t) {
    if (buf && t - born >= static_cast<uint64_t>(max_interval)) {
      buf->cycle = t;
      out.push_back(*buf);
      buf.reset();
    }
    if (t >= trace.size() || !trace[t] || !trace[t]->valid) continue;
    const MemRequest& r = *trace[t];
    const uint32_t sector = r.addr / sector_bytes * sector_bytes;
    if (buf && buf->sector == sector && buf->type == r.type) {
      buf->mask |= 0xFu << (r.addr - sector);
      buf->tids.push_back(r.tid);
      continue;
    }
    if (buf) {
      buf->cycle = t;
      out.push_back(*buf);
    }
    buf = RefTxn{0, r.type, sector, 0xFu << (r.addr - sector), {r.tid}};
    born = t;
  }
  return out;
}

inline std::vector<RefTxn> run_tmcu(const std::vector<std::optional<MemRequest>>& trace, int max_interval,
                                    int sector_bytes, int drain_cycles) {
  Tmcu tmcu(max_interval, sector_bytes);
  std::vector<Transaction> txns;
  const uint64_t end = trace.size() + static_cast<uint64_t>(drain_cycles);
  for (uint64_t t = 0; t < end; ++t) {
    const MemRequest* in = t < trace.size() && trace[t] ? &*trace[t] : nullptr;
    tmcu.tick(in, t, txns);
  }
  std::vector<RefTxn> out;
  for (const auto& x : txns) {
    RefTxn r{x.cycle, x.type, x.sector, x.mask, {}};
    for (const auto& p : x.parts) r.tids.push_back(p.tid);
    out.push_back(r);
  }
  return out;
}

}  // namespace dice::fixtures
