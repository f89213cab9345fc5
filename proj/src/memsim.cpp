#include "dice/memsim.hpp"

#include <algorithm>
#include <cstdio>

#include "dice/common.hpp"

namespace dice {

namespace {

uint32_t byte_mask(uint32_t offset) { return 0xFu << offset; }

}  // namespace

// ---------------------------------------------------------------------------
// TMCU

bool Tmcu::can_coalesce(const MemRequest& r) const {
  const uint32_t sector = r.addr - r.addr % static_cast<uint32_t>(sector_bytes_);
  return sector == buf_.sector && (r.type == ReqType::Load) == (buf_.type == ReqType::Load);
}

void Tmcu::initial(const MemRequest& r) {
  buf_ = Transaction{};
  buf_.type = r.type;
  buf_.sector = r.addr - r.addr % static_cast<uint32_t>(sector_bytes_);
  valid_ = true;
  coalesce(r);
}

void Tmcu::coalesce(const MemRequest& r) {
  const uint32_t off = r.addr - buf_.sector;
  buf_.mask |= byte_mask(off);
  buf_.parts.push_back({r.tid, r.cta, r.dst, off, r.eblock});
}

void Tmcu::pop(uint64_t cycle, std::vector<Transaction>& out) {
  buf_.cycle = cycle;
  out.push_back(std::move(buf_));
  buf_ = Transaction{};
  valid_ = false;
}

void Tmcu::tick(const MemRequest* in, uint64_t cycle, std::vector<Transaction>& out) {
  if (valid_) --timer_;
  if (timer_ <= 0) {
    pop(cycle, out);
    timer_ = max_interval_;
  }
  if (in && in->valid) {
    if (!valid_) {
      initial(*in);
    } else if (can_coalesce(*in)) {
      coalesce(*in);
      ++merges_;
    } else {
      pop(cycle, out);
      timer_ = max_interval_;
      initial(*in);
    }
  }
}

Transaction single_transaction(const MemRequest& r, int sector_bytes, uint64_t cycle) {
  Transaction t;
  t.type = r.type;
  t.sector = r.addr - r.addr % static_cast<uint32_t>(sector_bytes);
  const uint32_t off = r.addr - t.sector;
  t.mask = byte_mask(off);
  t.parts.push_back({r.tid, r.cta, r.dst, off, r.eblock});
  t.cycle = cycle;
  return t;
}

void MemConfig::validate() const {
  auto pos = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  pos(ports, "ldst_ports");
  pos(fifo_depth, "fifo_depth");
  pos(max_interval, "max_interval");
  pos(sector_bytes, "l1_sector_bytes");
  pos(line_bytes, "l1_line_bytes");
  pos(l1_bytes, "l1_size");
  pos(l1_assoc, "l1_assoc");
  pos(l1_mshrs, "l1_mshrs");
  pos(l1_hit_latency, "l1_hit_latency");
  pos(l1_miss_latency, "l1_miss_latency");
  pos(l1_throughput, "l1_throughput");
  pos(channels, "backing_channels");
  pos(channel_bw, "backing_bw");
  pos(shared_latency, "shared_latency");
  if (sector_bytes % 4 || sector_bytes > 32) throw ConfigError("l1_sector_bytes must be a multiple of 4, at most 32");
  if (line_bytes % sector_bytes || line_bytes / sector_bytes > 32)
    throw ConfigError("l1_line_bytes must be a multiple of the sector size");
  if (l1_bytes % (line_bytes * l1_assoc)) throw ConfigError("l1 size must be a multiple of line size times associativity");
}

// ---------------------------------------------------------------------------
// LDST unit

LdstUnit::LdstUnit(const MemConfig& cfg, int id)
    : cfg_(cfg), id_(id), fifo_(cfg.ports), used_(cfg.ports, 0),
      tmcu_(cfg.ports, Tmcu(cfg.max_interval, cfg.sector_bytes)) {}

bool LdstUnit::has_credit(const std::vector<int>& need) const {
  for (size_t p = 0; p < need.size(); ++p)
    if (need[p] > 0 && used_[p] + need[p] > cfg_.fifo_depth) return false;
  return true;
}

void LdstUnit::reserve(int port) {
  if (used_[port] >= cfg_.fifo_depth) throw SimError("LDST port credit overflow");
  ++used_[port];
}

void LdstUnit::push(int port, const MemRequest& r) {
  if (!r.valid) return;
  fifo_[port].push_back(r);
}

void LdstUnit::tick(uint64_t cycle, std::vector<Transaction>& txns, std::vector<MemRequest>& shared) {
  for (int p = 0; p < cfg_.ports; ++p) {
    std::optional<MemRequest> r;
    if (!fifo_[p].empty()) {
      r = fifo_[p].front();
      fifo_[p].pop_front();
      --used_[p];
    }
    const MemRequest* in = nullptr;
    if (r && r->space == MemSpace::Shared)
      shared.push_back(*r);
    else if (r)
      in = &*r;
    const size_t first = txns.size();
    if (cfg_.tmcu)
      tmcu_[p].tick(in, cycle, txns);
    else if (in)
      txns.push_back(single_transaction(*in, cfg_.sector_bytes, cycle));
    for (size_t i = first; i < txns.size(); ++i) txns[i].port = id_ * cfg_.ports + p;
  }
}

bool LdstUnit::idle() const {
  for (int p = 0; p < cfg_.ports; ++p)
    if (!fifo_[p].empty() || used_[p] || tmcu_[p].busy()) return false;
  return true;
}

uint64_t LdstUnit::merges() const {
  uint64_t m = 0;
  for (const auto& t : tmcu_) m += t.merges();
  return m;
}

// ---------------------------------------------------------------------------
// L1 and backing store

L1Model::L1Model(const MemConfig& cfg)
    : cfg_(cfg), sets_(cfg.l1_bytes / (cfg.line_bytes * cfg.l1_assoc)),
      lines_(static_cast<size_t>(sets_) * cfg.l1_assoc), channel_q_(cfg.channels) {}

int L1Model::channel_of(uint32_t sector) const {
  return static_cast<int>((sector / static_cast<uint32_t>(cfg_.sector_bytes)) % static_cast<uint32_t>(cfg_.channels));
}

bool L1Model::probe(uint32_t sector) const {
  const uint32_t line = sector / static_cast<uint32_t>(cfg_.line_bytes);
  const uint32_t set = line % static_cast<uint32_t>(sets_), tag = line / static_cast<uint32_t>(sets_);
  const uint32_t bit = 1u << ((sector % static_cast<uint32_t>(cfg_.line_bytes)) / static_cast<uint32_t>(cfg_.sector_bytes));
  for (int w = 0; w < cfg_.l1_assoc; ++w) {
    const Line& l = lines_[set * cfg_.l1_assoc + w];
    if (l.valid && l.tag == tag) return (l.sectors & bit) != 0;
  }
  return false;
}

void L1Model::fill(uint32_t sector, uint64_t) {
  const uint32_t line = sector / static_cast<uint32_t>(cfg_.line_bytes);
  const uint32_t set = line % static_cast<uint32_t>(sets_), tag = line / static_cast<uint32_t>(sets_);
  const uint32_t bit = 1u << ((sector % static_cast<uint32_t>(cfg_.line_bytes)) / static_cast<uint32_t>(cfg_.sector_bytes));
  Line* victim = nullptr;
  for (int w = 0; w < cfg_.l1_assoc; ++w) {
    Line& l = lines_[set * cfg_.l1_assoc + w];
    if (l.valid && l.tag == tag) {
      victim = &l;
      break;
    }
    if (!victim || (!l.valid && victim->valid) || (l.valid == victim->valid && l.lru < victim->lru)) victim = &l;
  }
  if (!victim->valid || victim->tag != tag) *victim = Line{tag, true, 0, 0};
  victim->sectors |= bit;
  victim->lru = ++tick_;
}

bool L1Model::try_issue(const Transaction& t, uint64_t cycle) {
  if (t.type == ReqType::Store) {
    channel_q_[channel_of(t.sector)].push_back(t);
    return true;
  }
  if (probe(t.sector)) {
    ++hits;
    fill(t.sector, cycle);  // LRU touch
    hit_q_.push_back({cycle + static_cast<uint64_t>(cfg_.l1_hit_latency), t});
    return true;
  }
  for (auto& m : mshrs_)
    if (m.sector == t.sector) {
      ++misses;
      ++mshr_merges;
      m.waiting.insert(m.waiting.end(), t.parts.begin(), t.parts.end());
      return true;
    }
  if (static_cast<int>(mshrs_.size()) >= cfg_.l1_mshrs) {
    ++mshr_stalls;
    return false;
  }
  ++misses;
  mshrs_.push_back({t.sector, t.parts});
  channel_q_[channel_of(t.sector)].push_back(t);
  return true;
}

void L1Model::tick(uint64_t cycle, std::vector<Completion>& done) {
  // Fills from the backing store.
  for (size_t i = 0; i < inflight_.size();) {
    if (inflight_[i].due > cycle) {
      ++i;
      continue;
    }
    const uint32_t sector = inflight_[i].txn.sector;
    fill(sector, cycle);
    for (auto it = mshrs_.begin(); it != mshrs_.end(); ++it)
      if (it->sector == sector) {
        for (const auto& p : it->waiting) done.push_back({cycle, ReqType::Load, MemSpace::Global, p});
        mshrs_.erase(it);
        break;
      }
    inflight_.erase(inflight_.begin() + static_cast<long>(i));
  }
  for (size_t i = 0; i < hit_q_.size();) {
    if (hit_q_[i].due > cycle) {
      ++i;
      continue;
    }
    for (const auto& p : hit_q_[i].txn.parts) done.push_back({cycle, ReqType::Load, MemSpace::Global, p});
    hit_q_.erase(hit_q_.begin() + static_cast<long>(i));
  }
  for (int n = 0; n < cfg_.l1_throughput && !queue_.empty(); ++n) {
    if (!try_issue(queue_.front(), cycle)) break;
    queue_.pop_front();
  }
  for (auto& q : channel_q_) {
    for (int n = 0; n < cfg_.channel_bw && !q.empty(); ++n) {
      Transaction t = std::move(q.front());
      q.pop_front();
      ++backing_txns;
      if (t.type == ReqType::Store) {
        for (const auto& p : t.parts) done.push_back({cycle, ReqType::Store, MemSpace::Global, p});
      } else {
        inflight_.push_back({cycle + static_cast<uint64_t>(cfg_.l1_miss_latency), std::move(t)});
      }
    }
  }
}

bool L1Model::idle() const {
  if (!queue_.empty() || !mshrs_.empty() || !inflight_.empty() || !hit_q_.empty()) return false;
  for (const auto& q : channel_q_)
    if (!q.empty()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Shared memory

void SharedMemUnit::accept(const MemRequest& r, uint64_t cycle) { q_.push_back({cycle + static_cast<uint64_t>(latency_), r}); }

void SharedMemUnit::tick(uint64_t cycle, std::vector<Completion>& done) {
  while (!q_.empty() && q_.front().first <= cycle) {
    const MemRequest& r = q_.front().second;
    done.push_back({cycle, r.type, MemSpace::Shared, {r.tid, r.cta, r.dst, 0, r.eblock}});
    q_.pop_front();
  }
}

// ---------------------------------------------------------------------------
// Cluster memory system

namespace {

const MemConfig& checked(const MemConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

MemSystem::MemSystem(const MemConfig& cfg, int cps) : cfg_(checked(cfg)), l1_(cfg), shared_(cfg.shared_latency) {
  for (int c = 0; c < cps; ++c) ldst_.emplace_back(cfg, c);
}

std::vector<Completion> MemSystem::tick(uint64_t cycle) {
  std::vector<Completion> done;
  l1_.tick(cycle, done);
  shared_.tick(cycle, done);
  for (auto& u : ldst_) {
    std::vector<Transaction> txns;
    std::vector<MemRequest> shared;
    u.tick(cycle, txns, shared);
    for (auto& r : shared) shared_.accept(r, cycle);
    for (auto& t : txns) {
      ++transactions_;
      if (record) log.push_back(t);
      l1_.accept(std::move(t));
    }
  }
  return done;
}

bool MemSystem::idle() const {
  if (!l1_.idle() || !shared_.idle()) return false;
  for (const auto& u : ldst_)
    if (!u.idle()) return false;
  return true;
}

uint64_t MemSystem::merges() const {
  uint64_t m = 0;
  for (const auto& u : ldst_) m += u.merges();
  return m;
}

std::string format_transaction(const Transaction& t) {
  char head[96];
  std::snprintf(head, sizeof head, "%llu %s port=%d sector=0x%08x mask=0x%08x parts=",
                static_cast<unsigned long long>(t.cycle), t.type == ReqType::Load ? "LD" : "ST", t.port, t.sector, t.mask);
  std::string s = head;
  for (size_t i = 0; i < t.parts.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(t.parts[i].cta) + ":" + std::to_string(t.parts[i].tid) + "@" + std::to_string(t.parts[i].offset);
  }
  return s;
}

}  // namespace dice
