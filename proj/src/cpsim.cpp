#include "dice/cpsim.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <sstream>

#include "dice/common.hpp"
#include "dice/memsim.hpp"

namespace dice {

// ---------------------------------------------------------------------------
// PDOM stack

PdomStack::PdomStack(int threads) : exited_(static_cast<size_t>(threads)) {
  PdomEntry e;
  e.pc = 0;
  e.mask = ThreadMask(static_cast<size_t>(threads));
  e.mask.set();
  s_.push_back(std::move(e));
}

void PdomStack::exit_threads(const ThreadMask& m) {
  exited_ |= m;
  for (auto& e : s_) e.mask -= m;
}

void PdomStack::normalize() {
  while (!s_.empty()) {
    PdomEntry& t = s_.back();
    if (t.mask.none()) {
      s_.pop_back();
    } else if (t.pc == kNoPGraph) {
      const ThreadMask m = t.mask;
      s_.pop_back();
      exit_threads(m);
    } else if (t.rpc != kNoPGraph && t.pc == t.rpc) {
      s_.pop_back();
    } else {
      break;
    }
  }
}

void PdomStack::resolve(const BranchMeta& b, int pc, const ThreadMask& taken) {
  if (s_.empty()) throw SimError("branch resolved on a finished CTA");
  PdomEntry& top = s_.back();
  if (top.pc != pc) throw SimError("branch resolved for pg" + std::to_string(pc) + " but the stack is at pg" + std::to_string(top.pc));
  if (b.exit) {
    const ThreadMask m = top.mask;
    s_.pop_back();
    exit_threads(m);
  } else if (!b.conditional) {
    top.pc = b.successor;
  } else {
    const ThreadMask t = taken & top.mask;
    const ThreadMask n = top.mask - t;
    const int fall = pc + 1;
    if (n.none()) {
      top.pc = b.successor;
    } else if (t.none()) {
      top.pc = fall;
    } else {
      // The current entry waits at the reconvergence point; paths that start there are not pushed.
      const int parent = static_cast<int>(s_.size()) - 1;
      const int rpc = b.reconverge;
      top.pc = rpc;
      if (fall != rpc) s_.push_back({fall, rpc, n, parent});
      if (b.successor != rpc) s_.push_back({b.successor, rpc, t, parent});
    }
  }
  normalize();
}

int PdomStack::predict(const BranchMeta& b, int pc) const {
  if (b.exit || s_.empty()) return kNoPGraph;
  PdomStack copy = *this;
  ThreadMask taken(exited_.size());
  if (b.conditional && b.backward) taken = s_.back().mask;
  copy.resolve(b, pc, taken);
  return copy.empty() ? kNoPGraph : copy.top().pc;
}

std::vector<std::string> PdomStack::check() const {
  std::vector<std::string> v;
  ThreadMask all(exited_.size());
  for (size_t i = 0; i < s_.size(); ++i) {
    const PdomEntry& e = s_[i];
    all |= e.mask;
    if (e.mask.intersects(exited_)) v.push_back("entry " + std::to_string(i) + " holds exited threads");
    if (e.parent >= 0) {
      if (!e.mask.is_subset_of(s_[e.parent].mask)) v.push_back("entry " + std::to_string(i) + " is not a subset of its parent");
      for (size_t j = i + 1; j < s_.size(); ++j)
        if (s_[j].parent == e.parent && s_[j].mask.intersects(e.mask))
          v.push_back("sibling entries " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
    }
  }
  all |= exited_;
  if (!all.all()) v.push_back("stack masks plus exited threads do not cover the CTA");
  return v;
}

// ---------------------------------------------------------------------------
// Dispatch helpers

int unroll_interval(int factor) {
  for (const auto& l : kDefaultLanes)
    if (l.factor == factor) return l.interval;
  return 1;
}

int effective_unroll(int meta_unroll, bool enabled, int max_unroll, int cta_size) {
  int u = enabled ? std::min(meta_unroll, max_unroll) : 1;
  while (u > 1 && u * unroll_interval(u) > cta_size) u /= 2;
  return std::max(u, 1);
}

std::vector<std::vector<int>> dispatch_groups(int cta_size, int factor) {
  const int k = unroll_interval(factor);
  std::vector<std::vector<int>> out;
  for (int base = 0; base < cta_size; base += factor * k)
    for (int t = base; t < base + k && t < cta_size; ++t) {
      std::vector<int> g;
      for (int j = 0; j < factor; ++j)
        if (t + j * k < cta_size) g.push_back(t + j * k);
      out.push_back(std::move(g));
    }
  return out;
}

int cs_pick(const std::vector<CsCandidate>& c, int last_fetched, int last_selected) {
  auto pick = [&](bool want_match) {
    int best = -1, wrap = -1;
    for (int i = 0; i < static_cast<int>(c.size()); ++i) {
      if (c[i].blocked || (want_match && c[i].next_pc != last_fetched)) continue;
      if (c[i].cta > last_selected && (best < 0 || c[i].cta < c[best].cta)) best = i;
      if (wrap < 0 || c[i].cta < c[wrap].cta) wrap = i;
    }
    return best >= 0 ? best : wrap;
  };
  const int m = pick(true);
  return m >= 0 ? m : pick(false);
}

// ---------------------------------------------------------------------------
// Simulator

namespace {

struct Cta {
  int id = 0;
  int cp = 0;
  PdomStack stack;
  std::vector<ThreadInputs> regs;
  std::vector<std::array<uint8_t, kNumGpr>> pending;  // outstanding loads per register
  std::vector<uint8_t> shared;
  int unretired = 0;
  std::deque<int> unresolved;  // EBlocks whose branch has not been applied, oldest first
  bool finished = false;

  Cta(int id_, int cp_, int threads, uint32_t shared_bytes)
      : id(id_), cp(cp_), stack(threads), regs(threads), pending(threads), shared(shared_bytes, 0) {
    for (auto& p : pending) p.fill(0);
  }
};

struct EBlock {
  EBlockRecord rec;
  const PGraphMetadata* md = nullptr;
  ThreadMask mask;
  bool speculative_wait = false;
  uint64_t meta_ready = 0;
  bool bits_started = false;
  int cm_side = -1;
  bool ready = false;
  std::vector<std::vector<int>> groups;
  size_t cursor = 0;
  uint64_t done_cycle = 0;  // DE completes once this cycle is reached
  int outstanding = 0;
  uint64_t re_enter = 0;
};

struct OutReq {
  int port = 0;
  MemRequest req;
};

struct Cp {
  int id = 0;
  int cluster = 0;
  int local = 0;
  std::vector<int> ctas;
  int fdr = -1;
  int de = -1;
  std::vector<int> brt;
  std::array<int, 2> cm{-1, -1};
  std::array<uint64_t, 2> cm_ready{0, 0};
  int active_cm = 0;
  std::list<int> pgcache;  // most recent first
  int last_fetched = -1;
  int last_selected = -1;
  CpCycles cyc;
  std::map<std::pair<uint64_t, uint64_t>, OutReq> outq;  // (due, seq)
};

enum class Cat { Active, Scoreboard, Credit, BrtFull, Idle };

class Sim {
 public:
  Sim(const Program& prog, const SimConfig& cfg, const LaunchConfig& launch, const GlobalMemory& memory,
      const SimOptions& opts)
      : prog_(prog), cfg_(cfg), launch_(launch), opts_(opts) {
    cfg_.validate();
    const CgraGrid g = cfg_.grid(), pg = prog.options.grid;
    if (g.rows != pg.rows || g.cols != pg.cols || g.tracks != pg.tracks || g.sfu_latency != pg.sfu_latency ||
        cfg_.ldst_ports != prog.options.ldst_ports)
      throw ConfigError("program was compiled for a different CGRA (grid, tracks, SFU latency or LDST ports)");
    if (launch.cta_size < 1 || launch.grid_size < 1) throw ConfigError("launch needs at least one CTA of one thread");
    if (launch.cta_size > cfg_.max_threads_per_cp)
      throw ConfigError("CTA size " + std::to_string(launch.cta_size) + " exceeds max_threads_per_cp " +
                        std::to_string(cfg_.max_threads_per_cp));
    if (launch.params.size() != prog.kernel.params.size())
      throw ConfigError("launch supplies " + std::to_string(launch.params.size()) + " parameters, kernel expects " +
                        std::to_string(prog.kernel.params.size()));
    shared_bytes_ = opts.shared_bytes ? opts.shared_bytes : static_cast<uint32_t>(cfg_.shared_bytes);
    memory_ = memory;
    initial_ = memory;
    cbuf_ = prog.part.pool.materialize(launch.params);
    const MemConfig mc = cfg_.mem();
    for (int c = 0; c < cfg_.clusters; ++c) {
      mem_.push_back(std::make_unique<MemSystem>(mc, cfg_.cps_per_cluster));
      mem_.back()->record = opts.mem_trace;
      for (int l = 0; l < cfg_.cps_per_cluster; ++l) {
        Cp cp;
        cp.id = static_cast<int>(cps_.size());
        cp.cluster = c;
        cp.local = l;
        cps_.push_back(std::move(cp));
      }
    }
    ctas_.resize(static_cast<size_t>(launch.grid_size));
    resident_limit_ = std::max(1, std::min(cfg_.ctas_per_cp, cfg_.max_threads_per_cp / launch.cta_size));
    stats_.cp.resize(cps_.size());
    stats_.pgraph_execs.assign(static_cast<size_t>(prog.size()), 0);
  }

  SimResult run() {
    uint64_t cycle = 0;
    for (;; ++cycle) {
      if (cycle >= static_cast<uint64_t>(cfg_.max_cycles))
        throw SimError("simulation exceeded max_cycles = " + std::to_string(cfg_.max_cycles));
      assign_ctas(cycle);
      memory_tick(cycle);
      for (auto& cp : cps_) step_cp(cp, cycle);
      if (opts_.check_invariants) check_invariants();
      if (done()) break;
    }
    return finish(cycle + 1);
  }

 private:
  // -- bookkeeping ---------------------------------------------------------

  void trace(uint64_t cycle, const Cp& cp, const std::string& what) {
    if (opts_.trace) res_.trace.push_back(std::to_string(cycle) + " cp" + std::to_string(cp.id) + " " + what);
  }

  std::string tag(const EBlock& eb) const {
    return "eb=" + std::to_string(eb.rec.id) + " cta=" + std::to_string(eb.rec.cta) + " pg=" + std::to_string(eb.rec.pg);
  }

  void violation(uint64_t& counter, const std::string& msg) {
    ++counter;
    if (res_.violations.size() < 32) res_.violations.push_back(msg);
  }

  void archive(EBlock& eb) {
    if (res_.eblocks.size() <= static_cast<size_t>(eb.rec.id)) res_.eblocks.resize(static_cast<size_t>(eb.rec.id) + 1);
    res_.eblocks[static_cast<size_t>(eb.rec.id)] = eb.rec;
    eblocks_.erase(eb.rec.id);
  }

  bool done() const {
    if (next_cta_ < launch_.grid_size) return false;
    for (const auto& cp : cps_)
      if (!cp.ctas.empty() || cp.fdr >= 0 || cp.de >= 0 || !cp.brt.empty() || !cp.outq.empty()) return false;
    for (const auto& m : mem_)
      if (!m->idle()) return false;
    return true;
  }

  // -- kernel driver ---------------------------------------------------------

  void assign_ctas(uint64_t cycle) {
    for (auto& cp : cps_)
      while (static_cast<int>(cp.ctas.size()) < resident_limit_ && next_cta_ < launch_.grid_size) {
        const int id = next_cta_++;
        auto c = std::make_unique<Cta>(id, cp.id, launch_.cta_size, shared_bytes_);
        for (int t = 0; t < launch_.cta_size; ++t)
          for (int s = 0; s < kNumSpecials; ++s)
            c->regs[t].specials[s] = special_value(static_cast<Special>(s), launch_, id, t);
        ctas_[id] = std::move(c);
        cp.ctas.push_back(id);
        trace(cycle, cp, "KD launch cta=" + std::to_string(id));
      }
  }

  void release_if_done(Cp& cp, int cta_id, uint64_t cycle) {
    Cta& c = *ctas_[cta_id];
    if (!c.finished || c.unretired > 0) return;
    cp.ctas.erase(std::find(cp.ctas.begin(), cp.ctas.end(), cta_id));
    ctas_[cta_id].reset();
    trace(cycle, cp, "KD done cta=" + std::to_string(cta_id));
  }

  // -- memory ---------------------------------------------------------------

  void memory_tick(uint64_t cycle) {
    for (size_t k = 0; k < mem_.size(); ++k) {
      MemSystem& m = *mem_[k];
      for (const Completion& c : m.tick(cycle)) {
        EBlock& eb = eblocks_.at(c.who.eblock);
        if (--eb.outstanding < 0) throw SimError("negative outstanding count on " + tag(eb));
        if (c.type == ReqType::Load) {
          Cta& cta = *ctas_.at(c.who.cta);
          uint8_t& p = cta.pending[c.who.tid][c.who.dst];
          if (p == 0) throw SimError("load writeback without a pending scoreboard entry");
          --p;
          ++stats_.rf.writes;
          ++stats_.load_writebacks;
        } else {
          ++stats_.store_acks;
        }
      }
      if (opts_.mem_trace) {
        for (const auto& t : m.log) res_.mem_trace.push_back("cluster" + std::to_string(k) + " " + format_transaction(t));
        m.log.clear();
      }
    }
  }

  // -- per-CP pipeline --------------------------------------------------------

  void step_cp(Cp& cp, uint64_t cycle) {
    MemSystem& mem = *mem_[cp.cluster];
    // CGRA sink outputs reach the LDST FIFOs.
    while (!cp.outq.empty() && cp.outq.begin()->first.first <= cycle) {
      OutReq& o = cp.outq.begin()->second;
      mem.ldst(cp.local).push(o.port, o.req);
      cp.outq.erase(cp.outq.begin());
    }
    retire(cp, cycle);
    const Cat cat = dispatch_stage(cp, cycle);
    CpCycles& cc = cp.cyc;
    switch (cat) {
      case Cat::Active: ++cc.active; break;
      case Cat::Scoreboard: ++cc.scoreboard; break;
      case Cat::Credit: ++cc.ldst_credit; break;
      case Cat::BrtFull: ++cc.brt_full; break;
      case Cat::Idle: ++cc.idle; break;
    }
    fdr_stage(cp, cycle);
    cs_stage(cp, cycle);
    if (opts_.check_invariants && cp.de >= 0) {
      const EBlock& eb = eblocks_.at(cp.de);
      if (!eb.md->parameter_load && cp.cm[cp.active_cm] != eb.rec.pg)
        violation(stats_.cm_violations, "active CM does not hold the executing p-graph on cp" + std::to_string(cp.id));
    }
  }

  void retire(Cp& cp, uint64_t cycle) {
    std::vector<int> keep;
    for (int id : cp.brt) {
      EBlock& eb = eblocks_.at(id);
      if (eb.outstanding > 0 || eb.re_enter >= cycle) {
        keep.push_back(id);
        continue;
      }
      eb.rec.retire = cycle;
      trace(cycle, cp, "RE retire " + tag(eb));
      const int cta = eb.rec.cta;
      --ctas_.at(cta)->unretired;
      archive(eb);
      release_if_done(cp, cta, cycle);
    }
    cp.brt = std::move(keep);
  }

  Cat dispatch_stage(Cp& cp, uint64_t cycle) {
    if (cp.de < 0) {
      if (cp.fdr < 0 || !eblocks_.at(cp.fdr).ready) return Cat::Idle;
      start_de(cp, cycle);
    }
    EBlock& eb = eblocks_.at(cp.de);
    if (eb.md->parameter_load) {
      if (cycle >= eb.done_cycle && !complete_de(cp, eb, cycle)) return Cat::BrtFull;
      return Cat::Active;
    }
    if (eb.cursor < eb.groups.size()) return dispatch(cp, eb, cycle);
    if (cycle < eb.done_cycle) return Cat::Idle;
    return complete_de(cp, eb, cycle) ? Cat::Idle : Cat::BrtFull;
  }

  void start_de(Cp& cp, uint64_t cycle) {
    EBlock& eb = eblocks_.at(cp.fdr);
    cp.de = cp.fdr;
    cp.fdr = -1;
    eb.rec.de_start = cycle;
    eb.rec.active = static_cast<int>(eb.mask.count());
    ++stats_.pgraph_execs[eb.rec.pg];
    ++stats_.eblocks;
    if (eb.md->parameter_load) {
      const int words = static_cast<int>(cbuf_.size());
      eb.done_cycle = cycle + static_cast<uint64_t>(std::max(1, (words + 3) / 4)) - 1;
    } else {
      cp.active_cm = eb.cm_side;
      eb.rec.unroll = effective_unroll(eb.md->unroll, cfg_.unroll, cfg_.max_unroll, launch_.cta_size);
      for (auto& g : dispatch_groups(launch_.cta_size, eb.rec.unroll)) {
        std::vector<int> act;
        for (int t : g)
          if (eb.mask.test(static_cast<size_t>(t))) act.push_back(t);
        if (!act.empty()) eb.groups.push_back(std::move(act));
      }
    }
    trace(cycle, cp, "DE start " + tag(eb) + " threads=" + std::to_string(eb.rec.active) + " unroll=" + std::to_string(eb.rec.unroll));
  }

  Cat dispatch(Cp& cp, EBlock& eb, uint64_t cycle) {
    const std::vector<int>& group = eb.groups[eb.cursor];
    const PGraph& pg = prog_.pgraph(eb.rec.pg);
    const PGraphMetadata& md = *eb.md;
    Cta& cta = *ctas_.at(eb.rec.cta);

    // Scoreboard: operands, outputs and load destinations must have no pending load.
    uint32_t guard = 0;
    for (int r = 0; r < kNumGpr; ++r)
      if (md.in_regs.test(r) || md.out_regs.test(r)) guard |= 1u << r;
    for (int d : md.ld_dest)
      if (d >= 0) guard |= 1u << d;
    for (int t : group)
      for (int r = 0; r < kNumGpr; ++r)
        if ((guard >> r & 1) && cta.pending[t][r]) return Cat::Scoreboard;

    std::vector<PGraphResult> results;
    results.reserve(group.size());
    const int ports = cfg_.ldst_ports;
    const int nsinks = static_cast<int>(pg.sinks.size());
    std::vector<int> need(static_cast<size_t>(ports), 0);
    for (size_t lane = 0; lane < group.size(); ++lane) {
      results.push_back(evaluate_pgraph(pg, cbuf_, cta.regs[group[lane]]));
      for (int k = 0; k < nsinks; ++k)
        if (results.back().sinks[k].valid) ++need[(static_cast<int>(lane) * nsinks + k) % ports];
    }
    LdstUnit& ldst = mem_[cp.cluster]->ldst(cp.local);
    if (!ldst.has_credit(need)) return Cat::Credit;

    // Bank safety of the co-dispatched operand reads.
    if (opts_.check_invariants && group.size() > 1) {
      uint32_t used = 0;
      for (int t : group)
        for (int r = 0; r < kNumGpr; ++r) {
          if (!md.in_regs.test(r)) continue;
          const int bank = (r + t) % cfg_.num_banks;
          if (used >> bank & 1)
            violation(stats_.bank_violations, "bank conflict on bank " + std::to_string(bank) + " at cycle " + std::to_string(cycle));
          used |= 1u << bank;
        }
    }

    const int in_count = static_cast<int>(md.in_regs.count());
    const int compute = pg.compute_nodes();
    for (size_t lane = 0; lane < group.size(); ++lane) {
      const int tid = group[lane];
      ThreadInputs& regs = cta.regs[tid];
      for (int r = 0; r < kNumGpr; ++r)
        if (md.in_regs.test(r) && cta.pending[tid][r])
          violation(stats_.scoreboard_violations, "thread reads a register with a pending load");
      stats_.rf.reads += static_cast<uint64_t>(in_count);
      stats_.pe_fires += static_cast<uint64_t>(compute);
      const PGraphResult& res = results[lane];
      for (const auto& [reg, value] : output_writes(pg, res)) {
        regs.regs[reg] = value;
        ++stats_.rf.writes;
      }
      for (int k = 0; k < nsinks; ++k) {
        const SinkRequest& s = res.sinks[k];
        if (!s.valid) continue;
        const MemSink& sink = pg.sinks[k];
        MemRequest req;
        req.type = sink.is_store ? ReqType::Store : ReqType::Load;
        req.space = sink.space;
        req.addr = s.addr;
        req.tid = tid;
        req.cta = cta.id;
        req.dst = sink.is_store ? -1 : sink.dst;
        req.value = s.value;
        req.eblock = eb.rec.id;
        if (sink.is_store) {
          store(cta, sink, tid, s.addr, s.value);
          ++stats_.stores;
        } else {
          regs.regs[sink.dst] = load(cta, sink, tid, s.addr);
          ++cta.pending[tid][sink.dst];
          ++stats_.loads;
        }
        const int port = (static_cast<int>(lane) * nsinks + k) % ports;
        ldst.reserve(port);
        cp.outq.emplace(std::make_pair(cycle + static_cast<uint64_t>(md.lat), seq_++), OutReq{port, req});
        ++eb.outstanding;
      }
    }
    ++eb.cursor;
    ++eb.rec.dispatch_cycles;
    eb.rec.threads += static_cast<int>(group.size());
    stats_.dispatched_threads += group.size();
    ++stats_.dispatch_groups;
    eb.done_cycle = cycle + static_cast<uint64_t>(md.lat);
    if (opts_.record_dispatch) res_.dispatches.push_back({cycle, cp.id, cta.id, eb.rec.pg, group});
    if (opts_.trace) {
      std::string s = "DE dispatch " + tag(eb) + " tids=";
      for (size_t i = 0; i < group.size(); ++i) s += (i ? "," : "") + std::to_string(group[i]);
      trace(cycle, cp, s);
    }
    return Cat::Active;
  }

  uint32_t load(Cta& cta, const MemSink& sink, int tid, uint32_t addr) {
    if (sink.space == MemSpace::Shared) {
      if (addr % 4 || static_cast<size_t>(addr) + 4 > cta.shared.size())
        throw Trap("shared load out of bounds or unaligned at " + std::to_string(addr), sink.inst_id, tid);
      uint32_t v;
      std::memcpy(&v, cta.shared.data() + addr, 4);
      return v;
    }
    auto v = memory_.load32(addr);
    if (!v) throw Trap("global load out of bounds or unaligned at " + std::to_string(addr), sink.inst_id, tid);
    return *v;
  }

  void store(Cta& cta, const MemSink& sink, int tid, uint32_t addr, uint32_t value) {
    if (sink.space == MemSpace::Shared) {
      if (addr % 4 || static_cast<size_t>(addr) + 4 > cta.shared.size())
        throw Trap("shared store out of bounds or unaligned at " + std::to_string(addr), sink.inst_id, tid);
      std::memcpy(cta.shared.data() + addr, &value, 4);
      return;
    }
    if (!memory_.store32(addr, value))
      throw Trap("global store out of bounds or unaligned at " + std::to_string(addr), sink.inst_id, tid);
  }

  /// Moves a drained EBlock to the BRT and applies its branch. False when the BRT is full.
  bool complete_de(Cp& cp, EBlock& eb, uint64_t cycle) {
    if (static_cast<int>(cp.brt.size()) >= cfg_.brt_capacity) return false;
    Cta& cta = *ctas_.at(eb.rec.cta);
    ThreadMask taken(static_cast<size_t>(launch_.cta_size));
    const BranchMeta& b = eb.md->branch;
    if (b.conditional)
      for (size_t t = eb.mask.find_first(); t != ThreadMask::npos; t = eb.mask.find_next(t))
        if ((cta.regs[t].regs[pred_bit(b.pred)] != 0) != b.negate) taken.set(t);
    BranchMeta eff = b;
    if (!b.exit && !b.conditional && b.successor == kNoPGraph) eff.exit = true;
    cta.stack.resolve(eff, eb.rec.pg, taken);
    stats_.max_pdom_depth = std::max<uint64_t>(stats_.max_pdom_depth, static_cast<uint64_t>(cta.stack.depth()));
    if (cta.unresolved.empty() || cta.unresolved.front() != eb.rec.id) throw SimError("out-of-order branch resolution");
    cta.unresolved.pop_front();
    if (cta.stack.empty()) cta.finished = true;
    eb.rec.de_end = cycle;
    eb.rec.de_cycles = static_cast<int>(cycle - eb.rec.de_start + 1);
    eb.re_enter = cycle;
    cp.brt.push_back(eb.rec.id);
    cp.de = -1;
    trace(cycle, cp, "DE complete " + tag(eb) + " next=" + (cta.stack.empty() ? std::string("exit") : std::to_string(cta.stack.top().pc)));
    return true;
  }

  void fdr_stage(Cp& cp, uint64_t cycle) {
    if (cp.fdr < 0) return;
    EBlock& eb = eblocks_.at(cp.fdr);
    if (eb.ready || cycle < eb.meta_ready) return;
    Cta& cta = *ctas_.at(eb.rec.cta);
    const PGraphMetadata& md = *eb.md;
    // Bitstream into a configuration memory; loads only touch the inactive side.
    if (!eb.bits_started) {
      eb.bits_started = true;
      if (!md.parameter_load) {
        for (int s = 0; s < 2; ++s)
          if (cp.cm[s] == eb.rec.pg) eb.cm_side = s;
        if (eb.cm_side < 0) {
          const int side = 1 - cp.active_cm;
          cp.cm[side] = eb.rec.pg;
          const int fill = cfg_.cm_fill_bytes_per_cycle;
          cp.cm_ready[side] = cycle + static_cast<uint64_t>((md.bitstream_length + fill - 1) / fill);
          eb.cm_side = side;
          ++stats_.bitstream_loads;
          trace(cycle, cp, "FDR load-cm" + std::to_string(side) + " " + tag(eb));
        }
      }
    }
    if (eb.speculative_wait) {
      if (cta.unresolved.front() != eb.rec.id) return;
      eb.speculative_wait = false;
      if (cta.stack.empty() || cta.stack.top().pc != eb.rec.pg) {
        eb.rec.discarded = true;
        eb.rec.fdr_ready = cycle;
        ++stats_.discarded;
        cta.unresolved.pop_front();
        --cta.unretired;
        trace(cycle, cp, "FDR discard " + tag(eb));
        const int cta_id = cta.id;
        cp.fdr = -1;
        archive(eb);
        release_if_done(cp, cta_id, cycle);
        return;
      }
      eb.mask = cta.stack.top().mask;
    }
    if (md.barrier && cta.unretired > 1) return;
    if (!md.parameter_load && cp.cm_ready[eb.cm_side] > cycle) return;
    eb.ready = true;
    eb.rec.fdr_ready = cycle;
    trace(cycle, cp, "FDR ready " + tag(eb));
  }

  int next_pc(const Cta& c) const {
    if (c.finished || c.stack.empty()) return kNoPGraph;
    if (c.unresolved.empty()) return c.stack.top().pc;
    if (c.unresolved.size() > 1) return kNoPGraph;
    const EBlock& prev = eblocks_.at(c.unresolved.front());
    return c.stack.predict(prev.md->branch, prev.rec.pg);
  }

  void cs_stage(Cp& cp, uint64_t cycle) {
    if (cp.fdr >= 0) return;
    std::vector<CsCandidate> cand;
    for (int id : cp.ctas) {
      const Cta& c = *ctas_[id];
      CsCandidate x;
      x.cta = id;
      x.next_pc = next_pc(c);
      x.blocked = x.next_pc == kNoPGraph || x.next_pc >= prog_.size() ||
                  (prog_.meta[x.next_pc].barrier && c.unretired > 0);
      cand.push_back(x);
    }
    const int i = cs_pick(cand, cp.last_fetched, cp.last_selected);
    if (i < 0) return;
    Cta& cta = *ctas_[cand[i].cta];
    const int pg = cand[i].next_pc;
    EBlock eb;
    eb.rec.id = next_eblock_++;
    eb.rec.cp = cp.id;
    eb.rec.cta = cta.id;
    eb.rec.pg = pg;
    eb.rec.fdr_enter = cycle;
    eb.md = &prog_.meta[pg];
    eb.rec.speculative = !cta.unresolved.empty();
    eb.speculative_wait = eb.rec.speculative;
    eb.mask = eb.rec.speculative ? ThreadMask(static_cast<size_t>(launch_.cta_size)) : cta.stack.top().mask;
    auto hit = std::find(cp.pgcache.begin(), cp.pgcache.end(), pg);
    if (hit != cp.pgcache.end()) {
      cp.pgcache.erase(hit);
      eb.meta_ready = cycle + static_cast<uint64_t>(cfg_.pgcache_hit_latency);
      ++stats_.pgcache_hits;
    } else {
      eb.meta_ready = cycle + static_cast<uint64_t>(cfg_.pgcache_miss_latency);
      ++stats_.pgcache_misses;
      if (static_cast<int>(cp.pgcache.size()) >= cfg_.pgcache_entries) cp.pgcache.pop_back();
    }
    cp.pgcache.push_front(pg);
    cp.last_fetched = pg;
    cp.last_selected = cta.id;
    ++cta.unretired;
    cta.unresolved.push_back(eb.rec.id);
    trace(cycle, cp, std::string("CS select ") + tag(eb) + (eb.rec.speculative ? " speculative" : ""));
    cp.fdr = eb.rec.id;
    eblocks_.emplace(eb.rec.id, std::move(eb));
  }

  void check_invariants() {
    for (const auto& c : ctas_) {
      if (!c || c->stack.empty()) continue;
      for (const auto& v : c->stack.check()) violation(stats_.pdom_violations, "cta " + std::to_string(c->id) + ": " + v);
    }
  }

  SimResult finish(uint64_t cycles) {
    stats_.cycles = cycles;
    for (size_t i = 0; i < cps_.size(); ++i) stats_.cp[i] = cps_[i].cyc;
    for (const auto& m : mem_) {
      stats_.transactions += m->transactions();
      stats_.merges += m->merges();
      stats_.l1_hits += m->l1().hits;
      stats_.l1_misses += m->l1().misses;
      stats_.backing_txns += m->l1().backing_txns;
    }
    const double slots = static_cast<double>(cycles) * cfg_.pes * static_cast<double>(cps_.size());
    stats_.pe_utilization = slots > 0 ? static_cast<double>(stats_.pe_fires) / slots : 0;
    stats_.baseline_rf = count_baseline_rf(prog_.kernel, launch_, initial_, shared_bytes_);
    res_.stats = stats_;
    res_.memory = std::move(memory_);
    return std::move(res_);
  }

  const Program& prog_;
  SimConfig cfg_;
  LaunchConfig launch_;
  SimOptions opts_;
  uint32_t shared_bytes_ = 0;
  GlobalMemory memory_;
  GlobalMemory initial_;
  std::vector<uint32_t> cbuf_;
  std::vector<std::unique_ptr<MemSystem>> mem_;
  std::vector<Cp> cps_;
  std::vector<std::unique_ptr<Cta>> ctas_;
  std::map<int, EBlock> eblocks_;
  int next_cta_ = 0;
  int next_eblock_ = 0;
  int resident_limit_ = 1;
  uint64_t seq_ = 0;
  SimStats stats_;
  SimResult res_;
};

}  // namespace

SimResult simulate(const Program& prog, const SimConfig& cfg, const LaunchConfig& launch, const GlobalMemory& memory,
                   const SimOptions& opts) {
  return Sim(prog, cfg, launch, memory, opts).run();
}

}  // namespace dice
