#include <gtest/gtest.h>

#include "dice/cpsim.hpp"
#include "sim_helpers.hpp"

using namespace dice;

namespace {

void expect_clean(const SimResult& r, const std::string& what) {
  EXPECT_EQ(r.stats.bank_violations, 0u) << what;
  EXPECT_EQ(r.stats.scoreboard_violations, 0u) << what;
  EXPECT_EQ(r.stats.pdom_violations, 0u) << what;
  EXPECT_EQ(r.stats.cm_violations, 0u) << what;
  for (const auto& v : r.violations) ADD_FAILURE() << what << ": " << v;
  for (const auto& c : r.stats.cp) EXPECT_EQ(c.total(), r.stats.cycles) << what;
  EXPECT_EQ(r.stats.loads, r.stats.load_writebacks) << what;
  EXPECT_EQ(r.stats.stores, r.stats.store_acks) << what;
}

uint64_t oracle_stores(const Kernel& k, const LaunchConfig& launch, GlobalMemory memory) {
  uint64_t n = 0;
  for (int c = 0; c < launch.grid_size; ++c)
    for (const auto& t : interpret_cta(k, launch, c, memory).threads) n += t.stores.size();
  return n;
}

ThreadMask mask_of(int threads, auto pred) {
  ThreadMask m(static_cast<size_t>(threads));
  for (int t = 0; t < threads; ++t)
    if (pred(t)) m.set(static_cast<size_t>(t));
  return m;
}

BranchMeta cond(int target, int rpc, bool backward = false) {
  BranchMeta b;
  b.conditional = true;
  b.successor = target;
  b.reconverge = rpc;
  b.backward = backward;
  return b;
}

BranchMeta jump(int target) {
  BranchMeta b;
  b.successor = target;
  return b;
}

// Global load into r1, then `ops` dependent ops on r1 and r3 with the result stored.
std::string unroll_source(int ops) {
  std::string s = ".kernel unr .params 3 .regs 8\n"
                  "  LD.PARAM r0, [0]\n"
                  "  IMAD r3, %ctaid.x, %ntid.x, %tid.x\n"
                  "  SHL r3, r3, 2\n"
                  "  IADD r4, r0, r3\n"
                  "  LD.GLOBAL r1, [r4]\n"
                  "  IADD r5, r1, r3\n";
  for (int i = 1; i < ops; ++i) s += "  IADD r5, r5, " + std::to_string(i) + "\n";
  return s + "  LD.PARAM r2, [8]\n  IADD r6, r2, r3\n  ST.GLOBAL [r6], r5\n  RET\n";
}

// Only CTA 0 issues its load, so CTA 1's copy of the same p-graph drains at once.
const std::string kCtaZeroLoads = R"(
.kernel ooo .params 3 .regs 8
  LD.PARAM r0, [0]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  SETP.EQ p0, %ctaid.x, 0
  LD.GLOBAL r1, [r5] @p0
  IADD r6, r1, 1
  LD.PARAM r2, [8]
  IADD r7, r2, r4
  ST.GLOBAL [r7], r6
  RET
)";

SimConfig one_cp(int ctas) {
  SimConfig c;
  c.cps_per_cluster = 1;
  c.ctas_per_cp = ctas;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Functional equivalence

TEST(Golden, SuiteMatchesOracleAcrossVariants) {
  for (const auto& k : fixtures::functional_suite()) {
    for (auto [cta, grid] : {std::pair{64, 2}, std::pair{40, 3}}) {
      auto s = fixtures::make_sim_case(k.source, cta, grid);
      OracleResult oracle = run_oracle(s.prog.kernel, s.launch, s.image.memory);
      const uint64_t stores = oracle_stores(s.prog.kernel, s.launch, s.image.memory);
      for (const auto& v : kVariants) {
        const std::string what = k.name + "/" + v.name + "/" + std::to_string(cta) + "x" + std::to_string(grid);
        SimResult r = simulate(s.prog, fixtures::variant_config(v), s.launch, s.image.memory);
        EXPECT_EQ(r.memory, oracle.memory) << what;
        EXPECT_EQ(r.stats.stores, stores) << what;
        EXPECT_EQ(r.stats.baseline_rf, oracle.baseline_rf) << what;
        expect_clean(r, what);
      }
    }
  }
}

TEST(Golden, ManyCpsAndResidentCtas) {
  SimConfig cfg;
  cfg.clusters = 2;
  cfg.cps_per_cluster = 2;
  cfg.ctas_per_cp = 3;
  for (const auto& k : fixtures::functional_suite()) {
    auto s = fixtures::make_sim_case(k.source, 32, 11);
    OracleResult oracle = run_oracle(s.prog.kernel, s.launch, s.image.memory);
    SimResult r = simulate(s.prog, cfg, s.launch, s.image.memory);
    EXPECT_EQ(r.memory, oracle.memory) << k.name;
    expect_clean(r, k.name);
  }
}

TEST(Golden, FeatureFlagsOnlyChangeTiming) {
  auto s = fixtures::make_sim_case(fixtures::kVecAdd, 64, 1);
  SimResult naive = simulate(s.prog, fixtures::variant_config(kVariants[0]), s.launch, s.image.memory);
  SimResult full = simulate(s.prog, fixtures::variant_config(kVariants[3]), s.launch, s.image.memory);
  EXPECT_EQ(naive.memory, full.memory);
  EXPECT_GE(naive.stats.cycles, full.stats.cycles);
  EXPECT_GT(full.stats.merges, 0u);
  EXPECT_EQ(naive.stats.merges, 0u);
}

// ---------------------------------------------------------------------------
// Cycle and dispatch structure

TEST(Dispatch, CycleFormulaTPlusLat) {
  SimConfig cfg;
  cfg.unroll = false;
  for (auto [t, ops] : {std::pair{64, 4}, std::pair{256, 9}, std::pair{512, 16}, std::pair{1, 3}}) {
    Program p = compile(parse_kernel(fixtures::alu_chain_source(ops)));
    ASSERT_EQ(p.size(), 2);
    const int lat = p.meta[1].lat;
    SimResult r = simulate(p, cfg, {t, 1, {}}, GlobalMemory(64));
    const EBlockRecord& e = r.eblocks.back();
    ASSERT_EQ(e.pg, 1);
    EXPECT_EQ(e.de_cycles, t + lat) << t;
    EXPECT_EQ(e.dispatch_cycles, t);
    EXPECT_EQ(e.de_end, e.de_start + static_cast<uint64_t>(t - 1 + lat));
    EXPECT_EQ(r.stats.cp[0].scoreboard + r.stats.cp[0].ldst_credit + r.stats.cp[0].brt_full, 0u);
  }
}

TEST(Dispatch, GroupsFollowUnrollInterval) {
  auto g = dispatch_groups(64, 4);
  ASSERT_EQ(g.size(), 16u);
  EXPECT_EQ(g[0], (std::vector<int>{0, 8, 16, 24}));
  EXPECT_EQ(g[7], (std::vector<int>{7, 15, 23, 31}));
  EXPECT_EQ(g[8], (std::vector<int>{32, 40, 48, 56}));
  auto h = dispatch_groups(40, 2);
  EXPECT_EQ(h[0], (std::vector<int>{0, 16}));
  EXPECT_EQ(h.back(), (std::vector<int>{39}));
  EXPECT_EQ(dispatch_groups(5, 1).size(), 5u);
  EXPECT_EQ(effective_unroll(4, true, 4, 256), 4);
  EXPECT_EQ(effective_unroll(4, true, 4, 32), 4);
  EXPECT_EQ(effective_unroll(4, true, 4, 31), 1);
  EXPECT_EQ(effective_unroll(2, true, 4, 40), 2);
  EXPECT_EQ(effective_unroll(4, false, 4, 256), 1);
  EXPECT_EQ(effective_unroll(4, true, 2, 256), 2);
}

TEST(Dispatch, UnrolledThroughput) {
  for (auto [ops, factor, cycles] : {std::tuple{2, 4, 64}, std::tuple{5, 2, 128}}) {
    auto s = fixtures::make_sim_case(unroll_source(ops), 256, 1);
    const int body = s.prog.size() - 1;
    ASSERT_EQ(s.prog.meta[body].unroll, factor) << ops;
    SimResult r = simulate(s.prog, SimConfig{}, s.launch, s.image.memory);
    const EBlockRecord& e = r.eblocks.back();
    ASSERT_EQ(e.pg, body);
    EXPECT_EQ(e.unroll, factor);
    EXPECT_EQ(e.dispatch_cycles, cycles);
    EXPECT_EQ(e.threads, 256);
    EXPECT_EQ(r.memory, run_oracle(s.prog.kernel, s.launch, s.image.memory).memory);
    expect_clean(r, "unroll " + std::to_string(factor));
  }
}

TEST(Dispatch, MaskedThreadsAreSkipped) {
  // tid % 4 == 2 skips the body: active mask 0b1011 dispatches 0, 1, 3.
  auto s = fixtures::make_sim_case(fixtures::kMasked, 4, 1);
  SimOptions o;
  o.record_dispatch = true;
  SimConfig cfg;
  cfg.unroll = false;
  SimResult r = simulate(s.prog, cfg, s.launch, s.image.memory, o);
  std::map<int, std::vector<int>> order;
  for (const auto& d : r.dispatches) order[d.pg].insert(order[d.pg].end(), d.tids.begin(), d.tids.end());
  int partial = 0;
  for (const auto& [pg, tids] : order) {
    if (tids.size() == 4) {
      EXPECT_EQ(tids, (std::vector<int>{0, 1, 2, 3}));
    } else {
      EXPECT_EQ(tids, (std::vector<int>{0, 1, 3})) << "pg" << pg;
      ++partial;
    }
  }
  EXPECT_GE(partial, 1);
  EXPECT_EQ(r.memory, run_oracle(s.prog.kernel, s.launch, s.image.memory).memory);
}

TEST(Dispatch, ScoreboardStallsOnPendingLoad) {
  auto s = fixtures::make_sim_case(fixtures::kVecAdd, 64, 1);
  SimResult r = simulate(s.prog, SimConfig{}, s.launch, s.image.memory);
  EXPECT_GT(r.stats.cp[0].scoreboard, 0u);
}

TEST(Dispatch, CreditStallWithShallowFifos) {
  auto s = fixtures::make_sim_case(fixtures::kLoadChain, 128, 1);
  SimConfig cfg;
  cfg.fifo_depth = 1;
  cfg.tmcu = false;
  SimResult r = simulate(s.prog, cfg, s.launch, s.image.memory);
  EXPECT_GT(r.stats.cp[0].ldst_credit, 0u);
  EXPECT_EQ(r.memory, run_oracle(s.prog.kernel, s.launch, s.image.memory).memory);
  expect_clean(r, "credit");
}

TEST(Dispatch, PredicatedOffStoresIssueNoRequest) {
  auto s = fixtures::make_sim_case(fixtures::kGuarded, 64, 1);
  SimResult r = simulate(s.prog, SimConfig{}, s.launch, s.image.memory);
  // One unconditional store per thread plus the guarded one for tid % 8 <= 2.
  EXPECT_EQ(r.stats.stores, 64u + 24u);
}

// ---------------------------------------------------------------------------
// Retire, barrier, fetch

TEST(Retire, MemoryFreeEBlockRetiresNextCycle) {
  Program p = compile(parse_kernel(fixtures::alu_chain_source(3)));
  SimResult r = simulate(p, SimConfig{}, {32, 1, {}}, GlobalMemory(64));
  for (const auto& e : r.eblocks) EXPECT_EQ(e.retire, e.de_end + 1) << e.pg;
}

TEST(Retire, OutOfOrderCompletion) {
  auto s = fixtures::make_sim_case(kCtaZeroLoads, 32, 2);
  SimResult r = simulate(s.prog, one_cp(2), s.launch, s.image.memory);
  bool inverted = false;
  for (const auto& a : r.eblocks)
    for (const auto& b : r.eblocks)
      if (!a.discarded && !b.discarded && a.de_end < b.de_end && a.retire > b.retire) inverted = true;
  EXPECT_TRUE(inverted);
  EXPECT_EQ(r.memory, run_oracle(s.prog.kernel, s.launch, s.image.memory).memory);
}

TEST(Retire, FullBrtBackpressuresDe) {
  auto s = fixtures::make_sim_case(fixtures::kLoadChain, 32, 4);
  SimConfig cfg = one_cp(4);
  cfg.brt_capacity = 1;
  SimResult r = simulate(s.prog, cfg, s.launch, s.image.memory);
  EXPECT_GT(r.stats.cp[0].brt_full, 0u);
  EXPECT_EQ(r.memory, run_oracle(s.prog.kernel, s.launch, s.image.memory).memory);
  expect_clean(r, "brt");
}

TEST(Fetch, BarrierWaitsForPriorEBlocks) {
  auto s = fixtures::make_sim_case(fixtures::kBarrier, 64, 2);
  SimResult r = simulate(s.prog, one_cp(2), s.launch, s.image.memory);
  int gated = 0;
  for (const auto& e : r.eblocks) {
    if (e.discarded || !s.prog.meta[e.pg].barrier) continue;
    ++gated;
    for (const auto& p : r.eblocks)
      if (p.cta == e.cta && p.id < e.id && !p.discarded) EXPECT_LE(p.retire, e.fdr_ready);
  }
  EXPECT_EQ(gated, 2);
}

TEST(Fetch, ResidentBitstreamIsReused) {
  auto s = fixtures::make_sim_case(fixtures::kVecAdd, 32, 2);
  SimConfig cfg = one_cp(2);
  SimResult r = simulate(s.prog, cfg, s.launch, s.image.memory);
  int reused = 0;
  for (const auto& e : r.eblocks)
    if (e.cta == 1 && !e.speculative && e.fdr_ready - e.fdr_enter == static_cast<uint64_t>(cfg.pgcache_hit_latency)) ++reused;
  EXPECT_GE(reused, 1);
  EXPECT_LT(r.stats.bitstream_loads, r.stats.eblocks);
}

TEST(Fetch, CtaSelectionPrefersMatchingPc) {
  // CTA0 just ran pg-0; CTA1's next PC is pg-0.
  std::vector<CsCandidate> c = {{0, 1, false}, {1, 0, false}, {2, 1, false}};
  EXPECT_EQ(cs_pick(c, 0, 0), 1);
  for (auto& x : c) x.blocked = true;
  EXPECT_EQ(cs_pick(c, 0, 0), -1);
}

TEST(Fetch, CtaSelectionRoundRobin) {
  std::vector<CsCandidate> c = {{0, 3, false}, {1, 4, false}, {2, 5, false}};
  std::vector<int> order;
  int last = -1;
  for (int i = 0; i < 6; ++i) {
    const int k = cs_pick(c, 9, last);
    last = c[k].cta;
    order.push_back(last);
  }
  EXPECT_EQ(order, (std::vector<int>{0, 1, 2, 0, 1, 2}));
}

// ---------------------------------------------------------------------------
// PDOM stack

TEST(Pdom, UniformBranchDoesNotPush) {
  PdomStack s(64);
  s.resolve(jump(1), 0, ThreadMask(64));
  ThreadMask all(64);
  all.set();
  s.resolve(cond(5, 7), 1, all);
  EXPECT_EQ(s.depth(), 1);
  EXPECT_EQ(s.top().pc, 5);
}

TEST(Pdom, DivergenceSplitsDisjointMasks) {
  PdomStack s(64);
  s.resolve(jump(2), 0, ThreadMask(64));
  s.resolve(cond(5, 7), 2, mask_of(64, [](int t) { return t < 32; }));
  ASSERT_EQ(s.depth(), 3);
  const auto& e = s.entries();
  EXPECT_EQ(e[0].pc, 7);
  EXPECT_EQ(e[1].pc, 3);
  EXPECT_EQ(e[2].pc, 5);  // taken path first
  EXPECT_EQ(e[1].mask.count(), 32u);
  EXPECT_EQ(e[2].mask.count(), 32u);
  EXPECT_FALSE(e[1].mask.intersects(e[2].mask));
  EXPECT_TRUE(s.check().empty());
  s.resolve(jump(7), 5, ThreadMask(64));
  EXPECT_EQ(s.top().pc, 3);
  s.resolve(jump(7), 3, ThreadMask(64));
  EXPECT_EQ(s.depth(), 1);
  EXPECT_EQ(s.top().pc, 7);
  EXPECT_TRUE(s.top().mask.all());
}

TEST(Pdom, NestedIfReachesDepthThree) {
  PdomStack s(8);
  s.resolve(jump(1), 0, ThreadMask(8));
  // if (tid < 4) { if (tid even) { pg3 } pg4 } pg5: skipping paths start at the join and are not pushed.
  s.resolve(cond(5, 5), 1, mask_of(8, [](int t) { return t >= 4; }));
  EXPECT_EQ(s.depth(), 2);
  EXPECT_EQ(s.top().pc, 2);
  s.resolve(cond(4, 4), 2, mask_of(8, [](int t) { return t % 2 == 1; }));
  EXPECT_EQ(s.depth(), 3);
  EXPECT_EQ(s.top().pc, 3);
  EXPECT_EQ(s.top().mask.count(), 2u);
  EXPECT_TRUE(s.check().empty());
  s.resolve(jump(4), 3, ThreadMask(8));
  EXPECT_EQ(s.top().pc, 4);
  EXPECT_EQ(s.top().mask.count(), 4u);
  s.resolve(jump(5), 4, ThreadMask(8));
  EXPECT_EQ(s.depth(), 1);
  EXPECT_EQ(s.top().pc, 5);
  EXPECT_EQ(s.top().mask.count(), 8u);
}

TEST(Pdom, ExitRemovesThreadsEverywhere) {
  PdomStack s(8);
  s.resolve(jump(1), 0, ThreadMask(8));
  // if (tid >= 6) return (pg4); pg2; pg3 exits. No reconvergence point.
  s.resolve(cond(4, kNoPGraph), 1, mask_of(8, [](int t) { return t >= 6; }));
  ASSERT_EQ(s.depth(), 3);
  BranchMeta ex;
  ex.exit = true;
  s.resolve(ex, 4, ThreadMask(8));
  EXPECT_EQ(s.exited().count(), 2u);
  EXPECT_EQ(s.depth(), 2);
  EXPECT_EQ(s.top().pc, 2);
  EXPECT_EQ(s.top().mask.count(), 6u);
  EXPECT_EQ(s.entries()[0].mask.count(), 6u);
  EXPECT_TRUE(s.check().empty());
  s.resolve(jump(3), 2, ThreadMask(8));
  s.resolve(ex, 3, ThreadMask(8));
  EXPECT_TRUE(s.empty());
  EXPECT_TRUE(s.exited().all());
}

TEST(Pdom, BtfntPrediction) {
  PdomStack s(8);
  s.resolve(jump(2), 0, ThreadMask(8));
  EXPECT_EQ(s.predict(cond(1, kNoPGraph, true), 2), 1);   // backward: taken
  EXPECT_EQ(s.predict(cond(6, 6, false), 2), 3);          // forward: not taken
  BranchMeta ex;
  ex.exit = true;
  EXPECT_EQ(s.predict(ex, 2), kNoPGraph);
  EXPECT_EQ(s.depth(), 1);  // prediction leaves the stack alone
}

TEST(Pdom, NestedKernelReconvergesBeforeJoin) {
  auto s = fixtures::make_sim_case(fixtures::kNested, 64, 2);
  SimResult r = simulate(s.prog, SimConfig{}, s.launch, s.image.memory);
  expect_clean(r, "nested");
  EXPECT_GE(r.stats.max_pdom_depth, 3u);
  // The p-graph after the outer divergence runs once per CTA with every thread.
  int outer = -1;
  for (int i = 0; i < s.prog.size() && outer < 0; ++i)
    if (s.prog.meta[i].branch.conditional) outer = s.prog.meta[i].branch.reconverge;
  ASSERT_NE(outer, -1);
  int runs = 0;
  for (const auto& e : r.eblocks)
    if (e.pg == outer && !e.discarded) {
      EXPECT_EQ(e.active, 64);
      ++runs;
    }
  EXPECT_EQ(runs, 2);
}

// ---------------------------------------------------------------------------
// Accounting properties

TEST(Accounting, RfReadsAndSelectiveDispatch) {
  for (const auto& k : fixtures::functional_suite()) {
    auto s = fixtures::make_sim_case(k.source, 48, 2);
    SimResult r = simulate(s.prog, SimConfig{}, s.launch, s.image.memory);
    uint64_t reads = 0, threads = 0, active = 0;
    for (const auto& e : r.eblocks) {
      if (e.discarded) continue;
      reads += static_cast<uint64_t>(e.threads) * s.prog.meta[e.pg].in_regs.count();
      threads += static_cast<uint64_t>(e.threads);
      if (!s.prog.meta[e.pg].parameter_load) active += static_cast<uint64_t>(e.active);
    }
    EXPECT_EQ(r.stats.rf.reads, reads) << k.name;
    EXPECT_EQ(r.stats.dispatched_threads, threads) << k.name;
    EXPECT_EQ(threads, active) << k.name;
  }
}

TEST(Accounting, Deterministic) {
  auto s = fixtures::make_sim_case(fixtures::kNested, 64, 4);
  SimOptions o;
  o.trace = o.mem_trace = true;
  SimResult a = simulate(s.prog, SimConfig{}, s.launch, s.image.memory, o);
  SimResult b = simulate(s.prog, SimConfig{}, s.launch, s.image.memory, o);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.mem_trace, b.mem_trace);
  EXPECT_EQ(a.stats.cycles, b.stats.cycles);
  EXPECT_FALSE(a.trace.empty());
  EXPECT_FALSE(a.mem_trace.empty());
}

// ---------------------------------------------------------------------------
// Errors

TEST(Errors, MaxCyclesRaises) {
  auto s = fixtures::make_sim_case(fixtures::kVecAdd, 64, 1);
  SimConfig cfg;
  cfg.max_cycles = 20;
  EXPECT_THROW(simulate(s.prog, cfg, s.launch, s.image.memory), SimError);
}

TEST(Errors, OutOfBoundsStoreTraps) {
  auto s = fixtures::make_sim_case(fixtures::kVecAdd, 64, 1);
  s.launch.params[2] = 1u << 30;
  EXPECT_THROW(simulate(s.prog, SimConfig{}, s.launch, s.image.memory), Trap);
}

TEST(Errors, ConfigMismatchAndLaunchChecks) {
  auto s = fixtures::make_sim_case(fixtures::kVecAdd, 64, 1);
  SimConfig cfg;
  cfg.grid_rows = 3;
  cfg.pes = 12;
  cfg.sfus = 3;
  EXPECT_THROW(simulate(s.prog, cfg, s.launch, s.image.memory), ConfigError);
  LaunchConfig big = s.launch;
  big.cta_size = 1024;
  EXPECT_THROW(simulate(s.prog, SimConfig{}, big, s.image.memory), ConfigError);
  LaunchConfig few = s.launch;
  few.params.pop_back();
  EXPECT_THROW(simulate(s.prog, SimConfig{}, few, s.image.memory), ConfigError);
}
