#include <gtest/gtest.h>

#include <set>

#include "dice/pgraph.hpp"
#include "kernels.hpp"
#include "random_kernels.hpp"

using namespace dice;

namespace {

// Non-parameter p-graphs.
std::vector<const PGraph*> body(const Partition& p) {
  std::vector<const PGraph*> out;
  for (size_t i = 1; i < p.pgraphs.size(); ++i) out.push_back(&p.pgraphs[i]);
  return out;
}

void expect_valid(const Partition& p, const Kernel& k, const ResourceBudget& b, const std::string& what) {
  for (const auto& pg : p.pgraphs)
    for (const auto& v : validate_pgraph(pg, k, b)) ADD_FAILURE() << what << ": " << v;
  for (const auto& v : validate_partition(p, k)) ADD_FAILURE() << what << ": " << v;
}

}  // namespace

TEST(Partition, LoadToUseCutsIntoTwo) {
  Kernel k = parse_kernel(R"(
.kernel k .params 0 .regs 6
  LD.GLOBAL r2, [r0]
  LD.GLOBAL r3, [r1]
  IADD r4, r2, r3
  ST.GLOBAL [r5], r4
  RET
)");
  Partition p = partition(k, {});
  auto pgs = body(p);
  ASSERT_EQ(pgs.size(), 2u);
  EXPECT_EQ(pgs[0]->load_count(), 2);
  EXPECT_EQ(pgs[0]->compute_nodes(), 0);
  EXPECT_EQ(pgs[1]->compute_nodes(), 1);
  EXPECT_EQ(pgs[1]->store_count(), 1);
  EXPECT_TRUE(pgs[1]->in_regs.test(2) && pgs[1]->in_regs.test(3) && pgs[1]->in_regs.test(5));
  EXPECT_TRUE(p.pgraphs[0].parameter_load);
  expect_valid(p, k, {}, "ltu");
}

TEST(Partition, BarrierTerminatesPGraph) {
  Kernel k = parse_kernel(".kernel k .params 0 .regs 4\n  IADD r1, r0, 1\n  BAR\n  IADD r2, r1, 2\n  RET\n");
  Partition p = partition(k, {});
  auto pgs = body(p);
  ASSERT_EQ(pgs.size(), 2u);
  EXPECT_GE(pgs[0]->barrier_inst, 0);
  EXPECT_FALSE(pgs[0]->barrier);
  EXPECT_TRUE(pgs[1]->barrier);
  EXPECT_TRUE(pgs[0]->out_regs.test(1));
  EXPECT_TRUE(pgs[1]->in_regs.test(1));
  expect_valid(p, k, {}, "bar");
}

TEST(Partition, FortyNodeBlockSplitsWithinBudget) {
  Kernel k = parse_kernel(fixtures::long_chain_source(40));
  Partition p = partition(k, {});
  int total = 0;
  for (const auto* pg : body(p)) {
    EXPECT_LE(pg->compute_nodes(), 16);
    total += static_cast<int>(pg->nodes.size());
  }
  // Brute-force count: every non-control, non-memory instruction is one node.
  int expect = 0;
  for (const auto& inst : k.blocks[0].insts) expect += !inst.is_control() && !inst.is_memory_sink();
  EXPECT_EQ(total, expect);
  EXPECT_GE(body(p).size(), 3u);
  expect_valid(p, k, {}, "long");
}

TEST(Partition, ConstantPoolSharesImmediates) {
  Kernel k = parse_kernel(".kernel k .params 2 .regs 4\n  IADD r1, r0, 5\n  IADD r2, r1, 5\n  IADD r3, r2, 6\n  RET\n");
  Partition p = partition(k, {});
  EXPECT_EQ(p.pool.num_params, 2);
  EXPECT_EQ(p.pool.immediates, (std::vector<uint32_t>{5, 6}));
  EXPECT_EQ(p.pool.materialize({10, 20}), (std::vector<uint32_t>{10, 20, 5, 6}));
}

TEST(Partition, SuiteKernelsValidate) {
  for (const auto& c : fixtures::functional_suite()) {
    Kernel k = parse_kernel(c.source);
    expect_valid(partition(k, {}), k, {}, c.name);
  }
}

TEST(Partition, RandomKernelsValidate) {
  for (uint32_t seed = 0; seed < 300; ++seed) {
    std::string src = fixtures::RandomKernelGen(seed).generate();
    Kernel k = parse_kernel(src);
    for (int pes : {16, 6, 2}) {
      ResourceBudget b;
      b.pes = pes;
      b.ldst_ports = pes < 4 ? 1 : 4;
      expect_valid(partition(k, b), k, b, "seed " + std::to_string(seed));
    }
  }
}

TEST(Partition, ShrinkingBudgetNeverGrowsPGraphs) {
  for (uint32_t seed = 0; seed < 100; ++seed) {
    Kernel k = parse_kernel(fixtures::RandomKernelGen(seed).generate());
    size_t prev_max = SIZE_MAX;
    for (int pes = 16; pes >= 1; --pes) {
      ResourceBudget b;
      b.pes = pes;
      size_t mx = 0;
      for (const auto& pg : partition(k, b).pgraphs) mx = std::max(mx, static_cast<size_t>(pg.compute_nodes()));
      EXPECT_LE(mx, prev_max) << "seed " << seed << " pes " << pes;
      EXPECT_LE(mx, static_cast<size_t>(pes));
      prev_max = mx;
    }
  }
}

TEST(Merge, DiamondBecomesOnePredicatedPGraph) {
  Kernel k = parse_kernel(R"(
.kernel fig .params 0 .regs 8
  SETP.LT p0, r0, r1
  BRA THEN @p0
ELSE:
  ISUB r6, r1, 3
  IMUL r6, r6, r0
  BRA JOIN
THEN:
  SHL r6, r0, 1
  IADD r6, r6, 1
  XOR r6, r6, r1
JOIN:
  ST.GLOBAL [r2], r6
  RET
)");
  Partition p = partition(k, {});
  const PGraph* merged = nullptr;
  for (const auto& pg : p.pgraphs)
    if (pg.merged) merged = &pg;
  ASSERT_NE(merged, nullptr);
  EXPECT_EQ(merged->nodes.size(), 6u);
  EXPECT_EQ(merged->nodes[0].op, Opcode::Psel);
  ASSERT_EQ(merged->outputs.size(), 2u);
  for (const auto& o : merged->outputs) {
    EXPECT_EQ(o.reg, 6);
    EXPECT_EQ(merged->nodes[o.node].guard.kind, GuardKind::Node);
    EXPECT_EQ(merged->nodes[o.node].guard.index, 0);
  }
  EXPECT_NE(merged->nodes[merged->outputs[0].node].guard.negate, merged->nodes[merged->outputs[1].node].guard.negate);
  EXPECT_TRUE(merged->in_regs.test(pred_bit(0)));
  // The head now jumps straight to the merged p-graph.
  EXPECT_EQ(p.pgraphs[1].branch.kind, BranchInfo::Kind::Jump);
  EXPECT_EQ(p.pgraphs[1].branch.target, merged->id);
  expect_valid(p, k, {}, "merge");

  PartitionOptions no_merge;
  no_merge.predication_merge = false;
  Partition split = partition(k, {}, no_merge);
  for (const auto& pg : split.pgraphs) EXPECT_FALSE(pg.merged);
  EXPECT_EQ(split.pgraphs[1].branch.kind, BranchInfo::Kind::Conditional);
}

TEST(Merge, RefusedWhenOverBudget) {
  PGraph a, b;
  for (int i = 0; i < 8; ++i) a.nodes.push_back(PNode{Opcode::IAdd, {NodeSrc::reg(0), NodeSrc::reg(1)}, {}, {}, 2, i});
  for (int i = 0; i < 8; ++i) b.nodes.push_back(PNode{Opcode::IAdd, {NodeSrc::reg(0), NodeSrc::reg(1)}, {}, {}, 3, 8 + i});
  // 8 + 8 + predicate node = 17 > 16
  EXPECT_FALSE(merge_with_predication(a, b, Guard{0, false}, {}).has_value());
  b.nodes.pop_back();
  EXPECT_TRUE(merge_with_predication(a, b, Guard{0, false}, {}).has_value());
  b.barrier = true;
  EXPECT_FALSE(merge_with_predication(a, b, Guard{0, false}, {}).has_value());
}

namespace {

PGraph with_inputs(std::initializer_list<int> regs, int nodes) {
  PGraph pg;
  for (int r : regs) pg.in_regs.set(r);
  for (int i = 0; i < nodes; ++i) pg.nodes.push_back(PNode{Opcode::IAdd, {NodeSrc::reg(0)}, {}, {}, 1, i});
  return pg;
}

}  // namespace

TEST(Unroll, DistinctResiduesGiveFactorFour) {
  EXPECT_EQ(compute_unroll_factor(with_inputs({0, 1}, 2), {}), 4);
  auto banks = co_dispatch_banks(with_inputs({0, 1}, 0).in_regs, 0, 4, 8);
  std::multiset<int> got(banks.begin(), banks.end());
  EXPECT_EQ(got, (std::multiset<int>{0, 1, 8, 9, 16, 17, 24, 25}));
}

TEST(Unroll, CollisionFallsBackToTwo) {
  EXPECT_EQ(compute_unroll_factor(with_inputs({0, 8}, 2), {}), 2);
}

TEST(Unroll, ResourceBoundForcesOne) {
  EXPECT_EQ(compute_unroll_factor(with_inputs({0}, 9), {}), 1);
  EXPECT_EQ(compute_unroll_factor(with_inputs({0}, 8), {}), 2);
}

TEST(Unroll, ReturnedFactorIsBankSafeForEveryBase) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    PGraph pg;
    int n = 1 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) pg.in_regs.set(rng() % 32);
    int u = compute_unroll_factor(pg, {});
    ASSERT_TRUE(u == 1 || u == 2 || u == 4);
    int k = u == 4 ? 8 : 16;
    for (int t = 0; t < 32; ++t) {
      auto banks = co_dispatch_banks(pg.in_regs, t, u, k);
      std::set<int> distinct(banks.begin(), banks.end());
      EXPECT_EQ(distinct.size(), banks.size());
    }
  }
}
