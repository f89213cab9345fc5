#include <gtest/gtest.h>

#include <random>

#include "dice/ir.hpp"
#include "kernels.hpp"

using namespace dice;

TEST(Parse, VectorAddIsOneBlockWithEntryAndExitEdges) {
  Kernel k = parse_kernel(R"(
.kernel vadd .params 3 .regs 4
  IADD r2, r0, r1
  ST.GLOBAL [r3 + 0], r2
  RET
)");
  ASSERT_EQ(k.blocks.size(), 1u);
  ASSERT_EQ(k.edges.size(), 2u);
  EXPECT_EQ(k.edges[0], (ControlEdge{kEntryNode, 0}));
  EXPECT_EQ(k.edges[1], (ControlEdge{0, kExitNode}));
  EXPECT_EQ(k.params.size(), 3u);
  EXPECT_EQ(k.params[2].offset, 8u);
}

TEST(Parse, UndefinedLabelIsReported) {
  try {
    parse_kernel(".kernel k .params 0 .regs 2\n  BRA L_miss\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_NE(std::string(e.what()).find("L_miss"), std::string::npos);
  }
}

TEST(Parse, IfElseKernelHasDiamondEdges) {
  Kernel k = parse_kernel(fixtures::kDiamond);
  ASSERT_EQ(k.blocks.size(), 4u);
  int head = 0, els = k.find_block("ELSE"), thn = k.find_block("THEN"), join = k.find_block("JOIN");
  auto succ = k.successors(head);
  std::sort(succ.begin(), succ.end());
  EXPECT_EQ(succ, (std::vector<int>{els, thn}));
  EXPECT_EQ(k.successors(els), std::vector<int>{join});
  EXPECT_EQ(k.successors(thn), std::vector<int>{join});
  auto pred = k.predecessors(join);
  std::sort(pred.begin(), pred.end());
  EXPECT_EQ(pred, (std::vector<int>{els, thn}));
}

TEST(Parse, RegisterOutOfRangeHasColumn) {
  try {
    parse_kernel(".kernel k .params 0 .regs 4\n  IADD r2, r0, r9\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_EQ(e.column(), 16);
  }
}

TEST(Parse, SyntaxErrors) {
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4\n  FOO r1, r2\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4\n  IADD r1, r2\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 40\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4\nA:\nA:\n  RET\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4\n  SETP.LT r1, r2, 3\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4\n  p0 = IADD\n"), ParseError);
}

TEST(Parse, UnreachableBlockRejected) {
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4\n  RET\nDEAD:\n  IADD r1, r1, 1\n"), ParseError);
}

TEST(Parse, BarrierEndsBlock) {
  Kernel k = parse_kernel(fixtures::kBarrier);
  ASSERT_GE(k.blocks.size(), 2u);
  EXPECT_EQ(k.blocks[0].term, Terminator::Barrier);
  EXPECT_EQ(k.blocks[0].insts.back().op, Opcode::Bar);
}

TEST(RoundTrip, SuiteKernelsReparseIdentically) {
  for (const auto& c : fixtures::functional_suite()) {
    Kernel k = parse_kernel(c.source);
    Kernel again = parse_kernel(print_kernel(k));
    EXPECT_EQ(k, again) << c.name;
  }
}

TEST(RoundTrip, OutputListSurvivesPrinting) {
  Kernel k = parse_kernel(".kernel k .params 0 .regs 4 .out r3 r1\n  MOV r1, 1\n  MOV r3, 2\n  RET\n");
  EXPECT_EQ(k.outputs, (std::vector<int>{3, 1}));
  EXPECT_EQ(parse_kernel(print_kernel(k)), k);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4 .out r4\n  RET\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4 .out\n  RET\n"), ParseError);
  EXPECT_THROW(parse_kernel(".kernel k .params 0 .regs 4 .outs r1\n  RET\n"), ParseError);
}

namespace {

std::string random_straight_line(std::mt19937& rng) {
  static const char* ops[] = {"IADD", "ISUB", "IMUL", "AND", "OR", "XOR", "SHL", "SHR", "FADD", "FMUL"};
  std::uniform_int_distribution<int> reg(0, 7), op(0, 9), imm(-50, 50), kind(0, 3);
  std::string s = ".kernel rnd .params 1 .regs 8\n";
  int n = 1 + static_cast<int>(rng() % 20);
  for (int i = 0; i < n; ++i) {
    s += "  " + std::string(ops[op(rng)]) + " r" + std::to_string(reg(rng)) + ", r" + std::to_string(reg(rng)) + ", ";
    switch (kind(rng)) {
      case 0: s += std::to_string(imm(rng)); break;
      case 1: s += "%tid.x"; break;
      case 2: s += "1.5f"; break;
      default: s += "r" + std::to_string(reg(rng));
    }
    if (rng() % 4 == 0) s += (rng() % 2) ? " @p0" : " @!p1";
    s += "\n";
  }
  s += "  SETP.LT p0, r1, r2\n  ST.GLOBAL [r3 + 16], r4\n  RET\n";
  return s;
}

}  // namespace

TEST(RoundTrip, RandomKernels) {
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::string src = random_straight_line(rng);
    Kernel k = parse_kernel(src);
    EXPECT_EQ(parse_kernel(print_kernel(k)), k) << src;
  }
}

TEST(Alu, IntegerAndFloatSemantics) {
  auto ev = [](Opcode op, std::vector<uint32_t> v) { return evaluate_alu(op, v); };
  EXPECT_EQ(ev(Opcode::IAdd, {2, 3}), 5u);
  EXPECT_EQ(ev(Opcode::ISub, {2, 3}), 0xFFFFFFFFu);
  EXPECT_EQ(ev(Opcode::IMad, {3, 4, 5}), 17u);
  EXPECT_EQ(ev(Opcode::Shr, {0x80000000u, 31}), 1u);
  EXPECT_EQ(ev(Opcode::SetpLt, {0xFFFFFFFFu, 0}), 1u);  // signed compare
  EXPECT_EQ(ev(Opcode::Selp, {10, 20, 0}), 20u);
  EXPECT_EQ(ev(Opcode::Selp, {10, 20, 1}), 10u);
  EXPECT_EQ(ev(Opcode::FAdd, {std::bit_cast<uint32_t>(1.5f), std::bit_cast<uint32_t>(2.0f)}),
            std::bit_cast<uint32_t>(3.5f));
  EXPECT_EQ(ev(Opcode::CvtF2I, {std::bit_cast<uint32_t>(-2.75f)}), static_cast<uint32_t>(-2));
}
