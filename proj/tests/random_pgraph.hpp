#pragma once

// Random well-formed p-graphs (dataflow only) plus random thread inputs.

#include <random>

#include "dice/pgraph.hpp"

namespace dice::fixtures {

inline PGraph random_pgraph(std::mt19937& rng, int max_pes = 16, int max_sfus = 4) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  static const Opcode alu[] = {Opcode::IAdd, Opcode::ISub, Opcode::IMul, Opcode::IMad, Opcode::And, Opcode::Xor,
                               Opcode::Shl,  Opcode::Shr,  Opcode::FAdd, Opcode::Fma,  Opcode::SetpLt,
                               Opcode::Selp, Opcode::Mov,  Opcode::CvtI2F};
  static const Opcode sfu[] = {Opcode::FDiv, Opcode::Sqrt, Opcode::Exp};
  PGraph pg;
  const int pes = pick(1, max_pes), sfus = pick(0, max_sfus);
  std::vector<Opcode> ops;
  for (int i = 0; i < pes; ++i) ops.push_back(alu[pick(0, 13)]);
  for (int i = 0; i < sfus; ++i) ops.push_back(sfu[pick(0, 2)]);
  std::shuffle(ops.begin(), ops.end(), rng);
  std::vector<int> preds;  // nodes producing a 0/1 value
  for (int i = 0; i < static_cast<int>(ops.size()); ++i) {
    PNode n;
    n.op = ops[i];
    n.inst_id = i;
    n.dst = pick(0, 31);
    auto src = [&]() -> NodeSrc {
      int k = pick(0, 9);
      if (i > 0 && k < 6) return NodeSrc::node(pick(std::max(0, i - 6), i - 1));
      if (k < 8) return NodeSrc::reg(pick(0, 31));
      if (k < 9) return {SrcKind::Const, pick(0, 7)};
      return {SrcKind::Special, pick(0, 8)};
    };
    int arity = opcode_arity(n.op);
    for (int k = 0; k < arity; ++k) n.srcs.push_back(src());
    if (n.op == Opcode::Selp) n.srcs[2] = preds.empty() ? NodeSrc::reg(pred_bit(pick(0, 1))) : NodeSrc::node(preds[pick(0, static_cast<int>(preds.size()) - 1)]);
    if (pick(0, 4) == 0) {
      if (!preds.empty() && pick(0, 1))
        n.guard = {GuardKind::Node, preds[pick(0, static_cast<int>(preds.size()) - 1)], pick(0, 1) == 1};
      else
        n.guard = {GuardKind::RegPred, pick(0, 1), pick(0, 1) == 1};
      if (pick(0, 1)) n.old_value = i > 0 && pick(0, 1) ? NodeSrc::node(pick(0, i - 1)) : NodeSrc::reg(n.dst);
    }
    if (is_setp(n.op)) {
      preds.push_back(i);
      n.dst = pred_bit(pick(0, 1));
    }
    pg.nodes.push_back(std::move(n));
  }
  // Outputs: a random subset plus every sink-less leaf.
  std::vector<bool> consumed(pg.nodes.size(), false);
  for (const auto& n : pg.nodes) {
    for (const auto& s : n.srcs)
      if (s.kind == SrcKind::Node) consumed[s.index] = true;
    if (n.old_value.kind == SrcKind::Node) consumed[n.old_value.index] = true;
    if (n.guard.kind == GuardKind::Node) consumed[n.guard.index] = true;
  }
  for (int i = 0; i < static_cast<int>(pg.nodes.size()); ++i)
    if (!consumed[i] || pick(0, 3) == 0) pg.outputs.push_back({pg.nodes[i].dst, i});
  return pg;
}

inline ThreadInputs random_inputs(std::mt19937& rng, int tid) {
  ThreadInputs in;
  for (int r = 0; r < kNumGpr; ++r) in.regs[r] = rng();
  in.regs[pred_bit(0)] = rng() & 1u;
  in.regs[pred_bit(1)] = rng() & 1u;
  for (int s = 0; s < kNumSpecials; ++s) in.specials[s] = static_cast<uint32_t>(s == 0 ? tid : rng() % 64);
  return in;
}

}  // namespace dice::fixtures
