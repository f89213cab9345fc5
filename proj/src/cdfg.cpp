#include "dice/cdfg.hpp"

#include <algorithm>

namespace dice {

namespace {

std::vector<std::vector<bool>> post_dominators(const Kernel& k) {
  const int n = static_cast<int>(k.blocks.size());
  // Node n stands for the virtual exit.
  std::vector<std::vector<bool>> pdom(n + 1, std::vector<bool>(n + 1, true));
  pdom[n].assign(n + 1, false);
  pdom[n][n] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b = n - 1; b >= 0; --b) {
      std::vector<bool> meet(n + 1, true);
      for (int s : k.successors(b)) {
        int si = s == kExitNode ? n : s;
        for (int i = 0; i <= n; ++i) meet[i] = meet[i] && pdom[si][i];
      }
      meet[b] = true;
      if (meet != pdom[b]) {
        pdom[b] = std::move(meet);
        changed = true;
      }
    }
  }
  return pdom;
}

}  // namespace

Cdfg build_cdfg(const Kernel& k) {
  const int n = static_cast<int>(k.blocks.size());
  Cdfg g;
  g.blocks.resize(n);

  for (int b = 0; b < n; ++b) {
    auto& info = g.blocks[b];
    const auto& insts = k.blocks[b].insts;
    // Reaching in-block definitions per register; a guarded write adds to the
    // set, an unguarded one replaces it.
    std::vector<std::vector<int>> reaching(kRegBitmapWidth);
    std::vector<bool> killed(kRegBitmapWidth, false);
    for (int i = 0; i < static_cast<int>(insts.size()); ++i) {
      for (int r : insts[i].register_reads()) {
        for (int d : reaching[r]) {
          const Instruction& p = insts[d];
          bool ltu = p.op == Opcode::Ld && p.space != MemSpace::Param;
          DfgEdge e{d, i, r, ltu};
          if (std::find(info.edges.begin(), info.edges.end(), e) == info.edges.end()) info.edges.push_back(e);
        }
        if (!killed[r]) info.use.set(r);
      }
      if (int w = insts[i].register_write(); w >= 0) {
        // A guarded write may leave the old value in place, so it is also a use.
        if (insts[i].guard) {
          if (!killed[w]) info.use.set(w);
          reaching[w].push_back(i);
        } else {
          reaching[w] = {i};
          killed[w] = true;
        }
        info.def.set(w);
      }
    }
  }

  // Backward liveness; only declared outputs are live at kernel exit.
  RegSet at_exit;
  for (int r : k.outputs) at_exit.set(r);
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b = n - 1; b >= 0; --b) {
      RegSet out;
      for (int s : k.successors(b))
        out |= s == kExitNode ? at_exit : g.blocks[s].live_in;
      RegSet in = g.blocks[b].use | (out & ~g.blocks[b].def);
      if (out != g.blocks[b].live_out || in != g.blocks[b].live_in) {
        g.blocks[b].live_out = out;
        g.blocks[b].live_in = in;
        changed = true;
      }
    }
  }

  // Forward may-defined analysis for the uninitialized-read warning.
  std::vector<RegSet> maydef_in(n);
  std::vector<bool> reached(n, false);
  reached[0] = true;
  changed = true;
  while (changed) {
    changed = false;
    for (int b = 0; b < n; ++b) {
      if (!reached[b]) continue;
      RegSet out = maydef_in[b] | g.blocks[b].def;
      for (int s : k.successors(b)) {
        if (s == kExitNode) continue;
        RegSet merged = maydef_in[s] | out;
        if (!reached[s] || merged != maydef_in[s]) {
          reached[s] = true;
          maydef_in[s] = merged;
          changed = true;
        }
      }
    }
  }
  for (int b = 0; b < n; ++b) {
    RegSet defined = maydef_in[b];
    for (const auto& inst : k.blocks[b].insts) {
      for (int r : inst.register_reads()) {
        if (!defined.test(r)) {
          std::string name = r < kNumGpr ? "r" + std::to_string(r) : "p" + std::to_string(r - kNumGpr);
          g.warnings.push_back("line " + std::to_string(inst.line) + ": " + name +
                               " read before any definition (reads as zero)");
          defined.set(r);
        }
      }
      if (int w = inst.register_write(); w >= 0) defined.set(w);
    }
  }

  // Immediate post-dominators.
  auto pdom = post_dominators(k);
  g.ipdom.assign(n, kExitNode);
  for (int b = 0; b < n; ++b) {
    // The ipdom is the strict post-dominator that every other strict post-dominator post-dominates.
    for (int c = 0; c <= n; ++c) {
      if (c == b || !pdom[b][c]) continue;
      bool immediate = true;
      for (int d = 0; d <= n && immediate; ++d) {
        if (d == b || d == c || !pdom[b][d]) continue;
        if (!pdom[c][d]) immediate = false;  // d is not above c
      }
      if (immediate) {
        g.ipdom[b] = c == n ? kExitNode : c;
        break;
      }
    }
  }
  return g;
}

RegSet live_after(const Kernel& k, const Cdfg& g, int block, int index) {
  RegSet live = g.blocks[block].live_out;
  const auto& insts = k.blocks[block].insts;
  for (int i = static_cast<int>(insts.size()) - 1; i > index; --i) {
    if (int w = insts[i].register_write(); w >= 0 && !insts[i].guard) live.reset(w);
    for (int r : insts[i].register_reads()) live.set(r);
  }
  return live;
}

}  // namespace dice
