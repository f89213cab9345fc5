#include "dice/pgraph.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace dice {

int ConstantPool::intern(uint32_t value) {
  auto it = std::find(immediates.begin(), immediates.end(), value);
  if (it != immediates.end()) return num_params + static_cast<int>(it - immediates.begin());
  if (size() >= kCapacity)
    throw CompileError("constant buffer overflow: more than " + std::to_string(kCapacity) +
                       " parameter words and immediates");
  immediates.push_back(value);
  return size() - 1;
}

std::vector<uint32_t> ConstantPool::materialize(const std::vector<uint32_t>& params) const {
  std::vector<uint32_t> out(num_params, 0);
  for (int i = 0; i < num_params && i < static_cast<int>(params.size()); ++i) out[i] = params[i];
  out.insert(out.end(), immediates.begin(), immediates.end());
  return out;
}

int PGraph::compute_nodes() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const PNode& n) { return !n.is_sfu(); }));
}
int PGraph::sfu_nodes() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const PNode& n) { return n.is_sfu(); }));
}
int PGraph::load_count() const {
  return static_cast<int>(std::count_if(sinks.begin(), sinks.end(), [](const MemSink& s) { return !s.is_store; }));
}
int PGraph::store_count() const { return sink_count() - load_count(); }

std::vector<int> PGraph::load_dests() const {
  std::vector<int> out;
  for (const auto& s : sinks)
    if (!s.is_store) out.push_back(s.dst);
  return out;
}

bool PGraph::fits(const ResourceBudget& b, int copies) const {
  return compute_nodes() * copies <= b.pes && sfu_nodes() * copies <= b.sfus &&
         sink_count() * copies <= b.ldst_ports;
}

std::vector<int> PGraph::instruction_ids() const {
  std::vector<int> ids;
  for (const auto& n : nodes)
    if (n.inst_id >= 0) ids.push_back(n.inst_id);
  for (const auto& s : sinks) ids.push_back(s.inst_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

void for_each_reg_input(const PGraph& pg, auto&& fn) {
  for (const auto& n : pg.nodes) {
    for (const auto& s : n.srcs)
      if (s.kind == SrcKind::Reg) fn(s.index);
    if (n.old_value.kind == SrcKind::Reg) fn(n.old_value.index);
    if (n.guard.kind == GuardKind::RegPred) fn(pred_bit(n.guard.index));
  }
  for (const auto& s : pg.sinks) {
    if (s.addr.kind == SrcKind::Reg) fn(s.addr.index);
    if (s.value.kind == SrcKind::Reg) fn(s.value.index);
    if (s.guard.kind == GuardKind::RegPred) fn(pred_bit(s.guard.index));
  }
}

void recompute_in_regs(PGraph& pg) {
  pg.in_regs.reset();
  for_each_reg_input(pg, [&](int r) { pg.in_regs.set(r); });
  pg.out_regs.reset();
  for (const auto& o : pg.outputs) pg.out_regs.set(o.reg);
}

// Builds the p-graphs of one basic block by a greedy forward sweep.
class BlockPartitioner {
 public:
  BlockPartitioner(const Kernel& k, const Cdfg& cdfg, ConstantPool& pool, int block, int flat_start,
                   const ResourceBudget& budget)
      : k_(k), cdfg_(cdfg), pool_(pool), block_(block), flat_start_(flat_start), budget_(budget) {
    reset();
  }

  std::vector<PGraph> run() {
    const auto& insts = k_.blocks[block_].insts;
    for (int i = 0; i < static_cast<int>(insts.size()); ++i) {
      const Instruction& inst = insts[i];
      if (inst.is_control()) {
        if (inst.op == Opcode::Bar) cur_.barrier_inst = flat_start_ + i;
        continue;
      }
      if (must_cut(inst)) {
        if (cur_.nodes.empty() && cur_.sinks.empty())
          throw CompileError("instruction at line " + std::to_string(inst.line) +
                             " does not fit the fabric budget (unmappable)");
        finish();
      }
      add(inst, i);
    }
    finish(/*force=*/done_.empty());
    done_.back().is_block_tail = true;
    return std::move(done_);
  }

 private:
  void reset() {
    cur_ = PGraph{};
    cur_.block = block_;
    cur_.source_blocks = {k_.blocks[block_].label};
    def_.assign(kRegBitmapWidth, NodeSrc{});
    load_def_.assign(kRegBitmapWidth, -1);
    load_guarded_.assign(kRegBitmapWidth, false);
    last_index_ = -1;
  }

  bool is_node(const Instruction& inst) const { return !inst.is_memory_sink(); }

  bool must_cut(const Instruction& inst) const {
    for (int r : inst.register_reads())
      if (load_def_[r] >= 0) return true;  // load-to-use
    if (int w = inst.register_write(); w >= 0 && load_def_[w] >= 0) return true;  // ordering with pending load
    int pe = cur_.compute_nodes(), sfu = cur_.sfu_nodes(), sinks = cur_.sink_count();
    if (is_node(inst)) {
      if (is_sfu_op(inst.op)) ++sfu;
      else ++pe;
      if (static_cast<int>(inst.srcs.size()) > budget_.max_fanin) {
        throw CompileError("instruction at line " + std::to_string(inst.line) + " needs " +
                           std::to_string(inst.srcs.size()) + " operands; PE fan-in is " +
                           std::to_string(budget_.max_fanin));
      }
    } else {
      ++sinks;
    }
    return pe > budget_.pes || sfu > budget_.sfus || sinks > budget_.ldst_ports;
  }

  NodeSrc src_of(const Operand& o) {
    switch (o.kind) {
      case OperandKind::Reg:
      case OperandKind::Pred: {
        int bit = o.bitmap_index();
        return def_[bit].present() ? def_[bit] : NodeSrc::reg(bit);
      }
      case OperandKind::Imm: return {SrcKind::Const, pool_.intern(o.imm)};
      case OperandKind::Special: return {SrcKind::Special, o.index};
      case OperandKind::None: break;
    }
    return {};
  }

  NodeGuard guard_of(const Instruction& inst) {
    if (!inst.guard) return {};
    int bit = pred_bit(inst.guard->pred);
    if (def_[bit].kind == SrcKind::Node) return {GuardKind::Node, def_[bit].index, inst.guard->negate};
    return {GuardKind::RegPred, inst.guard->pred, inst.guard->negate};
  }

  void add(const Instruction& inst, int index) {
    const int id = flat_start_ + index;
    last_index_ = index;
    if (inst.is_memory_sink()) {
      MemSink s;
      s.is_store = inst.is_store();
      s.space = inst.space;
      s.addr = inst.addr_base.is_reg() ? src_of(inst.addr_base) : NodeSrc{};
      s.offset = inst.offset;
      if (s.is_store) s.value = src_of(inst.srcs[0]);
      s.guard = guard_of(inst);
      s.inst_id = id;
      if (!s.is_store) {
        s.dst = inst.dst.index;
        load_def_[s.dst] = id;
        load_guarded_[s.dst] = inst.guard.has_value();
      }
      cur_.sinks.push_back(s);
      return;
    }
    PNode n;
    n.inst_id = id;
    n.guard = guard_of(inst);
    n.dst = inst.register_write();
    if (inst.op == Opcode::Ld) {  // parameter load: constant buffer read
      if (inst.offset < 0 || inst.offset / 4 >= static_cast<int>(k_.params.size()))
        throw CompileError("line " + std::to_string(inst.line) + ": parameter offset out of range");
      n.op = Opcode::Ldc;
      n.srcs.push_back({SrcKind::Const, inst.offset / 4});
    } else {
      n.op = inst.op;
      for (const auto& o : inst.srcs) n.srcs.push_back(src_of(o));
    }
    if (inst.guard) n.old_value = def_[n.dst].present() ? def_[n.dst] : NodeSrc::reg(n.dst);
    cur_.nodes.push_back(std::move(n));
    def_[cur_.nodes.back().dst] = NodeSrc::node(static_cast<int>(cur_.nodes.size()) - 1);
  }

  void finish(bool force = false) {
    if (cur_.nodes.empty() && cur_.sinks.empty() && !force && cur_.barrier_inst < 0) {
      reset();
      return;
    }
    // Drop unneeded old-value wiring: an RF old value only matters to internal consumers.
    std::vector<int> consumers(cur_.nodes.size(), 0);
    auto count = [&](const NodeSrc& s) {
      if (s.kind == SrcKind::Node) ++consumers[s.index];
    };
    for (const auto& n : cur_.nodes) {
      for (const auto& s : n.srcs) count(s);
      count(n.old_value);
      if (n.guard.kind == GuardKind::Node) ++consumers[n.guard.index];
    }
    for (const auto& s : cur_.sinks) {
      count(s.addr);
      count(s.value);
      if (s.guard.kind == GuardKind::Node) ++consumers[s.guard.index];
    }
    for (size_t i = 0; i < cur_.nodes.size(); ++i) {
      auto& n = cur_.nodes[i];
      if (n.old_value.kind == SrcKind::Reg && consumers[i] == 0) n.old_value = {};
    }
    // Outputs: last node definition of each register that is live afterwards,
    // unless an unguarded load later in this p-graph overwrites it.
    RegSet live = last_index_ >= 0 ? live_after(k_, cdfg_, block_, last_index_) : RegSet{};
    for (int r = 0; r < kRegBitmapWidth; ++r) {
      if (def_[r].kind != SrcKind::Node || !live.test(r)) continue;
      if (load_def_[r] >= 0 && !load_guarded_[r]) continue;
      cur_.outputs.push_back({r, def_[r].index});
    }
    recompute_in_regs(cur_);
    done_.push_back(std::move(cur_));
    reset();
  }

  const Kernel& k_;
  const Cdfg& cdfg_;
  ConstantPool& pool_;
  int block_;
  int flat_start_;
  ResourceBudget budget_;
  PGraph cur_;
  std::vector<NodeSrc> def_;
  std::vector<int> load_def_;
  std::vector<bool> load_guarded_;
  int last_index_ = -1;
  std::vector<PGraph> done_;
};

bool has_ir_guards(const PGraph& pg) {
  for (const auto& n : pg.nodes)
    if (n.guard.kind != GuardKind::None) return true;
  for (const auto& s : pg.sinks)
    if (s.guard.kind != GuardKind::None) return true;
  return false;
}

NodeSrc shift(NodeSrc s, int by) {
  if (s.kind == SrcKind::Node) s.index += by;
  return s;
}

}  // namespace

std::optional<PGraph> merge_with_predication(const PGraph& then_pg, const PGraph& else_pg, Guard cond,
                                             const ResourceBudget& budget) {
  if (then_pg.barrier || else_pg.barrier || then_pg.barrier_inst >= 0 || else_pg.barrier_inst >= 0) return std::nullopt;
  if (then_pg.parameter_load || else_pg.parameter_load) return std::nullopt;
  if (has_ir_guards(then_pg) || has_ir_guards(else_pg)) return std::nullopt;

  PGraph m;
  m.merged = true;
  m.block = std::min(then_pg.block, else_pg.block);
  m.source_blocks = then_pg.source_blocks;
  m.source_blocks.insert(m.source_blocks.end(), else_pg.source_blocks.begin(), else_pg.source_blocks.end());
  m.branch = then_pg.branch;
  m.is_block_tail = true;

  PNode psel;
  psel.op = Opcode::Psel;
  psel.srcs.push_back(NodeSrc::reg(pred_bit(cond.pred)));
  m.nodes.push_back(psel);

  auto append = [&](const PGraph& side, bool negate) {
    const int base = static_cast<int>(m.nodes.size());
    const NodeGuard g{GuardKind::Node, 0, negate};
    for (PNode n : side.nodes) {
      for (auto& s : n.srcs) s = shift(s, base);
      n.old_value = {};
      n.guard = g;
      m.nodes.push_back(std::move(n));
    }
    for (MemSink s : side.sinks) {
      s.addr = shift(s.addr, base);
      s.value = shift(s.value, base);
      s.guard = g;
      m.sinks.push_back(s);
    }
    for (POutput o : side.outputs) {
      o.node += base;
      m.outputs.push_back(o);
    }
  };
  append(then_pg, cond.negate);
  append(else_pg, !cond.negate);
  if (!m.fits(budget)) return std::nullopt;
  recompute_in_regs(m);
  return m;
}

Partition partition(const Kernel& k, const ResourceBudget& budget, const PartitionOptions& opts) {
  if (!budget.valid()) throw CompileError("resource budget must be positive");
  const Cdfg cdfg = build_cdfg(k);
  const int nb = static_cast<int>(k.blocks.size());
  Partition part;
  part.pool.num_params = static_cast<int>(k.params.size());
  if (part.pool.num_params > ConstantPool::kCapacity) throw CompileError("too many kernel parameters");

  std::vector<std::vector<PGraph>> per_block(nb);
  int flat = 0;
  for (int b = 0; b < nb; ++b) {
    ResourceBudget bb = budget;
    if (b < static_cast<int>(opts.block_pe_limit.size()) && opts.block_pe_limit[b] > 0)
      bb.pes = std::min(bb.pes, opts.block_pe_limit[b]);
    per_block[b] = BlockPartitioner(k, cdfg, part.pool, b, flat, bb).run();
    flat += static_cast<int>(k.blocks[b].insts.size());

    auto& tail = per_block[b].back().branch;
    const Instruction* t = k.terminator_inst(b);
    switch (k.blocks[b].term) {
      case Terminator::Return: tail.kind = BranchInfo::Kind::Exit; break;
      case Terminator::Fallthrough:
      case Terminator::Barrier:
        tail.target_block = k.fallthrough(b);
        tail.kind = tail.target_block == kExitNode ? BranchInfo::Kind::Exit : BranchInfo::Kind::Fallthrough;
        break;
      case Terminator::Branch:
        tail.target_block = k.find_block(t->target);
        if (t->guard) {
          tail.kind = BranchInfo::Kind::Conditional;
          tail.fallthrough_block = k.fallthrough(b);
          tail.reconverge_block = cdfg.ipdom[b];
          tail.pred = t->guard->pred;
          tail.negate = t->guard->negate;
        } else {
          tail.kind = BranchInfo::Kind::Jump;
        }
        break;
    }
  }
  // Barrier flag on the p-graph that follows a BAR.
  for (int b = 0; b + 1 < nb; ++b)
    if (k.blocks[b].term == Terminator::Barrier) per_block[b + 1].front().barrier = true;

  // Predication merge over simple diamonds.
  std::vector<int> alias(nb);
  for (int b = 0; b < nb; ++b) alias[b] = b;
  if (opts.predication_merge) {
    for (int a = 0; a < nb; ++a) {
      auto& abr = per_block[a];
      if (abr.empty() || abr.back().branch.kind != BranchInfo::Kind::Conditional) continue;
      const BranchInfo& br = abr.back().branch;
      const int s1 = br.target_block, s2 = br.fallthrough_block;
      if (s1 < 0 || s2 < 0 || s1 == s2 || s1 == a || s2 == a) continue;
      if (k.predecessors(s1) != std::vector<int>{a} || k.predecessors(s2) != std::vector<int>{a}) continue;
      if (per_block[s1].size() != 1 || per_block[s2].size() != 1) continue;
      const BranchInfo& b1 = per_block[s1][0].branch;
      const BranchInfo& b2 = per_block[s2][0].branch;
      auto simple = [](const BranchInfo& x) {
        return x.kind == BranchInfo::Kind::Fallthrough || x.kind == BranchInfo::Kind::Jump ||
               x.kind == BranchInfo::Kind::Exit;
      };
      if (!simple(b1) || !simple(b2)) continue;
      bool same_join = (b1.kind == BranchInfo::Kind::Exit && b2.kind == BranchInfo::Kind::Exit) ||
                       (b1.kind != BranchInfo::Kind::Exit && b2.kind != BranchInfo::Kind::Exit &&
                        b1.target_block == b2.target_block && b1.target_block != s1 && b1.target_block != s2);
      if (!same_join) continue;
      auto merged = merge_with_predication(per_block[s1][0], per_block[s2][0], Guard{br.pred, br.negate}, budget);
      if (!merged) continue;
      merged->branch.kind = b1.kind == BranchInfo::Kind::Exit ? BranchInfo::Kind::Exit : BranchInfo::Kind::Jump;
      merged->branch.target_block = b1.target_block;
      per_block[s2] = {std::move(*merged)};
      per_block[s1].clear();
      alias[s1] = s2;
      BranchInfo& at = per_block[a].back().branch;
      at = BranchInfo{};
      at.kind = BranchInfo::Kind::Jump;
      at.target_block = s2;
    }
  }

  // Number p-graphs; p-graph 0 loads kernel parameters.
  PGraph param;
  param.parameter_load = true;
  param.branch.kind = BranchInfo::Kind::Fallthrough;
  param.source_blocks = {"<params>"};
  part.pgraphs.push_back(param);
  std::vector<int> first(nb, -1);
  for (int b = 0; b < nb; ++b) {
    for (auto& pg : per_block[b]) {
      if (first[b] < 0) first[b] = static_cast<int>(part.pgraphs.size());
      pg.id = static_cast<int>(part.pgraphs.size());
      part.pgraphs.push_back(std::move(pg));
    }
  }
  if (part.pgraphs.size() >= static_cast<size_t>(kNoPGraph))
    throw CompileError("kernel needs more than 254 p-graphs");
  for (int b = 0; b < nb; ++b)
    if (first[b] < 0) first[b] = first[alias[b]];
  auto pg_of = [&](int block) { return block < 0 ? kNoPGraph : first[block]; };

  part.pgraphs[0].branch.target = 1;
  for (size_t i = 1; i < part.pgraphs.size(); ++i) {
    auto& pg = part.pgraphs[i];
    auto& br = pg.branch;
    if (!pg.is_block_tail) {
      br.kind = BranchInfo::Kind::Fallthrough;
      br.target = static_cast<int>(i) + 1;
      continue;
    }
    switch (br.kind) {
      case BranchInfo::Kind::Exit: br.target = kNoPGraph; break;
      case BranchInfo::Kind::Fallthrough:
      case BranchInfo::Kind::Jump: br.target = pg_of(br.target_block); break;
      case BranchInfo::Kind::Conditional:
        br.target = pg_of(br.target_block);
        br.fallthrough = pg_of(br.fallthrough_block);
        br.reconverge = pg_of(br.reconverge_block);
        break;
    }
    br.backward = br.target != kNoPGraph && br.target <= static_cast<int>(i);
  }
  part.entry = 1;
  return part;
}

std::vector<int> co_dispatch_banks(const RegSet& in_regs, int base_thread, int factor, int interval, int num_banks) {
  std::vector<int> banks;
  for (int r = 0; r < kNumGpr; ++r) {
    if (!in_regs.test(r)) continue;
    for (int j = 0; j < factor; ++j) banks.push_back((r + base_thread + j * interval) % num_banks);
  }
  return banks;
}

int compute_unroll_factor(const PGraph& pg, const ResourceBudget& budget, int num_banks,
                          std::span<const UnrollLane> lanes) {
  if (pg.parameter_load) return 1;
  int best = 1;
  for (const auto& lane : lanes) {
    if (lane.factor <= best || !pg.fits(budget, lane.factor)) continue;
    auto banks = co_dispatch_banks(pg.in_regs, 0, lane.factor, lane.interval, num_banks);
    std::set<int> distinct(banks.begin(), banks.end());
    if (distinct.size() == banks.size()) best = lane.factor;
  }
  return best;
}

std::vector<std::string> validate_pgraph(const PGraph& pg, const Kernel& k, const ResourceBudget& budget) {
  std::vector<std::string> v;
  auto fail = [&](const std::string& m) { v.push_back("pg" + std::to_string(pg.id) + ": " + m); };
  if (!pg.fits(budget)) fail("exceeds resource budget");

  // Flat instruction table.
  std::vector<const Instruction*> flat;
  std::vector<int> block_of;
  for (size_t b = 0; b < k.blocks.size(); ++b)
    for (const auto& inst : k.blocks[b].insts) {
      flat.push_back(&inst);
      block_of.push_back(static_cast<int>(b));
    }
  std::set<int> blocks;
  for (int id : pg.instruction_ids()) {
    if (id < 0 || id >= static_cast<int>(flat.size())) {
      fail("instruction id out of range");
      continue;
    }
    if (flat[id]->is_control()) fail("contains control instruction " + std::to_string(id));
    blocks.insert(block_of[id]);
  }
  if (!pg.merged && blocks.size() > 1) fail("spans multiple basic blocks without predication");

  for (size_t i = 0; i < pg.nodes.size(); ++i) {
    const auto& n = pg.nodes[i];
    auto check_src = [&](const NodeSrc& s) {
      if (s.kind == SrcKind::Node && s.index >= static_cast<int>(i)) fail("node " + std::to_string(i) + " not topological");
    };
    for (const auto& s : n.srcs) check_src(s);
    check_src(n.old_value);
    if (n.guard.kind == GuardKind::Node && n.guard.index >= static_cast<int>(i)) fail("guard not topological");
    if (n.op == Opcode::Ld || n.op == Opcode::St || n.op == Opcode::Bra || n.op == Opcode::Bar || n.op == Opcode::Ret)
      fail("node " + std::to_string(i) + " has non-dataflow opcode");
    if (pg.merged && n.op != Opcode::Psel &&
        (n.guard.kind != GuardKind::Node || pg.nodes[n.guard.index].op != Opcode::Psel))
      fail("merged node " + std::to_string(i) + " is not predicate-gated");
  }

  // Load-to-use and write-after-load in program order. The two sides of a
  // merged diamond are mutually exclusive and never conflict.
  auto same_path = [&](const NodeGuard& a, const NodeGuard& b) { return !pg.merged || a.negate == b.negate; };
  for (const auto& ld : pg.sinks) {
    if (ld.is_store) continue;
    auto reads_dst = [&](const NodeSrc& s) { return s.kind == SrcKind::Reg && s.index == ld.dst; };
    for (const auto& n : pg.nodes) {
      if (n.inst_id <= ld.inst_id || !same_path(n.guard, ld.guard)) continue;
      bool reads = reads_dst(n.old_value) || std::any_of(n.srcs.begin(), n.srcs.end(), reads_dst);
      if (reads) fail("load-to-use dependency on r" + std::to_string(ld.dst));
      if (n.dst == ld.dst) fail("write after load to r" + std::to_string(ld.dst));
    }
    for (const auto& s : pg.sinks) {
      if (s.inst_id <= ld.inst_id || !same_path(s.guard, ld.guard)) continue;
      if (reads_dst(s.addr) || reads_dst(s.value)) fail("load-to-use dependency on r" + std::to_string(ld.dst));
      if (!s.is_store && s.dst == ld.dst) fail("two loads to r" + std::to_string(ld.dst));
    }
  }
  if (pg.barrier_inst >= 0) {
    for (int id : pg.instruction_ids())
      if (id > pg.barrier_inst) fail("instruction after barrier");
  }
  return v;
}

std::vector<std::string> validate_partition(const Partition& part, const Kernel& k) {
  std::vector<std::string> v;
  std::map<int, int> owner;
  for (const auto& pg : part.pgraphs) {
    for (int id : pg.instruction_ids()) {
      if (!owner.emplace(id, pg.id).second)
        v.push_back("instruction " + std::to_string(id) + " in pg" + std::to_string(owner[id]) + " and pg" +
                    std::to_string(pg.id));
    }
  }
  int flat = 0;
  for (const auto& b : k.blocks)
    for (const auto& inst : b.insts) {
      if (!inst.is_control() && !owner.count(flat)) v.push_back("instruction " + std::to_string(flat) + " not mapped");
      ++flat;
    }
  return v;
}

std::string dump_pgraph(const PGraph& pg) {
  std::ostringstream os;
  auto src = [](const NodeSrc& s) -> std::string {
    switch (s.kind) {
      case SrcKind::Node: return "n" + std::to_string(s.index);
      case SrcKind::Reg:
        return s.index < kNumGpr ? "r" + std::to_string(s.index) : "p" + std::to_string(s.index - kNumGpr);
      case SrcKind::Const: return "c" + std::to_string(s.index);
      case SrcKind::Special: return std::string(special_name(static_cast<Special>(s.index)));
      case SrcKind::None: break;
    }
    return "-";
  };
  os << "pg" << pg.id << " [" << (pg.source_blocks.empty() ? "" : pg.source_blocks.front()) << "]"
     << (pg.merged ? " merged" : "") << (pg.barrier ? " barrier" : "") << "\n";
  for (size_t i = 0; i < pg.nodes.size(); ++i) {
    const auto& n = pg.nodes[i];
    os << "  n" << i << " = " << opcode_name(n.op);
    for (const auto& s : n.srcs) os << " " << src(s);
    if (n.guard.kind != GuardKind::None)
      os << " @" << (n.guard.negate ? "!" : "")
         << (n.guard.kind == GuardKind::Node ? "n" : "p") << n.guard.index;
    os << "\n";
  }
  for (const auto& s : pg.sinks) {
    os << "  " << (s.is_store ? "ST " : "LD ") << "[" << src(s.addr) << "+" << s.offset << "]";
    if (s.is_store) os << " <- " << src(s.value);
    else os << " -> r" << s.dst;
    os << "\n";
  }
  for (const auto& o : pg.outputs) os << "  out " << src(NodeSrc::reg(o.reg)) << " <- n" << o.node << "\n";
  return os.str();
}

namespace {

uint32_t source_value(const NodeSrc& s, const std::vector<NodeValue>& nodes, std::span<const uint32_t> cbuf,
                      const ThreadInputs& in) {
  switch (s.kind) {
    case SrcKind::Node: return nodes[s.index].value;
    case SrcKind::Reg: return in.regs[s.index];
    case SrcKind::Const: return s.index < static_cast<int>(cbuf.size()) ? cbuf[s.index] : 0;
    case SrcKind::Special: return in.specials[s.index];
    case SrcKind::None: break;
  }
  return 0;
}

bool guard_on(const NodeGuard& g, const std::vector<NodeValue>& nodes, const ThreadInputs& in) {
  switch (g.kind) {
    case GuardKind::None: return true;
    case GuardKind::RegPred: return ((in.regs[pred_bit(g.index)] & 1u) != 0) != g.negate;
    case GuardKind::Node: return ((nodes[g.index].value & 1u) != 0) != g.negate;
  }
  return true;
}

}  // namespace

uint32_t apply_node_op(Opcode op, std::span<const uint32_t> srcs) {
  if (op == Opcode::Ldc) return srcs[0];
  if (op == Opcode::Psel) return srcs[0] & 1u;
  return evaluate_alu(op, srcs);
}

PGraphResult evaluate_pgraph(const PGraph& pg, std::span<const uint32_t> cbuf, const ThreadInputs& in) {
  PGraphResult r;
  r.nodes.resize(pg.nodes.size());
  for (size_t i = 0; i < pg.nodes.size(); ++i) {
    const PNode& n = pg.nodes[i];
    NodeValue& out = r.nodes[i];
    if (guard_on(n.guard, r.nodes, in)) {
      uint32_t v[3] = {0, 0, 0};
      for (size_t k = 0; k < n.srcs.size() && k < 3; ++k) v[k] = source_value(n.srcs[k], r.nodes, cbuf, in);
      out.value = apply_node_op(n.op, std::span<const uint32_t>(v, n.srcs.size()));
      out.written = true;
    } else if (n.old_value.kind == SrcKind::Node) {
      out = r.nodes[n.old_value.index];
    } else if (n.old_value.present()) {
      out.value = source_value(n.old_value, r.nodes, cbuf, in);
    }
  }
  for (const auto& s : pg.sinks) {
    SinkRequest q;
    q.valid = guard_on(s.guard, r.nodes, in);
    q.addr = (s.addr.present() ? source_value(s.addr, r.nodes, cbuf, in) : 0) + static_cast<uint32_t>(s.offset);
    if (s.is_store) q.value = source_value(s.value, r.nodes, cbuf, in);
    r.sinks.push_back(q);
  }
  return r;
}

std::vector<std::pair<int, uint32_t>> output_writes(const PGraph& pg, const PGraphResult& r) {
  std::vector<std::pair<int, uint32_t>> w;
  for (const auto& o : pg.outputs)
    if (r.nodes[o.node].written) w.emplace_back(o.reg, r.nodes[o.node].value);
  return w;
}

}  // namespace dice
