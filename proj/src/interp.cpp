#include "dice/interp.hpp"

#include <cstring>

namespace dice {

namespace {

constexpr uint64_t kStepLimit = uint64_t{1} << 24;

enum class Stop { Barrier, Exit };

class ThreadMachine {
 public:
  ThreadMachine(const Kernel& k, const LaunchConfig& launch, int cta, int tid, GlobalMemory& global,
                std::vector<uint8_t>& shared)
      : k_(k), launch_(launch), cta_(cta), tid_(tid), global_(global), shared_(shared) {
    int start = 0;
    for (const auto& b : k.blocks) {
      block_start_.push_back(start);
      start += static_cast<int>(b.insts.size());
    }
  }

  bool finished() const { return !result_.state.active; }
  ThreadResult& result() { return result_; }

  Stop run() {
    while (result_.state.active) {
      if (block_ < 0) {
        result_.state.active = false;
        break;
      }
      const auto& bb = k_.blocks[block_];
      if (index_ >= static_cast<int>(bb.insts.size())) {
        enter(k_.fallthrough(block_));
        continue;
      }
      if (++result_.steps > kStepLimit) throw Trap("step limit exceeded", pc(), tid_);
      const Instruction& inst = bb.insts[index_];
      result_.state.pc = pc();
      if (auto stop = step(inst)) return *stop;
    }
    return Stop::Exit;
  }

 private:
  int pc() const { return block_ < 0 ? -1 : block_start_[block_] + index_; }

  void enter(int block) {
    block_ = block < 0 ? -1 : block;
    index_ = 0;
    if (block_ < 0) result_.state.active = false;
  }

  uint32_t value(const Operand& o) const {
    switch (o.kind) {
      case OperandKind::Reg: return result_.state.regs[o.index];
      case OperandKind::Pred: return result_.state.preds[o.index] ? 1u : 0u;
      case OperandKind::Imm: return o.imm;
      case OperandKind::Special: return special_value(static_cast<Special>(o.index), launch_, cta_, tid_);
      case OperandKind::None: break;
    }
    return 0;
  }

  uint32_t address(const Instruction& inst) const {
    uint32_t base = inst.addr_base.is_reg() ? result_.state.regs[inst.addr_base.index] : 0;
    return base + static_cast<uint32_t>(inst.offset);
  }

  uint32_t load(const Instruction& inst) {
    uint32_t a = address(inst);
    switch (inst.space) {
      case MemSpace::Global: {
        auto v = global_.load32(a);
        if (!v) throw Trap("global load out of bounds or unaligned at " + std::to_string(a), pc(), tid_);
        return *v;
      }
      case MemSpace::Shared: {
        if (a % 4 || static_cast<size_t>(a) + 4 > shared_.size())
          throw Trap("shared load out of bounds or unaligned at " + std::to_string(a), pc(), tid_);
        uint32_t v;
        std::memcpy(&v, shared_.data() + a, 4);
        return v;
      }
      case MemSpace::Param: {
        if (a % 4 || a / 4 >= launch_.params.size())
          throw Trap("parameter offset " + std::to_string(a) + " out of range", pc(), tid_);
        return launch_.params[a / 4];
      }
    }
    return 0;
  }

  void store(const Instruction& inst, uint32_t v) {
    uint32_t a = address(inst);
    if (inst.space == MemSpace::Global) {
      if (!global_.store32(a, v))
        throw Trap("global store out of bounds or unaligned at " + std::to_string(a), pc(), tid_);
    } else {
      if (a % 4 || static_cast<size_t>(a) + 4 > shared_.size())
        throw Trap("shared store out of bounds or unaligned at " + std::to_string(a), pc(), tid_);
      std::memcpy(shared_.data() + a, &v, 4);
    }
    result_.stores.push_back({inst.space, a, v});
  }

  void write(const Operand& dst, uint32_t v) {
    if (dst.is_reg()) result_.state.regs[dst.index] = v;
    else if (dst.is_pred()) result_.state.preds[dst.index] = (v & 1u) != 0;
  }

  std::optional<Stop> step(const Instruction& inst) {
    bool enabled = !inst.guard || (result_.state.preds[inst.guard->pred] != inst.guard->negate);
    result_.rf.reads += inst.register_reads().size();
    if (enabled && inst.register_write() >= 0) ++result_.rf.writes;

    switch (inst.op) {
      case Opcode::Bra:
        if (enabled) enter(k_.find_block(inst.target));
        else enter(k_.fallthrough(block_));
        return std::nullopt;
      case Opcode::Ret:
        enter(kExitNode);
        return Stop::Exit;
      case Opcode::Bar:
        enter(k_.fallthrough(block_));
        return result_.state.active ? std::optional<Stop>(Stop::Barrier) : std::optional<Stop>(Stop::Exit);
      case Opcode::Ld:
        if (enabled) write(inst.dst, load(inst));
        break;
      case Opcode::St:
        if (enabled) store(inst, value(inst.srcs[0]));
        break;
      default:
        if (enabled) {
          uint32_t src[3] = {0, 0, 0};
          for (size_t i = 0; i < inst.srcs.size(); ++i) src[i] = value(inst.srcs[i]);
          write(inst.dst, evaluate_alu(inst.op, std::span<const uint32_t>(src, inst.srcs.size())));
        }
    }
    ++index_;
    return std::nullopt;
  }

  const Kernel& k_;
  const LaunchConfig& launch_;
  int cta_;
  int tid_;
  GlobalMemory& global_;
  std::vector<uint8_t>& shared_;
  std::vector<int> block_start_;
  int block_ = 0;
  int index_ = 0;
  ThreadResult result_;
};

}  // namespace

uint32_t special_value(Special s, const LaunchConfig& launch, int cta, int tid) {
  switch (s) {
    case Special::TidX: return static_cast<uint32_t>(tid);
    case Special::CtaidX: return static_cast<uint32_t>(cta);
    case Special::NtidX: return static_cast<uint32_t>(launch.cta_size);
    case Special::NtidY:
    case Special::NtidZ: return 1;
    default: return 0;
  }
}

ThreadResult interpret_thread(const Kernel& kernel, const LaunchConfig& launch, int cta, int tid,
                              GlobalMemory& memory, uint32_t shared_bytes) {
  if (tid < 0 || tid >= launch.cta_size) throw Error("interpret_thread: tid out of range");
  std::vector<uint8_t> shared(shared_bytes, 0);
  ThreadMachine m(kernel, launch, cta, tid, memory, shared);
  while (m.run() == Stop::Barrier) {
  }
  return std::move(m.result());
}

CtaResult interpret_cta(const Kernel& kernel, const LaunchConfig& launch, int cta, GlobalMemory& memory,
                        uint32_t shared_bytes) {
  std::vector<uint8_t> shared(shared_bytes, 0);
  std::vector<ThreadMachine> threads;
  threads.reserve(launch.cta_size);
  for (int t = 0; t < launch.cta_size; ++t) threads.emplace_back(kernel, launch, cta, t, memory, shared);
  bool any_live = true;
  while (any_live) {
    any_live = false;
    for (auto& t : threads) {
      if (t.finished()) continue;
      if (t.run() == Stop::Barrier) any_live = true;
    }
  }
  CtaResult out;
  for (auto& t : threads) out.threads.push_back(std::move(t.result()));
  return out;
}

OracleResult run_oracle(const Kernel& kernel, const LaunchConfig& launch, const GlobalMemory& memory,
                        uint32_t shared_bytes) {
  OracleResult r;
  r.memory = memory;
  for (int c = 0; c < launch.grid_size; ++c) {
    CtaResult cta = interpret_cta(kernel, launch, c, r.memory, shared_bytes);
    std::vector<ThreadState> states;
    for (auto& t : cta.threads) {
      states.push_back(t.state);
      r.baseline_rf += t.rf;
    }
    r.final_states.push_back(std::move(states));
  }
  return r;
}

RfCounts count_baseline_rf(const Kernel& kernel, const LaunchConfig& launch, const GlobalMemory& memory,
                           uint32_t shared_bytes) {
  return run_oracle(kernel, launch, memory, shared_bytes).baseline_rf;
}

}  // namespace dice
