#pragma once

// Textual SIMT IR: opcodes, operands, basic blocks and kernels.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dice/common.hpp"

namespace dice {

enum class Opcode : uint8_t {
  IAdd, ISub, IMul, IMad, And, Or, Xor, Shl, Shr,
  FAdd, FMul, Fma, FDiv, Sqrt, Exp,
  SetpEq, SetpNe, SetpLt, SetpLe, SetpGt, SetpGe,
  SetpFEq, SetpFNe, SetpFLt, SetpFLe, SetpFGt, SetpFGe,
  Selp, Mov, CvtI2F, CvtF2I,
  Ld, St, Bra, Bar, Ret,
  // Compiler-internal, never produced by the parser.
  Ldc,   // read a word from the shared constant buffer
  Psel,  // forward a predicate register into the fabric as a 0/1 word
  Count
};

enum class MemSpace : uint8_t { Global, Shared, Param };

enum class Special : uint8_t { TidX, TidY, TidZ, CtaidX, CtaidY, CtaidZ, NtidX, NtidY, NtidZ };
inline constexpr int kNumSpecials = 9;

enum class OperandKind : uint8_t { None, Reg, Pred, Imm, Special };

struct Operand {
  OperandKind kind = OperandKind::None;
  int index = 0;       // register / predicate / special index
  uint32_t imm = 0;    // immediate bit pattern
  bool is_float = false;  // immediate written as a float literal

  static Operand reg(int r) { return {OperandKind::Reg, r, 0, false}; }
  static Operand pred(int p) { return {OperandKind::Pred, p, 0, false}; }
  static Operand immediate(uint32_t v, bool f = false) { return {OperandKind::Imm, 0, v, f}; }
  static Operand special(Special s) { return {OperandKind::Special, static_cast<int>(s), 0, false}; }

  bool is_reg() const { return kind == OperandKind::Reg; }
  bool is_pred() const { return kind == OperandKind::Pred; }
  bool is_register() const { return is_reg() || is_pred(); }
  bool present() const { return kind != OperandKind::None; }
  /// Index into the 34-bit register bitmap (GPRs then predicates); -1 otherwise.
  int bitmap_index() const {
    if (is_reg()) return index;
    if (is_pred()) return pred_bit(index);
    return -1;
  }

  bool operator==(const Operand&) const = default;
};

struct Guard {
  int pred = 0;
  bool negate = false;
  bool operator==(const Guard&) const = default;
};

struct Instruction {
  Opcode op = Opcode::Mov;
  MemSpace space = MemSpace::Global;  // LD/ST only
  Operand dst;
  std::vector<Operand> srcs;  // ST: srcs[0] is the stored value
  Operand addr_base;          // LD/ST: register base or None for absolute addressing
  int32_t offset = 0;         // LD/ST byte offset
  std::optional<Guard> guard;
  std::string target;         // BRA label
  int line = 0;               // source line, not part of equality

  bool operator==(const Instruction& o) const {
    return op == o.op && space == o.space && dst == o.dst && srcs == o.srcs &&
           addr_base == o.addr_base && offset == o.offset && guard == o.guard &&
           target == o.target;
  }

  bool is_control() const { return op == Opcode::Bra || op == Opcode::Bar || op == Opcode::Ret; }
  bool is_load() const { return op == Opcode::Ld; }
  bool is_store() const { return op == Opcode::St; }
  bool is_memory_sink() const {
    return (op == Opcode::Ld && space != MemSpace::Param) || op == Opcode::St;
  }

  /// Bitmap indices of every register read, including address base and guard predicate.
  std::vector<int> register_reads() const;
  /// Bitmap index of the destination register, or -1.
  int register_write() const { return dst.bitmap_index(); }
};

enum class Terminator : uint8_t { Fallthrough, Branch, Return, Barrier };

struct BasicBlock {
  std::string label;
  std::vector<Instruction> insts;  // includes the terminating BRA/RET/BAR, if any
  Terminator term = Terminator::Fallthrough;
  bool operator==(const BasicBlock& o) const {
    return label == o.label && insts == o.insts && term == o.term;
  }
};

struct Param {
  std::string name;
  uint32_t offset = 0;
  bool operator==(const Param&) const = default;
};

inline constexpr int kEntryNode = -1;
inline constexpr int kExitNode = -2;

struct ControlEdge {
  int from = 0;  // block index or kEntryNode
  int to = 0;    // block index or kExitNode
  bool operator==(const ControlEdge&) const = default;
};

struct Kernel {
  std::string name;
  std::vector<Param> params;
  int num_regs = 0;
  std::vector<int> outputs;        // GPRs observable after exit (".out" header list)
  std::vector<BasicBlock> blocks;  // blocks[0] is the entry
  std::vector<ControlEdge> edges;

  bool operator==(const Kernel&) const = default;

  int find_block(std::string_view label) const;
  std::vector<int> successors(int block) const;
  std::vector<int> predecessors(int block) const;
  /// Branch block index for a conditional BRA's taken path, fallthrough otherwise (-1 = exit).
  int branch_target(int block) const;
  int fallthrough(int block) const;  // next block in layout, kExitNode when last
  const Instruction* terminator_inst(int block) const;
  size_t instruction_count() const;
};

struct LaunchConfig {
  int cta_size = 1;   // flattened threads per CTA
  int grid_size = 1;  // number of CTAs
  std::vector<uint32_t> params;  // one 32-bit word per kernel parameter
};

Kernel parse_kernel(std::string_view text);
std::string print_kernel(const Kernel& kernel);
std::string print_instruction(const Instruction& inst);

std::string_view opcode_name(Opcode op);
bool is_sfu_op(Opcode op);
bool is_fp_op(Opcode op);
bool is_setp(Opcode op);
/// Number of value sources the opcode consumes (excluding guards and address).
int opcode_arity(Opcode op);

std::string_view special_name(Special s);

/// 32-bit ALU semantics shared by the oracle, the simulator and the fabric evaluator.
/// SETP returns 0/1; SELP takes (a, b, pred).
uint32_t evaluate_alu(Opcode op, std::span<const uint32_t> srcs);

}  // namespace dice
