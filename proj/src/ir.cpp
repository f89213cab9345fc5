#include "dice/ir.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace dice {

namespace {

struct OpInfo {
  Opcode op;
  std::string_view name;
  int arity;
};

constexpr OpInfo kOpTable[] = {
    {Opcode::IAdd, "IADD", 2},        {Opcode::ISub, "ISUB", 2},
    {Opcode::IMul, "IMUL", 2},        {Opcode::IMad, "IMAD", 3},
    {Opcode::And, "AND", 2},          {Opcode::Or, "OR", 2},
    {Opcode::Xor, "XOR", 2},          {Opcode::Shl, "SHL", 2},
    {Opcode::Shr, "SHR", 2},          {Opcode::FAdd, "FADD", 2},
    {Opcode::FMul, "FMUL", 2},        {Opcode::Fma, "FMA", 3},
    {Opcode::FDiv, "FDIV", 2},        {Opcode::Sqrt, "SQRT", 1},
    {Opcode::Exp, "EXP", 1},          {Opcode::SetpEq, "SETP.EQ", 2},
    {Opcode::SetpNe, "SETP.NE", 2},   {Opcode::SetpLt, "SETP.LT", 2},
    {Opcode::SetpLe, "SETP.LE", 2},   {Opcode::SetpGt, "SETP.GT", 2},
    {Opcode::SetpGe, "SETP.GE", 2},   {Opcode::SetpFEq, "SETP.FEQ", 2},
    {Opcode::SetpFNe, "SETP.FNE", 2}, {Opcode::SetpFLt, "SETP.FLT", 2},
    {Opcode::SetpFLe, "SETP.FLE", 2}, {Opcode::SetpFGt, "SETP.FGT", 2},
    {Opcode::SetpFGe, "SETP.FGE", 2}, {Opcode::Selp, "SELP", 3},
    {Opcode::Mov, "MOV", 1},          {Opcode::CvtI2F, "CVT.I2F", 1},
    {Opcode::CvtF2I, "CVT.F2I", 1},   {Opcode::Ld, "LD", 0},
    {Opcode::St, "ST", 1},            {Opcode::Bra, "BRA", 0},
    {Opcode::Bar, "BAR", 0},          {Opcode::Ret, "RET", 0},
    {Opcode::Ldc, "LDC", 1},          {Opcode::Psel, "PSEL", 1},
};

constexpr std::string_view kSpecialNames[kNumSpecials] = {
    "%tid.x", "%tid.y", "%tid.z", "%ctaid.x", "%ctaid.y", "%ctaid.z", "%ntid.x", "%ntid.y", "%ntid.z"};

const OpInfo& info(Opcode op) {
  for (const auto& i : kOpTable)
    if (i.op == op) return i;
  throw Error("unknown opcode");
}

float as_float(uint32_t v) { return std::bit_cast<float>(v); }
uint32_t as_bits(float f) { return std::bit_cast<uint32_t>(f); }
int32_t as_int(uint32_t v) { return static_cast<int32_t>(v); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_label_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$' || c == '.';
}

// A piece of a source line with its 1-based column.
struct Piece {
  std::string_view text;
  int col = 1;
};

Piece trim_piece(Piece p) {
  int lead = 0;
  while (lead < static_cast<int>(p.text.size()) &&
         std::isspace(static_cast<unsigned char>(p.text[lead])))
    ++lead;
  p.text.remove_prefix(lead);
  p.col += lead;
  p.text = trim(p.text);
  return p;
}

class LineParser {
 public:
  LineParser(int line, const Kernel& k) : line_(line), kernel_(k) {}

  [[noreturn]] void fail(int col, const std::string& msg) const { throw ParseError(line_, col, msg); }

  int parse_int(Piece p) const {
    std::string_view s = p.text;
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
      neg = s[0] == '-';
      s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      s.remove_prefix(2);
    }
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      fail(p.col, "expected integer, got '" + std::string(p.text) + "'");
    if (neg) v = -v;
    if (v < std::numeric_limits<int32_t>::min() || v > std::numeric_limits<uint32_t>::max())
      fail(p.col, "integer out of 32-bit range");
    return static_cast<int32_t>(static_cast<uint32_t>(v));
  }

  Operand parse_operand(Piece p) const {
    p = trim_piece(p);
    std::string_view s = p.text;
    if (s.empty()) fail(p.col, "missing operand");
    if (s[0] == 'r' && s.size() > 1 && std::isdigit(static_cast<unsigned char>(s[1]))) {
      int r = parse_index(Piece{s.substr(1), p.col + 1});
      if (r >= kernel_.num_regs || r >= kNumGpr)
        fail(p.col, "register r" + std::to_string(r) + " out of range (.regs " +
                        std::to_string(kernel_.num_regs) + ")");
      return Operand::reg(r);
    }
    if (s[0] == 'p' && s.size() > 1 && std::isdigit(static_cast<unsigned char>(s[1]))) {
      int q = parse_index(Piece{s.substr(1), p.col + 1});
      if (q >= kNumPred) fail(p.col, "predicate p" + std::to_string(q) + " out of range");
      return Operand::pred(q);
    }
    if (s[0] == '%') {
      for (int i = 0; i < kNumSpecials; ++i)
        if (s == kSpecialNames[i]) return Operand::special(static_cast<Special>(i));
      fail(p.col, "unknown special register '" + std::string(s) + "'");
    }
    if (s.size() == 10 && s[0] == '0' && (s[1] == 'f' || s[1] == 'F')) {
      uint32_t bits = 0;
      auto [ptr, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), bits, 16);
      if (ec != std::errc() || ptr != s.data() + s.size()) fail(p.col, "bad float bit literal");
      return Operand::immediate(bits, true);
    }
    if (s.back() == 'f' && s.find_first_of(".eE") != std::string_view::npos) {
      std::string tmp(s.substr(0, s.size() - 1));
      char* end = nullptr;
      float f = std::strtof(tmp.c_str(), &end);
      if (end != tmp.c_str() + tmp.size()) fail(p.col, "bad float literal");
      return Operand::immediate(as_bits(f), true);
    }
    return Operand::immediate(static_cast<uint32_t>(parse_int(p)));
  }

  int parse_index(Piece p) const {
    int v = 0;
    auto [ptr, ec] = std::from_chars(p.text.data(), p.text.data() + p.text.size(), v);
    if (ec != std::errc() || ptr != p.text.data() + p.text.size())
      fail(p.col, "bad register index '" + std::string(p.text) + "'");
    return v;
  }

  // "[rA + imm]", "[rA - imm]", "[rA]" or "[imm]".
  void parse_address(Piece p, Instruction& inst) const {
    p = trim_piece(p);
    if (p.text.size() < 2 || p.text.front() != '[' || p.text.back() != ']')
      fail(p.col, "expected memory operand '[...]'");
    Piece inner = trim_piece(Piece{p.text.substr(1, p.text.size() - 2), p.col + 1});
    size_t op_pos = inner.text.find_first_of("+-", 1);
    if (inner.text.empty()) fail(p.col, "empty memory operand");
    if (inner.text[0] == 'r') {
      Piece base{inner.text.substr(0, op_pos), inner.col};
      Operand b = parse_operand(base);
      if (!b.is_reg()) fail(base.col, "address base must be a register");
      inst.addr_base = b;
      if (op_pos != std::string_view::npos) {
        Piece off{inner.text.substr(op_pos + 1), inner.col + static_cast<int>(op_pos) + 1};
        off = trim_piece(off);
        int v = parse_int(off);
        inst.offset = inner.text[op_pos] == '-' ? -v : v;
      }
    } else {
      inst.offset = parse_int(inner);
    }
  }

 private:
  int line_;
  const Kernel& kernel_;
};

std::vector<Piece> split_commas(Piece p) {
  std::vector<Piece> out;
  int depth = 0;
  size_t start = 0;
  for (size_t i = 0; i <= p.text.size(); ++i) {
    if (i == p.text.size() || (p.text[i] == ',' && depth == 0)) {
      out.push_back(trim_piece(Piece{p.text.substr(start, i - start), p.col + static_cast<int>(start)}));
      start = i + 1;
    } else if (p.text[i] == '[') {
      ++depth;
    } else if (p.text[i] == ']') {
      --depth;
    }
  }
  return out;
}

std::string format_operand(const Operand& o) {
  switch (o.kind) {
    case OperandKind::Reg: return "r" + std::to_string(o.index);
    case OperandKind::Pred: return "p" + std::to_string(o.index);
    case OperandKind::Special: return std::string(kSpecialNames[o.index]);
    case OperandKind::Imm:
      if (o.is_float) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0f%08X", o.imm);
        return buf;
      }
      return std::to_string(static_cast<int32_t>(o.imm));
    case OperandKind::None: break;
  }
  return "?";
}

std::string_view space_name(MemSpace s) {
  switch (s) {
    case MemSpace::Global: return "GLOBAL";
    case MemSpace::Shared: return "SHARED";
    case MemSpace::Param: return "PARAM";
  }
  return "?";
}

std::string format_address(const Instruction& inst) {
  std::string s = "[";
  if (inst.addr_base.is_reg()) {
    s += format_operand(inst.addr_base);
    if (inst.offset > 0) s += " + " + std::to_string(inst.offset);
    if (inst.offset < 0) s += " - " + std::to_string(-static_cast<int64_t>(inst.offset));
  } else {
    s += std::to_string(inst.offset);
  }
  return s + "]";
}

void build_edges(Kernel& k, const std::vector<int>& line_of_block) {
  const int n = static_cast<int>(k.blocks.size());
  std::map<std::string, int, std::less<>> labels;
  for (int b = 0; b < n; ++b) {
    if (!labels.emplace(k.blocks[b].label, b).second)
      throw ParseError(line_of_block[b], 1, "duplicate label '" + k.blocks[b].label + "'");
  }
  for (int b = 0; b < n; ++b) {
    for (const auto& inst : k.blocks[b].insts) {
      if (inst.op == Opcode::Bra && !labels.count(inst.target))
        throw ParseError(inst.line, 1, "undefined label '" + inst.target + "'");
    }
  }
  k.edges.clear();
  if (n > 0) k.edges.push_back({kEntryNode, 0});
  for (int b = 0; b < n; ++b) {
    for (int s : k.successors(b)) k.edges.push_back({b, s});
  }
  // Reachability from entry.
  std::vector<bool> seen(n, false);
  std::vector<int> work{0};
  if (n > 0) seen[0] = true;
  while (!work.empty()) {
    int b = work.back();
    work.pop_back();
    for (int s : k.successors(b)) {
      if (s >= 0 && !seen[s]) {
        seen[s] = true;
        work.push_back(s);
      }
    }
  }
  for (int b = 0; b < n; ++b) {
    if (!seen[b]) throw ParseError(line_of_block[b], 1, "block '" + k.blocks[b].label + "' is unreachable");
  }
}

}  // namespace

std::vector<int> Instruction::register_reads() const {
  std::vector<int> out;
  if (addr_base.is_reg()) out.push_back(addr_base.index);
  for (const auto& s : srcs)
    if (s.is_register()) out.push_back(s.bitmap_index());
  if (guard) out.push_back(pred_bit(guard->pred));
  return out;
}

std::string_view opcode_name(Opcode op) { return info(op).name; }
int opcode_arity(Opcode op) { return info(op).arity; }
std::string_view special_name(Special s) { return kSpecialNames[static_cast<int>(s)]; }

bool is_sfu_op(Opcode op) { return op == Opcode::FDiv || op == Opcode::Sqrt || op == Opcode::Exp; }

bool is_fp_op(Opcode op) {
  switch (op) {
    case Opcode::FAdd: case Opcode::FMul: case Opcode::Fma: case Opcode::SetpFEq:
    case Opcode::SetpFNe: case Opcode::SetpFLt: case Opcode::SetpFLe: case Opcode::SetpFGt:
    case Opcode::SetpFGe: case Opcode::CvtI2F: case Opcode::CvtF2I:
      return true;
    default:
      return false;
  }
}

bool is_setp(Opcode op) { return op >= Opcode::SetpEq && op <= Opcode::SetpFGe; }

uint32_t evaluate_alu(Opcode op, std::span<const uint32_t> s) {
  auto a = [&] { return s[0]; };
  auto b = [&] { return s[1]; };
  switch (op) {
    case Opcode::IAdd: return a() + b();
    case Opcode::ISub: return a() - b();
    case Opcode::IMul: return a() * b();
    case Opcode::IMad: return a() * b() + s[2];
    case Opcode::And: return a() & b();
    case Opcode::Or: return a() | b();
    case Opcode::Xor: return a() ^ b();
    case Opcode::Shl: return a() << (b() & 31u);
    case Opcode::Shr: return a() >> (b() & 31u);
    case Opcode::FAdd: return as_bits(as_float(a()) + as_float(b()));
    case Opcode::FMul: return as_bits(as_float(a()) * as_float(b()));
    case Opcode::Fma: return as_bits(std::fma(as_float(a()), as_float(b()), as_float(s[2])));
    case Opcode::FDiv: return as_bits(as_float(a()) / as_float(b()));
    case Opcode::Sqrt: return as_bits(std::sqrt(as_float(a())));
    case Opcode::Exp: return as_bits(std::exp(as_float(a())));
    case Opcode::SetpEq: return as_int(a()) == as_int(b());
    case Opcode::SetpNe: return as_int(a()) != as_int(b());
    case Opcode::SetpLt: return as_int(a()) < as_int(b());
    case Opcode::SetpLe: return as_int(a()) <= as_int(b());
    case Opcode::SetpGt: return as_int(a()) > as_int(b());
    case Opcode::SetpGe: return as_int(a()) >= as_int(b());
    case Opcode::SetpFEq: return as_float(a()) == as_float(b());
    case Opcode::SetpFNe: return as_float(a()) != as_float(b());
    case Opcode::SetpFLt: return as_float(a()) < as_float(b());
    case Opcode::SetpFLe: return as_float(a()) <= as_float(b());
    case Opcode::SetpFGt: return as_float(a()) > as_float(b());
    case Opcode::SetpFGe: return as_float(a()) >= as_float(b());
    case Opcode::Selp: return (s[2] & 1u) ? a() : b();
    case Opcode::Mov:
    case Opcode::Ldc:
      return a();
    case Opcode::Psel: return a() & 1u;
    case Opcode::CvtI2F: return as_bits(static_cast<float>(as_int(a())));
    case Opcode::CvtF2I: {
      float f = as_float(a());
      if (std::isnan(f)) return 0;
      if (f >= 2147483647.0f) return static_cast<uint32_t>(std::numeric_limits<int32_t>::max());
      if (f <= -2147483648.0f) return static_cast<uint32_t>(std::numeric_limits<int32_t>::min());
      return static_cast<uint32_t>(static_cast<int32_t>(f));
    }
    default:
      throw Error("evaluate_alu: opcode " + std::string(opcode_name(op)) + " is not an ALU op");
  }
}

int Kernel::find_block(std::string_view label) const {
  for (size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label) return static_cast<int>(i);
  return -1;
}

const Instruction* Kernel::terminator_inst(int b) const {
  const auto& bb = blocks[b];
  if (bb.insts.empty() || !bb.insts.back().is_control()) return nullptr;
  return &bb.insts.back();
}

int Kernel::fallthrough(int b) const {
  return b + 1 < static_cast<int>(blocks.size()) ? b + 1 : kExitNode;
}

int Kernel::branch_target(int b) const {
  const Instruction* t = terminator_inst(b);
  if (!t || t->op != Opcode::Bra) return fallthrough(b);
  return find_block(t->target);
}

std::vector<int> Kernel::successors(int b) const {
  switch (blocks[b].term) {
    case Terminator::Return: return {kExitNode};
    case Terminator::Fallthrough:
    case Terminator::Barrier: return {fallthrough(b)};
    case Terminator::Branch: {
      const Instruction* t = terminator_inst(b);
      int target = find_block(t->target);
      if (!t->guard) return {target};
      int ft = fallthrough(b);
      if (ft == target) return {target};
      return {target, ft};
    }
  }
  return {};
}

std::vector<int> Kernel::predecessors(int b) const {
  std::vector<int> out;
  for (const auto& e : edges)
    if (e.to == b) out.push_back(e.from);
  return out;
}

size_t Kernel::instruction_count() const {
  size_t n = 0;
  for (const auto& b : blocks) n += b.insts.size();
  return n;
}

Kernel parse_kernel(std::string_view text) {
  Kernel k;
  bool have_header = false;
  std::vector<int> block_line;
  bool block_open = false;  // current block may still receive instructions
  int line_no = 0;
  int auto_label = 0;

  auto open_block = [&](std::string label, int line) {
    k.blocks.push_back(BasicBlock{std::move(label), {}, Terminator::Fallthrough});
    block_line.push_back(line);
    block_open = true;
  };

  size_t pos = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view raw = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (size_t hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    Piece line = trim_piece(Piece{raw, 1});
    if (line.text.empty()) {
      if (eol == text.size()) break;
      continue;
    }
    LineParser lp(line_no, k);

    if (line.text.starts_with(".kernel")) {
      if (have_header) lp.fail(line.col, "duplicate .kernel header");
      std::istringstream is{std::string(line.text)};
      std::string kw, name, pk, rk;
      int np = -1, nr = -1;
      is >> kw >> name >> pk >> np >> rk >> nr;
      if (name.empty() || pk != ".params" || rk != ".regs" || np < 0 || nr < 0 || !is)
        lp.fail(line.col, "expected '.kernel NAME .params N .regs R [.out rA rB ...]'");
      if (nr > kNumGpr) lp.fail(line.col, ".regs " + std::to_string(nr) + " exceeds " + std::to_string(kNumGpr));
      std::string ok;
      if (is >> ok) {
        if (ok != ".out") lp.fail(line.col, "unexpected '" + ok + "' after .regs");
        std::string reg;
        while (is >> reg) {
          int r = -1;
          if (reg.size() > 1 && reg[0] == 'r' && std::all_of(reg.begin() + 1, reg.end(), ::isdigit)) r = std::stoi(reg.substr(1));
          if (r < 0 || r >= nr) lp.fail(line.col, ".out register '" + reg + "' is not one of r0..r" + std::to_string(nr - 1));
          if (std::find(k.outputs.begin(), k.outputs.end(), r) == k.outputs.end()) k.outputs.push_back(r);
        }
        if (k.outputs.empty()) lp.fail(line.col, ".out needs at least one register");
      }
      k.name = name;
      k.num_regs = nr;
      for (int i = 0; i < np; ++i)
        k.params.push_back(Param{"param" + std::to_string(i), static_cast<uint32_t>(4 * i)});
      have_header = true;
      continue;
    }
    if (!have_header) lp.fail(line.col, "expected .kernel header before code");

    if (line.text.back() == ':') {
      std::string label(trim(line.text.substr(0, line.text.size() - 1)));
      if (label.empty() || !std::all_of(label.begin(), label.end(), is_label_char))
        lp.fail(line.col, "bad label");
      if (block_open && k.blocks.back().insts.empty() && k.blocks.back().label.starts_with("$B") &&
          block_line.back() == -1) {
        k.blocks.back().label = label;  // rename a pending auto block
        block_line.back() = line_no;
      } else {
        open_block(label, line_no);
      }
      continue;
    }

    // Instruction.
    if (!block_open) {
      open_block("$B" + std::to_string(auto_label++), line_no);
    }
    Instruction inst;
    inst.line = line_no;
    Piece body = line;
    if (size_t at = body.text.find('@'); at != std::string_view::npos) {
      Piece g = trim_piece(Piece{body.text.substr(at + 1), body.col + static_cast<int>(at) + 1});
      Guard guard;
      std::string_view gs = g.text;
      if (!gs.empty() && gs[0] == '!') {
        guard.negate = true;
        gs.remove_prefix(1);
      }
      Operand p = lp.parse_operand(Piece{gs, g.col + (guard.negate ? 1 : 0)});
      if (!p.is_pred()) lp.fail(g.col, "guard must be a predicate register");
      guard.pred = p.index;
      inst.guard = guard;
      body = trim_piece(Piece{body.text.substr(0, at), body.col});
    }
    size_t sp = body.text.find_first_of(" \t");
    std::string mnem(body.text.substr(0, sp));
    Piece rest = sp == std::string_view::npos
                     ? Piece{"", body.col + static_cast<int>(body.text.size())}
                     : trim_piece(Piece{body.text.substr(sp), body.col + static_cast<int>(sp)});
    std::vector<Piece> ops = rest.text.empty() ? std::vector<Piece>{} : split_commas(rest);
    auto need = [&](size_t n) {
      if (ops.size() != n)
        lp.fail(body.col, mnem + " expects " + std::to_string(n) + " operands, got " + std::to_string(ops.size()));
    };
    auto value_src = [&](const Piece& p) {
      Operand o = lp.parse_operand(p);
      if (o.is_pred()) lp.fail(p.col, "predicate not allowed as a value operand");
      return o;
    };

    if (mnem.starts_with("LD.") || mnem.starts_with("ST.")) {
      std::string sp_name = mnem.substr(3);
      bool is_ld = mnem[0] == 'L';
      inst.op = is_ld ? Opcode::Ld : Opcode::St;
      if (sp_name == "GLOBAL") inst.space = MemSpace::Global;
      else if (sp_name == "SHARED") inst.space = MemSpace::Shared;
      else if (sp_name == "PARAM" && is_ld) inst.space = MemSpace::Param;
      else lp.fail(body.col, "unknown memory space in '" + mnem + "'");
      need(2);
      if (is_ld) {
        inst.dst = lp.parse_operand(ops[0]);
        if (!inst.dst.is_reg()) lp.fail(ops[0].col, "load destination must be a register");
        lp.parse_address(ops[1], inst);
        if (inst.space == MemSpace::Param && inst.addr_base.present())
          lp.fail(ops[1].col, "parameter loads take an absolute offset");
      } else {
        lp.parse_address(ops[0], inst);
        inst.srcs.push_back(value_src(ops[1]));
      }
      if (inst.offset % 4 != 0 && !inst.addr_base.present()) lp.fail(body.col, "unaligned absolute address");
    } else if (mnem == "BRA") {
      inst.op = Opcode::Bra;
      need(1);
      std::string_view t = ops[0].text;
      if (t.empty() || !std::all_of(t.begin(), t.end(), is_label_char)) lp.fail(ops[0].col, "bad branch label");
      inst.target = std::string(t);
    } else if (mnem == "BAR" || mnem == "RET") {
      inst.op = mnem == "BAR" ? Opcode::Bar : Opcode::Ret;
      need(0);
      if (inst.guard) lp.fail(body.col, mnem + " cannot be predicated");
    } else {
      const OpInfo* found = nullptr;
      for (const auto& i : kOpTable)
        if (i.name == mnem && i.op < Opcode::Ld) found = &i;
      if (!found) lp.fail(body.col, "unknown opcode '" + mnem + "'");
      inst.op = found->op;
      need(1 + found->arity);
      inst.dst = lp.parse_operand(ops[0]);
      if (is_setp(inst.op)) {
        if (!inst.dst.is_pred()) lp.fail(ops[0].col, "SETP destination must be a predicate");
      } else if (!inst.dst.is_reg()) {
        lp.fail(ops[0].col, "destination must be a general register");
      }
      for (int i = 0; i < found->arity; ++i) {
        Piece p = ops[1 + i];
        if (inst.op == Opcode::Selp && i == 2) {
          Operand q = lp.parse_operand(p);
          if (!q.is_pred()) lp.fail(p.col, "SELP selector must be a predicate");
          inst.srcs.push_back(q);
        } else {
          inst.srcs.push_back(value_src(p));
        }
      }
    }

    BasicBlock& bb = k.blocks.back();
    bb.insts.push_back(std::move(inst));
    const Instruction& last = bb.insts.back();
    if (last.is_control()) {
      bb.term = last.op == Opcode::Bra ? Terminator::Branch
                : last.op == Opcode::Ret ? Terminator::Return
                                         : Terminator::Barrier;
      // Subsequent code starts a fresh block; a following label renames it.
      open_block("$B" + std::to_string(auto_label++), -1);
      block_open = true;
    }
    if (eol == text.size()) break;
  }
  if (!have_header) throw ParseError(line_no, 1, "missing .kernel header");
  // Drop a trailing empty auto block created after the final terminator.
  if (!k.blocks.empty() && k.blocks.back().insts.empty() && block_line.back() == -1) {
    k.blocks.pop_back();
    block_line.pop_back();
  }
  for (int& l : block_line)
    if (l == -1) l = line_no;
  if (k.blocks.empty()) throw ParseError(line_no, 1, "kernel has no code");
  build_edges(k, block_line);
  return k;
}

std::string print_instruction(const Instruction& inst) {
  std::string s;
  switch (inst.op) {
    case Opcode::Ld:
      s = "LD." + std::string(space_name(inst.space)) + " " + format_operand(inst.dst) + ", " + format_address(inst);
      break;
    case Opcode::St:
      s = "ST." + std::string(space_name(inst.space)) + " " + format_address(inst) + ", " + format_operand(inst.srcs[0]);
      break;
    case Opcode::Bra: s = "BRA " + inst.target; break;
    case Opcode::Bar: s = "BAR"; break;
    case Opcode::Ret: s = "RET"; break;
    default: {
      s = std::string(opcode_name(inst.op)) + " " + format_operand(inst.dst);
      for (const auto& o : inst.srcs) s += ", " + format_operand(o);
    }
  }
  if (inst.guard) s += std::string(" @") + (inst.guard->negate ? "!" : "") + "p" + std::to_string(inst.guard->pred);
  return s;
}

std::string print_kernel(const Kernel& k) {
  std::ostringstream os;
  os << ".kernel " << k.name << " .params " << k.params.size() << " .regs " << k.num_regs;
  if (!k.outputs.empty()) {
    os << " .out";
    for (int r : k.outputs) os << " r" << r;
  }
  os << "\n";
  for (const auto& bb : k.blocks) {
    os << bb.label << ":\n";
    for (const auto& inst : bb.insts) os << "  " << print_instruction(inst) << "\n";
  }
  return os.str();
}

}  // namespace dice
