#pragma once

// Test kernel suite shared by unit, property and acceptance tests.

#include <string>
#include <vector>

#include "dice/interp.hpp"
#include "dice/ir.hpp"
#include "dice/memory.hpp"

namespace dice::fixtures {

struct KernelCase {
  std::string name;
  std::string source;
  bool shared_race_free = true;
};

inline const std::string kVecAdd = R"(
.kernel vecadd .params 3 .regs 8
  LD.PARAM r0, [0]
  LD.PARAM r1, [4]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  IADD r6, r1, r4
  LD.GLOBAL r5, [r5]
  LD.GLOBAL r6, [r6]
  IADD r7, r5, r6
  IADD r4, r2, r4
  ST.GLOBAL [r4], r7
  RET
)";

// if (tid < 4) x = a * 2 + 1; else x = a - 3;  c[g] = x
inline const std::string kDiamond = R"(
.kernel diamond .params 3 .regs 8
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  SETP.LT p0, %tid.x, 4
  BRA THEN @p0
ELSE:
  ISUB r6, r1, 3
  BRA JOIN
THEN:
  SHL r6, r1, 1
  IADD r6, r6, 1
JOIN:
  IADD r7, r2, r4
  ST.GLOBAL [r7], r6
  RET
)";

inline const std::string kNested = R"(
.kernel nested .params 3 .regs 10
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  MOV r6, 100
  SETP.LT p0, %tid.x, 32
  BRA OUTER_ELSE @!p0
  AND r7, %tid.x, 1
  SETP.EQ p1, r7, 0
  BRA INNER_ELSE @!p1
  IMUL r6, r1, 3
  ST.GLOBAL [r5], r6
  BRA INNER_JOIN
INNER_ELSE:
  IADD r6, r1, 7
INNER_JOIN:
  IADD r6, r6, %tid.x
  BRA JOIN
OUTER_ELSE:
  XOR r6, r1, 255
  SHR r6, r6, 1
JOIN:
  IADD r8, r2, r4
  ST.GLOBAL [r8], r6
  RET
)";

// acc = sum_{i < (tid % 4) + 1} a[g] + i
inline const std::string kLoop = R"(
.kernel loop .params 3 .regs 10
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  AND r6, %tid.x, 3
  IADD r6, r6, 1
  MOV r7, 0
  MOV r8, 0
LOOP:
  IADD r9, r1, r7
  IADD r8, r8, r9
  IADD r7, r7, 1
  SETP.LT p0, r7, r6
  BRA LOOP @p0
  IADD r9, r2, r4
  ST.GLOBAL [r9], r8
  RET
)";

// shared[tid] = a[g]; barrier; c[g] = shared[(tid + 1) % ntid] + tid
inline const std::string kBarrier = R"(
.kernel barrier .params 3 .regs 10
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  SHL r6, %tid.x, 2
  ST.SHARED [r6], r1
  BAR
  IADD r7, %tid.x, 1
  SETP.GE p0, r7, %ntid.x
  MOV r7, 0 @p0
  SHL r7, r7, 2
  LD.SHARED r8, [r7]
  IADD r8, r8, %tid.x
  IADD r9, r2, r4
  ST.GLOBAL [r9], r8
  RET
)";

// c[g] = b[a[g]] + b[a[g] ^ 1]
inline const std::string kLoadChain = R"(
.kernel loadchain .params 3 .regs 12
  LD.PARAM r0, [0]
  LD.PARAM r1, [4]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r6, [r5]
  AND r6, r6, 63
  SHL r7, r6, 2
  IADD r7, r1, r7
  LD.GLOBAL r8, [r7]
  XOR r9, r6, 1
  SHL r9, r9, 2
  IADD r9, r1, r9
  LD.GLOBAL r10, [r9]
  IADD r11, r8, r10
  IADD r5, r2, r4
  ST.GLOBAL [r5], r11
  RET
)";

inline const std::string kFloat = R"(
.kernel floatops .params 3 .regs 12
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  CVT.I2F r6, r1
  FMUL r7, r6, 0.5f
  FADD r7, r7, 1.25f
  SQRT r8, r7
  FMA r9, r8, r6, r7
  FDIV r10, r9, 3.0f
  EXP r11, 0.25f
  FMUL r10, r10, r11
  CVT.F2I r10, r10
  IADD r5, r2, r4
  ST.GLOBAL [r5], r10
  RET
)";

inline const std::string kGuarded = R"(
.kernel guarded .params 3 .regs 10
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  AND r6, %tid.x, 7
  SETP.GT p1, r6, 2
  IADD r1, r1, 1000 @p1
  SELP r7, r1, r6, p1
  IADD r8, r2, r4
  ST.GLOBAL [r8], r7
  ST.GLOBAL [r5], r6 @!p1
  RET
)";

// Threads with tid % 4 == 2 skip the body.
inline const std::string kMasked = R"(
.kernel masked .params 3 .regs 10
  LD.PARAM r0, [0]
  LD.PARAM r2, [8]
  IMAD r3, %ctaid.x, %ntid.x, %tid.x
  SHL r4, r3, 2
  AND r6, %tid.x, 3
  SETP.EQ p0, r6, 2
  BRA DONE @p0
  IADD r5, r0, r4
  LD.GLOBAL r1, [r5]
  IMUL r7, r1, 5
  IADD r8, r2, r4
  ST.GLOBAL [r8], r7
DONE:
  RET
)";

inline std::string long_chain_source(int ops) {
  std::string s = ".kernel longchain .params 3 .regs 8\n"
                  "  LD.PARAM r2, [8]\n"
                  "  IMAD r3, %ctaid.x, %ntid.x, %tid.x\n"
                  "  SHL r4, r3, 2\n"
                  "  MOV r0, r3\n"
                  "  IADD r1, r3, 17\n";
  for (int i = 0; i < ops; ++i) {
    switch (i % 4) {
      case 0: s += "  IADD r0, r0, r1\n"; break;
      case 1: s += "  XOR r1, r1, r0\n"; break;
      case 2: s += "  IMUL r0, r0, 3\n"; break;
      default: s += "  SHR r1, r1, 1\n"; break;
    }
  }
  s += "  IADD r5, r2, r4\n"
       "  ST.GLOBAL [r5], r0\n"
       "  RET\n";
  return s;
}

inline std::vector<KernelCase> functional_suite() {
  return {
      {"vecadd", kVecAdd},     {"diamond", kDiamond},   {"nested", kNested},
      {"loop", kLoop},         {"barrier", kBarrier},   {"loadchain", kLoadChain},
      {"floatops", kFloat},    {"guarded", kGuarded},   {"masked", kMasked},
      {"longchain", long_chain_source(40)},
  };
}

/// Three-buffer image: a[i] = f(i), b[i] = g(i), c zeroed. Params are the three base addresses.
inline MemoryImage make_abc_image(int elements, LaunchConfig& launch) {
  MemoryImage img;
  std::vector<uint32_t> a(elements), b(elements), c(elements, 0);
  for (int i = 0; i < elements; ++i) {
    a[i] = static_cast<uint32_t>(i * 7 + 3);
    b[i] = static_cast<uint32_t>(1000 + i * i);
  }
  uint32_t pa = img.add_region("a", a);
  uint32_t pb = img.add_region("b", b);
  uint32_t pc = img.add_region("c", c);
  launch.params = {pa, pb, pc};
  return img;
}

}  // namespace dice::fixtures
