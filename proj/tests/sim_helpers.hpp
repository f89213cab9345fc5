#pragma once

// Shared setup for simulator tests: compile, build the image, run sim and oracle.

#include <string>

#include "dice/cpsim.hpp"
#include "dice/interp.hpp"
#include "dice/program.hpp"
#include "kernels.hpp"

namespace dice::fixtures {

struct SimCase {
  Program prog;
  LaunchConfig launch;
  MemoryImage image;
};

inline SimCase make_sim_case(const std::string& src, int cta, int grid, const CompileOptions& o = {}) {
  SimCase s{compile(parse_kernel(src), o), {cta, grid, {}}, {}};
  s.image = make_abc_image(std::max(64, cta * grid), s.launch);
  return s;
}

inline SimConfig variant_config(const Variant& v, SimConfig base = {}) {
  base.unroll = v.unroll;
  base.tmcu = v.tmcu;
  return base;
}

/// Memory-free kernel: one chain of `ops` dependent integer adds starting from the thread id,
/// its result declared observable at exit.
inline std::string alu_chain_source(int ops) {
  std::string s = ".kernel chain .params 0 .regs 4 .out r1\n  IADD r1, %tid.x, 1\n";
  for (int i = 1; i < ops; ++i) s += "  IADD r1, r1, " + std::to_string(i + 1) + "\n";
  return s + "  RET\n";
}

}  // namespace dice::fixtures
