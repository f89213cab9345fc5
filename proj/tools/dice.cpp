// dice: compile, map, simulate and compare DICE kernels from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "dice/config.hpp"
#include "dice/cpsim.hpp"
#include "dice/interp.hpp"
#include "dice/ir.hpp"
#include "dice/memory.hpp"
#include "dice/program.hpp"
#include "dice/stats.hpp"

using namespace dice;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path);
  f << text;
}

std::pair<int, int> parse_pair(const std::string& s, const char* what) {
  const size_t x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    size_t p1 = 0, p2 = 0;
    const int a = std::stoi(s.substr(0, x), &p1);
    const int b = std::stoi(s.substr(x + 1), &p2);
    if (p1 != x || p2 != s.size() - x - 1 || a <= 0 || b <= 0) throw std::invalid_argument(s);
    return {a, b};
  } catch (const std::exception&) {
    throw Error(std::string(what) + ": expected <int>x<int>, got '" + s + "'");
  }
}

/// Each token is an integer (decimal or 0x hex) or the name of an image region.
std::vector<uint32_t> resolve_params(const std::vector<std::string>& tokens, const MemoryImage& img) {
  std::vector<uint32_t> out;
  for (const auto& t : tokens) {
    if (img.regions.count(t)) {
      out.push_back(img.regions.at(t).offset);
      continue;
    }
    try {
      size_t pos = 0;
      const unsigned long v = std::stoul(t, &pos, 0);
      if (pos != t.size() || v > 0xFFFFFFFFul) throw std::invalid_argument(t);
      out.push_back(static_cast<uint32_t>(v));
    } catch (const std::exception&) {
      throw Error("param '" + t + "' is neither an integer nor a region of the image");
    }
  }
  return out;
}

std::string variant_name(const SimConfig& cfg) {
  for (const auto& v : kVariants)
    if (v.unroll == cfg.unroll && v.tmcu == cfg.tmcu) return v.name;
  return "custom";
}

std::string summary(const std::string& kernel, const SimConfig& cfg, const LaunchConfig& launch, const SimStats& s) {
  std::ostringstream o;
  const auto r = make_record(kernel, variant_name(cfg), launch, s);
  o << "kernel        " << kernel << " (" << r.variant << ", " << launch.cta_size << "x" << launch.grid_size << ")\n";
  o << "cycles        " << s.cycles << "\n";
  o << "cp cycles     active " << r.active << "  scoreboard " << r.scoreboard << "  ldst_credit " << r.ldst_credit
    << "  brt_full " << r.brt_full << "  idle " << r.idle << "\n";
  o << "dispatched    " << s.dispatched_threads << " threads in " << s.dispatch_groups << " groups, " << s.eblocks
    << " eblocks, " << s.discarded << " discarded\n";
  o << "rf accesses   " << s.rf.reads << " reads " << s.rf.writes << " writes; baseline " << s.baseline_rf.reads
    << " reads " << s.baseline_rf.writes << " writes; ratio ";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", r.rf_ratio());
  o << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.4f", s.pe_utilization);
  o << "pe util       " << buf << "\n";
  o << "memory        " << s.loads << " loads " << s.stores << " stores; " << s.transactions << " transactions, "
    << s.merges << " merges; l1 " << s.l1_hits << " hits " << s.l1_misses << " misses\n";
  return o.str();
}

struct SimArgs {
  std::string config;
  std::string mem;
  std::string launch;
  std::vector<std::string> params;
  std::string variant;
  std::string name;
  bool trace = false;
  bool mem_trace = false;
  std::string trace_out;
  std::string mem_trace_out;
  std::string csv;
  std::string out;
  bool check = false;
};

void add_sim_options(CLI::App* c, SimArgs& a) {
  c->add_option("--config", a.config, "simulator config file")->required()->check(CLI::ExistingFile);
  c->add_option("--mem", a.mem, "memory image")->required()->check(CLI::ExistingFile);
  c->add_option("--launch", a.launch, "BxG: B threads per CTA, G CTAs")->required();
  c->add_option("--params", a.params, "kernel parameters: integers or image region names")->delimiter(',');
  c->add_option("--variant", a.variant, "override feature flags")->check(CLI::IsMember({"naive", "unroll", "tmcu", "full"}));
  c->add_option("--name", a.name, "kernel name for the CSV row (default: the kernel's own)");
  c->add_flag("--trace", a.trace, "emit the per-event pipeline trace");
  c->add_flag("--mem-trace", a.mem_trace, "emit one line per memory transaction");
  c->add_option("--trace-out", a.trace_out, "trace file (default stdout)");
  c->add_option("--mem-trace-out", a.mem_trace_out, "memory trace file (default stdout)");
  c->add_option("--csv", a.csv, "append a stats row to this CSV file");
  c->add_option("--out", a.out, "write the final memory image here");
  c->add_flag("--check", a.check, "compare final memory with the scalar oracle");
}

int run_sim(const Program& prog, const SimArgs& a) {
  SimConfig cfg = load_config(a.config);
  for (const auto& v : kVariants)
    if (v.name == a.variant) {
      cfg.unroll = v.unroll;
      cfg.tmcu = v.tmcu;
    }
  const MemoryImage img = load_image(a.mem);
  const auto [cta, grid] = parse_pair(a.launch, "--launch");
  LaunchConfig launch{cta, grid, resolve_params(a.params, img)};
  SimOptions opts;
  opts.trace = a.trace;
  opts.mem_trace = a.mem_trace;
  const SimResult res = simulate(prog, cfg, launch, img.memory, opts);

  auto lines = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& l : v) s += l + "\n";
    return s;
  };
  if (a.trace) write_text(a.trace_out, lines(res.trace));
  if (a.mem_trace) write_text(a.mem_trace_out, lines(res.mem_trace));

  const std::string kernel = a.name.empty() ? prog.kernel.name : a.name;
  std::cout << summary(kernel, cfg, launch, res.stats);
  int rc = 0;
  for (const auto& v : check_conservation(res.stats)) {
    std::cerr << "error: stats conservation: " << v << "\n";
    rc = 1;
  }
  for (const auto& v : res.violations) {
    std::cerr << "error: invariant: " << v << "\n";
    rc = 1;
  }
  if (a.check) {
    const auto oracle = run_oracle(prog.original, launch, img.memory, static_cast<uint32_t>(cfg.shared_bytes));
    if (oracle.memory == res.memory) {
      std::cout << "check         final memory matches the oracle\n";
    } else {
      std::cerr << "error: final memory differs from the oracle\n";
      rc = 1;
    }
  }
  if (!a.csv.empty()) append_csv(a.csv, make_record(kernel, variant_name(cfg), launch, res.stats));
  if (!a.out.empty()) {
    MemoryImage out = img;
    out.memory = res.memory;
    save_image(out, a.out);
  }
  return rc;
}

CompileOptions compile_options(const std::string& grid, int ports, bool no_unroll, uint32_t seed) {
  CompileOptions o;
  const auto [r, c] = parse_pair(grid, "--grid");
  o.grid.rows = r;
  o.grid.cols = c;
  o.ldst_ports = ports;
  o.unroll = !no_unroll;
  o.seed = seed;
  return o;
}

std::vector<uint32_t> region_words(const std::string& kind, int count, uint32_t seed) {
  std::vector<uint32_t> w(static_cast<size_t>(count), 0);
  if (kind == "zero") return w;
  if (kind == "iota") {
    for (int i = 0; i < count; ++i) w[i] = static_cast<uint32_t>(i);
    return w;
  }
  if (kind == "random") {
    std::mt19937 rng(seed);
    for (auto& x : w) x = rng();
    return w;
  }
  try {
    size_t pos = 0;
    const unsigned long v = std::stoul(kind, &pos, 0);
    if (pos != kind.size()) throw std::invalid_argument(kind);
    std::fill(w.begin(), w.end(), static_cast<uint32_t>(v));
    return w;
  } catch (const std::exception&) {
    throw Error("region fill '" + kind + "' must be zero, iota, random or an integer");
  }
}

/// Grid text for every p-graph, remapped onto `g` when `remap` is set.
std::string mapping_text(const Program& p, const CgraGrid& g, bool remap, int& failures) {
  std::string text;
  for (int i = 0; i < p.size(); ++i) {
    const PGraph& pg = p.pgraph(i);
    text += "p-graph " + std::to_string(i) + "\n";
    try {
      const Mapping m = remap ? place_and_route(pg, g, 1) : p.maps[i];
      for (const auto& e : verify_schedule(m, pg)) {
        text += "  invalid: " + e + "\n";
        ++failures;
      }
      text += dump_mapping(m, pg);
    } catch (const MapError& e) {
      text += "  unmappable: " + std::string(e.what()) + "\n";
      ++failures;
    }
    text += "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DICE compiler and cycle-level simulator"};
  app.require_subcommand(1);

  // compile
  std::string c_in, c_out, c_grid = "4x5", c_dump, c_dump_mapping;
  int c_ports = 4;
  bool c_no_unroll = false;
  uint32_t c_seed = 1;
  auto* cc = app.add_subcommand("compile", "compile a kernel to a p-graph program");
  cc->add_option("kernel", c_in, "kernel IR file")->required()->check(CLI::ExistingFile);
  cc->add_option("-o,--output", c_out, "program file")->required();
  cc->add_option("--grid", c_grid, "CGRA grid RxC (last column holds the SFUs)");
  cc->add_option("--ldst-ports", c_ports, "LD/ST ports per CP");
  cc->add_flag("--no-unroll", c_no_unroll, "disable unroll factors and register renumbering");
  cc->add_option("--seed", c_seed, "placement seed");
  cc->add_option("--dump", c_dump, "also write the metadata records (JSON lines) here, '-' for stdout");
  cc->add_option("--dump-mapping", c_dump_mapping, "also write the grid of every p-graph here, '-' for stdout");

  // map
  std::string m_in, m_grid, m_out;
  auto* mc = app.add_subcommand("map", "print the placement and routing of every p-graph");
  mc->add_option("program", m_in, "program file")->required()->check(CLI::ExistingFile);
  mc->add_option("--grid", m_grid, "remap onto this RxC grid instead of the program's");
  mc->add_option("-o,--output", m_out, "write the mapping text here");

  // sim
  std::string s_prog;
  SimArgs s_args;
  auto* sc = app.add_subcommand("sim", "simulate a compiled program");
  sc->add_option("program", s_prog, "program file")->required()->check(CLI::ExistingFile);
  add_sim_options(sc, s_args);

  // run
  std::string r_kernel;
  SimArgs r_args;
  auto* rc = app.add_subcommand("run", "compile a kernel for the config's grid and simulate it");
  rc->add_option("kernel", r_kernel, "kernel IR file")->required()->check(CLI::ExistingFile);
  add_sim_options(rc, r_args);

  // compare
  std::string k_a, k_b, k_csv;
  auto* kc = app.add_subcommand("compare", "RF ratios, cycle ratios and stall breakdown of two stats CSVs");
  kc->add_option("a", k_a, "reference CSV")->required()->check(CLI::ExistingFile);
  kc->add_option("b", k_b, "CSV to compare")->required()->check(CLI::ExistingFile);
  kc->add_option("--csv", k_csv, "write the report as CSV here");

  // image
  std::string i_out;
  std::vector<std::string> i_regions;
  uint32_t i_seed = 1;
  auto* ic = app.add_subcommand("image", "create a memory image from named regions");
  ic->add_option("output", i_out, "image path (a .map sidecar is written next to it)")->required();
  ic->add_option("--region", i_regions, "name=fill:count, fill is zero, iota, random or an integer")->required();
  ic->add_option("--seed", i_seed, "seed for random fills");

  std::string d_img, d_region;
  auto* dc = app.add_subcommand("show", "print the words of an image region");
  dc->add_option("image", d_img, "memory image")->required()->check(CLI::ExistingFile);
  dc->add_option("--region", d_region, "region name (default: list regions)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*cc) {
      const Program p = compile(parse_kernel(read_file(c_in)), compile_options(c_grid, c_ports, c_no_unroll, c_seed));
      save_program(p, c_out);
      std::cout << p.kernel.name << ": " << p.size() << " p-graphs, " << p.pool.size() << " bitstream bytes, "
                << p.map_retries << " map retries\n";
      if (!c_dump.empty()) write_text(c_dump, dump_program(p));
      if (!c_dump_mapping.empty()) {
        int failures = 0;
        write_text(c_dump_mapping, mapping_text(p, p.options.grid, false, failures));
      }
      return 0;
    }
    if (*mc) {
      const Program p = load_program(m_in);
      CgraGrid g = p.options.grid;
      bool remap = false;
      if (!m_grid.empty()) {
        const auto [r, c] = parse_pair(m_grid, "--grid");
        remap = r != g.rows || c != g.cols;
        g.rows = r;
        g.cols = c;
        g.validate();
      }
      int failures = 0;
      write_text(m_out, mapping_text(p, g, remap, failures));
      return failures ? 1 : 0;
    }
    if (*sc) return run_sim(load_program(s_prog), s_args);
    if (*rc) {
      const SimConfig cfg = load_config(r_args.config);
      CompileOptions o;
      o.grid = cfg.grid();
      o.ldst_ports = cfg.ldst_ports;
      return run_sim(compile(parse_kernel(read_file(r_kernel)), o), r_args);
    }
    if (*kc) {
      const Report rep = compare_report(read_csv(k_a), read_csv(k_b));
      std::cout << rep.text;
      if (!k_csv.empty()) write_text(k_csv, rep.csv);
      return 0;
    }
    if (*ic) {
      MemoryImage img;
      for (const auto& spec : i_regions) {
        const size_t eq = spec.find('='), colon = spec.rfind(':');
        if (eq == std::string::npos || colon == std::string::npos || colon < eq)
          throw Error("--region expects name=fill:count, got '" + spec + "'");
        int count = 0;
        try {
          count = std::stoi(spec.substr(colon + 1));
        } catch (const std::exception&) {
          count = -1;
        }
        if (count <= 0) throw Error("--region count must be a positive integer in '" + spec + "'");
        img.add_region(spec.substr(0, eq), region_words(spec.substr(eq + 1, colon - eq - 1), count, i_seed));
      }
      save_image(img, i_out);
      return 0;
    }
    if (*dc) {
      const MemoryImage img = load_image(d_img);
      if (d_region.empty()) {
        for (const auto& [name, r] : img.regions) std::cout << name << " " << r.offset << " " << r.length << "\n";
        return 0;
      }
      const auto w = img.read_words(d_region);
      for (size_t i = 0; i < w.size(); ++i) std::cout << i << " " << w[i] << "\n";
      return 0;
    }
  } catch (const Trap& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
