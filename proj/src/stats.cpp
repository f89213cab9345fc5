#include "dice/stats.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "dice/common.hpp"

namespace dice {

namespace {

const char* const kColumns[] = {
    "kernel",      "variant",        "cta_size",        "grid_size",          "cycles",           "active",
    "scoreboard",  "ldst_credit",    "brt_full",        "idle",               "dispatched",       "dispatch_groups",
    "eblocks",     "discarded",      "rf_reads",        "rf_writes",          "baseline_rf_reads", "baseline_rf_writes",
    "pe_util",     "loads",          "stores",          "transactions",       "merges",           "l1_hits",
    "l1_misses",   "pgcache_hits",   "pgcache_misses",  "pgraph_execs",
};
constexpr size_t kNumColumns = std::size(kColumns);

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

uint64_t to_u64(const std::string& col, const std::string& v) {
  try {
    size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size() || v.empty() || v[0] == '-') throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error("csv column " + col + ": bad integer '" + v + "'");
  }
}

double to_double(const std::string& col, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error("csv column " + col + ": bad number '" + v + "'");
  }
}

void check_name(const std::string& what, const std::string& s) {
  if (s.empty() || s.find_first_of(",\n\r\"") != std::string::npos)
    throw Error(what + " '" + s + "' must be non-empty and free of commas, quotes and newlines");
}

std::string launch_text(const StatsRecord& r) { return std::to_string(r.cta_size) + "x" + std::to_string(r.grid_size); }

double ratio(double a, double b) { return b > 0 ? a / b : 0; }

}  // namespace

double StatsRecord::rf_ratio() const {
  return ratio(static_cast<double>(rf_reads + rf_writes), static_cast<double>(baseline_rf_reads + baseline_rf_writes));
}

StatsRecord make_record(const std::string& kernel, const std::string& variant, const LaunchConfig& launch,
                        const SimStats& s) {
  check_name("kernel name", kernel);
  check_name("variant name", variant);
  StatsRecord r;
  r.kernel = kernel;
  r.variant = variant;
  r.cta_size = launch.cta_size;
  r.grid_size = launch.grid_size;
  r.cycles = s.cycles;
  for (const auto& c : s.cp) {
    r.active += c.active;
    r.scoreboard += c.scoreboard;
    r.ldst_credit += c.ldst_credit;
    r.brt_full += c.brt_full;
    r.idle += c.idle;
  }
  r.dispatched_threads = s.dispatched_threads;
  r.dispatch_groups = s.dispatch_groups;
  r.eblocks = s.eblocks;
  r.discarded = s.discarded;
  r.rf_reads = s.rf.reads;
  r.rf_writes = s.rf.writes;
  r.baseline_rf_reads = s.baseline_rf.reads;
  r.baseline_rf_writes = s.baseline_rf.writes;
  // Rounded so that a CSV round trip is exact.
  r.pe_utilization = std::stod(fixed(s.pe_utilization));
  r.loads = s.loads;
  r.stores = s.stores;
  r.transactions = s.transactions;
  r.merges = s.merges;
  r.l1_hits = s.l1_hits;
  r.l1_misses = s.l1_misses;
  r.pgcache_hits = s.pgcache_hits;
  r.pgcache_misses = s.pgcache_misses;
  r.pgraph_execs = s.pgraph_execs;
  return r;
}

std::string csv_columns() {
  std::string s;
  for (size_t i = 0; i < kNumColumns; ++i) {
    if (i) s += ',';
    s += kColumns[i];
  }
  return s;
}

std::string csv_row(const StatsRecord& r) {
  std::string execs;
  for (size_t i = 0; i < r.pgraph_execs.size(); ++i) {
    if (i) execs += ';';
    execs += std::to_string(r.pgraph_execs[i]);
  }
  const std::vector<std::string> f = {
      r.kernel,
      r.variant,
      std::to_string(r.cta_size),
      std::to_string(r.grid_size),
      std::to_string(r.cycles),
      std::to_string(r.active),
      std::to_string(r.scoreboard),
      std::to_string(r.ldst_credit),
      std::to_string(r.brt_full),
      std::to_string(r.idle),
      std::to_string(r.dispatched_threads),
      std::to_string(r.dispatch_groups),
      std::to_string(r.eblocks),
      std::to_string(r.discarded),
      std::to_string(r.rf_reads),
      std::to_string(r.rf_writes),
      std::to_string(r.baseline_rf_reads),
      std::to_string(r.baseline_rf_writes),
      fixed(r.pe_utilization),
      std::to_string(r.loads),
      std::to_string(r.stores),
      std::to_string(r.transactions),
      std::to_string(r.merges),
      std::to_string(r.l1_hits),
      std::to_string(r.l1_misses),
      std::to_string(r.pgcache_hits),
      std::to_string(r.pgcache_misses),
      execs,
  };
  std::string s;
  for (size_t i = 0; i < f.size(); ++i) {
    if (i) s += ',';
    s += f[i];
  }
  return s;
}

StatsRecord parse_csv_row(const std::string& line) {
  const auto f = split(line, ',');
  if (f.size() != kNumColumns)
    throw Error("csv row has " + std::to_string(f.size()) + " fields, expected " + std::to_string(kNumColumns));
  StatsRecord r;
  size_t i = 0;
  auto u = [&]() {
    const uint64_t x = to_u64(kColumns[i], f[i]);
    ++i;
    return x;
  };
  r.kernel = f[i++];
  r.variant = f[i++];
  check_name("kernel name", r.kernel);
  check_name("variant name", r.variant);
  r.cta_size = static_cast<int>(u());
  r.grid_size = static_cast<int>(u());
  r.cycles = u();
  r.active = u();
  r.scoreboard = u();
  r.ldst_credit = u();
  r.brt_full = u();
  r.idle = u();
  r.dispatched_threads = u();
  r.dispatch_groups = u();
  r.eblocks = u();
  r.discarded = u();
  r.rf_reads = u();
  r.rf_writes = u();
  r.baseline_rf_reads = u();
  r.baseline_rf_writes = u();
  r.pe_utilization = to_double(kColumns[i], f[i]);
  ++i;
  r.loads = u();
  r.stores = u();
  r.transactions = u();
  r.merges = u();
  r.l1_hits = u();
  r.l1_misses = u();
  r.pgcache_hits = u();
  r.pgcache_misses = u();
  if (!f[i].empty())
    for (const auto& e : split(f[i], ';')) r.pgraph_execs.push_back(to_u64(kColumns[i], e));
  return r;
}

std::string to_csv(const std::vector<StatsRecord>& rows) {
  std::string s = std::string(kStatsVersionLine) + "\n" + csv_columns() + "\n";
  for (const auto& r : rows) s += csv_row(r) + "\n";
  return s;
}

std::vector<StatsRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kStatsVersionLine)
    throw Error("not a stats CSV: expected first line '" + std::string(kStatsVersionLine) + "'");
  if (!std::getline(in, line) || line != csv_columns()) throw Error("stats CSV column header mismatch");
  std::vector<StatsRecord> rows;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(parse_csv_row(line));
    } catch (const Error& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<StatsRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void append_csv(const std::filesystem::path& path, const StatsRecord& r) {
  bool fresh = true;
  {
    std::ifstream in(path);
    std::string version, columns;
    if (in && std::getline(in, version)) {
      fresh = false;
      std::getline(in, columns);
      if (version != kStatsVersionLine || columns != csv_columns())
        throw Error(path.string() + ": existing file has a different stats header");
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot write " + path.string());
  if (fresh) out << kStatsVersionLine << '\n' << csv_columns() << '\n';
  out << csv_row(r) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<std::string> check_conservation(const SimStats& s) {
  std::vector<std::string> v;
  for (size_t i = 0; i < s.cp.size(); ++i)
    if (s.cp[i].total() != s.cycles)
      v.push_back("cp" + std::to_string(i) + ": stall categories sum to " + std::to_string(s.cp[i].total()) +
                  ", cycles = " + std::to_string(s.cycles));
  if (s.loads != s.load_writebacks)
    v.push_back("loads " + std::to_string(s.loads) + " != load writebacks " + std::to_string(s.load_writebacks));
  if (s.stores != s.store_acks)
    v.push_back("stores " + std::to_string(s.stores) + " != store acks " + std::to_string(s.store_acks));
  uint64_t execs = 0;
  for (auto e : s.pgraph_execs) execs += e;
  if (execs != s.eblocks)
    v.push_back("p-graph executions " + std::to_string(execs) + " != eblocks " + std::to_string(s.eblocks));
  return v;
}

Report compare_report(const std::vector<StatsRecord>& a, const std::vector<StatsRecord>& b) {
  Report rep;
  std::ostringstream t;
  rep.csv =
      "kind,kernel,launch,variant,ref_variant,cycles,ref_cycles,cycle_ratio,rf_ratio,active,scoreboard,ldst_credit,"
      "brt_full,idle\n";
  char line[256];

  t << "RF accesses (DICE / baseline)\n";
  std::snprintf(line, sizeof line, "  %-16s %-10s %-8s %10s %10s %8s\n", "kernel", "launch", "variant", "dice",
                "baseline", "ratio");
  t << line;
  auto run_rows = [&](const std::vector<StatsRecord>& rows, const char* src) {
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "  %-16s %-10s %-8s %10llu %10llu %8s\n", r.kernel.c_str(),
                    launch_text(r).c_str(), r.variant.c_str(),
                    static_cast<unsigned long long>(r.rf_reads + r.rf_writes),
                    static_cast<unsigned long long>(r.baseline_rf_reads + r.baseline_rf_writes),
                    fixed(r.rf_ratio(), 4).c_str());
      t << line;
      rep.csv += std::string(src) + "," + r.kernel + "," + launch_text(r) + "," + r.variant + ",," +
                 std::to_string(r.cycles) + ",,," + fixed(r.rf_ratio()) + "," + std::to_string(r.active) + "," +
                 std::to_string(r.scoreboard) + "," + std::to_string(r.ldst_credit) + "," +
                 std::to_string(r.brt_full) + "," + std::to_string(r.idle) + "\n";
    }
  };
  run_rows(a, "run_a");
  run_rows(b, "run_b");

  t << "\nCycle ratios (ref cycles / cycles, >1 means faster than ref)\n";
  std::snprintf(line, sizeof line, "  %-16s %-10s %-8s %-8s %10s %10s %8s\n", "kernel", "launch", "variant", "ref",
                "cycles", "ref", "ratio");
  t << line;
  int pairs = 0;
  for (const auto& rb : b) {
    for (const auto& ra : a) {
      if (ra.kernel != rb.kernel || ra.cta_size != rb.cta_size || ra.grid_size != rb.grid_size) continue;
      if (ra == rb) continue;
      const double cr = ratio(static_cast<double>(ra.cycles), static_cast<double>(rb.cycles));
      std::snprintf(line, sizeof line, "  %-16s %-10s %-8s %-8s %10llu %10llu %8s\n", rb.kernel.c_str(),
                    launch_text(rb).c_str(), rb.variant.c_str(), ra.variant.c_str(),
                    static_cast<unsigned long long>(rb.cycles), static_cast<unsigned long long>(ra.cycles),
                    fixed(cr, 4).c_str());
      t << line;
      rep.csv += "pair," + rb.kernel + "," + launch_text(rb) + "," + rb.variant + "," + ra.variant + "," +
                 std::to_string(rb.cycles) + "," + std::to_string(ra.cycles) + "," + fixed(cr) + ",,,,,,\n";
      ++pairs;
    }
  }
  if (!pairs) t << "  (no rows with matching kernel and launch)\n";

  t << "\nStall breakdown (% of CP cycles)\n";
  std::snprintf(line, sizeof line, "  %-16s %-8s %8s %8s %8s %8s %8s\n", "kernel", "variant", "active", "sboard",
                "credit", "brt", "idle");
  t << line;
  auto stall_rows = [&](const std::vector<StatsRecord>& rows) {
    for (const auto& r : rows) {
      const double tot = static_cast<double>(r.active + r.scoreboard + r.ldst_credit + r.brt_full + r.idle);
      auto pct = [&](uint64_t x) { return fixed(100.0 * ratio(static_cast<double>(x), tot), 1); };
      std::snprintf(line, sizeof line, "  %-16s %-8s %8s %8s %8s %8s %8s\n", r.kernel.c_str(), r.variant.c_str(),
                    pct(r.active).c_str(), pct(r.scoreboard).c_str(), pct(r.ldst_credit).c_str(),
                    pct(r.brt_full).c_str(), pct(r.idle).c_str());
      t << line;
    }
  };
  stall_rows(a);
  stall_rows(b);
  rep.text = t.str();
  return rep;
}

}  // namespace dice
