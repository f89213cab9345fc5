#include "dice/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

#include "dice/common.hpp"

extern char** environ;

namespace dice {

namespace {

using Field = std::variant<int SimConfig::*, int64_t SimConfig::*, bool SimConfig::*>;

struct Key {
  const char* name;
  Field field;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"clusters", &SimConfig::clusters},
      {"cps_per_cluster", &SimConfig::cps_per_cluster},
      {"grid_rows", &SimConfig::grid_rows},
      {"grid_cols", &SimConfig::grid_cols},
      {"switch_tracks", &SimConfig::switch_tracks},
      {"sfu_latency", &SimConfig::sfu_latency},
      {"pes", &SimConfig::pes},
      {"sfus", &SimConfig::sfus},
      {"ldst_ports", &SimConfig::ldst_ports},
      {"num_banks", &SimConfig::num_banks},
      {"max_unroll", &SimConfig::max_unroll},
      {"max_threads_per_cp", &SimConfig::max_threads_per_cp},
      {"ctas_per_cp", &SimConfig::ctas_per_cp},
      {"fifo_depth", &SimConfig::fifo_depth},
      {"brt_capacity", &SimConfig::brt_capacity},
      {"pgcache_entries", &SimConfig::pgcache_entries},
      {"pgcache_hit_latency", &SimConfig::pgcache_hit_latency},
      {"pgcache_miss_latency", &SimConfig::pgcache_miss_latency},
      {"cm_fill_bytes_per_cycle", &SimConfig::cm_fill_bytes_per_cycle},
      {"max_interval", &SimConfig::max_interval},
      {"l1_size", &SimConfig::l1_size},
      {"l1_assoc", &SimConfig::l1_assoc},
      {"l1_line_bytes", &SimConfig::l1_line_bytes},
      {"l1_sector_bytes", &SimConfig::l1_sector_bytes},
      {"l1_mshrs", &SimConfig::l1_mshrs},
      {"l1_hit_latency", &SimConfig::l1_hit_latency},
      {"l1_miss_latency", &SimConfig::l1_miss_latency},
      {"l1_throughput", &SimConfig::l1_throughput},
      {"backing_channels", &SimConfig::backing_channels},
      {"backing_bw", &SimConfig::backing_bw},
      {"shared_latency", &SimConfig::shared_latency},
      {"shared_bytes", &SimConfig::shared_bytes},
      {"max_cycles", &SimConfig::max_cycles},
      {"unroll", &SimConfig::unroll},
      {"tmcu", &SimConfig::tmcu},
  };
  return k;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  std::string l = v;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "1" || l == "true" || l == "on" || l == "yes") return true;
  if (l == "0" || l == "false" || l == "off" || l == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

void parse_into(SimConfig& cfg, const std::string& text, const std::filesystem::path& base_dir, int depth) {
  if (depth > 16) throw ConfigError("include nesting too deep");
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.rfind("include", 0) == 0 && line.size() > 7 && std::isspace(static_cast<unsigned char>(line[7]))) {
      std::filesystem::path p = trim(line.substr(7));
      if (p.is_relative()) p = base_dir / p;
      std::ifstream f(p);
      if (!f) throw ConfigError("cannot open included config " + p.string());
      std::stringstream ss;
      ss << f.rdbuf();
      parse_into(cfg, ss.str(), p.parent_path(), depth + 1);
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    try {
      set_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

void set_config_key(SimConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key != k.name) continue;
    std::visit(
        [&](auto field) {
          using M = std::remove_reference_t<decltype(cfg.*field)>;
          if constexpr (std::is_same_v<M, bool>)
            cfg.*field = parse_bool(key, value);
          else
            cfg.*field = parse_int<M>(key, value);
        },
        k.field);
    return;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

SimConfig parse_config(const std::string& text, const std::filesystem::path& base_dir, SimConfig base) {
  parse_into(base, text, base_dir, 0);
  return base;
}

void apply_env_overrides(SimConfig& cfg, const std::map<std::string, std::string>& env) {
  for (const auto& k : keys()) {
    std::string var = "DICE_";
    for (const char* c = k.name; *c; ++c) var += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
    auto it = env.find(var);
    if (it == env.end()) continue;
    try {
      set_config_key(cfg, k.name, trim(it->second));
    } catch (const ConfigError& e) {
      throw ConfigError(var + ": " + e.what());
    }
  }
}

std::map<std::string, std::string> process_env() {
  std::map<std::string, std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string s = *e;
    const size_t eq = s.find('=');
    if (eq != std::string::npos && s.rfind("DICE_", 0) == 0) env[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return env;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  SimConfig cfg = parse_config(ss.str(), path.parent_path());
  apply_env_overrides(cfg, process_env());
  cfg.validate();
  return cfg;
}

void SimConfig::validate() const {
  for (const auto& k : keys()) {
    if (const auto* f = std::get_if<int SimConfig::*>(&k.field); f && this->**f <= 0)
      throw ConfigError(std::string(k.name) + " must be positive");
  }
  if (max_cycles <= 0) throw ConfigError("max_cycles must be positive");
  CgraGrid g = grid();
  try {
    g.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  if (pes != g.pe_count())
    throw ConfigError("pes = " + std::to_string(pes) + " does not match the grid (" + std::to_string(g.pe_count()) + ")");
  if (sfus != g.sfu_count())
    throw ConfigError("sfus = " + std::to_string(sfus) + " does not match the grid (" + std::to_string(g.sfu_count()) + ")");
  if (ldst_ports > kMaxLdstPorts) throw ConfigError("ldst_ports must be at most " + std::to_string(kMaxLdstPorts));
  if (num_banks != kNumGpr) throw ConfigError("num_banks must be " + std::to_string(kNumGpr));
  if (max_unroll != 1 && max_unroll != 2 && max_unroll != 4) throw ConfigError("max_unroll must be 1, 2 or 4");
  if (max_threads_per_cp > 1024) throw ConfigError("max_threads_per_cp must be at most 1024");
  if (shared_bytes % 4) throw ConfigError("shared_bytes must be a multiple of 4");
  mem().validate();
}

CgraGrid SimConfig::grid() const {
  CgraGrid g;
  g.rows = grid_rows;
  g.cols = grid_cols;
  g.tracks = switch_tracks;
  g.sfu_latency = sfu_latency;
  return g;
}

MemConfig SimConfig::mem() const {
  MemConfig m;
  m.ports = ldst_ports;
  m.fifo_depth = fifo_depth;
  m.tmcu = tmcu;
  m.max_interval = max_interval;
  m.sector_bytes = l1_sector_bytes;
  m.line_bytes = l1_line_bytes;
  m.l1_bytes = l1_size;
  m.l1_assoc = l1_assoc;
  m.l1_mshrs = l1_mshrs;
  m.l1_hit_latency = l1_hit_latency;
  m.l1_miss_latency = l1_miss_latency;
  m.l1_throughput = l1_throughput;
  m.channels = backing_channels;
  m.channel_bw = backing_bw;
  m.shared_latency = shared_latency;
  return m;
}

std::string SimConfig::to_text() const {
  std::string s;
  for (const auto& k : keys()) {
    s += k.name;
    s += " = ";
    std::visit(
        [&](auto field) {
          if constexpr (std::is_same_v<std::remove_cvref_t<decltype(this->*field)>, bool>)
            s += this->*field ? "true" : "false";
          else
            s += std::to_string(this->*field);
        },
        k.field);
    s += '\n';
  }
  return s;
}

}  // namespace dice
