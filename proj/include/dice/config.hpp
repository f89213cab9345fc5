#pragma once

// Simulator configuration: flat "key = value" text, "include <file>" lines,
// '#' comments, and DICE_<KEY> environment overrides applied last.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dice/mapper.hpp"
#include "dice/memsim.hpp"

namespace dice {

struct SimConfig {
  int clusters = 1;
  int cps_per_cluster = 4;
  int grid_rows = 4;
  int grid_cols = 5;
  int switch_tracks = 2;
  int sfu_latency = 4;
  int pes = 16;
  int sfus = 4;
  int ldst_ports = 4;
  int num_banks = 32;
  int max_unroll = 4;
  int max_threads_per_cp = 512;
  int ctas_per_cp = 1;
  int fifo_depth = 8;
  int brt_capacity = 4;
  int pgcache_entries = 64;
  int pgcache_hit_latency = 2;
  int pgcache_miss_latency = 50;
  int cm_fill_bytes_per_cycle = 16;
  int max_interval = 8;
  int l1_size = 96 * 1024;
  int l1_assoc = 4;
  int l1_line_bytes = 128;
  int l1_sector_bytes = 32;
  int l1_mshrs = 32;
  int l1_hit_latency = 30;
  int l1_miss_latency = 120;
  int l1_throughput = 1;
  int backing_channels = 8;
  int backing_bw = 1;
  int shared_latency = 24;
  int shared_bytes = 48 * 1024;
  int64_t max_cycles = 50'000'000;
  bool unroll = true;
  bool tmcu = true;

  /// Throws ConfigError on the first invalid value.
  void validate() const;
  CgraGrid grid() const;
  MemConfig mem() const;
  /// Canonical text form, one key per line in declaration order.
  std::string to_text() const;
  bool operator==(const SimConfig&) const = default;
};

/// Sets one key from its textual value. Throws ConfigError on unknown keys or bad values.
void set_config_key(SimConfig& cfg, const std::string& key, const std::string& value);

/// Parses config text. Relative includes resolve against `base_dir`.
SimConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".", SimConfig base = {});

/// Overrides from variables named DICE_<KEY> (upper case) found in `env`.
void apply_env_overrides(SimConfig& cfg, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> process_env();

/// File plus process environment overrides, then validation.
SimConfig load_config(const std::filesystem::path& path);

/// The four feature-flag variants: naive, +unroll, +tmcu, full.
struct Variant {
  std::string name;
  bool unroll;
  bool tmcu;
};
inline const Variant kVariants[] = {{"naive", false, false}, {"unroll", true, false}, {"tmcu", false, true}, {"full", true, true}};

}  // namespace dice
