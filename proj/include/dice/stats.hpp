#pragma once

// Flat per-run statistics records, the versioned CSV form used by sweeps, and
// the comparison report built from two CSV files.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dice/cpsim.hpp"

namespace dice {

inline constexpr const char* kStatsVersionLine = "# dice-stats v1";

struct StatsRecord {
  std::string kernel;
  std::string variant;
  int cta_size = 0;
  int grid_size = 0;
  uint64_t cycles = 0;
  // Stall categories summed over CPs.
  uint64_t active = 0;
  uint64_t scoreboard = 0;
  uint64_t ldst_credit = 0;
  uint64_t brt_full = 0;
  uint64_t idle = 0;
  uint64_t dispatched_threads = 0;
  uint64_t dispatch_groups = 0;
  uint64_t eblocks = 0;
  uint64_t discarded = 0;
  uint64_t rf_reads = 0;
  uint64_t rf_writes = 0;
  uint64_t baseline_rf_reads = 0;
  uint64_t baseline_rf_writes = 0;
  double pe_utilization = 0;
  uint64_t loads = 0;
  uint64_t stores = 0;
  uint64_t transactions = 0;
  uint64_t merges = 0;
  uint64_t l1_hits = 0;
  uint64_t l1_misses = 0;
  uint64_t pgcache_hits = 0;
  uint64_t pgcache_misses = 0;
  std::vector<uint64_t> pgraph_execs;

  double rf_ratio() const;
  bool operator==(const StatsRecord&) const = default;
};

StatsRecord make_record(const std::string& kernel, const std::string& variant, const LaunchConfig& launch,
                        const SimStats& s);

/// Column header line, without the version line.
std::string csv_columns();
std::string csv_row(const StatsRecord& r);
StatsRecord parse_csv_row(const std::string& line);

/// Version line plus column line plus one row per record.
std::string to_csv(const std::vector<StatsRecord>& rows);
std::vector<StatsRecord> parse_csv(const std::string& text);
std::vector<StatsRecord> read_csv(const std::filesystem::path& path);

/// Appends a row, writing the header first when the file is new or empty.
/// Throws Error when an existing file carries a different header.
void append_csv(const std::filesystem::path& path, const StatsRecord& r);

/// Cycle partition per CP and request/writeback conservation. Empty when consistent.
std::vector<std::string> check_conservation(const SimStats& s);

struct Report {
  std::string text;
  std::string csv;
};

/// Rows of `b` are matched to rows of `a` by kernel and launch shape. Emits the
/// RF ratio of every row, cycle ratios a/b for matched pairs and the stall breakdown.
Report compare_report(const std::vector<StatsRecord>& a, const std::vector<StatsRecord>& b);

}  // namespace dice
