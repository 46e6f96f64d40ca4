#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace e2llm {

struct BenchConfig {
  int d_model = 16;
  int d_ff = 64;
  int chunk_size = 128;              // C, in tokens
  int repeats = 3;
  int query_block = 512;             // baseline attention row-block size
  std::int64_t baseline_max_positions = 1 << 20;
  int threads = 1;                   // worker pool for parallel chunk encoding
  std::uint64_t seed = 7;
};

struct TimingRecord {
  std::string mode;  // "baseline" | "e2llm"
  std::int64_t length = 0;
  std::int64_t chunk_size = 0;
  double ms_median = 0.0;
  double ms_p10 = 0.0;
  double ms_p90 = 0.0;
  std::int64_t mem_bytes = 0;
  bool measurable = true;
};

struct ScalingResult {
  std::vector<TimingRecord> records;
  double baseline_slope = 0.0;  // log(time) vs log(L) least squares
  double e2llm_slope = 0.0;
  double parallel_speedup = 1.0;  // serial / pooled chunk encoding, largest L
};

/// Time a full-attention causal forward vs the chunk-compression pipeline
/// (encode chunks, adapt, decode over L/C soft tokens) across lengths, and
/// fit log-log slopes per mode. Lengths beyond the baseline position budget
/// are recorded as unmeasurable and excluded from the baseline fit.
ScalingResult run_scaling(const BenchConfig& cfg, const std::vector<std::int64_t>& lengths);

void write_bench_csv(const ScalingResult& r, const std::string& path);
std::string bench_summary_json(const ScalingResult& r);

}  // namespace e2llm
