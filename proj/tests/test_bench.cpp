#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "e2llm/bench.hpp"
#include "e2llm/cost.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace e2llm;

TEST_CASE("attention_cost worked values and domain") {
  CHECK(attention_cost(1000, 100) == doctest::Approx(100100.0));
  CHECK(attention_cost(1000, 1) == doctest::Approx(1000.0 + 1000.0 * 1000.0));
  CHECK(attention_cost(1000, 1000) == doctest::Approx(1000.0 * 1000.0 + 1.0));
  CHECK(attention_cost(1, 1) == doctest::Approx(2.0));

  CHECK_THROWS_AS(attention_cost(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(attention_cost(10, 0), std::invalid_argument);
  CHECK_THROWS_AS(attention_cost(10, 11), std::invalid_argument);
}

TEST_CASE("attention_cost is convex in the chunk size") {
  for (std::int64_t L : {100, 1000, 4096, 100000}) {
    // discrete second difference stays non-negative across the full range
    for (std::int64_t c = 2; c < std::min<std::int64_t>(L, 300); ++c) {
      const double dd = attention_cost(L, c - 1) - 2.0 * attention_cost(L, c) +
                        attention_cost(L, c + 1);
      CHECK(dd >= -1e-6);
    }
  }
}

TEST_CASE("optimal_chunk_size agrees with exhaustive search") {
  CHECK(optimal_chunk_size(1024) == 13);
  CHECK(optimal_chunk_size(1) == 1);
  CHECK(optimal_chunk_size(2) == 2);  // 2*2 + 1 beats 2*1 + 4

  for (std::int64_t L : {1, 2, 3, 5, 10, 37, 100, 999, 1000, 1024, 4096, 50000, 100000}) {
    std::int64_t best = 1;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::int64_t c = 1; c <= L; ++c) {
      const double cc = attention_cost(L, c);
      if (cc < best_cost) {  // strict: ties keep the smaller size
        best_cost = cc;
        best = c;
      }
    }
    CHECK(optimal_chunk_size(L) == best);
  }

  CHECK_THROWS_AS(optimal_chunk_size(0), std::invalid_argument);
}

TEST_CASE("run_scaling structure, fits, and input validation") {
  BenchConfig cfg;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.chunk_size = 16;
  cfg.repeats = 3;
  cfg.query_block = 64;
  const std::vector<std::int64_t> lengths = {64, 128, 256, 512};

  auto r = run_scaling(cfg, lengths);
  REQUIRE(r.records.size() == 2 * lengths.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const auto& base = r.records[2 * i];
    const auto& e2 = r.records[2 * i + 1];
    CHECK(base.mode == "baseline");
    CHECK(e2.mode == "e2llm");
    CHECK(base.length == lengths[i]);
    CHECK(e2.length == lengths[i]);
    for (const auto* rec : {&base, &e2}) {
      CHECK(rec->measurable);
      CHECK(rec->ms_median > 0.0);
      CHECK(rec->ms_p10 <= rec->ms_median);
      CHECK(rec->ms_median <= rec->ms_p90);
      CHECK(rec->mem_bytes > 0);
    }
    // full attention touches quadratically more score memory
    CHECK(base.mem_bytes > e2.mem_bytes);
  }
  CHECK(std::isfinite(r.baseline_slope));
  CHECK(std::isfinite(r.e2llm_slope));
  CHECK(r.parallel_speedup > 0.0);

  CHECK_THROWS_AS(run_scaling(cfg, {64, 128, 256}), std::invalid_argument);
  CHECK_THROWS_AS(run_scaling(cfg, {64, 128, 128, 256}), std::invalid_argument);
  BenchConfig few = cfg;
  few.repeats = 2;
  CHECK_THROWS_AS(run_scaling(few, lengths), std::invalid_argument);
}

TEST_CASE("lengths beyond the baseline budget are recorded as unmeasurable") {
  BenchConfig cfg;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.chunk_size = 16;
  cfg.repeats = 3;
  cfg.query_block = 64;
  cfg.baseline_max_positions = 256;

  auto r = run_scaling(cfg, {64, 128, 256, 512});
  const auto& skipped = r.records[6];  // baseline at L=512
  CHECK(skipped.mode == "baseline");
  CHECK_FALSE(skipped.measurable);
  CHECK(skipped.ms_median == 0.0);
  CHECK(r.records[7].measurable);  // e2llm still runs at that length

  // csv drops the unmeasurable row; summary carries both slopes
  const std::string path =
      (std::filesystem::temp_directory_path() / "e2llm_bench.csv").string();
  write_bench_csv(r, path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "mode,L,C,ms_median,ms_p10,ms_p90,mem_bytes");
  int rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 7);
  std::filesystem::remove(path);

  const std::string js = bench_summary_json(r);
  CHECK(js.find("baseline_slope") != std::string::npos);
  CHECK(js.find("e2llm_slope") != std::string::npos);
  CHECK(js.find("parallel_speedup") != std::string::npos);
}
