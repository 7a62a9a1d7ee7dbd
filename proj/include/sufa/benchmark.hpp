#pragma once

// Timing harness: per-iteration sampler cost as the sample size grows with
// the feature count held fixed. W_s is formed before the clock starts, so
// only the sampler is timed.

#include <cstdint>
#include <vector>

#include "sufa/datagen.hpp"

namespace sufa {

struct BenchmarkConfig {
  int d = 50;
  int num_studies = 5;
  int q = 10;
  Scenario scenario = Scenario::kFm1;
  std::vector<int> multipliers{1, 10, 25};
  int iterations = 200;
  int repeats = 5;
  // Step ceiling. Kept below the sampler default so trajectories rarely abort
  // early, which would otherwise make the timing depend on the data.
  double max_step = 1e-5;
  std::uint64_t seed = 1;
};

struct BenchmarkRow {
  int multiplier = 1;
  std::int64_t pooled_n = 0;
  double stats_seconds = 0.0;          // forming W_s, not part of the sampler
  double per_iteration_seconds = 0.0;  // minimum over repeats
  double median_seconds = 0.0;         // median over repeats
  double acceptance = 0.0;
  int numeric_rejections = 0;
};

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config);

/// (max - min) / min of the per-iteration times.
double relative_spread(const std::vector<BenchmarkRow>& rows);

}  // namespace sufa
