#include "sufa/benchmark.hpp"

#include <algorithm>
#include <chrono>

#include "sufa/error.hpp"
#include "sufa/hmc.hpp"
#include "sufa/identifiability.hpp"

namespace sufa {

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config) {
  if (config.multipliers.empty()) throw ConfigError("benchmark needs at least one multiplier");
  if (config.iterations < 1 || config.repeats < 1) {
    throw ConfigError("benchmark iterations and repeats must be positive");
  }
  Rng rng(config.seed);
  const MatrixXd lambda = gen_shared_loading(config.scenario, config.d, config.q, rng);
  const Design design = sample_design(config.d, config.num_studies, config.q, rng);
  const std::vector<MatrixXd> phi =
      gen_study_loadings(Misspecification::kSlight, lambda, design.q_s, rng);

  std::vector<BenchmarkRow> rows;
  std::vector<std::vector<StudySummary>> summaries;
  std::vector<ModelDims> dims;
  for (int mult : config.multipliers) {
    if (mult < 1) throw ConfigError("sample-size multipliers must be positive");
    BenchmarkRow row;
    row.multiplier = mult;
    std::vector<std::int64_t> n = design.n_s;
    for (auto& v : n) v *= mult;
    Rng data_rng(config.seed + 1);
    const std::vector<MatrixXd> ys = simulate_msfa(lambda, phi, 0.5, n, data_rng);

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<StudySummary> studies;
    for (const auto& y : ys) {
      const MatrixXd yc = y.rowwise() - y.colwise().mean();
      studies.push_back(sufficient_stats(yc));
      row.pooled_n += studies.back().n;
    }
    row.stats_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    summaries.push_back(std::move(studies));
    dims.push_back(ModelDims{config.d, config.q, default_study_dims(config.q, config.num_studies), n});
    rows.push_back(row);
  }

  ChainConfig chain;
  chain.iterations = config.iterations;
  chain.burn_in = config.iterations - 1;
  chain.thin = 1;
  chain.seed = config.seed + 2;
  chain.store_dl = false;
  chain.tuning.max_step = config.max_step;
  // Multipliers are interleaved within each repeat so that slow drift in
  // machine load hits all of them alike; the minimum is reported.
  std::vector<std::vector<double>> times(rows.size());
  for (int r = 0; r < config.repeats; ++r) {
    for (std::size_t m = 0; m < rows.size(); ++m) {
      const McmcOutput out = run_chain(summaries[m], dims[m], default_hyperparameters(), chain);
      times[m].push_back(out.elapsed_seconds / config.iterations);
      rows[m].acceptance = out.acceptance_rate();
      rows[m].numeric_rejections = out.numeric_rejections;
    }
  }
  for (std::size_t m = 0; m < rows.size(); ++m) {
    std::sort(times[m].begin(), times[m].end());
    rows[m].per_iteration_seconds = times[m].front();
    rows[m].median_seconds = times[m][times[m].size() / 2];
  }
  return rows;
}

double relative_spread(const std::vector<BenchmarkRow>& rows) {
  if (rows.empty()) return 0.0;
  double lo = rows.front().per_iteration_seconds;
  double hi = lo;
  for (const auto& r : rows) {
    lo = std::min(lo, r.per_iteration_seconds);
    hi = std::max(hi, r.per_iteration_seconds);
  }
  return (hi - lo) / lo;
}

}  // namespace sufa
