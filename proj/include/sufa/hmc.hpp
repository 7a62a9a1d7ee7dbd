#pragma once

// HMC-within-Gibbs sampler. Each iteration makes one HMC move on
// Theta = (Lambda, log_delta, A_1..A_S) given the DL scales, then one Gibbs
// sweep of the DL scales given Lambda. The latent factors are integrated out,
// so the data enter only through the per-study W_s.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sufa/likelihood.hpp"
#include "sufa/priors.hpp"
#include "sufa/random.hpp"

namespace sufa {

struct HmcTuning {
  double max_step = 0.01;     // step ~ Unif(0, max_step)
  double poisson_mean = 5.0;  // leapfrog count ~ Poisson(mean) | [min, max]
  int min_leapfrog = 1;
  int max_leapfrog = 10;

  void validate() const;
};

struct TuningDraw {
  double step = 0.0;
  int leapfrog = 0;
};

/// Step size on (0, max_step); leapfrog count by rejection from the Poisson
/// until it lands in [min_leapfrog, max_leapfrog].
TuningDraw sample_tuning(const HmcTuning& tuning, Rng& rng);

/// Flat layout: Lambda column-major, then log_delta, then each A_s
/// column-major.
VectorXd flatten(const ParamSet& params);
VectorXd flatten(const GradientSet& grad);
/// Inverse of flatten, shaped like `like`.
ParamSet unflatten(const VectorXd& theta, const ParamSet& like);

/// -log_posterior + |p|^2 / 2 (identity mass matrix).
double hamiltonian(double log_posterior, const VectorXd& momentum);

/// Returns the log target at theta and writes its gradient into grad.
using LogDensityFn = std::function<double(const VectorXd& theta, VectorXd& grad)>;

struct LeapfrogState {
  VectorXd theta;
  VectorXd momentum;
  double log_density = 0.0;
  VectorXd grad;  // gradient of the log target at theta
};

/// n velocity-Verlet steps of size `step`. `start.grad` and
/// `start.log_density` must hold the values at start.theta.
LeapfrogState leapfrog(const LeapfrogState& start, double step, int n, const LogDensityFn& target);

/// Which exponent the Metropolis test uses.
enum class AcceptanceRule {
  kStandard,   // min(1, exp(H_old - H_new))
  kAsPrinted,  // min(1, exp(H_new - H_old)); kept for the stationarity comparison
};

struct HmcStepResult {
  bool accepted = false;
  bool numeric_failure = false;
  TuningDraw tuning;
  double log_accept_ratio = 0.0;
  double loglik = 0.0;  // untempered L at the returned state
};

/// One HMC move of `params` given the DL state. On rejection `params` is left
/// untouched.
HmcStepResult hmc_step(ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                       std::span<const StudySummary> studies, const HmcTuning& tuning, double beta,
                       AcceptanceRule rule, WorkerPool* pool, Rng& rng);
/// Same with the tuning already drawn.
HmcStepResult hmc_step(ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                       std::span<const StudySummary> studies, const TuningDraw& draw, double beta,
                       AcceptanceRule rule, WorkerPool* pool, Rng& rng);

enum class InitMode {
  kWarm,   // from the top eigenpairs of the pooled W
  kPrior,  // one exact prior draw
};

enum class TemperatureN {
  kPooled,     // beta = 1 / log(sum n_s)
  kMeanStudy,  // beta = 1 / log(mean n_s)
};

/// WBIC temperature for the given studies.
double wbic_temperature(std::span<const StudySummary> studies, TemperatureN mode);

struct ChainConfig {
  int iterations = 7500;
  int burn_in = 2500;
  int thin = 5;
  std::uint64_t seed = 0;
  double beta = 1.0;
  InitMode init = InitMode::kWarm;
  HmcTuning tuning;
  DlGibbsOptions dl_options;
  AcceptanceRule acceptance = AcceptanceRule::kStandard;
  bool store_dl = true;
  std::size_t workers = 1;

  void validate() const;
  /// Number of stored draws: floor((iterations - burn_in) / thin).
  int num_draws() const;
};

struct McmcOutput {
  std::vector<ParamSet> draws;
  std::vector<DlState> dl;               // empty unless store_dl
  std::vector<double> log_posterior;     // beta L + log prior at each draw
  std::vector<double> loglik;            // untempered L at each draw
  std::vector<std::uint8_t> accepted;    // one per iteration
  std::vector<TuningDraw> tuning;        // one per iteration
  int numeric_rejections = 0;
  double elapsed_seconds = 0.0;
  double beta = 1.0;

  double acceptance_rate() const;
};

struct ChainState {
  ParamSet params;
  DlState dl;
};

/// Starting values. Warm start: Lambda from the top-q eigenpairs of the
/// pooled W (singular vectors scaled by singular value / sqrt(n)), log_delta
/// from the floored residual variances, A_s entries N(0, 0.01), then one DL
/// sweep. Throws InputError naming any zero-variance columns.
ChainState initialize(const ModelDims& dims, std::span<const StudySummary> studies,
                      const PriorHyper& hyper, InitMode mode, const DlGibbsOptions& dl_options,
                      Rng& rng);

/// Runs one chain seeded from config.seed.
McmcOutput run_chain(std::span<const StudySummary> studies, const ModelDims& dims,
                     const PriorHyper& hyper, const ChainConfig& config);

/// Same, with an explicit engine and optional starting state.
McmcOutput run_chain(std::span<const StudySummary> studies, const ModelDims& dims,
                     const PriorHyper& hyper, const ChainConfig& config, Rng& rng,
                     std::optional<ChainState> start = std::nullopt);

}  // namespace sufa
