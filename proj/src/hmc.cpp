#include "sufa/hmc.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "sufa/error.hpp"

namespace sufa {

void HmcTuning::validate() const {
  if (!(max_step > 0.0) || !std::isfinite(max_step)) throw ConfigError("max step size must be positive");
  if (!(poisson_mean > 0.0)) throw ConfigError("leapfrog Poisson mean must be positive");
  if (min_leapfrog < 1 || max_leapfrog < min_leapfrog) {
    throw ConfigError("leapfrog truncation interval must satisfy 1 <= min <= max");
  }
}

TuningDraw sample_tuning(const HmcTuning& tuning, Rng& rng) {
  TuningDraw t;
  t.step = tuning.max_step * open_uniform(rng);
  std::poisson_distribution<int> pois(tuning.poisson_mean);
  do {
    t.leapfrog = pois(rng);
  } while (t.leapfrog < tuning.min_leapfrog || t.leapfrog > tuning.max_leapfrog);
  return t;
}

VectorXd flatten(const ParamSet& params) {
  Eigen::Index size = params.lambda.size() + params.log_delta.size();
  for (const auto& a : params.a) size += a.size();
  VectorXd out(size);
  Eigen::Index pos = 0;
  auto put = [&](const MatrixXd& m) {
    out.segment(pos, m.size()) = m.reshaped();
    pos += m.size();
  };
  put(params.lambda);
  put(params.log_delta);
  for (const auto& a : params.a) put(a);
  return out;
}

VectorXd flatten(const GradientSet& grad) {
  ParamSet tmp;
  tmp.lambda = grad.lambda;
  tmp.log_delta = grad.log_delta;
  tmp.a = grad.a;
  return flatten(tmp);
}

ParamSet unflatten(const VectorXd& theta, const ParamSet& like) {
  Eigen::Index size = like.lambda.size() + like.log_delta.size();
  for (const auto& a : like.a) size += a.size();
  if (theta.size() != size) throw DimensionError("flat parameter vector has the wrong length");
  ParamSet out;
  Eigen::Index pos = 0;
  auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m = theta.segment(pos, rows * cols).reshaped(rows, cols);
    pos += rows * cols;
    return m;
  };
  out.lambda = take(like.lambda.rows(), like.lambda.cols());
  out.log_delta = take(like.log_delta.size(), 1);
  for (const auto& a : like.a) out.a.push_back(take(a.rows(), a.cols()));
  return out;
}

double hamiltonian(double log_posterior, const VectorXd& momentum) {
  if (!std::isfinite(log_posterior)) throw NumericError("non-finite log posterior in Hamiltonian");
  return -log_posterior + 0.5 * momentum.squaredNorm();
}

LeapfrogState leapfrog(const LeapfrogState& start, double step, int n, const LogDensityFn& target) {
  if (!(step > 0.0)) throw DomainError("leapfrog step size must be positive");
  if (n < 1) throw DomainError("leapfrog needs at least one step");
  LeapfrogState s = start;
  for (int i = 0; i < n; ++i) {
    s.momentum += 0.5 * step * s.grad;
    s.theta += step * s.momentum;
    s.log_density = target(s.theta, s.grad);
    s.momentum += 0.5 * step * s.grad;
  }
  return s;
}

HmcStepResult hmc_step(ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                       std::span<const StudySummary> studies, const HmcTuning& tuning, double beta,
                       AcceptanceRule rule, WorkerPool* pool, Rng& rng) {
  const TuningDraw draw = sample_tuning(tuning, rng);
  return hmc_step(params, dl, hyper, studies, draw, beta, rule, pool, rng);
}

HmcStepResult hmc_step(ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                       std::span<const StudySummary> studies, const TuningDraw& draw, double beta,
                       AcceptanceRule rule, WorkerPool* pool, Rng& rng) {
  HmcStepResult result;
  result.tuning = draw;

  double last_loglik = 0.0;
  const LogDensityFn target = [&](const VectorXd& theta, VectorXd& grad) {
    const ParamSet p = unflatten(theta, params);
    const PosteriorEval ev = parallel_grad_reduce(p, dl, hyper, studies, pool, beta);
    grad = flatten(ev.grad);
    last_loglik = ev.loglik;
    return ev.log_posterior();
  };

  LeapfrogState start;
  start.theta = flatten(params);
  start.log_density = target(start.theta, start.grad);
  const double loglik_old = last_loglik;
  result.loglik = loglik_old;
  start.momentum = standard_normal_matrix(start.theta.size(), 1, rng);
  // Drawn before the trajectory so the stream does not depend on its outcome.
  const double u = open_uniform(rng);

  LeapfrogState end;
  try {
    end = leapfrog(start, result.tuning.step, result.tuning.leapfrog, target);
    if (!std::isfinite(end.log_density) || !end.theta.allFinite() || !end.momentum.allFinite()) {
      throw NumericError("non-finite trajectory end point");
    }
  } catch (const NumericError&) {
    result.numeric_failure = true;
    return result;
  } catch (const DomainError&) {
    result.numeric_failure = true;
    return result;
  }

  const double h_old = hamiltonian(start.log_density, start.momentum);
  const double h_new = hamiltonian(end.log_density, end.momentum);
  result.log_accept_ratio = rule == AcceptanceRule::kStandard ? h_old - h_new : h_new - h_old;
  if (std::log(u) < result.log_accept_ratio) {
    params = unflatten(end.theta, params);
    result.accepted = true;
    result.loglik = last_loglik;
  }
  return result;
}

double wbic_temperature(std::span<const StudySummary> studies, TemperatureN mode) {
  if (studies.empty()) throw ConfigError("WBIC temperature needs at least one study");
  double total = 0.0;
  for (const auto& s : studies) total += static_cast<double>(s.n);
  const double n = mode == TemperatureN::kPooled ? total : total / static_cast<double>(studies.size());
  if (!(n > std::exp(1.0))) {
    throw ConfigError("WBIC temperature 1/log(n) needs n > e so that beta lies in (0, 1)");
  }
  return 1.0 / std::log(n);
}

void ChainConfig::validate() const {
  if (burn_in < 0) throw ConfigError("burn-in must be non-negative");
  if (iterations <= burn_in) throw ConfigError("iteration count must exceed burn-in");
  if (thin < 1) throw ConfigError("thinning must be at least 1");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("temperature beta must lie in (0, 1]");
  tuning.validate();
}

int ChainConfig::num_draws() const { return (iterations - burn_in) / thin; }

double McmcOutput::acceptance_rate() const {
  if (accepted.empty()) return 0.0;
  const double n = std::accumulate(accepted.begin(), accepted.end(), 0.0);
  return n / static_cast<double>(accepted.size());
}

namespace {

void check_studies(const ModelDims& dims, std::span<const StudySummary> studies) {
  if (static_cast<int>(studies.size()) != dims.num_studies()) {
    throw ConfigError("model has " + std::to_string(dims.num_studies()) + " studies but " +
                      std::to_string(studies.size()) + " summaries were supplied");
  }
  for (std::size_t s = 0; s < studies.size(); ++s) {
    const auto& w = studies[s].w;
    if (w.rows() != dims.d || w.cols() != dims.d) {
      throw InputError("W of study " + std::to_string(s) + " is not " + std::to_string(dims.d) +
                       " x " + std::to_string(dims.d));
    }
    if (!w.allFinite()) throw InputError("W of study " + std::to_string(s) + " is not finite");
    if (studies[s].n < 0) throw InputError("negative sample count in study " + std::to_string(s));
  }
}

}  // namespace

ChainState initialize(const ModelDims& dims, std::span<const StudySummary> studies,
                      const PriorHyper& hyper, InitMode mode, const DlGibbsOptions& dl_options,
                      Rng& rng) {
  dims.validate();
  hyper.validate();
  check_studies(dims, studies);

  if (mode == InitMode::kPrior) {
    PriorDraw draw = draw_from_prior(dims, hyper, rng);
    return {std::move(draw.params), std::move(draw.dl)};
  }

  MatrixXd w = MatrixXd::Zero(dims.d, dims.d);
  double n = 0.0;
  for (const auto& s : studies) {
    w += s.w;
    n += static_cast<double>(s.n);
  }
  if (!(n > 0.0)) throw InputError("warm start needs at least one observation; use prior init");
  const MatrixXd cov = w / n;
  const VectorXd var = cov.diagonal();
  const double max_var = var.maxCoeff();
  std::vector<int> flat;
  for (int j = 0; j < dims.d; ++j) {
    if (!(var(j) > 1e-14 * max_var) || !(max_var > 0.0)) flat.push_back(j);
  }
  if (!flat.empty()) {
    std::ostringstream err;
    err << "zero-variance column(s):";
    for (int j : flat) err << ' ' << j;
    throw InputError(err.str());
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of pooled W failed");
  // Eigenvalues ascend; the top q sit at the end.
  const int d = dims.d;
  const int q = dims.q;
  ChainState st;
  st.params.lambda.resize(d, q);
  for (int h = 0; h < q; ++h) {
    const int idx = d - 1 - h;
    const double sv = std::sqrt(std::max(eig.eigenvalues()(idx), 0.0));
    VectorXd v = eig.eigenvectors().col(idx);
    // Fix the sign so the largest entry is positive.
    Eigen::Index k;
    v.cwiseAbs().maxCoeff(&k);
    if (v(k) < 0.0) v = -v;
    st.params.lambda.col(h) = sv * v;
  }
  const VectorXd resid =
      (var - st.params.lambda.rowwise().squaredNorm()).cwiseMax(1e-4);
  st.params.log_delta = resid.array().log().matrix();
  for (int qs : dims.q_s) st.params.a.push_back(0.1 * standard_normal_matrix(q, qs, rng));

  st.dl = DlState::uniform(d, q, hyper.a);
  gibbs_sweep(st.params.lambda, st.dl, dl_options, rng);
  return st;
}

McmcOutput run_chain(std::span<const StudySummary> studies, const ModelDims& dims,
                     const PriorHyper& hyper, const ChainConfig& config) {
  Rng rng(config.seed);
  return run_chain(studies, dims, hyper, config, rng);
}

McmcOutput run_chain(std::span<const StudySummary> studies, const ModelDims& dims,
                     const PriorHyper& hyper, const ChainConfig& config, Rng& rng,
                     std::optional<ChainState> start) {
  config.validate();
  dims.validate();
  hyper.validate();
  check_studies(dims, studies);

  const auto t0 = std::chrono::steady_clock::now();
  ChainState st = start ? std::move(*start)
                        : initialize(dims, studies, hyper, config.init, config.dl_options, rng);
  st.params.validate(dims);
  st.dl.a = hyper.a;

  std::optional<WorkerPool> pool;
  if (config.workers > 1) pool.emplace(config.workers);
  WorkerPool* pool_ptr = pool ? &*pool : nullptr;

  McmcOutput out;
  out.beta = config.beta;
  const int num_draws = config.num_draws();
  out.draws.reserve(num_draws);
  out.accepted.reserve(config.iterations);
  out.tuning.reserve(config.iterations);

  // Own stream for (step, L): the trajectory lengths then do not depend on
  // how many variates the rejection samplers happened to use.
  Rng tuning_rng(rng());
  for (int it = 0; it < config.iterations; ++it) {
    const TuningDraw draw = sample_tuning(config.tuning, tuning_rng);
    const HmcStepResult step = hmc_step(st.params, st.dl, hyper, studies, draw, config.beta,
                                        config.acceptance, pool_ptr, rng);
    out.accepted.push_back(step.accepted ? 1 : 0);
    out.tuning.push_back(step.tuning);
    if (step.numeric_failure) ++out.numeric_rejections;

    gibbs_sweep(st.params.lambda, st.dl, config.dl_options, rng);

    const int after = it - config.burn_in;
    if (after >= 0 && (after + 1) % config.thin == 0 &&
        static_cast<int>(out.draws.size()) < num_draws) {
      out.draws.push_back(st.params);
      out.loglik.push_back(step.loglik);
      out.log_posterior.push_back(config.beta * step.loglik + log_prior(st.params, st.dl, hyper));
      if (config.store_dl) out.dl.push_back(st.dl);
    }
  }
  if (out.numeric_rejections > 0) {
    std::cerr << "warning: " << out.numeric_rejections
              << " proposal(s) rejected after numeric failure\n";
  }
  out.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace sufa
