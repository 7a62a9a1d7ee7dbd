#pragma once

// Marginal log-likelihood of the factor model with the latent factors
// integrated out, evaluated from per-study sufficient statistics only:
//
//   L = -1/2 sum_s { n_s d log(2 pi) + n_s log|Sigma_s| + tr(Sigma_s^-1 W_s) }.
//
// Gradients follow from dL/dSigma_s = -G_s / 2 with
// G_s = n_s Sigma_s^-1 - Sigma_s^-1 W_s Sigma_s^-1.

#include <span>
#include <vector>

#include "sufa/model.hpp"
#include "sufa/priors.hpp"
#include "sufa/worker_pool.hpp"

namespace sufa {

/// Per-study intermediates of one gradient evaluation.
struct StudyWorkspace {
  MatrixXd c;             // I + A_s A_s^T
  MatrixXd c_sqrt;        // lower Cholesky factor of c
  MatrixXd lambda_tilde;  // Lambda c_sqrt
  MatrixXd sigma_inv;
  MatrixXd sigma_inv_w;
  MatrixXd g;
  double log_det = 0.0;
  double trace_term = 0.0;  // tr(Sigma^-1 W)
  double loglik = 0.0;

  // Gradient pieces of this study's log-likelihood.
  MatrixXd grad_lambda;     // -G Lambda C
  VectorXd grad_log_delta;  // -diag(G) * exp(log_delta) / 2
  MatrixXd grad_a;          // -Lambda^T G Lambda A
};

StudyWorkspace compute_workspace(const ParamSet& params, int study,
                                 std::span<const StudySummary> studies);

/// Likelihood and gradient fields only (sigma_inv, sigma_inv_w and g left
/// empty). This is what the sampler calls.
StudyWorkspace study_gradient(const ParamSet& params, int study,
                              std::span<const StudySummary> studies);

double marginal_loglik(const ParamSet& params, std::span<const StudySummary> studies);

/// Log-likelihood and log-prior terms with the gradient of
/// beta * L + log prior.
struct PosteriorEval {
  double loglik = 0.0;
  double log_prior = 0.0;
  double beta = 1.0;
  GradientSet grad;

  double log_posterior() const { return beta * loglik + log_prior; }
};

/// Gradient of L + log prior, evaluated sequentially.
GradientSet grad_log_posterior(const ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                               std::span<const StudySummary> studies);

/// Per-study workspaces computed on `pool`, then summed in ascending study
/// order, so the result is bit-identical to the sequential path for any
/// worker count. A null pool runs sequentially.
PosteriorEval parallel_grad_reduce(const ParamSet& params, const DlState& dl,
                                   const PriorHyper& hyper, std::span<const StudySummary> studies,
                                   WorkerPool* pool, double beta = 1.0);

}  // namespace sufa
