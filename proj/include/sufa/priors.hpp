#pragma once

// Prior hierarchy: Dirichlet-Laplace on vec(Lambda), Gaussian on the entries
// of each A_s, and a normal prior on the log idiosyncratic variances.
//
// The DL prior is used in its conditionally Gaussian form
//   lambda_jh | psi, phi, tau ~ N(0, psi_jh phi_jh^2 tau^2),
//   psi_jh ~ Exp(rate 1/2), phi ~ Dir(a, ..., a), tau ~ Gamma(dq a, rate 1/2).

#include "sufa/model.hpp"
#include "sufa/random.hpp"

namespace sufa {

struct PriorHyper {
  double a = 0.5;             // DL concentration
  double b_a = 1.0;           // variance of A_s entries
  double mu_delta = 0.0;      // mean of log delta_j^2
  double sigma2_delta = 1.0;  // variance of log delta_j^2

  void validate() const;
};

/// a = 1/2, b_A = 1, and the log-normal parameters giving E(delta^2) = 1 and
/// var(delta^2) = 7, i.e. sigma^2 = log 8 and mu = -log(8) / 2.
PriorHyper default_hyperparameters();

struct DlState {
  double tau = 1.0;
  MatrixXd phi;  // d x q, sums to one
  MatrixXd psi;  // d x q, positive
  double a = 0.5;

  /// tau = 1, uniform phi, psi = 1.
  static DlState uniform(int d, int q, double a);
  /// Conditional prior variance psi * phi^2 * tau^2, elementwise.
  MatrixXd prior_variance() const;
  void validate() const;
};

/// Gamma order used for the global-scale update.
enum class TauOrder {
  kConjugate,  // dq (a - 1): the exact full conditional of the DL hierarchy
  kAsPrinted,  // dq (1 - a)
};

/// Order of the three DL updates within one sweep.
enum class DlSweepOrder {
  kBlocked,    // phi | Lambda, then tau | phi, Lambda, then psi | tau, phi, Lambda
  kAsPrinted,  // psi with the previous (tau, phi), then phi, then tau
};

struct DlGibbsOptions {
  TauOrder tau_order = TauOrder::kConjugate;
  DlSweepOrder sweep_order = DlSweepOrder::kBlocked;
};

/// |lambda| is floored here inside the DL conditionals.
inline constexpr double kLoadingFloor = 1e-10;
/// Cap on the inverse-Gaussian mean tau phi / |lambda|.
inline constexpr double kMaxInverseGaussianMean = 1e8;

/// psi_jh = 1 / psi~_jh with psi~_jh ~ iG(tau phi_jh / |lambda_jh|, 1).
MatrixXd gibbs_update_psi(const MatrixXd& lambda, const MatrixXd& phi, double tau, Rng& rng);

/// phi = T / sum(T) with T_jh ~ giG(a - 1, 1, 2 |lambda_jh|).
MatrixXd gibbs_update_phi(const MatrixXd& lambda, double a, Rng& rng);

/// tau ~ giG(order, 1, 2 sum |lambda_jh| / phi_jh).
double gibbs_update_tau(const MatrixXd& lambda, const MatrixXd& phi, double a,
                        TauOrder order, Rng& rng);

/// One Gibbs sweep of (psi, phi, tau) given Lambda, in place.
void gibbs_sweep(const MatrixXd& lambda, DlState& dl, const DlGibbsOptions& options, Rng& rng);

/// Log prior density of Theta given the DL state, including all normalizing
/// constants.
double log_prior(const ParamSet& params, const DlState& dl, const PriorHyper& hyper);

/// Adds the gradient of log_prior with respect to Theta into `grad`.
void add_grad_log_prior(const ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                        GradientSet& grad);

struct PriorDraw {
  ParamSet params;
  DlState dl;
};

/// Exact draw of (Theta, psi, phi, tau) from the prior.
PriorDraw draw_from_prior(const ModelDims& dims, const PriorHyper& hyper, Rng& rng);

}  // namespace sufa
