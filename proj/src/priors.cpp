#include "sufa/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sufa/error.hpp"

namespace sufa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Guards only against exact underflow of psi phi^2 tau^2.
constexpr double kMinPriorVariance = std::numeric_limits<double>::min();

}  // namespace

void PriorHyper::validate() const {
  if (!(a > 0.0 && a <= 1.0)) throw ConfigError("DL parameter a must lie in (0, 1]");
  if (!(b_a > 0.0)) throw ConfigError("prior variance b_A must be positive");
  if (!(sigma2_delta > 0.0)) throw ConfigError("log-variance prior variance must be positive");
  if (!std::isfinite(mu_delta)) throw ConfigError("log-variance prior mean must be finite");
}

PriorHyper default_hyperparameters() {
  PriorHyper h;
  h.a = 0.5;
  h.b_a = 1.0;
  h.sigma2_delta = std::log(8.0);
  h.mu_delta = -0.5 * std::log(8.0);
  return h;
}

DlState DlState::uniform(int d, int q, double a) {
  DlState dl;
  dl.a = a;
  dl.tau = 1.0;
  dl.phi = MatrixXd::Constant(d, q, 1.0 / (static_cast<double>(d) * q));
  dl.psi = MatrixXd::Ones(d, q);
  return dl;
}

MatrixXd DlState::prior_variance() const {
  MatrixXd v = (psi.array() * phi.array().square() * (tau * tau)).matrix();
  return v.cwiseMax(kMinPriorVariance);
}

void DlState::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("DL global scale tau must be positive");
  if (phi.rows() != psi.rows() || phi.cols() != psi.cols()) {
    throw DimensionError("DL phi and psi shapes differ");
  }
  if (!(phi.array() > 0.0).all() || !phi.allFinite()) {
    throw DomainError("DL weights phi must be positive");
  }
  if (!(psi.array() > 0.0).all() || !psi.allFinite()) {
    throw DomainError("DL local scales psi must be positive");
  }
}

MatrixXd gibbs_update_psi(const MatrixXd& lambda, const MatrixXd& phi, double tau, Rng& rng) {
  if (phi.rows() != lambda.rows() || phi.cols() != lambda.cols()) {
    throw DimensionError("phi and Lambda shapes differ");
  }
  MatrixXd psi(lambda.rows(), lambda.cols());
  for (Eigen::Index h = 0; h < lambda.cols(); ++h) {
    for (Eigen::Index j = 0; j < lambda.rows(); ++j) {
      const double abs_l = std::max(std::abs(lambda(j, h)), kLoadingFloor);
      const double mean = std::min(tau * phi(j, h) / abs_l, kMaxInverseGaussianMean);
      psi(j, h) = 1.0 / sample_inverse_gaussian(mean, 1.0, rng);
    }
  }
  return psi;
}

MatrixXd gibbs_update_phi(const MatrixXd& lambda, double a, Rng& rng) {
  if (!(a > 0.0 && a <= 1.0)) throw DomainError("DL parameter a must lie in (0, 1]");
  MatrixXd t(lambda.rows(), lambda.cols());
  for (Eigen::Index h = 0; h < lambda.cols(); ++h) {
    for (Eigen::Index j = 0; j < lambda.rows(); ++j) {
      const double abs_l = std::max(std::abs(lambda(j, h)), kLoadingFloor);
      t(j, h) = sample_gig(a - 1.0, 1.0, 2.0 * abs_l, rng);
    }
  }
  return t / t.sum();
}

double gibbs_update_tau(const MatrixXd& lambda, const MatrixXd& phi, double a, TauOrder order,
                        Rng& rng) {
  if (phi.rows() != lambda.rows() || phi.cols() != lambda.cols()) {
    throw DimensionError("phi and Lambda shapes differ");
  }
  const double count = static_cast<double>(lambda.size());
  const double p = order == TauOrder::kConjugate ? count * (a - 1.0) : count * (1.0 - a);
  const double b = 2.0 * (lambda.cwiseAbs().cwiseMax(kLoadingFloor).array() / phi.array()).sum();
  return sample_gig(p, 1.0, b, rng);
}

void gibbs_sweep(const MatrixXd& lambda, DlState& dl, const DlGibbsOptions& options, Rng& rng) {
  if (options.sweep_order == DlSweepOrder::kAsPrinted) {
    dl.psi = gibbs_update_psi(lambda, dl.phi, dl.tau, rng);
    dl.phi = gibbs_update_phi(lambda, dl.a, rng);
    dl.tau = gibbs_update_tau(lambda, dl.phi, dl.a, options.tau_order, rng);
    return;
  }
  dl.phi = gibbs_update_phi(lambda, dl.a, rng);
  dl.tau = gibbs_update_tau(lambda, dl.phi, dl.a, options.tau_order, rng);
  dl.psi = gibbs_update_psi(lambda, dl.phi, dl.tau, rng);
}

double log_prior(const ParamSet& params, const DlState& dl, const PriorHyper& hyper) {
  dl.validate();
  if (dl.phi.rows() != params.lambda.rows() || dl.phi.cols() != params.lambda.cols()) {
    throw DimensionError("DL state shape does not match Lambda");
  }
  const MatrixXd var = dl.prior_variance();
  const auto n_lambda = static_cast<double>(params.lambda.size());
  double lp = -0.5 * n_lambda * kLog2Pi - 0.5 * var.array().log().sum() -
              0.5 * (params.lambda.array().square() / var.array()).sum();

  const auto d = static_cast<double>(params.log_delta.size());
  lp += -0.5 * d * (kLog2Pi + std::log(hyper.sigma2_delta)) -
        0.5 * (params.log_delta.array() - hyper.mu_delta).square().sum() / hyper.sigma2_delta;

  for (const auto& a : params.a) {
    const auto n_a = static_cast<double>(a.size());
    lp += -0.5 * n_a * (kLog2Pi + std::log(hyper.b_a)) - 0.5 * a.squaredNorm() / hyper.b_a;
  }
  return lp;
}

void add_grad_log_prior(const ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                        GradientSet& grad) {
  grad.lambda.array() -= params.lambda.array() / dl.prior_variance().array();
  grad.log_delta.array() -= (params.log_delta.array() - hyper.mu_delta) / hyper.sigma2_delta;
  for (std::size_t s = 0; s < params.a.size(); ++s) {
    grad.a[s] -= params.a[s] / hyper.b_a;
  }
}

PriorDraw draw_from_prior(const ModelDims& dims, const PriorHyper& hyper, Rng& rng) {
  const int d = dims.d;
  const int q = dims.q;
  PriorDraw out;
  DlState& dl = out.dl;
  dl.a = hyper.a;

  std::exponential_distribution<double> exp_half(0.5);
  std::gamma_distribution<double> dir_gamma(hyper.a, 1.0);
  dl.psi.resize(d, q);
  dl.phi.resize(d, q);
  for (int h = 0; h < q; ++h) {
    for (int j = 0; j < d; ++j) {
      dl.psi(j, h) = exp_half(rng);
      dl.phi(j, h) = dir_gamma(rng);
    }
  }
  dl.phi /= dl.phi.sum();
  dl.tau = std::gamma_distribution<double>(static_cast<double>(d) * q * hyper.a, 2.0)(rng);

  ParamSet& p = out.params;
  const MatrixXd sd = dl.prior_variance().cwiseSqrt();
  p.lambda = standard_normal_matrix(d, q, rng).cwiseProduct(sd);
  p.log_delta = (standard_normal_matrix(d, 1, rng) * std::sqrt(hyper.sigma2_delta)).array() +
                hyper.mu_delta;
  for (int qs : dims.q_s) {
    p.a.push_back(standard_normal_matrix(q, qs, rng) * std::sqrt(hyper.b_a));
  }
  return out;
}

}  // namespace sufa
