#include "sufa/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sufa/error.hpp"

namespace sufa {

namespace {

// Standardized GIG: density x^(lambda-1) exp(-omega/2 (x + 1/x)), lambda >= 0.

double log_std_gig_sqrt(double x, double t, double s) {
  return t * std::log(x) - s * (x + 1.0 / x);
}

// Ratio-of-uniforms without mode shift; valid for the T-concave region with
// lambda <= 1 or small omega.
double rou_noshift(double lambda, double omega, Rng& rng) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_standardized_mode(lambda, omega);
  const double nc = log_std_gig_sqrt(xm, t, s);
  // Maximizer of x * sqrt(f(x)).
  const double ym = ((lambda + 1.0) + std::sqrt((lambda + 1.0) * (lambda + 1.0) + omega * omega)) / omega;
  const double um = std::exp(0.5 * (lambda + 1.0) * std::log(ym) - s * (ym + 1.0 / ym) - nc);
  for (;;) {
    const double u = um * open_uniform(rng);
    const double v = open_uniform(rng);
    const double x = u / v;
    if (std::log(v) <= log_std_gig_sqrt(x, t, s) - nc) return x;
  }
}

// Ratio-of-uniforms with the mode shifted to the origin; used when lambda > 2
// or omega > 3.
double rou_shift(double lambda, double omega, Rng& rng) {
  const double t = 0.5 * (lambda - 1.0);
  const double s = 0.25 * omega;
  const double xm = gig_standardized_mode(lambda, omega);
  const double nc = log_std_gig_sqrt(xm, t, s);

  // Extremes of (x - xm) sqrt(f(x)) are roots of
  //   x^3 + a x^2 + b x + c = 0.
  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-(p * p * p) / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * std::numbers::pi) - a / 3.0;
  const double uplus = (y1 - xm) * std::exp(log_std_gig_sqrt(y1, t, s) - nc);
  const double uminus = (y2 - xm) * std::exp(log_std_gig_sqrt(y2, t, s) - nc);

  for (;;) {
    const double u = uminus + open_uniform(rng) * (uplus - uminus);
    const double v = open_uniform(rng);
    const double x = u / v + xm;
    if (x > 0.0 && std::log(v) <= log_std_gig_sqrt(x, t, s) - nc) return x;
  }
}

// Rejection from a three-piece hat for the non-T-concave region
// 0 <= lambda < 1, small omega.
double non_concave(double lambda, double omega, Rng& rng) {
  const double xm = gig_standardized_mode(lambda, omega);
  const double x0 = omega / (1.0 - lambda);

  const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
  const double area0 = k0 * x0;

  double k1 = 0.0;
  double area1 = 0.0;
  double k2 = 0.0;
  double area2 = 0.0;
  if (x0 >= 2.0 / omega) {
    k2 = std::pow(x0, lambda - 1.0);
    area2 = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
  } else {
    k1 = std::exp(-omega);
    area1 = (lambda == 0.0)
                ? k1 * std::log(2.0 / (omega * omega))
                : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
    k2 = std::pow(2.0 / omega, lambda - 1.0);
    area2 = k2 * 2.0 * std::exp(-1.0) / omega;
  }
  const double total = area0 + area1 + area2;
  const double tail_start = std::max(x0, 2.0 / omega);

  for (;;) {
    double v = total * open_uniform(rng);
    double x = 0.0;
    double hx = 0.0;
    if (v <= area0) {
      x = x0 * v / area0;
      hx = k0;
    } else if ((v -= area0) <= area1) {
      if (lambda == 0.0) {
        x = omega * std::exp(std::exp(omega) * v);
        hx = k1 / x;
      } else {
        x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
        hx = k1 * std::pow(x, lambda - 1.0);
      }
    } else {
      v -= area1;
      x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * tail_start) - omega / (2.0 * k2) * v);
      hx = k2 * std::exp(-omega / 2.0 * x);
    }
    const double u = open_uniform(rng) * hx;
    if (x > 0.0 && std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) {
      return x;
    }
  }
}

}  // namespace

double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

double open_uniform(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0) return u;
  }
}

Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = standard_normal(rng);
  return m;
}

double gig_standardized_mode(double lambda, double omega) {
  if (lambda >= 1.0) {
    return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  }
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

double sample_inverse_gaussian(double mean, double shape, Rng& rng) {
  if (!(mean > 0.0) || !(shape > 0.0) || !std::isfinite(mean) || !std::isfinite(shape)) {
    throw DomainError("inverse Gaussian requires positive finite mean and shape");
  }
  const double nu = standard_normal(rng);
  const double y = nu * nu;
  if (y == 0.0) return mean;
  // Smaller root of the MSH quadratic, rearranged to avoid cancellation when
  // mean >> shape: x = 4 shape y / (y + sqrt(4 shape y / mean + y^2))^2.
  const double ratio = y + std::sqrt(4.0 * shape * y / mean + y * y);
  const double x = 4.0 * shape * y / (ratio * ratio);
  const double z = open_uniform(rng);
  if (z <= mean / (mean + x)) return x;
  return mean * mean / x;
}

double sample_gig(double p, double a, double b, Rng& rng) {
  if (!std::isfinite(p) || !(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DomainError("generalized inverse Gaussian requires finite order and a, b > 0");
  }
  const double lambda = std::abs(p);
  const double omega = std::sqrt(a * b);
  const double alpha = std::sqrt(b / a);

  double x = 0.0;
  if (lambda > 2.0 || omega > 3.0) {
    x = rou_shift(lambda, omega, rng);
  } else if (lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2) {
    x = rou_noshift(lambda, omega, rng);
  } else {
    x = non_concave(lambda, omega, rng);
  }
  return p < 0.0 ? alpha / x : alpha * x;
}

}  // namespace sufa
