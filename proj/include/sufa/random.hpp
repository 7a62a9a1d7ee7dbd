#pragma once

// Random variate generators used by the Gibbs updates. All generators take
// the engine explicitly; nothing here touches global state.

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace sufa {

using Rng = std::mt19937_64;

double standard_normal(Rng& rng);
/// Uniform on the open interval (0, 1).
double open_uniform(Rng& rng);

Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Inverse Gaussian with the given mean and shape, via the
/// Michael-Schucany-Haas transformation with one extra uniform.
double sample_inverse_gaussian(double mean, double shape, Rng& rng);

/// Generalized inverse Gaussian with density proportional to
///   x^(p-1) exp(-(a x + b / x) / 2),   a > 0, b > 0.
///
/// Uses the ratio-of-uniforms generators (with and without mode shift) and the
/// non-T-concave rejection scheme of Hormann and Leydold, selected by region of
/// (|p|, sqrt(a b)). Negative orders are handled through X(p) = 1 / X(-p) on
/// the standardized scale.
double sample_gig(double p, double a, double b, Rng& rng);

/// Mode of the standardized GIG density x^(lambda-1) exp(-omega (x + 1/x) / 2).
double gig_standardized_mode(double lambda, double omega);

}  // namespace sufa
