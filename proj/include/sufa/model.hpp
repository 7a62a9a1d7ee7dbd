#pragma once

// Parameterization of the subspace factor model and the covariance algebra
// built on it. Every study shares the loading matrix `lambda`; study s adds
// `lambda * a[s]` as its own loadings, so
//
//   Sigma_s = Lambda (I + A_s A_s^T) Lambda^T + diag(exp(log_delta)).
//
// Idiosyncratic variances are carried on the log scale throughout.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace sufa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ModelDims {
  int d = 0;
  int q = 0;
  std::vector<int> q_s;
  std::vector<std::int64_t> n_s;

  int num_studies() const { return static_cast<int>(q_s.size()); }

  /// Throws ConfigError unless 1 <= q < d, q_s >= 0, sum(q_s) <= q and the
  /// per-study vectors agree in length.
  void validate() const;
};

struct ParamSet {
  MatrixXd lambda;             // d x q
  std::vector<MatrixXd> a;     // a[s] is q x q_s[s]
  VectorXd log_delta;          // length d

  int d() const { return static_cast<int>(lambda.rows()); }
  int q() const { return static_cast<int>(lambda.cols()); }
  int num_studies() const { return static_cast<int>(a.size()); }

  /// Zero loadings, zero study matrices, unit variances.
  static ParamSet zeros(const ModelDims& dims);

  /// Throws DimensionError on inconsistent shapes, DomainError on
  /// non-finite entries.
  void validate() const;
  void validate(const ModelDims& dims) const;
};

/// Gradient of a scalar with respect to every block of a ParamSet.
struct GradientSet {
  MatrixXd lambda;
  VectorXd log_delta;
  std::vector<MatrixXd> a;

  static GradientSet zeros_like(const ParamSet& params);
  bool all_finite() const;
};

/// Sufficient statistic of one centered study: W = sum_i y_i y_i^T.
struct StudySummary {
  MatrixXd w;
  std::int64_t n = 0;

  int d() const { return static_cast<int>(w.rows()); }
};

// Sigma = Lambda_tilde Lambda_tilde^T + diag(exp(log_delta)) in factored form.
// Holds the k x k capacitance matrix I + Lt^T D^-1 Lt and its Cholesky factor;
// every product with Sigma^-1 costs O(k d) per right-hand-side column.
class LowRankPlusDiagonal {
 public:
  LowRankPlusDiagonal(const MatrixXd& lambda_tilde, const VectorXd& log_delta);

  int dim() const { return static_cast<int>(inv_diag_.size()); }
  int rank() const { return static_cast<int>(scaled_.cols()); }

  /// Sigma^-1 X without forming Sigma^-1.
  MatrixXd solve(const MatrixXd& x) const;
  /// X Sigma^-1.
  MatrixXd solve_right(const MatrixXd& x) const;
  /// Dense Sigma^-1, O(k d^2).
  MatrixXd inverse() const;
  double log_det() const { return log_det_; }

  const VectorXd& inv_diag() const { return inv_diag_; }
  /// D^-1 Lt.
  const MatrixXd& scaled_loadings() const { return scaled_; }
  const Eigen::LLT<MatrixXd>& capacitance() const { return capacitance_; }

 private:
  VectorXd inv_diag_;
  MatrixXd scaled_;
  Eigen::LLT<MatrixXd> capacitance_;
  double log_det_ = 0.0;
};

/// Reciprocal-condition threshold of the k x k inner solve.
inline constexpr double kMaxInnerCondition = 1e12;

MatrixXd marginal_covariance(const ParamSet& params, int study);
MatrixXd shared_covariance(const ParamSet& params);

MatrixXd woodbury_inverse(const MatrixXd& lambda_tilde, const VectorXd& log_delta);
double logdet_lowrank(const MatrixXd& lambda_tilde, const VectorXd& log_delta);

/// diag(S)^-1/2 S diag(S)^-1/2; throws DomainError on a nonpositive diagonal.
MatrixXd correlation_matrix(const MatrixXd& sigma);

/// W = Y^T Y for an n x d data matrix.
StudySummary sufficient_stats(const MatrixXd& y);

/// Study-specific loadings Lambda * A_s.
MatrixXd study_loadings(const ParamSet& params, int study);

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace sufa
