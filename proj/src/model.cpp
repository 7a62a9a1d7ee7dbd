#include "sufa/model.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "sufa/error.hpp"

namespace sufa {

void ModelDims::validate() const {
  std::ostringstream err;
  if (d < 1) {
    err << "feature count d must be >= 1 (got " << d << ")";
  } else if (q < 1 || q >= d) {
    err << "shared dimension q must satisfy 1 <= q < d (got q=" << q << ", d=" << d << ")";
  } else if (q_s.empty()) {
    err << "at least one study is required";
  } else if (!n_s.empty() && n_s.size() != q_s.size()) {
    err << "q_s has " << q_s.size() << " entries but n_s has " << n_s.size();
  }
  if (err.tellp() > 0) throw ConfigError(err.str());

  int total = 0;
  for (std::size_t s = 0; s < q_s.size(); ++s) {
    if (q_s[s] < 0) {
      err << "study " << s << " has negative q_s=" << q_s[s];
      throw ConfigError(err.str());
    }
    total += q_s[s];
  }
  for (std::size_t s = 0; s < n_s.size(); ++s) {
    if (n_s[s] < 0) {
      err << "study " << s << " has negative sample count " << n_s[s];
      throw ConfigError(err.str());
    }
  }
  if (total > q) {
    err << "sum of study-specific dimensions (" << total << ") exceeds shared dimension q=" << q
        << "; the identifiability condition requires sum(q_s) <= q";
    throw ConfigError(err.str());
  }
}

ParamSet ParamSet::zeros(const ModelDims& dims) {
  ParamSet p;
  p.lambda = MatrixXd::Zero(dims.d, dims.q);
  p.log_delta = VectorXd::Zero(dims.d);
  for (int qs : dims.q_s) p.a.push_back(MatrixXd::Zero(dims.q, qs));
  return p;
}

void ParamSet::validate() const {
  const auto d = lambda.rows();
  const auto q = lambda.cols();
  if (log_delta.size() != d) {
    std::ostringstream err;
    err << "log_delta has length " << log_delta.size() << ", expected d=" << d;
    throw DimensionError(err.str());
  }
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (a[s].rows() != q) {
      std::ostringstream err;
      err << "A[" << s << "] has " << a[s].rows() << " rows, expected q=" << q;
      throw DimensionError(err.str());
    }
    if (!a[s].allFinite()) throw DomainError("non-finite entry in A[" + std::to_string(s) + "]");
  }
  if (!lambda.allFinite()) throw DomainError("non-finite entry in Lambda");
  if (!log_delta.allFinite()) throw DomainError("non-finite entry in log_delta");
}

void ParamSet::validate(const ModelDims& dims) const {
  validate();
  if (lambda.rows() != dims.d || lambda.cols() != dims.q ||
      a.size() != dims.q_s.size()) {
    throw DimensionError("parameter shapes do not match model dimensions");
  }
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (a[s].cols() != dims.q_s[s]) {
      throw DimensionError("A[" + std::to_string(s) + "] column count does not match q_s");
    }
  }
}

GradientSet GradientSet::zeros_like(const ParamSet& params) {
  GradientSet g;
  g.lambda = MatrixXd::Zero(params.lambda.rows(), params.lambda.cols());
  g.log_delta = VectorXd::Zero(params.log_delta.size());
  for (const auto& a : params.a) g.a.push_back(MatrixXd::Zero(a.rows(), a.cols()));
  return g;
}

bool GradientSet::all_finite() const {
  if (!lambda.allFinite() || !log_delta.allFinite()) return false;
  for (const auto& m : a)
    if (!m.allFinite()) return false;
  return true;
}

LowRankPlusDiagonal::LowRankPlusDiagonal(const MatrixXd& lambda_tilde,
                                         const VectorXd& log_delta) {
  if (lambda_tilde.rows() != log_delta.size()) {
    throw DimensionError("low-rank factor and diagonal disagree in dimension");
  }
  if (!lambda_tilde.allFinite() || !log_delta.allFinite()) {
    throw DomainError("non-finite input to low-rank-plus-diagonal factorization");
  }
  const auto k = lambda_tilde.cols();
  inv_diag_ = (-log_delta.array()).exp().matrix();
  scaled_ = inv_diag_.asDiagonal() * lambda_tilde;

  MatrixXd inner = MatrixXd::Identity(k, k);
  inner.noalias() += lambda_tilde.transpose() * scaled_;
  capacitance_.compute(inner);
  if (capacitance_.info() != Eigen::Success) {
    throw NumericError("Cholesky factorization of the capacitance matrix failed");
  }
  if (k > 0 && capacitance_.rcond() < 1.0 / kMaxInnerCondition) {
    throw IllConditionedError("capacitance matrix condition estimate exceeds 1e12");
  }
  const MatrixXd& l = capacitance_.matrixLLT();
  double ld = log_delta.sum();
  for (Eigen::Index i = 0; i < k; ++i) ld += 2.0 * std::log(l(i, i));
  log_det_ = ld;
}

MatrixXd LowRankPlusDiagonal::solve(const MatrixXd& x) const {
  MatrixXd out = inv_diag_.asDiagonal() * x;
  if (rank() == 0) return out;
  const MatrixXd inner = capacitance_.solve(scaled_.transpose() * x);
  out.noalias() -= scaled_ * inner;
  return out;
}

MatrixXd LowRankPlusDiagonal::solve_right(const MatrixXd& x) const {
  MatrixXd out = x * inv_diag_.asDiagonal();
  if (rank() == 0) return out;
  const MatrixXd xs = x * scaled_;
  const MatrixXd inner = capacitance_.solve(xs.transpose());
  out.noalias() -= inner.transpose() * scaled_.transpose();
  return out;
}

MatrixXd LowRankPlusDiagonal::inverse() const {
  const auto d = inv_diag_.size();
  MatrixXd out = MatrixXd::Zero(d, d);
  if (rank() > 0) {
    // B = L^-1 (D^-1 Lt)^T, so the correction is B^T B.
    const MatrixXd b = capacitance_.matrixL().solve(scaled_.transpose());
    out.selfadjointView<Eigen::Lower>().rankUpdate(b.transpose(), -1.0);
    out.triangularView<Eigen::StrictlyUpper>() = out.transpose();
  }
  out.diagonal() += inv_diag_;
  return out;
}

MatrixXd marginal_covariance(const ParamSet& params, int study) {
  params.validate();
  if (study < 0 || study >= params.num_studies()) {
    throw DimensionError("study index " + std::to_string(study) + " out of range");
  }
  const MatrixXd& lambda = params.lambda;
  const MatrixXd la = lambda * params.a[study];
  MatrixXd sigma = lambda * lambda.transpose();
  sigma.noalias() += la * la.transpose();
  sigma.diagonal() += params.log_delta.array().exp().matrix();
  return symmetrize(sigma);
}

MatrixXd shared_covariance(const ParamSet& params) {
  params.validate();
  MatrixXd sigma = params.lambda * params.lambda.transpose();
  sigma.diagonal() += params.log_delta.array().exp().matrix();
  return symmetrize(sigma);
}

MatrixXd woodbury_inverse(const MatrixXd& lambda_tilde, const VectorXd& log_delta) {
  if (lambda_tilde.cols() > lambda_tilde.rows()) {
    throw DimensionError("low-rank factor has more columns than rows");
  }
  return LowRankPlusDiagonal(lambda_tilde, log_delta).inverse();
}

double logdet_lowrank(const MatrixXd& lambda_tilde, const VectorXd& log_delta) {
  return LowRankPlusDiagonal(lambda_tilde, log_delta).log_det();
}

MatrixXd correlation_matrix(const MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols()) throw DimensionError("correlation of a non-square matrix");
  const VectorXd diag = sigma.diagonal();
  if (!(diag.array() > 0.0).all() || !diag.allFinite()) {
    throw DomainError("covariance diagonal must be strictly positive");
  }
  const VectorXd inv_sd = diag.array().rsqrt().matrix();
  MatrixXd r = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  r = symmetrize(r);
  r.diagonal().setOnes();
  return r.cwiseMax(-1.0).cwiseMin(1.0);
}

StudySummary sufficient_stats(const MatrixXd& y) {
  if (y.rows() < 1 || y.cols() < 1) throw InputError("cannot summarize an empty data matrix");
  StudySummary out;
  out.n = y.rows();
  out.w = MatrixXd::Zero(y.cols(), y.cols());
  out.w.selfadjointView<Eigen::Lower>().rankUpdate(y.transpose());
  out.w.triangularView<Eigen::StrictlyUpper>() = out.w.transpose();
  return out;
}

MatrixXd study_loadings(const ParamSet& params, int study) {
  if (study < 0 || study >= params.num_studies()) {
    throw DimensionError("study index " + std::to_string(study) + " out of range");
  }
  return params.lambda * params.a[study];
}

}  // namespace sufa
