#include "sufa/likelihood.hpp"

#include <cmath>
#include <string>

#include "sufa/error.hpp"

namespace sufa {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_study(const ParamSet& params, int study, std::span<const StudySummary> studies) {
  if (studies.size() != params.a.size()) {
    throw DimensionError("number of study summaries (" + std::to_string(studies.size()) +
                         ") does not match number of A matrices (" +
                         std::to_string(params.a.size()) + ")");
  }
  if (study < 0 || study >= static_cast<int>(studies.size())) {
    throw DimensionError("study index " + std::to_string(study) + " out of range");
  }
  const auto& w = studies[study].w;
  if (w.rows() != params.lambda.rows() || w.cols() != params.lambda.rows()) {
    throw DimensionError("W of study " + std::to_string(study) + " is not d x d");
  }
}

}  // namespace

StudyWorkspace compute_workspace(const ParamSet& params, int study,
                                 std::span<const StudySummary> studies) {
  check_study(params, study, studies);
  const StudySummary& summary = studies[study];
  const MatrixXd& lambda = params.lambda;
  const MatrixXd& a = params.a[study];
  const auto q = lambda.cols();
  const auto d = lambda.rows();
  const double n = static_cast<double>(summary.n);

  StudyWorkspace ws;
  ws.c = MatrixXd::Identity(q, q);
  ws.c.noalias() += a * a.transpose();
  Eigen::LLT<MatrixXd> c_llt(ws.c);
  if (c_llt.info() != Eigen::Success) {
    throw NumericError("Cholesky of I + A A^T failed for study " + std::to_string(study));
  }
  ws.c_sqrt = c_llt.matrixL();
  ws.lambda_tilde = lambda * ws.c_sqrt;

  // With S = D^-1 Lt, B = L^-1 S^T (L the capacitance Cholesky factor):
  //   Sigma^-1 = D^-1 - B^T B,
  //   G = n D^-1 - D^-1 W D^-1 + V B + B^T V^T - B^T (n I + B W B^T) B,
  // where V = D^-1 W B^T. The last three terms form one symmetric rank-2k
  // update, so G needs O(k d^2) work and no general d x d product.
  try {
    const LowRankPlusDiagonal sigma(ws.lambda_tilde, params.log_delta);
    const VectorXd& dinv = sigma.inv_diag();
    const MatrixXd& w = summary.w;
    ws.sigma_inv = sigma.inverse();
    ws.log_det = sigma.log_det();

    ws.g = -(dinv.asDiagonal() * w * dinv.asDiagonal());
    ws.g.diagonal() += n * dinv;
    ws.sigma_inv_w = dinv.asDiagonal() * w;
    if (sigma.rank() > 0) {
      const MatrixXd bt =
          sigma.capacitance().matrixL().solve(sigma.scaled_loadings().transpose()).transpose();
      const MatrixXd wbt = w * bt;  // d x k
      MatrixXd m = bt.transpose() * wbt;
      m.diagonal().array() += n;
      const MatrixXd z = dinv.asDiagonal() * wbt - 0.5 * bt * symmetrize(m);
      ws.g.triangularView<Eigen::Lower>() += z * bt.transpose();
      ws.g.triangularView<Eigen::Lower>() += bt * z.transpose();
      ws.g.triangularView<Eigen::StrictlyUpper>() = ws.g.transpose();
      ws.sigma_inv_w.noalias() -= bt * wbt.transpose();
    }
  } catch (const NumericError& e) {
    throw NumericError("study " + std::to_string(study) + ": " + e.what());
  } catch (const DomainError& e) {
    throw NumericError("study " + std::to_string(study) + ": " + e.what());
  }
  ws.trace_term = ws.sigma_inv_w.trace();
  ws.loglik = -0.5 * (n * static_cast<double>(d) * kLog2Pi + n * ws.log_det + ws.trace_term);

  const MatrixXd g_lambda = ws.g * lambda;
  ws.grad_lambda = -g_lambda * ws.c;
  ws.grad_log_delta =
      (-0.5 * ws.g.diagonal().array() * params.log_delta.array().exp()).matrix();
  ws.grad_a = -(lambda.transpose() * g_lambda) * a;

  if (!std::isfinite(ws.loglik) || !ws.grad_lambda.allFinite() ||
      !ws.grad_log_delta.allFinite() || !ws.grad_a.allFinite()) {
    throw NumericError("non-finite likelihood or gradient in study " + std::to_string(study));
  }
  return ws;
}

StudyWorkspace study_gradient(const ParamSet& params, int study,
                              std::span<const StudySummary> studies) {
  check_study(params, study, studies);
  const StudySummary& summary = studies[study];
  const MatrixXd& lambda = params.lambda;
  const MatrixXd& a = params.a[study];
  const auto q = lambda.cols();
  const auto d = lambda.rows();
  const double n = static_cast<double>(summary.n);
  const MatrixXd& w = summary.w;

  StudyWorkspace ws;
  ws.c = MatrixXd::Identity(q, q);
  ws.c.noalias() += a * a.transpose();
  Eigen::LLT<MatrixXd> c_llt(ws.c);
  if (c_llt.info() != Eigen::Success) {
    throw NumericError("Cholesky of I + A A^T failed for study " + std::to_string(study));
  }
  ws.c_sqrt = c_llt.matrixL();
  ws.lambda_tilde = lambda * ws.c_sqrt;

  // Same G as above, applied to Lambda and read on the diagonal only. Two
  // d x d by d x k products; nothing d x d is allocated.
  MatrixXd g_lambda;
  VectorXd g_diag;
  try {
    const LowRankPlusDiagonal sigma(ws.lambda_tilde, params.log_delta);
    const VectorXd& dinv = sigma.inv_diag();
    const VectorXd w_diag = w.diagonal();
    ws.log_det = sigma.log_det();
    const MatrixXd x = dinv.asDiagonal() * lambda;
    g_lambda = n * x;
    g_diag = n * dinv - dinv.cwiseProduct(dinv).cwiseProduct(w_diag);
    ws.trace_term = dinv.dot(w_diag);
    const auto k = sigma.rank();
    if (k > 0) {
      const MatrixXd bt =
          sigma.capacitance().matrixL().solve(sigma.scaled_loadings().transpose()).transpose();
      MatrixXd rhs(d, k + q);
      rhs << bt, x;
      const MatrixXd prod = w * rhs;
      const auto wbt = prod.leftCols(k);
      const auto wx = prod.rightCols(q);
      MatrixXd m = bt.transpose() * wbt;
      m.diagonal().array() += n;
      m = symmetrize(m);
      const MatrixXd bl = bt.transpose() * lambda;  // k x q
      const MatrixXd v = dinv.asDiagonal() * wbt;
      g_lambda -= dinv.asDiagonal() * wx;
      g_lambda.noalias() += v * bl;
      g_lambda.noalias() += bt * (wbt.transpose() * x - m * bl);
      const MatrixXd btm = bt * m;
      g_diag += (2.0 * v - btm).cwiseProduct(bt).rowwise().sum();
      ws.trace_term -= bt.cwiseProduct(wbt).sum();
    } else {
      g_lambda -= dinv.asDiagonal() * (w * x);
    }
  } catch (const NumericError& e) {
    throw NumericError("study " + std::to_string(study) + ": " + e.what());
  } catch (const DomainError& e) {
    throw NumericError("study " + std::to_string(study) + ": " + e.what());
  }
  ws.loglik = -0.5 * (n * static_cast<double>(d) * kLog2Pi + n * ws.log_det + ws.trace_term);
  ws.grad_lambda = -g_lambda * ws.c;
  ws.grad_log_delta = (-0.5 * g_diag.array() * params.log_delta.array().exp()).matrix();
  ws.grad_a = -(lambda.transpose() * g_lambda) * a;

  if (!std::isfinite(ws.loglik) || !ws.grad_lambda.allFinite() ||
      !ws.grad_log_delta.allFinite() || !ws.grad_a.allFinite()) {
    throw NumericError("non-finite likelihood or gradient in study " + std::to_string(study));
  }
  return ws;
}

double marginal_loglik(const ParamSet& params, std::span<const StudySummary> studies) {
  params.validate();
  double total = 0.0;
  for (int s = 0; s < static_cast<int>(studies.size()); ++s) {
    check_study(params, s, studies);
    const StudySummary& summary = studies[s];
    const MatrixXd& a = params.a[s];
    MatrixXd c = MatrixXd::Identity(params.q(), params.q());
    c.noalias() += a * a.transpose();
    const MatrixXd lt = params.lambda * Eigen::LLT<MatrixXd>(c).matrixL().toDenseMatrix();
    const LowRankPlusDiagonal sigma(lt, params.log_delta);
    const double n = static_cast<double>(summary.n);
    const double trace = sigma.solve(summary.w).trace();
    total += -0.5 * (n * params.d() * kLog2Pi + n * sigma.log_det() + trace);
  }
  return total;
}

GradientSet grad_log_posterior(const ParamSet& params, const DlState& dl, const PriorHyper& hyper,
                               std::span<const StudySummary> studies) {
  return parallel_grad_reduce(params, dl, hyper, studies, nullptr).grad;
}

PosteriorEval parallel_grad_reduce(const ParamSet& params, const DlState& dl,
                                   const PriorHyper& hyper, std::span<const StudySummary> studies,
                                   WorkerPool* pool, double beta) {
  params.validate();
  const auto num_studies = static_cast<int>(studies.size());
  if (num_studies != params.num_studies()) {
    throw DimensionError("number of study summaries does not match number of A matrices");
  }

  std::vector<StudyWorkspace> workspaces(num_studies);
  auto task = [&](std::size_t s) {
    workspaces[s] = study_gradient(params, static_cast<int>(s), studies);
  };
  if (pool != nullptr) {
    pool->run(workspaces.size(), task);
  } else {
    for (std::size_t s = 0; s < workspaces.size(); ++s) task(s);
  }

  PosteriorEval out;
  out.beta = beta;
  out.grad = GradientSet::zeros_like(params);
  for (int s = 0; s < num_studies; ++s) {
    const StudyWorkspace& ws = workspaces[s];
    out.loglik += ws.loglik;
    out.grad.lambda += ws.grad_lambda;
    out.grad.log_delta += ws.grad_log_delta;
    out.grad.a[s] = ws.grad_a;
  }
  if (beta != 1.0) {
    out.grad.lambda *= beta;
    out.grad.log_delta *= beta;
    for (auto& m : out.grad.a) m *= beta;
  }

  out.log_prior = log_prior(params, dl, hyper);
  add_grad_log_prior(params, dl, hyper, out.grad);
  if (!std::isfinite(out.log_prior) || !out.grad.all_finite()) {
    throw NumericError("non-finite log-prior or gradient");
  }
  return out;
}

}  // namespace sufa
