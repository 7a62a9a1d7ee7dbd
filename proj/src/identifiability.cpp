#include "sufa/identifiability.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sufa/error.hpp"
#include "sufa/random.hpp"

namespace sufa {

bool check_dimension_condition(int q, const std::vector<int>& q_s) {
  return std::accumulate(q_s.begin(), q_s.end(), 0) <= q;
}

int numerical_rank(const MatrixXd& a, double tol) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const VectorXd& s = svd.singularValues();
  if (!(s(0) > 0.0)) return 0;
  return static_cast<int>((s.array() > tol * s(0)).count());
}

namespace {

MatrixXd orthonormal_basis(const MatrixXd& a, double tol) {
  if (a.cols() == 0) return MatrixXd(a.rows(), 0);
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU);
  const int r = numerical_rank(a, tol);
  return svd.matrixU().leftCols(r);
}

void check_list(const std::vector<MatrixXd>& a) {
  if (a.empty()) throw InputError("need at least one study matrix");
  for (std::size_t s = 1; s < a.size(); ++s) {
    if (a[s].rows() != a[0].rows()) {
      throw InputError("A[" + std::to_string(s) + "] has " + std::to_string(a[s].rows()) +
                       " rows, expected " + std::to_string(a[0].rows()));
    }
  }
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (!a[s].allFinite()) throw InputError("A[" + std::to_string(s) + "] is not finite");
  }
}

}  // namespace

int column_space_intersection_dim(const std::vector<MatrixXd>& a, double tol) {
  check_list(a);
  MatrixXd basis = orthonormal_basis(a[0], tol);
  for (std::size_t s = 1; s < a.size() && basis.cols() > 0; ++s) {
    const MatrixXd other = orthonormal_basis(a[s], tol);
    if (other.cols() == 0) return 0;
    Eigen::JacobiSVD<MatrixXd> svd(basis.transpose() * other, Eigen::ComputeThinU);
    const VectorXd& cosines = svd.singularValues();
    const auto shared = static_cast<Eigen::Index>((cosines.array() > 1.0 - tol).count());
    basis = basis * svd.matrixU().leftCols(shared);
  }
  return static_cast<int>(basis.cols());
}

SwitchingReport detect_information_switching(const std::vector<MatrixXd>& a, double tol) {
  check_list(a);
  SwitchingReport r;
  r.intersection_dim = column_space_intersection_dim(a, tol);
  r.all_rank_deficient = true;
  for (const auto& m : a) {
    r.ranks.push_back(numerical_rank(m, tol));
    r.q_s.push_back(static_cast<int>(m.cols()));
    if (r.ranks.back() >= r.q_s.back()) r.all_rank_deficient = false;
  }
  r.switching = r.intersection_dim > 0 || r.all_rank_deficient;
  return r;
}

int rank_upper_bound(int d) {
  if (d < 1) throw ConfigError("rank bound needs d >= 1");
  const double b = (2.0 * d - std::sqrt(8.0 * d + 1.0)) / 2.0;
  return std::max(0, static_cast<int>(std::ceil(b)) - 1);
}

SvdResult partial_svd(const MatrixXd& x, int k) {
  const auto n = x.rows();
  const auto d = x.cols();
  const auto m = std::min(n, d);
  if (k < 1 || k > m) {
    throw InputError("partial SVD rank " + std::to_string(k) + " must lie in [1, " +
                     std::to_string(m) + "]");
  }
  if (!x.allFinite()) throw InputError("partial SVD input is not finite");

  const Eigen::Index l = std::min<Eigen::Index>(k + 10, m);
  Rng rng(0x5eed5eedULL);
  auto orth = [](const MatrixXd& y) {
    Eigen::HouseholderQR<MatrixXd> qr(y);
    return MatrixXd(qr.householderQ() * MatrixXd::Identity(y.rows(), y.cols()));
  };

  MatrixXd q = orth(x * standard_normal_matrix(d, l, rng));
  VectorXd prev = VectorXd::Zero(k);
  constexpr int kMinPasses = 2;
  constexpr int kMaxPasses = 500;
  Eigen::JacobiSVD<MatrixXd> small;
  for (int pass = 0;; ++pass) {
    const MatrixXd z = orth(x.transpose() * q);
    q = orth(x * z);
    small.compute(q.transpose() * x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd cur = small.singularValues().head(k);
    const double scale = std::max(cur(0), std::numeric_limits<double>::min());
    const bool settled = (cur - prev).cwiseAbs().maxCoeff() <= 1e-14 * scale;
    prev = cur;
    if (l == m) break;  // full subspace: exact after one pass
    if (pass + 1 >= kMinPasses && settled) break;
    if (pass + 1 >= kMaxPasses) break;
  }
  SvdResult out;
  out.values = small.singularValues().head(k);
  out.u = q * small.matrixU().leftCols(k);
  out.v = small.matrixV().leftCols(k);
  return out;
}

std::vector<int> default_study_dims(int q, int num_studies) {
  if (num_studies < 1) throw ConfigError("need at least one study");
  if (q < 0) throw ConfigError("q must be non-negative");
  std::vector<int> q_s(num_studies, std::max(1, q / num_studies));
  if (std::accumulate(q_s.begin(), q_s.end(), 0) > q) {
    // More studies than shared factors: one each until q runs out.
    for (int s = 0; s < num_studies; ++s) q_s[s] = s < q ? 1 : 0;
  }
  return q_s;
}

RankSelection select_num_factors(const MatrixXd& pooled, double threshold, int num_studies) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("variance threshold must lie in (0, 1]");
  }
  if (pooled.rows() < 1 || pooled.cols() < 1) throw InputError("empty data matrix");
  if (!pooled.allFinite()) throw InputError("data matrix is not finite");
  const double total = pooled.squaredNorm();
  if (!(total > 0.0)) throw InputError("data matrix is identically zero");

  RankSelection r;
  r.cap = rank_upper_bound(static_cast<int>(pooled.cols()));
  if (r.cap < 1) {
    throw InputError("d = " + std::to_string(pooled.cols()) + " admits no identifiable factor");
  }
  const int k = static_cast<int>(std::min<Eigen::Index>(
      r.cap, std::min(pooled.rows(), pooled.cols())));
  const SvdResult svd = partial_svd(pooled, k);
  constexpr double kRankTol = 1e-12;
  r.numerical_rank = static_cast<int>((svd.values.array() > kRankTol * svd.values(0)).count());

  r.explained.resize(k);
  double cum = 0.0;
  r.q = std::min(k, r.numerical_rank);
  bool hit = false;
  for (int i = 0; i < k; ++i) {
    cum += svd.values(i) * svd.values(i);
    r.explained(i) = cum / total;
    if (!hit && r.explained(i) >= threshold * (1.0 - 1e-12)) {
      r.q = std::min(i + 1, r.q);
      hit = true;
    }
  }
  r.q = std::max(r.q, 1);
  r.q_s = default_study_dims(r.q, num_studies);
  if (!check_dimension_condition(r.q, r.q_s)) {
    throw NumericError("selected study dimensions violate sum(q_s) <= q");
  }
  return r;
}

}  // namespace sufa
