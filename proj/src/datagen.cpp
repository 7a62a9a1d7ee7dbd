#include "sufa/datagen.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "sufa/error.hpp"
#include "sufa/identifiability.hpp"

namespace sufa {

Scenario parse_scenario(const std::string& name) {
  if (name == "FM1" || name == "fm1") return Scenario::kFm1;
  if (name == "FM2" || name == "fm2") return Scenario::kFm2;
  if (name == "FM3" || name == "fm3") return Scenario::kFm3;
  throw ConfigError("unknown scenario '" + name + "' (expected FM1, FM2 or FM3)");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::kFm1: return "FM1";
    case Scenario::kFm2: return "FM2";
    case Scenario::kFm3: return "FM3";
  }
  return "?";
}

Misspecification parse_misspecification(const std::string& name) {
  if (name == "slight") return Misspecification::kSlight;
  if (name == "complete") return Misspecification::kComplete;
  throw ConfigError("unknown misspecification '" + name + "' (expected slight or complete)");
}

namespace {

double nonzero_uniform(Rng& rng) {
  // Unif(-2, 2) without the measure-zero value 0.
  for (;;) {
    const double v = 4.0 * open_uniform(rng) - 2.0;
    if (v != 0.0) return v;
  }
}

int uniform_int(int lo, int hi, Rng& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Fill `len` consecutive rows of [begin, end) starting at a random offset.
void fill_run(MatrixXd& m, int col, int begin, int end, int len, Rng& rng) {
  const int span = end - begin;
  len = std::min(len, span);
  const int start = begin + uniform_int(0, span - len, rng);
  for (int j = start; j < start + len; ++j) m(j, col) = nonzero_uniform(rng);
}

}  // namespace

MatrixXd gen_shared_loading(Scenario scenario, int d, int q, Rng& rng) {
  if (d < 20) throw InputError("shared loading generator needs d >= 20 (got " + std::to_string(d) + ")");
  if (q < 1) throw InputError("shared loading generator needs q >= 1");
  MatrixXd m = MatrixXd::Zero(d, q);
  const int quarter = static_cast<int>(std::lround(0.25 * d));
  for (int h = 0; h < q; ++h) {
    switch (scenario) {
      case Scenario::kFm1:
        fill_run(m, h, 0, d, quarter, rng);
        break;
      case Scenario::kFm2: {
        const int half = d / 2;
        fill_run(m, h, 0, half, static_cast<int>(std::lround(0.25 * half)), rng);
        fill_run(m, h, half, d, static_cast<int>(std::lround(0.25 * (d - half))), rng);
        break;
      }
      case Scenario::kFm3: {
        std::vector<int> rows(d);
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        for (int i = 0; i < quarter; ++i) m(rows[i], h) = nonzero_uniform(rng);
        break;
      }
    }
  }
  const int repair = std::min(5, q);
  for (int j = 0; j < d; ++j) {
    if ((m.row(j).array() != 0.0).any()) continue;
    std::vector<int> cols(q);
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    for (int i = 0; i < repair; ++i) m(j, cols[i]) = nonzero_uniform(rng);
  }
  return m;
}

std::vector<MatrixXd> gen_study_loadings(Misspecification mode, const MatrixXd& lambda,
                                         const std::vector<int>& q_s, Rng& rng,
                                         const StudyLoadingOptions& options) {
  const auto d = lambda.rows();
  const auto q = lambda.cols();
  std::vector<MatrixXd> phi;
  for (int qs : q_s) {
    if (qs < 0) throw InputError("negative study dimension");
  }
  if (mode == Misspecification::kSlight) {
    for (int qs : q_s) {
      const MatrixXd a = options.a_sd * standard_normal_matrix(q, qs, rng);
      phi.push_back(lambda * a + options.error_sd * standard_normal_matrix(d, qs, rng));
    }
    return phi;
  }

  const int total = std::accumulate(q_s.begin(), q_s.end(), 0);
  Eigen::JacobiSVD<MatrixXd> svd(lambda, Eigen::ComputeFullU);
  const int r = numerical_rank(lambda, 1e-12);
  const int null_dim = static_cast<int>(d) - r;
  if (total > null_dim) {
    throw InputError("complete misspecification needs sum(q_s) = " + std::to_string(total) +
                     " <= d - rank(Lambda) = " + std::to_string(null_dim));
  }
  MatrixXd basis = svd.matrixU().rightCols(null_dim);
  // A random rotation inside the null space, so the blocks are not tied to
  // the SVD's ordering.
  if (null_dim > 0) {
    Eigen::HouseholderQR<MatrixXd> qr(standard_normal_matrix(null_dim, null_dim, rng));
    const MatrixXd rot = qr.householderQ();
    basis = basis * rot;
  }
  double c = 1.0;
  if (options.scale) {
    std::vector<double> ms(q);
    for (Eigen::Index h = 0; h < q; ++h) ms[h] = lambda.col(h).squaredNorm() / static_cast<double>(d);
    std::sort(ms.begin(), ms.end());
    const std::size_t m = ms.size();
    const double med = m % 2 == 1 ? ms[m / 2] : 0.5 * (ms[m / 2 - 1] + ms[m / 2]);
    // Unit-norm columns have mean square 1/d.
    c = std::sqrt(med * static_cast<double>(d));
  }
  int pos = 0;
  for (int qs : q_s) {
    phi.push_back(c * basis.middleCols(pos, qs));
    pos += qs;
  }
  return phi;
}

std::vector<MatrixXd> simulate_msfa(const MatrixXd& lambda, const std::vector<MatrixXd>& phi,
                                    double delta, const std::vector<std::int64_t>& n_s, Rng& rng) {
  if (phi.size() != n_s.size()) throw DimensionError("one Phi_s and one n_s per study required");
  if (!(delta > 0.0)) throw DomainError("idiosyncratic variance must be positive");
  const auto d = lambda.rows();
  const double sd = std::sqrt(delta);
  std::vector<MatrixXd> out;
  for (std::size_t s = 0; s < phi.size(); ++s) {
    if (phi[s].rows() != d) throw DimensionError("Phi_" + std::to_string(s) + " has the wrong row count");
    if (n_s[s] < 0) throw DomainError("negative sample size");
    const auto n = static_cast<Eigen::Index>(n_s[s]);
    MatrixXd y = standard_normal_matrix(n, lambda.cols(), rng) * lambda.transpose();
    if (phi[s].cols() > 0) y.noalias() += standard_normal_matrix(n, phi[s].cols(), rng) * phi[s].transpose();
    y += sd * standard_normal_matrix(n, d, rng);
    out.push_back(std::move(y));
  }
  return out;
}

Design sample_design(int d, int num_studies, int q, Rng& rng) {
  if (d < 1 || num_studies < 1 || q < 1) throw ConfigError("design needs d, S, q >= 1");
  Design out;
  const double n_mean = static_cast<double>(d) / num_studies;
  const auto n_floor = static_cast<std::int64_t>(std::ceil(n_mean));
  std::poisson_distribution<std::int64_t> pn(n_mean);
  for (int s = 0; s < num_studies; ++s) out.n_s.push_back(std::max(pn(rng), n_floor));
  std::poisson_distribution<int> pq(static_cast<double>(q) / num_studies);
  do {
    out.q_s.clear();
    for (int s = 0; s < num_studies; ++s) out.q_s.push_back(pq(rng));
  } while (std::accumulate(out.q_s.begin(), out.q_s.end(), 0) < 1);
  return out;
}

MatrixXd true_study_covariance(const MatrixXd& lambda, const MatrixXd& phi, double delta) {
  MatrixXd s = lambda * lambda.transpose();
  if (phi.cols() > 0) s.noalias() += phi * phi.transpose();
  s.diagonal().array() += delta;
  return s;
}

}  // namespace sufa
