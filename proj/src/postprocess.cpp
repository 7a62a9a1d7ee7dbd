#include "sufa/postprocess.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sufa/error.hpp"

namespace sufa {

double varimax_criterion(const MatrixXd& loadings) {
  const double d = static_cast<double>(loadings.rows());
  const Eigen::ArrayXXd sq = loadings.array().square();
  double total = 0.0;
  for (Eigen::Index h = 0; h < sq.cols(); ++h) {
    const double m2 = sq.col(h).sum() / d;
    const double m4 = sq.col(h).square().sum() / d;
    total += m4 - m2 * m2;
  }
  return total;
}

VarimaxResult varimax(const MatrixXd& loadings, double tol, int max_sweeps) {
  if (loadings.cols() < 1) throw DomainError("varimax needs at least one column");
  if (!loadings.allFinite()) throw DomainError("varimax input is not finite");
  const auto q = loadings.cols();
  const double d = static_cast<double>(loadings.rows());
  VarimaxResult r;
  r.rotated = loadings;
  r.rotation = MatrixXd::Identity(q, q);
  r.criterion = varimax_criterion(loadings);
  if (q == 1) return r;

  for (r.sweeps = 0; r.sweeps < max_sweeps;) {
    ++r.sweeps;
    for (Eigen::Index i = 0; i + 1 < q; ++i) {
      for (Eigen::Index k = i + 1; k < q; ++k) {
        const Eigen::ArrayXd x = r.rotated.col(i).array();
        const Eigen::ArrayXd y = r.rotated.col(k).array();
        const Eigen::ArrayXd u = x.square() - y.square();
        const Eigen::ArrayXd v = 2.0 * x * y;
        const double a = u.sum();
        const double b = v.sum();
        const double c = (u.square() - v.square()).sum();
        const double dd = 2.0 * (u * v).sum();
        const double angle = 0.25 * std::atan2(dd - 2.0 * a * b / d, c - (a * a - b * b) / d);
        if (angle == 0.0) continue;
        const double cs = std::cos(angle);
        const double sn = std::sin(angle);
        // Columns (i, k) <- (x c + y s, -x s + y c); same on the rotation.
        auto rotate = [&](MatrixXd& m) {
          const VectorXd ci = m.col(i);
          const VectorXd ck = m.col(k);
          m.col(i) = cs * ci + sn * ck;
          m.col(k) = -sn * ci + cs * ck;
        };
        rotate(r.rotated);
        rotate(r.rotation);
      }
    }
    const double crit = varimax_criterion(r.rotated);
    const double gain = crit - r.criterion;
    r.criterion = std::max(crit, r.criterion);
    if (gain < tol * std::max(1.0, std::abs(crit))) break;
  }
  return r;
}

MatrixXd canonical_signed_permutation(const MatrixXd& loadings) {
  const auto q = loadings.cols();
  const VectorXd ss = loadings.colwise().squaredNorm();
  std::vector<Eigen::Index> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return ss(a) > ss(b); });
  MatrixXd p = MatrixXd::Zero(q, q);
  for (Eigen::Index h = 0; h < q; ++h) {
    const Eigen::Index src = order[h];
    Eigen::Index j = 0;
    if (loadings.rows() > 0) loadings.col(src).cwiseAbs().maxCoeff(&j);
    const double sign = loadings.rows() > 0 && loadings(j, src) < 0.0 ? -1.0 : 1.0;
    p(src, h) = sign;
  }
  return p;
}

namespace {

// Hungarian algorithm on a square cost matrix; returns assignment row -> col.
std::vector<int> min_cost_assignment(const MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n);
  for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

MatrixXd match_columns(const MatrixXd& rotated, const MatrixXd& pivot, MatchMode mode) {
  if (rotated.rows() != pivot.rows() || rotated.cols() != pivot.cols()) {
    throw InputError("draw and pivot shapes differ");
  }
  const auto q = rotated.cols();
  const MatrixXd m = rotated.transpose() * pivot;  // (draw col, pivot col)
  MatrixXd perm = MatrixXd::Zero(q, q);
  auto sign_of = [](double x) { return x < 0.0 ? -1.0 : 1.0; };

  if (mode == MatchMode::kOptimal) {
    const MatrixXd abs_m = m.cwiseAbs();
    const MatrixXd cost = MatrixXd::Constant(q, q, abs_m.maxCoeff()) - abs_m;
    const std::vector<int> assign = min_cost_assignment(cost);
    for (Eigen::Index i = 0; i < q; ++i) perm(i, assign[i]) = sign_of(m(i, assign[i]));
    return perm;
  }

  std::vector<char> row_used(q, 0), col_used(q, 0);
  for (Eigen::Index step = 0; step < q; ++step) {
    double best = -1.0;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < q; ++i) {
      if (row_used[i]) continue;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (col_used[j]) continue;
        const double v = std::abs(m(i, j));
        if (v > best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    row_used[bi] = col_used[bj] = 1;
    perm(bi, bj) = sign_of(m(bi, bj));
  }
  return perm;
}

AlignedDraws match_align(const std::vector<MatrixXd>& draws, const MatrixXd& pivot,
                         MatchMode mode) {
  AlignedDraws out;
  out.pivot = pivot;
  out.loadings.reserve(draws.size());
  out.transforms.reserve(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const MatrixXd& raw = draws[i];
    if (raw.rows() != pivot.rows() || raw.cols() != pivot.cols()) {
      throw InputError("draw " + std::to_string(i) + " is " + std::to_string(raw.rows()) + " x " +
                       std::to_string(raw.cols()) + ", pivot is " + std::to_string(pivot.rows()) +
                       " x " + std::to_string(pivot.cols()));
    }
    if (raw.cols() == 0) {
      out.loadings.push_back(raw);
      out.transforms.push_back(MatrixXd(0, 0));
      continue;
    }
    // Permuting and flipping columns is exact, so any signed permutation of
    // the input reaches the same canonical matrix bit for bit.
    const MatrixXd p0 = canonical_signed_permutation(raw);
    const MatrixXd canonical = raw * p0;
    const VarimaxResult vm = varimax(canonical);
    const MatrixXd p = match_columns(vm.rotated, pivot, mode);
    const MatrixXd hp = vm.rotation * p;
    out.loadings.push_back(canonical * hp);
    out.transforms.push_back(p0 * hp);
  }
  return out;
}

PivotChoice choose_pivot(const std::vector<MatrixXd>& draws) {
  if (draws.empty()) throw InputError("cannot choose a pivot from zero draws");
  const auto d = draws.front().rows();
  MatrixXd mean = MatrixXd::Zero(d, d);
  for (const auto& l : draws) {
    if (l.rows() != d || l.cols() != draws.front().cols()) {
      throw InputError("loading draws differ in shape");
    }
    mean.noalias() += l * l.transpose();
  }
  mean /= static_cast<double>(draws.size());
  std::vector<double> dist(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    dist[i] = (draws[i] * draws[i].transpose() - mean).norm();
  }
  std::vector<double> sorted = dist;
  const std::size_t mid = (sorted.size() - 1) / 2;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid), sorted.end());
  const double med = sorted[mid];
  PivotChoice c;
  c.index = static_cast<int>(std::find(dist.begin(), dist.end(), med) - dist.begin());
  const MatrixXd& chosen = draws[c.index];
  c.pivot = chosen.cols() > 0 ? varimax(chosen * canonical_signed_permutation(chosen)).rotated : chosen;
  return c;
}

AlignedDraws align_draws(const std::vector<MatrixXd>& draws, MatchMode mode) {
  const PivotChoice pc = choose_pivot(draws);
  AlignedDraws out = match_align(draws, pc.pivot, mode);
  out.pivot_index = pc.index;
  return out;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  if (!(prob >= 0.0 && prob <= 1.0)) throw DomainError("quantile probability outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MatrixXd elementwise_mean(const std::vector<MatrixXd>& draws) {
  if (draws.empty()) throw InputError("mean of zero draws");
  MatrixXd m = MatrixXd::Zero(draws.front().rows(), draws.front().cols());
  for (const auto& x : draws) {
    if (x.rows() != m.rows() || x.cols() != m.cols()) throw InputError("draws differ in shape");
    m += x;
  }
  return m / static_cast<double>(draws.size());
}

MatrixXd sparsify_by_ci(const std::vector<MatrixXd>& draws, double level) {
  constexpr std::size_t kMinDraws = 20;
  if (draws.size() < kMinDraws) {
    throw InputError("credible intervals need at least 20 draws (got " +
                     std::to_string(draws.size()) + ")");
  }
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("credible level must lie in (0, 1)");
  MatrixXd out = elementwise_mean(draws);
  const double lo_p = (1.0 - level) / 2.0;
  const double hi_p = 1.0 - lo_p;
  std::vector<double> v(draws.size());
  for (Eigen::Index h = 0; h < out.cols(); ++h) {
    for (Eigen::Index j = 0; j < out.rows(); ++j) {
      for (std::size_t i = 0; i < draws.size(); ++i) v[i] = draws[i](j, h);
      if (quantile(v, lo_p) <= 0.0 && quantile(v, hi_p) >= 0.0) out(j, h) = 0.0;
    }
  }
  return out;
}

std::vector<MatrixXd> study_specific_loadings(const std::vector<ParamSet>& draws, int study) {
  std::vector<MatrixXd> out;
  out.reserve(draws.size());
  for (const auto& p : draws) out.push_back(study_loadings(p, study));
  return out;
}

AlignedParams align_params(const std::vector<ParamSet>& draws, MatchMode mode) {
  if (draws.empty()) throw InputError("no draws to align");
  AlignedParams out;
  std::vector<MatrixXd> shared;
  shared.reserve(draws.size());
  for (const auto& p : draws) shared.push_back(p.lambda);
  out.shared = align_draws(shared, mode);

  const int num_studies = draws.front().num_studies();
  for (int s = 0; s < num_studies; ++s) {
    out.studies.push_back(align_draws(study_specific_loadings(draws, s), mode));
  }
  out.draws.reserve(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const MatrixXd& t = out.shared.transforms[i];
    ParamSet p;
    p.lambda = out.shared.loadings[i];
    p.log_delta = draws[i].log_delta;
    for (int s = 0; s < num_studies; ++s) {
      const MatrixXd& ts = out.studies[s].transforms[i];
      MatrixXd a = t.transpose() * draws[i].a[s];
      if (ts.size() > 0) a = a * ts;
      p.a.push_back(std::move(a));
    }
    out.draws.push_back(std::move(p));
  }
  return out;
}

MatrixXd posterior_shared_covariance(const std::vector<ParamSet>& draws) {
  if (draws.empty()) throw InputError("no draws");
  MatrixXd m = MatrixXd::Zero(draws.front().d(), draws.front().d());
  for (const auto& p : draws) m += shared_covariance(p);
  return m / static_cast<double>(draws.size());
}

MatrixXd posterior_study_covariance(const std::vector<ParamSet>& draws, int study) {
  if (draws.empty()) throw InputError("no draws");
  MatrixXd m = MatrixXd::Zero(draws.front().d(), draws.front().d());
  for (const auto& p : draws) m += marginal_covariance(p, study);
  return m / static_cast<double>(draws.size());
}

double wbic(const std::vector<ParamSet>& draws, double beta, std::span<const StudySummary> studies,
            TemperatureN mode) {
  if (draws.empty()) throw InputError("WBIC needs at least one draw");
  const double expected = wbic_temperature(studies, mode);
  if (std::abs(beta - expected) > 1e-12 * expected) {
    throw ConfigError("chain temperature " + std::to_string(beta) + " differs from 1/log(n) = " +
                      std::to_string(expected));
  }
  std::vector<double> ll;
  ll.reserve(draws.size());
  for (const auto& p : draws) ll.push_back(marginal_loglik(p, studies));
  // Summing in sorted order makes the result independent of draw order.
  std::sort(ll.begin(), ll.end());
  double sum = 0.0;
  for (double v : ll) sum += v;
  return -sum / static_cast<double>(ll.size());
}

double wbic(const McmcOutput& chain, std::span<const StudySummary> studies, TemperatureN mode) {
  return wbic(chain.draws, chain.beta, studies, mode);
}

double alignment_r2(const MatrixXd& truth, const MatrixXd& estimate) {
  if (truth.rows() != estimate.rows()) throw DimensionError("row counts differ");
  if (truth.cols() < 1) throw DimensionError("no columns to regress");
  const auto n = truth.rows();
  MatrixXd x(n, estimate.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(estimate.cols()) = estimate;
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  std::vector<double> r2;
  for (Eigen::Index h = 0; h < truth.cols(); ++h) {
    const VectorXd y = truth.col(h);
    const VectorXd resid = y - x * qr.solve(y);
    const double tss = (y.array() - y.mean()).square().sum();
    if (!(tss > 0.0)) throw DomainError("column " + std::to_string(h) + " of the truth is constant");
    r2.push_back(1.0 - resid.squaredNorm() / tss);
  }
  std::sort(r2.begin(), r2.end());
  const std::size_t m = r2.size();
  return m % 2 == 1 ? r2[m / 2] : 0.5 * (r2[m / 2 - 1] + r2[m / 2]);
}

double frobenius_error(const MatrixXd& truth, const MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != estimate.cols()) {
    throw DimensionError("covariance shapes differ");
  }
  return (truth - estimate).norm();
}

}  // namespace sufa
