#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "sufa/error.hpp"
#include "sufa/postprocess.hpp"

using namespace sufa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Variance of squared loadings per column, summed; written out directly.
double criterion_oracle(const MatrixXd& l) {
  double out = 0.0;
  const double d = static_cast<double>(l.rows());
  for (Eigen::Index h = 0; h < l.cols(); ++h) {
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index j = 0; j < l.rows(); ++j) {
      const double v = l(j, h) * l(j, h);
      m1 += v;
      m2 += v * v;
    }
    out += m2 / d - (m1 / d) * (m1 / d);
  }
  return out;
}

MatrixXd rotation2(double t) {
  MatrixXd r(2, 2);
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return r;
}

MatrixXd random_orthogonal(int q, std::mt19937_64& g) {
  return Eigen::HouseholderQR<MatrixXd>(oracle::gaussian(q, q, g)).householderQ();
}

MatrixXd signed_permutation(const std::vector<int>& perm, const std::vector<double>& sign) {
  const int q = static_cast<int>(perm.size());
  MatrixXd p = MatrixXd::Zero(q, q);
  for (int h = 0; h < q; ++h) p(perm[h], h) = sign[h];
  return p;
}

// A loading matrix with clear simple structure.
MatrixXd block_loadings(int d, int q, std::mt19937_64& g) {
  MatrixXd l = MatrixXd::Zero(d, q);
  const int block = d / q;
  for (int h = 0; h < q; ++h)
    for (int j = h * block; j < (h + 1) * block; ++j) l(j, h) = 1.0 + std::abs(oracle::gaussian(1, 1, g)(0));
  return l;
}

bool is_orthogonal(const MatrixXd& h, double tol) {
  return (h.transpose() * h - MatrixXd::Identity(h.cols(), h.cols())).cwiseAbs().maxCoeff() <= tol;
}

bool is_signed_permutation(const MatrixXd& p) {
  for (Eigen::Index h = 0; h < p.cols(); ++h) {
    int nz = 0;
    for (Eigen::Index j = 0; j < p.rows(); ++j) {
      if (p(j, h) != 0.0) {
        if (std::abs(p(j, h)) != 1.0) return false;
        ++nz;
      }
    }
    if (nz != 1) return false;
  }
  return is_orthogonal(p, 0.0);
}

// OLS with intercept through the normal equations.
double r2_oracle(const VectorXd& y, const MatrixXd& x) {
  MatrixXd design(x.rows(), x.cols() + 1);
  design << VectorXd::Ones(x.rows()), x;
  const VectorXd beta = (design.transpose() * design).ldlt().solve(design.transpose() * y);
  const VectorXd resid = y - design * beta;
  const double mean = y.mean();
  return 1.0 - resid.squaredNorm() / (y.array() - mean).square().sum();
}

}  // namespace

TEST_CASE("varimax criterion") {
  std::mt19937_64 g(1);
  const MatrixXd l = oracle::gaussian(9, 3, g);
  CHECK(varimax_criterion(l) == doctest::Approx(criterion_oracle(l)).epsilon(1e-13));
  CHECK(varimax_criterion(MatrixXd::Identity(2, 2)) == doctest::Approx(0.5));
}

TEST_CASE("varimax of the identity") {
  const VarimaxResult r = varimax(MatrixXd::Identity(2, 2));
  CHECK(is_orthogonal(r.rotation, 1e-12));
  CHECK(r.criterion == doctest::Approx(0.5).epsilon(1e-12));
  // Equal up to column order and sign.
  const MatrixXd abs = r.rotated.cwiseAbs();
  CHECK(((abs - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12 ||
         (abs - MatrixXd::Identity(2, 2).rowwise().reverse()).cwiseAbs().maxCoeff() <= 1e-12));
}

TEST_CASE("varimax matches a brute-force angle search when q = 2") {
  std::mt19937_64 g(2);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd l = oracle::gaussian(8, 2, g);
    double best = -1.0;
    for (double th = 0.0; th < std::numbers::pi / 2; th += 1e-4) {
      best = std::max(best, criterion_oracle(l * rotation2(th)));
    }
    const VarimaxResult r = varimax(l);
    CHECK(std::abs(r.criterion - best) <= 1e-6);
    CHECK(r.criterion >= best - 1e-12);
    CHECK(criterion_oracle(r.rotated) == doctest::Approx(r.criterion).epsilon(1e-12));
  }
}

TEST_CASE("varimax ascent and orthogonality") {
  std::mt19937_64 g(3);
  for (int t = 0; t < 100; ++t) {
    const int d = 4 + t % 20, q = 1 + t % 5;
    const MatrixXd l = oracle::gaussian(d, q, g);
    const VarimaxResult r = varimax(l);
    CHECK(r.criterion >= varimax_criterion(l) - 1e-12);
    CHECK(is_orthogonal(r.rotation, 1e-10));
    CHECK((l * r.rotation - r.rotated).cwiseAbs().maxCoeff() <= 1e-12 * (1 + l.cwiseAbs().maxCoeff()));
  }
  // Recovers simple structure hidden by a rotation.
  const MatrixXd block = block_loadings(12, 3, g);
  const VarimaxResult r = varimax(block * random_orthogonal(3, g));
  CHECK(r.criterion == doctest::Approx(varimax_criterion(block)).epsilon(1e-8));
  MatrixXd bad = MatrixXd::Ones(3, 2);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(varimax(bad), DomainError);
}

TEST_CASE("matching") {
  std::mt19937_64 g(4);
  const MatrixXd pivot = block_loadings(12, 4, g);
  SUBCASE("repeated pivot is left alone") {
    const AlignedDraws a = match_align({pivot, pivot, pivot}, pivot);
    for (int i = 0; i < 3; ++i) {
      CHECK((a.loadings[i] - pivot).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((a.transforms[i] - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK(a.pivot_index == -1);
  }
  SUBCASE("a signed permutation is undone") {
    const MatrixXd p = signed_permutation({2, 0, 3, 1}, {-1, 1, -1, 1});
    for (MatchMode mode : {MatchMode::kGreedy, MatchMode::kOptimal}) {
      const AlignedDraws a = match_align({pivot * p}, pivot, mode);
      CHECK((a.loadings[0] - pivot).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((p * a.transforms[0] - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("match_columns returns a signed permutation") {
    for (int t = 0; t < 30; ++t) {
      const MatrixXd x = oracle::gaussian(12, 4, g);
      for (MatchMode mode : {MatchMode::kGreedy, MatchMode::kOptimal}) {
        const MatrixXd p = match_columns(x, pivot, mode);
        CHECK(is_signed_permutation(p));
        // Every matched column points the same way as its pivot column.
        const MatrixXd m = x * p;
        for (int h = 0; h < 4; ++h) CHECK(m.col(h).dot(pivot.col(h)) >= 0.0);
      }
    }
  }
  SUBCASE("optimal never scores below greedy") {
    for (int t = 0; t < 50; ++t) {
      const MatrixXd x = oracle::gaussian(12, 4, g);
      auto score = [&](const MatrixXd& p) { return (x * p).cwiseProduct(pivot).sum(); };
      CHECK(score(match_columns(x, pivot, MatchMode::kOptimal)) >=
            score(match_columns(x, pivot, MatchMode::kGreedy)) - 1e-12);
    }
  }
  SUBCASE("greedy takes the largest inner product first") {
    MatrixXd piv(3, 2), x(3, 2);
    piv << 1, 0, 0, 1, 0, 0;
    // Greedy pairs x0 with pivot 0 (0.9) and is left with 0.05; the optimal
    // assignment crosses over for 0.8 + 0.85.
    x << 0.9, 0.85, 0.8, 0.05, 0.0, 0.3;
    const MatrixXd p = match_columns(x, piv, MatchMode::kGreedy);
    CHECK(p(0, 0) == 1.0);
    CHECK(p(1, 1) == 1.0);
    const MatrixXd o = match_columns(x, piv, MatchMode::kOptimal);
    CHECK(o(0, 1) == 1.0);
    CHECK(o(1, 0) == 1.0);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(match_align({MatrixXd::Ones(5, 4)}, pivot), InputError);
  }
  SUBCASE("transforms are orthogonal and reproduce the aligned draws") {
    std::vector<MatrixXd> draws;
    for (int i = 0; i < 20; ++i) draws.push_back(pivot * random_orthogonal(4, g) + oracle::gaussian(12, 4, g, 0.05));
    const AlignedDraws a = align_draws(draws);
    for (int i = 0; i < 20; ++i) {
      CHECK(is_orthogonal(a.transforms[i], 1e-10));
      CHECK((draws[i] * a.transforms[i] - a.loadings[i]).cwiseAbs().maxCoeff() <= 1e-10);
      // Simple structure is recovered up to noise.
      CHECK((a.loadings[i] - a.pivot).norm() <= 0.25 * a.pivot.norm());
    }
  }
}

TEST_CASE("alignment ignores a common signed permutation of the draws") {
  std::mt19937_64 g(5);
  const MatrixXd base = block_loadings(15, 3, g);
  std::vector<MatrixXd> draws, permuted;
  const MatrixXd p = signed_permutation({1, 2, 0}, {1, -1, -1});
  for (int i = 0; i < 15; ++i) {
    draws.push_back(base * random_orthogonal(3, g) + oracle::gaussian(15, 3, g, 0.1));
    permuted.push_back(draws.back() * p);
  }
  const AlignedDraws a = align_draws(draws);
  const AlignedDraws b = align_draws(permuted);
  CHECK(a.pivot_index == b.pivot_index);
  for (int i = 0; i < 15; ++i) CHECK(a.loadings[i] == b.loadings[i]);
}

TEST_CASE("pivot choice") {
  std::mt19937_64 g(6);
  const MatrixXd one = oracle::gaussian(6, 2, g);
  CHECK(choose_pivot({one}).index == 0);
  const MatrixXd piv = choose_pivot({one}).pivot;
  CHECK((piv * piv.transpose() - one * one.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(choose_pivot({one, one, one}).index == 0);

  // Seven draws near one structure and three near another; the pivot comes
  // from the larger group.
  const MatrixXd c1 = block_loadings(10, 2, g);
  const MatrixXd c2 = 3.0 * oracle::gaussian(10, 2, g);
  std::vector<MatrixXd> draws;
  std::vector<int> group;
  for (int i = 0; i < 10; ++i) {
    const bool big = (i % 10) < 7;
    draws.push_back((big ? c1 : c2) + oracle::gaussian(10, 2, g, 0.05));
    group.push_back(big ? 1 : 2);
  }
  std::shuffle(draws.begin(), draws.end(), g);
  const PivotChoice pc = choose_pivot(draws);
  CHECK((draws[pc.index] - c1).norm() < (draws[pc.index] - c2).norm());
  CHECK(is_orthogonal(varimax(draws[pc.index]).rotation, 1e-10));
  CHECK_THROWS_AS(choose_pivot({}), InputError);
}

TEST_CASE("quantiles") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
  CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
  CHECK(quantile({10, 20}, 0.25) == doctest::Approx(12.5));
  CHECK(quantile({7}, 0.3) == 7.0);
}

TEST_CASE("credible-interval sparsification") {
  std::mt19937_64 g(7);
  SUBCASE("positive entries keep the mean") {
    std::vector<MatrixXd> draws;
    for (int i = 0; i < 50; ++i) draws.push_back(MatrixXd::Constant(2, 2, 1.0 + 0.01 * i));
    const MatrixXd s = sparsify_by_ci(draws);
    CHECK((s - elementwise_mean(draws)).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s(0, 0) == doctest::Approx(1.245));
  }
  SUBCASE("symmetric draws are zeroed") {
    std::vector<MatrixXd> draws;
    for (int i = -25; i <= 25; ++i) draws.push_back(MatrixXd::Constant(1, 1, 0.1 * i));
    CHECK(sparsify_by_ci(draws)(0, 0) == 0.0);
  }
  SUBCASE("N(0.1, 1) with 1000 draws") {
    std::vector<MatrixXd> draws;
    std::normal_distribution<double> n(0.1, 1.0);
    std::vector<double> v;
    for (int i = 0; i < 1000; ++i) {
      v.push_back(n(g));
      draws.push_back(MatrixXd::Constant(1, 1, v.back()));
    }
    std::sort(v.begin(), v.end());
    CHECK(v[25] < 0.0);
    CHECK(v[974] > 0.0);
    CHECK(sparsify_by_ci(draws, 0.95)(0, 0) == 0.0);
  }
  SUBCASE("limits in the level") {
    std::vector<MatrixXd> draws;
    for (int i = 0; i < 40; ++i) draws.push_back(oracle::gaussian(3, 2, g) + MatrixXd::Constant(3, 2, 0.3));
    const MatrixXd mean = elementwise_mean(draws);
    CHECK((sparsify_by_ci(draws, 1e-9) - mean).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(sparsify_by_ci(draws, 1.0 - 1e-9).isZero(0.0));
  }
  SUBCASE("bad input") {
    std::vector<MatrixXd> few(19, MatrixXd::Ones(2, 2));
    CHECK_THROWS_AS(sparsify_by_ci(few), InputError);
    std::vector<MatrixXd> ok(20, MatrixXd::Ones(2, 2));
    CHECK_THROWS_AS(sparsify_by_ci(ok, 0.0), ConfigError);
    CHECK_THROWS_AS(sparsify_by_ci(ok, 1.0), ConfigError);
  }
}

TEST_CASE("study-specific loadings") {
  ParamSet p;
  p.lambda.resize(5, 3);
  p.lambda << 7, 5, 6, 6, 6, 7, 6, 9, 4, 5, 5, 6, 4, 6, 6;
  p.log_delta = VectorXd::Zero(5);
  MatrixXd a1(3, 2);
  a1 << 3, 0, 0, 2, 0, 0;
  p.a = {a1, MatrixXd::Zero(3, 1), MatrixXd::Identity(3, 3)};
  MatrixXd b1(5, 2);
  b1 << 21, 10, 18, 12, 18, 18, 15, 10, 12, 12;
  CHECK(study_specific_loadings({p}, 0)[0] == b1);
  CHECK(study_specific_loadings({p}, 1)[0].isZero(0.0));
  CHECK(study_specific_loadings({p}, 2)[0] == p.lambda);
}

TEST_CASE("aligning full draws keeps every covariance") {
  std::mt19937_64 g(8);
  std::vector<ParamSet> draws;
  for (int i = 0; i < 25; ++i) {
    ParamSet p = oracle::random_params(10, 3, {1, 2}, g);
    p.lambda = block_loadings(10, 3, g) * random_orthogonal(3, g);
    draws.push_back(p);
  }
  const AlignedParams al = align_params(draws);
  REQUIRE(al.draws.size() == 25);
  REQUIRE(al.studies.size() == 2);
  for (int i = 0; i < 25; ++i) {
    const double scale = marginal_covariance(draws[i], 0).cwiseAbs().maxCoeff();
    for (int s = 0; s < 2; ++s) {
      CHECK((marginal_covariance(al.draws[i], s) - marginal_covariance(draws[i], s)).cwiseAbs().maxCoeff() <=
            1e-10 * scale);
      CHECK((al.draws[i].lambda * al.draws[i].a[s] - al.studies[s].loadings[i]).cwiseAbs().maxCoeff() <=
            1e-10 * scale);
    }
    CHECK((shared_covariance(al.draws[i]) - shared_covariance(draws[i])).cwiseAbs().maxCoeff() <= 1e-10 * scale);
  }
  CHECK((posterior_shared_covariance(al.draws) - posterior_shared_covariance(draws)).cwiseAbs().maxCoeff() <=
        1e-10 * posterior_shared_covariance(draws).cwiseAbs().maxCoeff());
}

TEST_CASE("posterior covariance summaries") {
  std::mt19937_64 g(9);
  std::vector<ParamSet> draws;
  MatrixXd sum = MatrixXd::Zero(6, 6), sum_s = MatrixXd::Zero(6, 6);
  for (int i = 0; i < 7; ++i) {
    draws.push_back(oracle::random_params(6, 2, {1}, g));
    MatrixXd sh = draws.back().lambda * draws.back().lambda.transpose();
    sh.diagonal() += draws.back().log_delta.array().exp().matrix();
    sum += sh;
    sum_s += oracle::dense_sigma(draws.back(), 0);
  }
  CHECK((posterior_shared_covariance(draws) - sum / 7).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((posterior_study_covariance(draws, 0) - sum_s / 7).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("WBIC") {
  std::mt19937_64 g(10);
  const ParamSet p = oracle::random_params(5, 2, {1}, g);
  const std::vector<StudySummary> st{sufficient_stats(oracle::gaussian(40, 5, g))};
  const double beta = 1.0 / std::log(40.0);
  const double ll = oracle::loglik_from_w(p, st);
  CHECK(oracle::rel_err(wbic({p, p, p}, beta, st), -ll) <= 1e-10);

  std::vector<ParamSet> draws;
  for (int i = 0; i < 9; ++i) draws.push_back(oracle::random_params(5, 2, {1}, g));
  double mean = 0.0;
  for (const auto& d : draws) mean += oracle::loglik_from_w(d, st) / 9.0;
  const double w = wbic(draws, beta, st);
  CHECK(oracle::rel_err(w, -mean) <= 1e-10);
  std::reverse(draws.begin(), draws.end());
  CHECK(wbic(draws, beta, st) == w);
  std::shuffle(draws.begin(), draws.end(), g);
  CHECK(wbic(draws, beta, st) == w);

  CHECK_THROWS_AS(wbic(draws, 1.0, st), ConfigError);
  CHECK_THROWS_AS(wbic(std::vector<ParamSet>{}, beta, st), InputError);

  McmcOutput chain;
  chain.draws = draws;
  chain.beta = beta;
  CHECK(wbic(chain, st) == w);
}

TEST_CASE("alignment R^2") {
  std::mt19937_64 g(11);
  const MatrixXd l = oracle::gaussian(30, 3, g);
  CHECK(alignment_r2(l, l) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(alignment_r2(l, l * random_orthogonal(3, g)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(alignment_r2(l, l * (oracle::random_spd(3, g))) == doctest::Approx(1.0).epsilon(1e-10));

  const MatrixXd est = oracle::gaussian(30, 3, g);
  std::vector<double> r2;
  for (int h = 0; h < 3; ++h) r2.push_back(r2_oracle(l.col(h), est));
  std::sort(r2.begin(), r2.end());
  CHECK(alignment_r2(l, est) == doctest::Approx(r2[1]).epsilon(1e-10));

  // Independent predictors explain about q / d of the variance.
  double avg = 0.0;
  for (int t = 0; t < 200; ++t) avg += alignment_r2(oracle::gaussian(200, 2, g), oracle::gaussian(200, 4, g)) / 200;
  CHECK(avg == doctest::Approx(4.0 / 199.0).epsilon(0.15));
  CHECK_THROWS_AS(alignment_r2(l, MatrixXd::Ones(29, 3)), DimensionError);
}

TEST_CASE("Frobenius error") {
  std::mt19937_64 g(12);
  const MatrixXd s = oracle::random_spd(4, g);
  CHECK(frobenius_error(s, s) == 0.0);
  CHECK(frobenius_error(s, s + MatrixXd::Identity(4, 4)) == doctest::Approx(2.0).epsilon(1e-14));
  const MatrixXd t = oracle::random_spd(4, g);
  double sq = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) sq += (s(i, j) - t(i, j)) * (s(i, j) - t(i, j));
  CHECK(frobenius_error(s, t) == doctest::Approx(std::sqrt(sq)).epsilon(1e-14));
}
