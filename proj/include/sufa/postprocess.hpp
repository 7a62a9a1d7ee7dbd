#pragma once

// Posterior post-processing: rotation alignment of loading draws, credible
// interval sparsification, covariance summaries and model scores.

#include <span>
#include <vector>

#include "sufa/hmc.hpp"
#include "sufa/model.hpp"

namespace sufa {

/// Sum over columns of the variance (1/d normalization) of squared loadings.
double varimax_criterion(const MatrixXd& loadings);

struct VarimaxResult {
  MatrixXd rotated;   // loadings * rotation
  MatrixXd rotation;  // orthogonal q x q
  double criterion = 0.0;
  int sweeps = 0;
};

/// Kaiser's pairwise-rotation varimax without row normalization. Stops when
/// a full sweep gains less than tol (relative to max(1, criterion)).
VarimaxResult varimax(const MatrixXd& loadings, double tol = 1e-12, int max_sweeps = 1000);

enum class MatchMode {
  kGreedy,   // largest remaining |inner product| first
  kOptimal,  // assignment maximizing the summed |inner product|
};

struct AlignedDraws {
  std::vector<MatrixXd> loadings;    // aligned draws
  std::vector<MatrixXd> transforms;  // raw * transform = aligned
  MatrixXd pivot;
  int pivot_index = -1;  // -1 when the pivot was supplied by the caller
};

/// Orders columns by decreasing sum of squares and makes the largest-|.|
/// entry of each column positive. Returns the signed permutation P with
/// canonical = loadings * P.
MatrixXd canonical_signed_permutation(const MatrixXd& loadings);

/// Signed permutation P maximizing the match of rotated * P to the pivot.
MatrixXd match_columns(const MatrixXd& rotated, const MatrixXd& pivot, MatchMode mode);

/// Canonical order, varimax, then signed-permutation matching to `pivot`.
AlignedDraws match_align(const std::vector<MatrixXd>& draws, const MatrixXd& pivot,
                         MatchMode mode = MatchMode::kGreedy);

struct PivotChoice {
  int index = 0;
  MatrixXd pivot;  // varimax rotation of draws[index]
};

/// Draw whose L L^T has the (lower) median Frobenius distance to the mean of
/// L L^T over all draws; ties go to the smallest index.
PivotChoice choose_pivot(const std::vector<MatrixXd>& draws);

/// choose_pivot followed by match_align.
AlignedDraws align_draws(const std::vector<MatrixXd>& draws, MatchMode mode = MatchMode::kGreedy);

/// Type-7 empirical quantile of an unsorted sample.
double quantile(std::vector<double> values, double prob);

/// Elementwise posterior mean, zeroed where the equal-tailed interval at
/// `level` contains zero. Needs at least 20 draws.
MatrixXd sparsify_by_ci(const std::vector<MatrixXd>& draws, double level = 0.95);

MatrixXd elementwise_mean(const std::vector<MatrixXd>& draws);

/// Lambda * A_s for every draw.
std::vector<MatrixXd> study_specific_loadings(const std::vector<ParamSet>& draws, int study);

struct AlignedParams {
  std::vector<ParamSet> draws;   // Lambda T, T^T A_s T_s
  AlignedDraws shared;
  std::vector<AlignedDraws> studies;
};

/// Aligns the shared loadings and each study's loadings independently and
/// rewrites the draws so that every Sigma_s is unchanged.
AlignedParams align_params(const std::vector<ParamSet>& draws, MatchMode mode = MatchMode::kGreedy);

/// Posterior mean of Lambda Lambda^T + Delta.
MatrixXd posterior_shared_covariance(const std::vector<ParamSet>& draws);
/// Posterior mean of Sigma_s.
MatrixXd posterior_study_covariance(const std::vector<ParamSet>& draws, int study);

/// -mean L over draws of a chain run at beta = 1 / log n. Throws ConfigError
/// when beta does not match the studies.
double wbic(const std::vector<ParamSet>& draws, double beta, std::span<const StudySummary> studies,
            TemperatureN mode = TemperatureN::kPooled);
double wbic(const McmcOutput& chain, std::span<const StudySummary> studies,
            TemperatureN mode = TemperatureN::kPooled);

/// Median over the columns of `truth` of the R^2 from regressing the column
/// (with intercept) on the columns of `estimate`.
double alignment_r2(const MatrixXd& truth, const MatrixXd& estimate);

double frobenius_error(const MatrixXd& truth, const MatrixXd& estimate);

}  // namespace sufa
