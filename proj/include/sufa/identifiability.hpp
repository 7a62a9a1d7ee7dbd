#pragma once

// Identifiability checks and latent-dimension selection.
//
// Shared and study-specific covariance can trade places ("information
// switching") exactly when the column spaces of the A_s share a direction or
// every A_s is rank deficient. Requiring sum(q_s) <= q rules this out for
// almost every A_s.

#include <vector>

#include "sufa/model.hpp"

namespace sufa {

/// sum(q_s) <= q.
bool check_dimension_condition(int q, const std::vector<int>& q_s);

inline constexpr double kExactAngleTol = 1e-8;
inline constexpr double kDrawAngleTol = 1e-4;

/// Numerical rank: singular values above tol * s_max.
int numerical_rank(const MatrixXd& a, double tol);

/// Dimension of the intersection of the column spaces C(A_s). Bases are
/// intersected one study at a time; a principal direction survives when its
/// cosine exceeds 1 - tol.
int column_space_intersection_dim(const std::vector<MatrixXd>& a, double tol = kExactAngleTol);

struct SwitchingReport {
  bool switching = false;
  int intersection_dim = 0;
  std::vector<int> ranks;  // numerical rank of each A_s
  std::vector<int> q_s;    // column count of each A_s
  bool all_rank_deficient = false;
};

SwitchingReport detect_information_switching(const std::vector<MatrixXd>& a,
                                             double tol = kExactAngleTol);

/// Largest integer strictly below (2d - sqrt(8d + 1)) / 2, at least 0.
int rank_upper_bound(int d);

struct SvdResult {
  VectorXd values;  // descending
  MatrixXd u;       // n x k
  MatrixXd v;       // d x k
};

/// Top-k singular triplets by randomized subspace iteration (oversampling
/// 10, at least two power passes, then iterated until the top-k values
/// settle). Deterministic.
SvdResult partial_svd(const MatrixXd& x, int k);

struct RankSelection {
  int q = 0;
  std::vector<int> q_s;
  VectorXd explained;  // cumulative fraction of sum s_i^2 for k = 1..computed
  int cap = 0;
  int numerical_rank = 0;  // counted among the leading min(cap, n, d) values
};

/// Smallest k whose leading squared singular values reach `threshold` of
/// the total, capped by rank_upper_bound(d) and the numerical rank;
/// q_s = max(1, floor(q / S)), reduced when that breaks sum(q_s) <= q.
RankSelection select_num_factors(const MatrixXd& pooled, double threshold, int num_studies);

/// The q_s rule alone.
std::vector<int> default_study_dims(int q, int num_studies);

}  // namespace sufa
