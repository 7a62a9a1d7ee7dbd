#pragma once

// Synthetic data for simulation studies: sparse shared loadings, study
// loadings close to or orthogonal to the shared column space, and data drawn
// from the multi-study factor model
//
//   y_si = Lambda eta_si + Phi_s zeta_si + eps_si,  eps ~ N(0, Delta).

#include <string>
#include <vector>

#include "sufa/model.hpp"
#include "sufa/random.hpp"

namespace sufa {

enum class Scenario { kFm1, kFm2, kFm3 };
Scenario parse_scenario(const std::string& name);
std::string to_string(Scenario s);

/// Entries drawn from Unif(-2, 2) on a sparse pattern:
///   FM1  one run of round(d/4) consecutive rows per column, random start;
///   FM2  the FM1 rule applied separately to each half of the rows;
///   FM3  round(d/4) rows per column chosen at random.
/// Rows left empty get min(5, q) random entries. Needs d >= 20.
MatrixXd gen_shared_loading(Scenario scenario, int d, int q, Rng& rng);

enum class Misspecification { kSlight, kComplete };
Misspecification parse_misspecification(const std::string& name);

struct StudyLoadingOptions {
  double a_sd = 0.25;      // slight: entries of A_s
  double error_sd = 0.10;  // slight: entries of E_s
  bool scale = true;       // complete: match Lambda's median column mean-square
};

/// slight:   Phi_s = Lambda A_s + E_s.
/// complete: disjoint blocks of an orthonormal basis of the left null space
///           of Lambda, so Lambda^T Phi_s = 0 and Phi_s^T Phi_t = 0.
std::vector<MatrixXd> gen_study_loadings(Misspecification mode, const MatrixXd& lambda,
                                         const std::vector<int>& q_s, Rng& rng,
                                         const StudyLoadingOptions& options = {});

/// One n_s x d data matrix per study.
std::vector<MatrixXd> simulate_msfa(const MatrixXd& lambda, const std::vector<MatrixXd>& phi,
                                    double delta, const std::vector<std::int64_t>& n_s, Rng& rng);

struct Design {
  std::vector<std::int64_t> n_s;
  std::vector<int> q_s;
};

/// n_s = max(Poisson(d/S), ceil(d/S)); q_s ~ Poisson(q/S), redrawn until
/// sum(q_s) >= 1.
Design sample_design(int d, int num_studies, int q, Rng& rng);

/// Lambda Lambda^T + Phi_s Phi_s^T + delta I.
MatrixXd true_study_covariance(const MatrixXd& lambda, const MatrixXd& phi, double delta);

}  // namespace sufa
