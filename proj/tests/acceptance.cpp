// Acceptance run: one PASS/FAIL line per criterion. Lines starting with
// "  note" are diagnostics and never affect the verdict.
//
//   sufa_acceptance            all criteria
//   sufa_acceptance 3 9        selected criteria

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sufa/benchmark.hpp"
#include "sufa/datagen.hpp"
#include "sufa/hmc.hpp"
#include "sufa/identifiability.hpp"
#include "sufa/likelihood.hpp"
#include "sufa/model.hpp"
#include "sufa/postprocess.hpp"
#include "sufa/priors.hpp"

using namespace sufa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const std::string& s) { std::cout << "  note: " << s << '\n' << std::flush; }

// The sampler reports numeric rejections on stderr; that is noise here.
struct QuietStderr {
  std::ostringstream sink;
  std::streambuf* old;
  QuietStderr() : old(std::cerr.rdbuf(sink.rdbuf())) {}
  ~QuietStderr() { std::cerr.rdbuf(old); }
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& x) {
  MeanSe r;
  const double n = static_cast<double>(x.size());
  r.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double v = 0.0;
  for (double y : x) v += (y - r.mean) * (y - r.mean);
  r.se = std::sqrt(v / (n - 1.0) / n);
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<StudySummary> centered_stats(const std::vector<MatrixXd>& ys) {
  std::vector<StudySummary> st;
  for (const auto& y : ys) {
    const MatrixXd yc = y.rowwise() - y.colwise().mean();
    st.push_back(sufficient_stats(yc));
  }
  return st;
}

// 1. analytic gradient against central differences of a dense log posterior
Verdict gradient() {
  const PriorHyper h = default_hyperparameters();
  std::mt19937_64 g(101);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int d = 3 + t % 10;
    const int q = 1 + (t / 10) % std::min(3, d - 1);
    const int num = 1 + t % 3;
    std::vector<int> q_s(num, 0);
    int left = q;
    for (int s = 0; s < num && left > 0; ++s, --left) q_s[s] = 1;
    ParamSet p = oracle::random_params(d, q, q_s, g);
    DlState dl;
    dl.a = 0.5;
    dl.tau = 0.8 + std::abs(oracle::gaussian(1, 1, g)(0));
    dl.phi = oracle::gaussian(d, q, g).cwiseAbs().array() + 0.1;
    dl.phi /= dl.phi.sum();
    dl.psi = oracle::gaussian(d, q, g).cwiseAbs().array() + 0.5;
    dl.psi /= dl.prior_variance().mean();
    std::vector<StudySummary> st;
    for (int s = 0; s < num; ++s) st.push_back(sufficient_stats(oracle::gaussian(6 + 4 * s, d, g, 1.3)));

    const GradientSet gr = grad_log_posterior(p, dl, h, st);
    auto f = [&] { return oracle::loglik_from_w(p, st) + oracle::log_prior(p, dl, h); };
    // Five-point stencil: truncation O(h^4), so h can be large enough to
    // keep roundoff well below the gate.
    auto check = [&](double analytic, double& x) {
      const double x0 = x, step = 1e-4;
      double v[4];
      const double off[4] = {2, 1, -1, -2};
      for (int i = 0; i < 4; ++i) {
        x = x0 + off[i] * step;
        v[i] = f();
      }
      x = x0;
      const double fd = (-v[0] + 8.0 * v[1] - 8.0 * v[2] + v[3]) / (12.0 * step);
      worst = std::max(worst, oracle::rel_err(analytic, fd, 1e-3));
    };
    for (Eigen::Index i = 0; i < p.lambda.size(); ++i) check(gr.lambda(i), p.lambda(i));
    for (Eigen::Index i = 0; i < p.log_delta.size(); ++i) check(gr.log_delta(i), p.log_delta(i));
    for (std::size_t s = 0; s < p.a.size(); ++s)
      for (Eigen::Index i = 0; i < p.a[s].size(); ++i) check(gr.a[s](i), p.a[s](i));
  }
  return {worst <= 1e-5, fmt("worst relative error %.3g over 50 instances (gate <= 1e-5)", worst)};
}

// 2. low-rank inverse and log-determinant against dense LLT
Verdict low_rank() {
  std::mt19937_64 g(202);
  std::uniform_int_distribution<int> dd(2, 50);
  double worst_inv = 0.0, worst_ld = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int d = dd(g);
    const int k = 1 + static_cast<int>(g() % static_cast<unsigned>(std::min(d, 8)));
    const MatrixXd lt = oracle::gaussian(d, k, g, 0.8);
    const VectorXd ld = oracle::gaussian(d, 1, g, 0.5);
    MatrixXd sigma = lt * lt.transpose();
    sigma.diagonal() += ld.array().exp().matrix();
    const Eigen::LLT<MatrixXd> llt(sigma);
    const MatrixXd dense_inv = llt.solve(MatrixXd::Identity(d, d));
    const double dense_ld = oracle::dense_logdet(sigma);
    worst_inv = std::max(worst_inv, (woodbury_inverse(lt, ld) - dense_inv).norm() / dense_inv.norm());
    worst_ld = std::max(worst_ld, std::abs(logdet_lowrank(lt, ld) - dense_ld) / std::max(1.0, std::abs(dense_ld)));
  }
  return {worst_inv <= 1e-8 && worst_ld <= 1e-8,
          fmt("inverse %.3g, log-det %.3g relative, 100 instances d <= 50 (gate 1e-8)", worst_inv, worst_ld)};
}

// 3. the worked identifiability example
Verdict worked_example() {
  ParamSet p;
  p.lambda.resize(5, 3);
  p.lambda << 7, 5, 6, 6, 6, 7, 6, 9, 4, 5, 5, 6, 4, 6, 6;
  MatrixXd a1(3, 2), a2(3, 2);
  a1 << 3, 0, 0, 2, 0, 0;
  a2 << 0, 0, 2, 0, 0, 4;
  p.a = {a1, a2};
  p.log_delta = VectorXd::Zero(5);
  MatrixXd b1(5, 2), b2(5, 2);
  b1 << 21, 10, 18, 12, 18, 18, 15, 10, 12, 12;
  b2 << 10, 24, 12, 28, 18, 16, 10, 24, 12, 24;
  const bool blocks = study_loadings(p, 0) == b1 && study_loadings(p, 1) == b2;
  const SwitchingReport r = detect_information_switching(p.a);
  const bool bad = check_dimension_condition(3, {2, 2});
  const bool repaired = check_dimension_condition(4, {1, 1});
  return {blocks && r.switching && !bad && repaired,
          fmt("blocks exact: %s, switching: %s (intersection %d), q=4 q_s=(1,1) admissible: %s",
              blocks ? "yes" : "no", r.switching ? "yes" : "no", r.intersection_dim, repaired ? "yes" : "no")};
}

struct GirResult {
  MeanSe abs_chain, sq_chain;
  double acceptance = 0.0;
};

// Zero data, d=3, q=1: 2000 independent chains from prior draws, 5 draws each.
GirResult run_gir(const DlGibbsOptions& dl_options) {
  const ModelDims dims{3, 1, {0}, {0}};
  const std::vector<StudySummary> st{{MatrixXd::Zero(3, 3), 0}};
  const PriorHyper h = default_hyperparameters();
  ChainConfig c;
  c.burn_in = 200;
  c.thin = 100;
  c.iterations = c.burn_in + 5 * c.thin;
  c.init = InitMode::kPrior;
  c.store_dl = false;
  c.dl_options = dl_options;
  std::vector<double> m1, m2;
  double acc = 0.0;
  const int chains = 2000;
  for (int k = 0; k < chains; ++k) {
    c.seed = 40000 + k;
    const McmcOutput out = run_chain(st, dims, h, c);
    acc += out.acceptance_rate();
    double s1 = 0.0, s2 = 0.0;
    for (const auto& p : out.draws) {
      s1 += p.lambda.cwiseAbs().mean();
      s2 += p.lambda.squaredNorm() / 3.0;
    }
    m1.push_back(s1 / out.draws.size());
    m2.push_back(s2 / out.draws.size());
  }
  return {mean_se(m1), mean_se(m2), acc / chains};
}

// 4. sampler stationarity with zero data
Verdict stationarity() {
  const ModelDims dims{3, 1, {0}, {0}};
  const PriorHyper h = default_hyperparameters();
  Rng rng(404);
  std::vector<double> d1, d2;
  for (int i = 0; i < 200000; ++i) {
    const PriorDraw pd = draw_from_prior(dims, h, rng);
    d1.push_back(pd.params.lambda.cwiseAbs().mean());
    d2.push_back(pd.params.lambda.squaredNorm() / 3.0);
  }
  const MeanSe direct1 = mean_se(d1), direct2 = mean_se(d2);
  auto z = [](const MeanSe& a, const MeanSe& b) {
    return (a.mean - b.mean) / std::sqrt(a.se * a.se + b.se * b.se);
  };

  QuietStderr quiet;
  const GirResult r = run_gir(DlGibbsOptions{});
  const double z1 = z(r.abs_chain, direct1), z2 = z(r.sq_chain, direct2);
  note(fmt("direct prior: E|l| %.4f (se %.4f), E l^2 %.4f (se %.4f)", direct1.mean, direct1.se,
           direct2.mean, direct2.se));
  note(fmt("chains: E|l| %.4f (se %.4f), E l^2 %.4f (se %.4f), acceptance %.3f", r.abs_chain.mean,
           r.abs_chain.se, r.sq_chain.mean, r.sq_chain.se, r.acceptance));
  for (int variant = 0; variant < 2; ++variant) {
    DlGibbsOptions o;
    if (variant == 0) o.tau_order = TauOrder::kAsPrinted;
    else o.sweep_order = DlSweepOrder::kAsPrinted;
    const GirResult v = run_gir(o);
    note(fmt("%s: z(E|l|) = %.1f, z(E l^2) = %.1f", variant == 0 ? "printed tau update" : "printed sweep order",
             z(v.abs_chain, direct1), z(v.sq_chain, direct2)));
  }
  return {std::abs(z1) <= 4.0 && std::abs(z2) <= 4.0,
          fmt("z(E|l|) = %.2f, z(E l^2) = %.2f over 10^4 draws (gate |z| <= 4)", z1, z2)};
}

// 5. posterior mean covariance on d=3, q=1, one study, n=2000
Verdict recovery() {
  Rng rng(505);
  ParamSet truth;
  truth.lambda = MatrixXd(3, 1);
  truth.lambda << 1.2, -0.8, 0.6;
  truth.a = {MatrixXd(1, 0)};
  truth.log_delta = VectorXd::Constant(3, std::log(0.5));
  const MatrixXd sigma = marginal_covariance(truth, 0);
  const MatrixXd l = Eigen::LLT<MatrixXd>(sigma).matrixL();
  const MatrixXd y = standard_normal_matrix(2000, 3, rng) * l.transpose();
  const std::vector<StudySummary> st{sufficient_stats(y)};
  const MatrixXd sample = st[0].w / 2000.0;

  const ModelDims dims{3, 1, {0}, {2000}};
  ChainConfig c;
  c.seed = 55;
  QuietStderr quiet;
  const McmcOutput out = run_chain(st, dims, default_hyperparameters(), c);
  MatrixXd mean = MatrixXd::Zero(3, 3);
  for (const auto& p : out.draws) mean += marginal_covariance(p, 0);
  mean /= static_cast<double>(out.draws.size());
  const double rel = (mean - sample).norm() / sample.norm();
  note(fmt("%zu draws, acceptance %.3f, relative error to the true Sigma %.4f", out.draws.size(),
           out.acceptance_rate(), (mean - sigma).norm() / sigma.norm()));
  return {rel <= 0.10, fmt("relative Frobenius error to the sample covariance %.4f (gate <= 0.10)", rel)};
}

// 6. FM1, d=50, S=5, slight misspecification
Verdict fm1_replication() {
  const int d = 50, num = 5, q = 10;
  std::vector<double> r2;
  int decreasing = 0;
  QuietStderr quiet;
  for (int rep = 0; rep < 5; ++rep) {
    Rng rng(600 + rep);
    const MatrixXd lambda = gen_shared_loading(Scenario::kFm1, d, q, rng);
    const Design design = sample_design(d, num, q, rng);
    const std::vector<MatrixXd> phi = gen_study_loadings(Misspecification::kSlight, lambda, design.q_s, rng);
    MatrixXd truth = lambda * lambda.transpose();
    truth.diagonal().array() += 0.5;
    double frob[2] = {0.0, 0.0};
    for (int mult = 1; mult <= 2; ++mult) {
      std::vector<std::int64_t> n = design.n_s;
      for (auto& v : n) v *= mult;
      Rng data_rng(6000 + rep);
      const std::vector<StudySummary> st = centered_stats(simulate_msfa(lambda, phi, 0.5, n, data_rng));
      const ModelDims dims{d, q, default_study_dims(q, num), n};
      ChainConfig c;
      c.iterations = 7500;
      c.burn_in = 2500;
      c.thin = 5;
      c.seed = 70 + rep;
      const McmcOutput out = run_chain(st, dims, default_hyperparameters(), c);
      frob[mult - 1] = frobenius_error(truth, posterior_shared_covariance(out.draws));
      const double pooled = static_cast<double>(std::accumulate(n.begin(), n.end(), std::int64_t{0}));
      if (mult == 1) {
        const AlignedParams al = align_params(out.draws);
        r2.push_back(alignment_r2(lambda, elementwise_mean(al.shared.loadings)));
        Rng init_rng(1);
        const ChainState init = initialize(dims, st, default_hyperparameters(), InitMode::kWarm, {}, init_rng);
        note(fmt("rep %d: n %.0f, R^2 %.3f (warm start %.3f), acceptance %.3f, numeric rejections %d", rep,
                 pooled, r2.back(), alignment_r2(lambda, init.params.lambda), out.acceptance_rate(),
                 out.numeric_rejections));
      }
    }
    if (frob[1] < frob[0]) ++decreasing;
    note(fmt("rep %d: Frobenius error %.2f at n, %.2f at 2n", rep, frob[0], frob[1]));
  }
  const double med = median(r2);
  return {med >= 0.8 && decreasing >= 4,
          fmt("median R^2 %.3f (gate >= 0.8); error falls with 2n in %d/5 (gate >= 4)", med, decreasing)};
}

// 7. per-iteration time against sample size
Verdict sample_size_free() {
  BenchmarkConfig cfg;
  cfg.d = 50;
  cfg.multipliers = {1, 10, 25};
  std::vector<BenchmarkRow> rows;
  {
    QuietStderr quiet;
    rows = run_benchmark(cfg);
  }
  for (const auto& r : rows) {
    note(fmt("x%d: pooled n %lld, %.3g s per iteration (median %.3g)", r.multiplier,
             static_cast<long long>(r.pooled_n), r.per_iteration_seconds, r.median_seconds));
  }
  const double spread = relative_spread(rows);
  return {spread < 0.2, fmt("relative spread %.3f across n x {1, 10, 25} at d=50 (gate < 0.20)", spread)};
}

// One WBIC comparison on FM1 d=20: true q=4 against q=12.
bool wbic_prefers_truth(int rep, int n_mult) {
  const int d = 20, num = 5, q = 4;
  Rng rng(800 + rep);
  const MatrixXd lambda = gen_shared_loading(Scenario::kFm1, d, q, rng);
  Design design = sample_design(d, num, q, rng);
  const std::vector<MatrixXd> phi = gen_study_loadings(Misspecification::kSlight, lambda, design.q_s, rng);
  for (auto& v : design.n_s) v *= n_mult;
  const std::vector<StudySummary> st = centered_stats(simulate_msfa(lambda, phi, 0.5, design.n_s, rng));
  double w[2];
  for (int k = 0; k < 2; ++k) {
    const int qq = k == 0 ? q : 3 * q;
    const ModelDims dims{d, qq, default_study_dims(qq, num), design.n_s};
    ChainConfig c;
    c.iterations = 7500;
    c.burn_in = 2500;
    c.thin = 5;
    c.seed = 90 + rep;
    c.beta = wbic_temperature(st, TemperatureN::kPooled);
    w[k] = wbic(run_chain(st, dims, default_hyperparameters(), c), st);
  }
  return w[0] < w[1];
}

// 8. WBIC ordering
Verdict wbic_ordering() {
  QuietStderr quiet;
  int wins = 0, wins_small = 0;
  for (int rep = 0; rep < 10; ++rep) {
    wins += wbic_prefers_truth(rep, 10);
    wins_small += wbic_prefers_truth(rep, 1);
  }
  note(fmt("at the simulation design's own n_s (pooled n about 20) the true q wins %d/10", wins_small));
  return {wins >= 7, fmt("true q=4 beats q=12 in %d/10 replicates with n_s x 10 (gate >= 7)", wins)};
}

// 9. leapfrog reversibility and second-order energy error
Verdict integrator() {
  std::mt19937_64 g(909);
  const PriorHyper h = default_hyperparameters();
  const ParamSet p = oracle::random_params(8, 2, {1, 1}, g);
  DlState dl = DlState::uniform(8, 2, 0.5);
  dl.psi.setConstant(256.0);  // prior variance one
  std::vector<StudySummary> st;
  for (int s = 0; s < 2; ++s) {
    const MatrixXd l = Eigen::LLT<MatrixXd>(oracle::dense_sigma(p, s)).matrixL();
    st.push_back(sufficient_stats(oracle::gaussian(30, 8, g) * l.transpose()));
  }
  const LogDensityFn target = [&](const VectorXd& theta, VectorXd& grad) {
    const PosteriorEval ev = parallel_grad_reduce(unflatten(theta, p), dl, h, st, nullptr);
    grad = flatten(ev.grad);
    return ev.log_posterior();
  };
  LeapfrogState s;
  s.theta = flatten(p);
  s.momentum = oracle::gaussian(s.theta.size(), 1, g);
  s.log_density = target(s.theta, s.grad);
  LeapfrogState e = leapfrog(s, 0.01, 10, target);
  e.momentum = -e.momentum;
  const LeapfrogState back = leapfrog(e, 0.01, 10, target);
  const double round_trip = std::max((back.theta - s.theta).cwiseAbs().maxCoeff(),
                                     (back.momentum + s.momentum).cwiseAbs().maxCoeff());

  const LogDensityFn quad = [](const VectorXd& x, VectorXd& grad) {
    grad = -x;
    return -0.5 * x.squaredNorm();
  };
  // 1.28 is a whole number of steps for every step size below.
  auto energy_error = [&](double step) {
    LeapfrogState q0;
    q0.theta = VectorXd::Constant(1, 0.8);
    q0.momentum = VectorXd::Constant(1, 0.6);
    q0.log_density = quad(q0.theta, q0.grad);
    const LeapfrogState q1 = leapfrog(q0, step, static_cast<int>(std::lround(1.28 / step)), quad);
    return std::abs(hamiltonian(q1.log_density, q1.momentum) - hamiltonian(q0.log_density, q0.momentum));
  };
  double lo = 1e300, hi = 0.0;
  for (double step : {0.04, 0.02, 0.01, 0.005}) {
    const double ratio = energy_error(step) / energy_error(step / 2);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  return {round_trip <= 1e-8 && lo >= 3.0 && hi <= 5.0,
          fmt("round trip %.3g (gate <= 1e-8); halving the step shrinks |dH| by %.3f to %.3f (gate [3, 5])",
              round_trip, lo, hi)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient vs finite differences", 60, gradient},
      {2, "low-rank inverse and log-det", 60, low_rank},
      {3, "worked identifiability example", 1, worked_example},
      {4, "sampler stationarity", 300, stationarity},
      {5, "posterior recovery", 300, recovery},
      {6, "FM1 d=50 replication", 1800, fm1_replication},
      {7, "sample-size-free iterations", 600, sample_size_free},
      {8, "WBIC ordering", 1200, wbic_ordering},
      {9, "integrator properties", 60, integrator},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_seconds;
    const bool pass = v.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << " -- " << v.detail
              << fmt(" [%.1f s, limit %.0f s%s]", secs, c.limit_seconds, in_time ? "" : ", exceeded") << '\n'
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
