#include "sufa/cli.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sufa/benchmark.hpp"
#include "sufa/datagen.hpp"
#include "sufa/error.hpp"
#include "sufa/identifiability.hpp"
#include "sufa/postprocess.hpp"
#include "sufa/worker_pool.hpp"

namespace sufa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> feature_names(int d) {
  std::vector<std::string> out;
  for (int j = 0; j < d; ++j) out.push_back("f" + std::to_string(j + 1));
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

struct Ingested {
  std::vector<std::string> features;
  std::vector<MatrixXd> centered;
  std::vector<StudySummary> summaries;
};

Ingested ingest(const std::vector<std::string>& paths, const ColumnSchema& schema,
                Centering centering) {
  std::vector<StudyData> studies;
  for (const auto& p : paths) studies.push_back(load_study_csv(p, schema));
  std::vector<std::string> warnings;
  Ingested out;
  out.features = intersect_features(studies, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& s : studies) {
    out.centered.push_back(center(s.y, centering, s.groups));
    out.summaries.push_back(sufficient_stats(out.centered.back()));
  }
  return out;
}

MatrixXd stack_rows(const std::vector<MatrixXd>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  MatrixXd out(n, blocks.front().cols());
  Eigen::Index pos = 0;
  for (const auto& b : blocks) {
    out.middleRows(pos, b.rows()) = b;
    pos += b.rows();
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: '" + s + "'");
    }
  }
  return out;
}

}  // namespace

std::vector<StudySummary> load_study_summaries(const fs::path& run_dir) {
  const json stats = read_json(run_dir / "stats.json");
  std::vector<StudySummary> out;
  const auto n_s = stats.at("n_s").get<std::vector<std::int64_t>>();
  for (std::size_t s = 0; s < n_s.size(); ++s) {
    StudySummary st;
    st.n = n_s[s];
    st.w = read_matrix_csv(run_dir / ("w_" + std::to_string(s) + ".csv"), false);
    out.push_back(std::move(st));
  }
  return out;
}

FitSummary run_fit(const RunConfig& config) {
  config.validate();
  const fs::path dir = config.output_dir;
  DirectoryLock lock(dir);
  const auto t0 = Clock::now();

  Ingested data = ingest(config.studies, config.schema, config.centering);
  const double ingest_s = seconds_since(t0);
  const int num_studies = static_cast<int>(data.summaries.size());

  FitSummary summary;
  summary.features = data.features;
  ModelDims& dims = summary.dims;
  dims.d = static_cast<int>(data.features.size());
  if (config.q) {
    dims.q = *config.q;
  } else {
    dims.q = select_num_factors(stack_rows(data.centered), config.threshold, num_studies).q;
  }
  dims.q_s = config.q_s.empty() ? default_study_dims(dims.q, num_studies) : config.q_s;
  for (const auto& s : data.summaries) dims.n_s.push_back(s.n);
  dims.validate();

  ChainConfig chain = config.chain;
  chain.seed = *config.seed;
  chain.workers = workers_from_environment();
  if (config.wbic) chain.beta = wbic_temperature(data.summaries, config.wbic_n);
  chain.validate();

  const auto t1 = Clock::now();
  const McmcOutput out = run_chain(data.summaries, dims, config.hyper, chain);
  const double chain_s = seconds_since(t1);
  summary.acceptance = out.acceptance_rate();
  summary.numeric_rejections = out.numeric_rejections;
  summary.beta = out.beta;

  std::vector<std::string> outputs;
  write_draws(dir / "draws.bin", out, dims);
  write_json(dir / "draws.json", draw_sidecar(out, dims));
  write_lines(dir / "features.txt", data.features);
  json stats;
  stats["n_s"] = dims.n_s;
  write_json(dir / "stats.json", stats);
  outputs = {"draws.bin", "draws.json", "features.txt", "stats.json"};
  for (int s = 0; s < num_studies; ++s) {
    const std::string name = "w_" + std::to_string(s) + ".csv";
    write_matrix_csv(dir / name, data.summaries[s].w);
    outputs.push_back(name);
  }
  if (!out.draws.empty()) {
    write_matrix_csv(dir / "shared_covariance.csv", posterior_shared_covariance(out.draws),
                     data.features);
    outputs.push_back("shared_covariance.csv");
  }

  json result;
  result["d"] = dims.d;
  result["q"] = dims.q;
  result["q_s"] = dims.q_s;
  result["n_s"] = dims.n_s;
  result["draws"] = out.draws.size();
  result["acceptance_rate"] = summary.acceptance;
  result["numeric_rejections"] = summary.numeric_rejections;
  result["beta"] = out.beta;
  if (config.wbic && !out.draws.empty()) {
    summary.wbic = wbic(out, data.summaries, config.wbic_n);
    result["wbic"] = summary.wbic;
  }
  write_json(dir / "summary.json", result);
  outputs.push_back("summary.json");

  RunConfig resolved = config;
  resolved.q = dims.q;
  resolved.q_s = dims.q_s;
  write_manifest(dir, "fit", config_to_json(resolved), config.seed,
                 {{"ingest", ingest_s}, {"chain", chain_s}, {"total", seconds_since(t0)}},
                 outputs);
  return summary;
}

namespace {

int cmd_simulate(const std::string& scenario_name, int d, int q, int num_studies,
                 const std::string& misspec, std::uint64_t seed, const std::string& out_dir,
                 int n_mult, double delta, bool scale) {
  const Scenario scenario = parse_scenario(scenario_name);
  const Misspecification mode = parse_misspecification(misspec);
  if (q <= 0) q = d <= 50 ? 10 : 20;
  if (num_studies < 1) throw ConfigError("--studies must be at least 1");
  if (n_mult < 1) throw ConfigError("--n-mult must be at least 1");
  if (!(delta > 0.0)) throw ConfigError("--delta must be positive");
  const fs::path dir = out_dir;
  DirectoryLock lock(dir);
  const auto t0 = Clock::now();

  Rng rng(seed);
  const MatrixXd lambda = gen_shared_loading(scenario, d, q, rng);
  Design design = sample_design(d, num_studies, q, rng);
  for (auto& n : design.n_s) n *= n_mult;
  StudyLoadingOptions opts;
  opts.scale = scale;
  const std::vector<MatrixXd> phi = gen_study_loadings(mode, lambda, design.q_s, rng, opts);
  const std::vector<MatrixXd> ys = simulate_msfa(lambda, phi, delta, design.n_s, rng);

  const auto names = feature_names(d);
  std::vector<std::string> outputs;
  json studies = json::array();
  for (int s = 0; s < num_studies; ++s) {
    const std::string y_name = "study_" + std::to_string(s) + ".csv";
    const std::string phi_name = "truth_phi_" + std::to_string(s) + ".csv";
    write_matrix_csv(dir / y_name, ys[s], names);
    write_matrix_csv(dir / phi_name, phi[s]);
    outputs.push_back(y_name);
    outputs.push_back(phi_name);
    studies.push_back(y_name);
  }
  write_matrix_csv(dir / "truth_lambda.csv", lambda);
  MatrixXd shared = lambda * lambda.transpose();
  shared.diagonal().array() += delta;
  write_matrix_csv(dir / "truth_shared_covariance.csv", shared, names);
  json truth = {{"scenario", to_string(scenario)},
                {"misspecification", misspec},
                {"d", d},
                {"q", q},
                {"q_s", design.q_s},
                {"n_s", design.n_s},
                {"delta", delta},
                {"scale", scale},
                {"studies", studies}};
  write_json(dir / "truth.json", truth);
  outputs.insert(outputs.end(), {"truth_lambda.csv", "truth_shared_covariance.csv", "truth.json"});
  json cfg = truth;
  cfg["n_mult"] = n_mult;
  write_manifest(dir, "simulate", cfg, seed, {{"total", seconds_since(t0)}}, outputs);
  std::cout << truth.dump(2) << '\n';
  return 0;
}

int cmd_postprocess(const std::string& run_dir, const std::string& out_dir, double level,
                    const std::string& match) {
  if (match != "greedy" && match != "optimal") throw ConfigError("--match must be greedy or optimal");
  const MatchMode mode = match == "greedy" ? MatchMode::kGreedy : MatchMode::kOptimal;
  const fs::path in = run_dir;
  const fs::path dir = out_dir.empty() ? in / "post" : fs::path(out_dir);
  const DrawFile f = read_draws(in / "draws.bin");
  if (f.draws.size() < 20) {
    throw InputError("postprocessing needs at least 20 stored draws (found " +
                     std::to_string(f.draws.size()) + ")");
  }
  std::vector<std::string> features =
      fs::exists(in / "features.txt") ? read_lines(in / "features.txt") : feature_names(f.d);
  DirectoryLock lock(dir);
  const auto t0 = Clock::now();

  const AlignedParams aligned = align_params(f.draws, mode);
  std::vector<std::string> outputs;
  auto put = [&](const std::string& name, const MatrixXd& m, bool named_cols) {
    write_matrix_csv(dir / name, m, named_cols ? features : std::vector<std::string>{});
    outputs.push_back(name);
  };
  const MatrixXd sparse = sparsify_by_ci(aligned.shared.loadings, level);
  put("shared_loadings_mean.csv", elementwise_mean(aligned.shared.loadings), false);
  put("shared_loadings_sparse.csv", sparse, false);
  const MatrixXd shared_cov = posterior_shared_covariance(f.draws);
  put("shared_covariance.csv", shared_cov, true);
  put("shared_correlation.csv", correlation_matrix(shared_cov), true);

  // Network: correlations implied by the sparsified loadings, nonzero only
  // where two features load on a common factor.
  VectorXd delta_mean = VectorXd::Zero(f.d);
  for (const auto& p : f.draws) delta_mean += p.log_delta.array().exp().matrix();
  delta_mean /= static_cast<double>(f.draws.size());
  MatrixXd implied = sparse * sparse.transpose();
  implied.diagonal() += delta_mean;
  const MatrixXd corr = correlation_matrix(implied);
  {
    std::ofstream edges(dir / "network_edges.csv");
    edges << "feature_a,feature_b,correlation\n";
    char buf[32];
    for (int j = 0; j < f.d; ++j) {
      for (int k = j + 1; k < f.d; ++k) {
        if (corr(j, k) == 0.0) continue;
        std::snprintf(buf, sizeof buf, "%.17g", corr(j, k));
        edges << features[j] << ',' << features[k] << ',' << buf << '\n';
      }
    }
    outputs.push_back("network_edges.csv");
  }

  json info;
  info["draws"] = f.draws.size();
  info["level"] = level;
  info["match"] = match;
  info["shared_pivot_index"] = aligned.shared.pivot_index;
  json pivots = json::array();
  for (std::size_t s = 0; s < aligned.studies.size(); ++s) {
    pivots.push_back(aligned.studies[s].pivot_index);
    const std::string tag = "study_" + std::to_string(s);
    if (f.q_s[s] > 0) put(tag + "_loadings_sparse.csv", sparsify_by_ci(aligned.studies[s].loadings, level), false);
    put(tag + "_covariance.csv", posterior_study_covariance(f.draws, static_cast<int>(s)), true);
  }
  info["study_pivot_index"] = pivots;
  write_json(dir / "postprocess.json", info);
  outputs.push_back("postprocess.json");
  write_manifest(dir, "postprocess",
                 {{"run", run_dir}, {"level", level}, {"match", match},
                  {"draws_fnv1a64", hex64(fnv1a_file(in / "draws.bin"))}},
                 std::nullopt, {{"total", seconds_since(t0)}}, outputs);
  std::cout << info.dump(2) << '\n';
  return 0;
}

void maybe_write_result(const std::string& out_dir, const std::string& command, const json& cfg,
                        const json& result, Clock::time_point t0) {
  if (out_dir.empty()) return;
  const fs::path dir = out_dir;
  DirectoryLock lock(dir);
  write_json(dir / "result.json", result);
  write_manifest(dir, command, cfg, std::nullopt, {{"total", seconds_since(t0)}}, {"result.json"});
}

int cmd_wbic(const std::string& run_dir, const std::string& n_mode, const std::string& out_dir) {
  const auto t0 = Clock::now();
  if (n_mode != "pooled" && n_mode != "mean_study") {
    throw ConfigError("--n must be pooled or mean_study");
  }
  const TemperatureN mode = n_mode == "pooled" ? TemperatureN::kPooled : TemperatureN::kMeanStudy;
  const DrawFile f = read_draws(fs::path(run_dir) / "draws.bin");
  const std::vector<StudySummary> studies = load_study_summaries(run_dir);
  const double value = wbic(f.draws, f.beta, studies, mode);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  const json result = {{"wbic", value}, {"wbic_text", buf}, {"beta", f.beta}, {"draws", f.draws.size()}};
  std::cout << result.dump(2) << '\n';
  maybe_write_result(out_dir, "wbic", {{"run", run_dir}, {"n", n_mode}}, result, t0);
  return 0;
}

int cmd_check(int q, const std::string& q_s_text, const std::vector<std::string>& a_files,
              const std::string& run_dir, double tol, const std::string& out_dir) {
  const auto t0 = Clock::now();
  json result;
  if (q > 0) {
    const std::vector<int> q_s = q_s_text.empty() ? std::vector<int>{} : parse_int_list(q_s_text);
    result["dimension_condition"] = check_dimension_condition(q, q_s);
    result["q"] = q;
    result["q_s"] = q_s;
  }
  if (!a_files.empty()) {
    std::vector<MatrixXd> a;
    for (const auto& p : a_files) a.push_back(read_matrix_csv(p, false));
    const SwitchingReport r = detect_information_switching(a, tol);
    result["switching"] = r.switching;
    result["intersection_dim"] = r.intersection_dim;
    result["ranks"] = r.ranks;
    result["columns"] = r.q_s;
    result["all_rank_deficient"] = r.all_rank_deficient;
  }
  if (!run_dir.empty()) {
    const DrawFile f = read_draws(fs::path(run_dir) / "draws.bin");
    int switching = 0;
    for (const auto& p : f.draws) {
      if (p.a.empty()) continue;
      if (detect_information_switching(p.a, tol).switching) ++switching;
    }
    result["dimension_condition"] = check_dimension_condition(f.q, f.q_s);
    result["q"] = f.q;
    result["q_s"] = f.q_s;
    result["draws"] = f.draws.size();
    result["draws_with_switching"] = switching;
  }
  if (result.empty()) throw ConfigError("give --q, --a or --run");
  std::cout << result.dump(2) << '\n';
  maybe_write_result(out_dir, "check-identifiability",
                     {{"q", q}, {"q_s", q_s_text}, {"a", a_files}, {"run", run_dir}, {"tol", tol}},
                     result, t0);
  return 0;
}

int cmd_select_rank(const std::vector<std::string>& studies, const std::string& group_column,
                    const std::string& centering, double threshold, const std::string& out_dir) {
  const auto t0 = Clock::now();
  if (studies.empty()) throw ConfigError("give at least one --study");
  ColumnSchema schema{group_column};
  const Ingested data = ingest(studies, schema, parse_centering(centering));
  const RankSelection r =
      select_num_factors(stack_rows(data.centered), threshold, static_cast<int>(studies.size()));
  json result = {{"q", r.q},
                 {"q_s", r.q_s},
                 {"cap", r.cap},
                 {"numerical_rank", r.numerical_rank},
                 {"explained", std::vector<double>(r.explained.data(), r.explained.data() + r.explained.size())}};
  std::cout << result.dump(2) << '\n';
  maybe_write_result(out_dir, "select-rank",
                     {{"studies", studies}, {"group_column", group_column},
                      {"centering", centering}, {"threshold", threshold}},
                     result, t0);
  return 0;
}

int cmd_benchmark(BenchmarkConfig cfg, const std::string& mult_text, const std::string& out_dir) {
  const auto t0 = Clock::now();
  cfg.multipliers = parse_int_list(mult_text);
  const std::vector<BenchmarkRow> rows = run_benchmark(cfg);
  std::ostringstream table;
  table << "multiplier,pooled_n,stats_seconds,per_iteration_seconds,median_seconds,acceptance,numeric_rejections\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%lld,%.6g,%.6g,%.6g,%.4f,%d\n", r.multiplier,
                  static_cast<long long>(r.pooled_n), r.stats_seconds, r.per_iteration_seconds, r.median_seconds,
                  r.acceptance, r.numeric_rejections);
    table << buf;
  }
  std::cout << table.str();
  std::cout << "relative spread of per-iteration time: " << relative_spread(rows) << '\n';
  if (!out_dir.empty()) {
    const fs::path dir = out_dir;
    DirectoryLock lock(dir);
    {
      std::ofstream f(dir / "benchmark.csv");
      f << table.str();
    }
    write_manifest(dir, "benchmark",
                   {{"d", cfg.d}, {"studies", cfg.num_studies}, {"q", cfg.q},
                    {"multipliers", cfg.multipliers}, {"iterations", cfg.iterations},
                    {"repeats", cfg.repeats}, {"max_step", cfg.max_step}},
                   cfg.seed, {{"total", seconds_since(t0)}}, {"benchmark.csv"});
  }
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Subspace factor analysis for multi-study covariance estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the model to study CSV files");
  std::string config_path, out_dir, group_column, centering = "per_study", q_s_text;
  std::vector<std::string> study_files;
  std::uint64_t seed = 0;
  int q = 0, iterations = -1, burn_in = -1, thin = -1;
  double threshold = -1.0;
  bool tempered = false;
  fit->add_option("--config", config_path, "JSON run configuration");
  fit->add_option("--study", study_files, "Study CSV (repeatable)");
  fit->add_option("--out", out_dir, "Output directory");
  fit->add_option("--seed", seed, "Random seed");
  fit->add_option("--q", q, "Shared dimension (default: select from data)");
  fit->add_option("--q-s", q_s_text, "Comma-separated study dimensions");
  fit->add_option("--group-column", group_column, "Column holding group labels");
  fit->add_option("--center", centering, "per_study | per_group | none");
  fit->add_option("--threshold", threshold, "Variance fraction for automatic q");
  fit->add_option("--iterations", iterations, "MCMC iterations");
  fit->add_option("--burn-in", burn_in, "Burn-in iterations");
  fit->add_option("--thin", thin, "Thinning interval");
  fit->add_flag("--wbic", tempered, "Run the tempered chain and report WBIC");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate synthetic multi-study data");
  std::string scenario = "FM1", misspec = "slight";
  int sim_d = 50, sim_q = 0, sim_studies = 5, n_mult = 1;
  double delta = 0.5;
  bool no_scale = false;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  sim->add_option("--scenario", scenario, "FM1 | FM2 | FM3");
  sim->add_option("--d", sim_d, "Feature count");
  sim->add_option("--q", sim_q, "Shared dimension (default 10 for d <= 50, else 20)");
  sim->add_option("--studies", sim_studies, "Number of studies");
  sim->add_option("--misspec", misspec, "slight | complete");
  sim->add_option("--n-mult", n_mult, "Sample-size multiplier");
  sim->add_option("--delta", delta, "Idiosyncratic variance");
  sim->add_flag("--no-scale", no_scale, "Keep orthonormal study loadings in complete mode");
  sim->add_option("--seed", sim_seed, "Random seed")->required();
  sim->add_option("--out", sim_out, "Output directory")->required();

  // postprocess
  auto* post = app.add_subcommand("postprocess", "Align draws and summarize a fit");
  std::string post_run, post_out, match = "greedy";
  double level = 0.95;
  post->add_option("--run", post_run, "Fit output directory")->required();
  post->add_option("--out", post_out, "Output directory (default <run>/post)");
  post->add_option("--level", level, "Credible level for sparsification");
  post->add_option("--match", match, "greedy | optimal");

  // wbic
  auto* wb = app.add_subcommand("wbic", "WBIC of a tempered fit");
  std::string wb_run, wb_n = "pooled", wb_out;
  wb->add_option("--run", wb_run, "Fit output directory")->required();
  wb->add_option("--n", wb_n, "pooled | mean_study");
  wb->add_option("--out", wb_out, "Directory for result.json and manifest");

  // check-identifiability
  auto* chk = app.add_subcommand("check-identifiability", "Dimension condition and switching check");
  int chk_q = 0;
  std::string chk_qs, chk_run, chk_out;
  std::vector<std::string> chk_a;
  double tol = kExactAngleTol;
  chk->add_option("--q", chk_q, "Shared dimension");
  chk->add_option("--q-s", chk_qs, "Comma-separated study dimensions");
  chk->add_option("--a", chk_a, "CSV of one A_s matrix (repeatable)");
  chk->add_option("--run", chk_run, "Fit output directory: check every draw");
  chk->add_option("--tol", tol, "Principal-angle tolerance");
  chk->add_option("--out", chk_out, "Directory for result.json and manifest");

  // select-rank
  auto* sel = app.add_subcommand("select-rank", "Choose q and q_s from the data");
  std::vector<std::string> sel_studies;
  std::string sel_group, sel_center = "per_study", sel_out;
  double sel_threshold = 0.95;
  sel->add_option("--study", sel_studies, "Study CSV (repeatable)")->required();
  sel->add_option("--group-column", sel_group, "Column holding group labels");
  sel->add_option("--center", sel_center, "per_study | per_group | none");
  sel->add_option("--threshold", sel_threshold, "Variance fraction to explain");
  sel->add_option("--out", sel_out, "Directory for result.json and manifest");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Per-iteration time against sample size");
  BenchmarkConfig bcfg;
  std::string mult_text = "1,10,25", bench_out;
  bench->add_option("--d", bcfg.d, "Feature count");
  bench->add_option("--q", bcfg.q, "Shared dimension");
  bench->add_option("--studies", bcfg.num_studies, "Number of studies");
  bench->add_option("--mult", mult_text, "Comma-separated sample-size multipliers");
  bench->add_option("--iterations", bcfg.iterations, "Iterations per timing");
  bench->add_option("--repeats", bcfg.repeats, "Timings per multiplier (minimum reported)");
  bench->add_option("--seed", bcfg.seed, "Random seed");
  bench->add_option("--max-step", bcfg.max_step, "Upper bound of the step-size distribution");
  bench->add_option("--out", bench_out, "Directory for benchmark.csv and manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*fit) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
      if (!study_files.empty()) cfg.studies = study_files;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (fit->count("--seed")) cfg.seed = seed;
      if (q > 0) cfg.q = q;
      if (!q_s_text.empty()) cfg.q_s = parse_int_list(q_s_text);
      if (!group_column.empty()) cfg.schema.group_column = group_column;
      if (fit->count("--center")) cfg.centering = parse_centering(centering);
      if (threshold > 0.0) cfg.threshold = threshold;
      if (iterations >= 0) cfg.chain.iterations = iterations;
      if (burn_in >= 0) cfg.chain.burn_in = burn_in;
      if (thin >= 0) cfg.chain.thin = thin;
      if (tempered) cfg.wbic = true;
      if (cfg.seed) cfg.chain.seed = *cfg.seed;
      const FitSummary s = run_fit(cfg);
      json j = {{"d", s.dims.d}, {"q", s.dims.q}, {"q_s", s.dims.q_s},
                {"acceptance_rate", s.acceptance}, {"numeric_rejections", s.numeric_rejections},
                {"beta", s.beta}};
      if (cfg.wbic) j["wbic"] = s.wbic;
      std::cout << j.dump(2) << '\n';
      return 0;
    }
    if (*sim) {
      return cmd_simulate(scenario, sim_d, sim_q, sim_studies, misspec, sim_seed, sim_out, n_mult,
                          delta, !no_scale);
    }
    if (*post) return cmd_postprocess(post_run, post_out, level, match);
    if (*wb) return cmd_wbic(wb_run, wb_n, wb_out);
    if (*chk) return cmd_check(chk_q, chk_qs, chk_a, chk_run, tol, chk_out);
    if (*sel) return cmd_select_rank(sel_studies, sel_group, sel_center, sel_threshold, sel_out);
    if (*bench) return cmd_benchmark(bcfg, mult_text, bench_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kInput);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kInput);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumeric);
  }
  return 0;
}

}  // namespace sufa
