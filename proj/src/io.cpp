#include "sufa/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sufa/error.hpp"

#ifndef SUFA_VERSION
#define SUFA_VERSION "0.0.0"
#endif

namespace sufa {

const char* version_string() { return SUFA_VERSION; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE && std::isfinite(out);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Non-blank lines with their 1-based line numbers.
std::vector<std::pair<int, std::string>> content_lines(const std::string& text) {
  std::vector<std::pair<int, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    out.emplace_back(no, line);
  }
  return out;
}

}  // namespace

StudyData parse_study_csv(const std::string& text, const std::string& source,
                          const ColumnSchema& schema) {
  const auto lines = content_lines(text);
  if (lines.empty()) throw InputError(source + ": empty file");
  if (lines.size() == 1) throw InputError(source + ": header row but no data rows");

  const std::vector<std::string> header = split_fields(lines[0].second);
  int group_col = -1;
  StudyData out;
  out.source = source;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = unquote(header[c]);
    if (name.empty()) {
      throw InputError(source + ": line " + std::to_string(lines[0].first) + ", column " +
                       std::to_string(c + 1) + ": empty header name");
    }
    if (!seen.insert(name).second) {
      throw InputError(source + ": duplicate column name '" + name + "'");
    }
    if (!schema.group_column.empty() && name == schema.group_column) {
      group_col = static_cast<int>(c);
    } else {
      out.features.push_back(name);
    }
  }
  if (!schema.group_column.empty() && group_col < 0) {
    throw InputError(source + ": group column '" + schema.group_column + "' not found in header");
  }
  if (out.features.empty()) throw InputError(source + ": no feature columns");

  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  out.y.resize(n, static_cast<Eigen::Index>(out.features.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [line_no, line] = lines[i + 1];
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InputError(source + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<int>(c) == group_col) {
        out.groups.push_back(unquote(fields[c]));
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        throw InputError(source + ": line " + std::to_string(line_no) + ", column " +
                         std::to_string(c + 1) + " ('" + unquote(header[c]) +
                         "'): not a finite number: '" + fields[c] + "'");
      }
      out.y(i, k++) = v;
    }
  }
  return out;
}

StudyData load_study_csv(const fs::path& path, const ColumnSchema& schema) {
  return parse_study_csv(read_file(path), path.string(), schema);
}

std::vector<std::string> intersect_features(std::vector<StudyData>& studies,
                                            std::vector<std::string>* warnings) {
  if (studies.empty()) throw InputError("no studies to align");
  std::vector<std::string> common;
  for (const auto& f : studies[0].features) {
    bool everywhere = true;
    for (std::size_t s = 1; s < studies.size() && everywhere; ++s) {
      const auto& fs_ = studies[s].features;
      everywhere = std::find(fs_.begin(), fs_.end(), f) != fs_.end();
    }
    if (everywhere) common.push_back(f);
  }
  if (common.empty()) throw InputError("the studies share no feature columns");

  for (auto& st : studies) {
    std::map<std::string, Eigen::Index> index;
    for (std::size_t c = 0; c < st.features.size(); ++c) index[st.features[c]] = static_cast<Eigen::Index>(c);
    std::vector<std::string> dropped;
    for (const auto& f : st.features) {
      if (std::find(common.begin(), common.end(), f) == common.end()) dropped.push_back(f);
    }
    if (!dropped.empty() && warnings != nullptr) {
      std::string msg = st.source + ": dropping " + std::to_string(dropped.size()) +
                        " feature(s) not shared by all studies:";
      for (const auto& f : dropped) msg += " " + f;
      warnings->push_back(msg);
    }
    MatrixXd y(st.y.rows(), static_cast<Eigen::Index>(common.size()));
    for (std::size_t c = 0; c < common.size(); ++c) y.col(static_cast<Eigen::Index>(c)) = st.y.col(index[common[c]]);
    st.y = std::move(y);
    st.features = common;
  }
  return common;
}

Centering parse_centering(const std::string& name) {
  if (name == "per_study") return Centering::kPerStudy;
  if (name == "per_group") return Centering::kPerGroup;
  if (name == "none") return Centering::kNone;
  throw ConfigError("unknown centering mode '" + name + "' (expected per_study, per_group or none)");
}

std::string to_string(Centering c) {
  switch (c) {
    case Centering::kPerStudy: return "per_study";
    case Centering::kPerGroup: return "per_group";
    case Centering::kNone: return "none";
  }
  return "?";
}

MatrixXd center(const MatrixXd& y, Centering mode, const std::vector<std::string>& groups) {
  if (mode == Centering::kNone || y.rows() == 0) return y;
  if (mode == Centering::kPerStudy) {
    MatrixXd out = y.rowwise() - y.colwise().mean();
    return out;
  }
  if (groups.size() != static_cast<std::size_t>(y.rows())) {
    throw ConfigError("per-group centering needs one group label per row");
  }
  std::map<std::string, std::vector<Eigen::Index>> rows;
  for (Eigen::Index i = 0; i < y.rows(); ++i) rows[groups[i]].push_back(i);
  MatrixXd out = y;
  for (const auto& [label, idx] : rows) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(y.cols());
    for (auto i : idx) mean += y.row(i);
    mean /= static_cast<double>(idx.size());
    for (auto i : idx) out.row(i) -= mean;
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const MatrixXd& m, const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  if (!header.empty()) {
    if (header.size() != static_cast<std::size_t>(m.cols())) {
      throw DimensionError("CSV header has " + std::to_string(header.size()) + " names for " +
                           std::to_string(m.cols()) + " columns");
    }
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
  }
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw InputError("write to '" + path.string() + "' failed");
}

MatrixXd read_matrix_csv(const fs::path& path, bool has_header, std::vector<std::string>* header) {
  const auto lines = content_lines(read_file(path));
  std::size_t first = 0;
  if (has_header) {
    if (lines.empty()) throw InputError(path.string() + ": empty file");
    if (header != nullptr) {
      *header = split_fields(lines[0].second);
      for (auto& h : *header) h = unquote(h);
    }
    first = 1;
  }
  const auto n = static_cast<Eigen::Index>(lines.size() - first);
  if (n == 0) return MatrixXd(0, header ? static_cast<Eigen::Index>(header->size()) : 0);
  const auto cols = static_cast<Eigen::Index>(split_fields(lines[first].second).size());
  MatrixXd m(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [line_no, line] = lines[first + i];
    const auto fields = split_fields(line);
    if (static_cast<Eigen::Index>(fields.size()) != cols) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!parse_double(fields[j], m(i, j))) {
        throw InputError(path.string() + ": line " + std::to_string(line_no) + ", column " +
                         std::to_string(j + 1) + ": not a finite number: '" + fields[j] + "'");
      }
    }
  }
  return m;
}

// ---- draws -----------------------------------------------------------------

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    std::reverse(b, b + sizeof(T));
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  explicit Writer(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw InputError("cannot write '" + path.string() + "'");
  }
  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_row_major(const MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put(m(i, j));
  }
  void raw(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  bool ok() const { return static_cast<bool>(out_); }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : in_(path, std::ios::binary), name_(path.string()) {
    if (!in_) throw InputError("cannot open '" + name_ + "'");
  }
  template <typename T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw InputError(name_ + ": truncated draw file");
    return to_little(v);
  }
  MatrixXd get_row_major(Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get<double>();
    return m;
  }
  void raw(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw InputError(name_ + ": truncated draw file");
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::string name_;
};

}  // namespace

void write_draws(const fs::path& path, const McmcOutput& chain, const ModelDims& dims) {
  const bool has_dl = !chain.dl.empty();
  if (has_dl && chain.dl.size() != chain.draws.size()) {
    throw DimensionError("DL states and draws differ in count");
  }
  Writer w(path);
  w.raw(kDrawMagic, sizeof kDrawMagic);
  w.put<std::uint32_t>(kDrawVersion);
  w.put<std::uint32_t>(has_dl ? 1u : 0u);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dims.d));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dims.q));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dims.q_s.size()));
  for (int qs : dims.q_s) w.put<std::uint32_t>(static_cast<std::uint32_t>(qs));
  w.put<std::uint64_t>(chain.draws.size());
  w.put<double>(chain.beta);
  for (std::size_t i = 0; i < chain.draws.size(); ++i) {
    const ParamSet& p = chain.draws[i];
    p.validate(dims);
    w.put(chain.loglik[i]);
    w.put(chain.log_posterior[i]);
    w.put_row_major(p.lambda);
    w.put_row_major(p.log_delta);
    for (const auto& a : p.a) w.put_row_major(a);
    if (has_dl) {
      w.put(chain.dl[i].tau);
      w.put_row_major(chain.dl[i].phi);
      w.put_row_major(chain.dl[i].psi);
    }
  }
  if (!w.ok()) throw InputError("write to '" + path.string() + "' failed");
}

DrawFile read_draws(const fs::path& path) {
  Reader r(path);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kDrawMagic, sizeof magic) != 0) {
    throw InputError(path.string() + ": not a draw file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kDrawVersion) {
    throw InputError(path.string() + ": unsupported draw format version " + std::to_string(version));
  }
  const auto flags = r.get<std::uint32_t>();
  DrawFile f;
  f.d = static_cast<int>(r.get<std::uint32_t>());
  f.q = static_cast<int>(r.get<std::uint32_t>());
  const auto num_studies = r.get<std::uint32_t>();
  for (std::uint32_t s = 0; s < num_studies; ++s) f.q_s.push_back(static_cast<int>(r.get<std::uint32_t>()));
  const auto count = r.get<std::uint64_t>();
  f.beta = r.get<double>();
  const bool has_dl = (flags & 1u) != 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    f.loglik.push_back(r.get<double>());
    f.log_posterior.push_back(r.get<double>());
    ParamSet p;
    p.lambda = r.get_row_major(f.d, f.q);
    p.log_delta = r.get_row_major(f.d, 1);
    for (int qs : f.q_s) p.a.push_back(r.get_row_major(f.q, qs));
    f.draws.push_back(std::move(p));
    if (has_dl) {
      DlState dl;
      dl.tau = r.get<double>();
      dl.phi = r.get_row_major(f.d, f.q);
      dl.psi = r.get_row_major(f.d, f.q);
      f.dl.push_back(std::move(dl));
    }
  }
  if (!r.at_end()) throw InputError(path.string() + ": trailing bytes after the last draw");
  return f;
}

json draw_sidecar(const McmcOutput& chain, const ModelDims& dims) {
  const bool has_dl = !chain.dl.empty();
  json fields = json::array();
  fields.push_back({{"name", "loglik"}, {"shape", {1}}});
  fields.push_back({{"name", "log_posterior"}, {"shape", {1}}});
  fields.push_back({{"name", "lambda"}, {"shape", {dims.d, dims.q}}, {"order", "row-major"}});
  fields.push_back({{"name", "log_delta"}, {"shape", {dims.d}}});
  for (std::size_t s = 0; s < dims.q_s.size(); ++s) {
    fields.push_back({{"name", "a_" + std::to_string(s)},
                      {"shape", {dims.q, dims.q_s[s]}},
                      {"order", "row-major"}});
  }
  std::size_t per_draw = 2 + static_cast<std::size_t>(dims.d) * dims.q + dims.d;
  for (int qs : dims.q_s) per_draw += static_cast<std::size_t>(dims.q) * qs;
  if (has_dl) {
    fields.push_back({{"name", "tau"}, {"shape", {1}}});
    fields.push_back({{"name", "phi"}, {"shape", {dims.d, dims.q}}, {"order", "row-major"}});
    fields.push_back({{"name", "psi"}, {"shape", {dims.d, dims.q}}, {"order", "row-major"}});
    per_draw += 1 + 2 * static_cast<std::size_t>(dims.d) * dims.q;
  }
  std::size_t header_bytes = 8 + 4 * 5 + 4 * dims.q_s.size() + 8 + 8;
  return {{"format", "SUFADRAW"},
          {"version", kDrawVersion},
          {"byte_order", "little"},
          {"value_type", "f64"},
          {"header_bytes", header_bytes},
          {"doubles_per_draw", per_draw},
          {"count", chain.draws.size()},
          {"d", dims.d},
          {"q", dims.q},
          {"q_s", dims.q_s},
          {"beta", chain.beta},
          {"has_dl", has_dl},
          {"fields", fields}};
}

// ---- config ----------------------------------------------------------------

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_as(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + key + "' in " + where + ": " + e.what());
  }
}

}  // namespace

json chain_to_json(const ChainConfig& c) {
  return {{"iterations", c.iterations},
          {"burn_in", c.burn_in},
          {"thin", c.thin},
          {"beta", c.beta},
          {"init", c.init == InitMode::kWarm ? "warm" : "prior"},
          {"max_step", c.tuning.max_step},
          {"poisson_mean", c.tuning.poisson_mean},
          {"min_leapfrog", c.tuning.min_leapfrog},
          {"max_leapfrog", c.tuning.max_leapfrog},
          {"tau_order", c.dl_options.tau_order == TauOrder::kConjugate ? "conjugate" : "as_printed"},
          {"sweep_order", c.dl_options.sweep_order == DlSweepOrder::kBlocked ? "blocked" : "as_printed"},
          {"acceptance", c.acceptance == AcceptanceRule::kStandard ? "standard" : "as_printed"},
          {"store_dl", c.store_dl}};
}

ChainConfig chain_from_json(const json& j, ChainConfig c) {
  const std::string where = "chain config";
  if (!j.is_object()) throw ConfigError("chain config must be an object");
  reject_unknown(j,
                 {"iterations", "burn_in", "thin", "beta", "init", "max_step", "poisson_mean",
                  "min_leapfrog", "max_leapfrog", "tau_order", "sweep_order", "acceptance",
                  "store_dl"},
                 where);
  auto pick = [&](const char* key, auto& field) {
    if (j.contains(key)) field = get_as<std::decay_t<decltype(field)>>(j, key, where);
  };
  pick("iterations", c.iterations);
  pick("burn_in", c.burn_in);
  pick("thin", c.thin);
  pick("beta", c.beta);
  pick("max_step", c.tuning.max_step);
  pick("poisson_mean", c.tuning.poisson_mean);
  pick("min_leapfrog", c.tuning.min_leapfrog);
  pick("max_leapfrog", c.tuning.max_leapfrog);
  pick("store_dl", c.store_dl);
  auto choice = [&](const char* key, const char* a, const char* b) -> std::optional<bool> {
    if (!j.contains(key)) return std::nullopt;
    const auto v = get_as<std::string>(j, key, where);
    if (v == a) return true;
    if (v == b) return false;
    throw ConfigError(std::string("'") + key + "' must be '" + a + "' or '" + b + "'");
  };
  if (auto v = choice("init", "warm", "prior")) c.init = *v ? InitMode::kWarm : InitMode::kPrior;
  if (auto v = choice("tau_order", "conjugate", "as_printed")) {
    c.dl_options.tau_order = *v ? TauOrder::kConjugate : TauOrder::kAsPrinted;
  }
  if (auto v = choice("sweep_order", "blocked", "as_printed")) {
    c.dl_options.sweep_order = *v ? DlSweepOrder::kBlocked : DlSweepOrder::kAsPrinted;
  }
  if (auto v = choice("acceptance", "standard", "as_printed")) {
    c.acceptance = *v ? AcceptanceRule::kStandard : AcceptanceRule::kAsPrinted;
  }
  return c;
}

void RunConfig::validate() const {
  if (studies.empty()) throw ConfigError("at least one study file is required");
  if (!seed) throw ConfigError("a seed is required; runs never draw entropy from the system");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in (0, 1]");
  if (q && *q < 1) throw ConfigError("q must be at least 1");
  if (!q_s.empty()) {
    if (!q) throw ConfigError("q_s given without q");
    if (q_s.size() != studies.size()) {
      throw ConfigError("q_s has " + std::to_string(q_s.size()) + " entries for " +
                        std::to_string(studies.size()) + " studies");
    }
    int total = 0;
    for (int v : q_s) {
      if (v < 0) throw ConfigError("q_s entries must be non-negative");
      total += v;
    }
    if (total > *q) {
      throw ConfigError("sum(q_s) = " + std::to_string(total) + " exceeds q = " + std::to_string(*q) +
                        "; shared and study-specific covariance are only identifiable when "
                        "sum(q_s) <= q");
    }
  }
  if (centering == Centering::kPerGroup && schema.group_column.empty()) {
    throw ConfigError("per_group centering needs a group_column");
  }
  if (output_dir.empty()) throw ConfigError("output_dir is required");
  hyper.validate();
  ChainConfig c = chain;
  if (wbic) c.beta = 0.5;  // the real value depends on the data
  c.validate();
}

RunConfig config_from_json(const json& j) {
  const std::string where = "run config";
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  reject_unknown(j,
                 {"studies", "group_column", "centering", "q", "q_s", "threshold", "hyper", "chain",
                  "wbic", "wbic_n", "seed", "output_dir"},
                 where);
  RunConfig c;
  if (j.contains("studies")) c.studies = get_as<std::vector<std::string>>(j, "studies", where);
  if (j.contains("group_column")) c.schema.group_column = get_as<std::string>(j, "group_column", where);
  if (j.contains("centering")) c.centering = parse_centering(get_as<std::string>(j, "centering", where));
  if (j.contains("q")) {
    if (j["q"].is_string()) {
      if (j["q"] != "auto") throw ConfigError("q must be an integer or \"auto\"");
    } else {
      c.q = get_as<int>(j, "q", where);
    }
  }
  if (j.contains("q_s")) c.q_s = get_as<std::vector<int>>(j, "q_s", where);
  if (j.contains("threshold")) c.threshold = get_as<double>(j, "threshold", where);
  if (j.contains("hyper")) {
    const json& h = j["hyper"];
    reject_unknown(h, {"a", "b_a", "mu_delta", "sigma2_delta"}, "hyper");
    if (h.contains("a")) c.hyper.a = get_as<double>(h, "a", "hyper");
    if (h.contains("b_a")) c.hyper.b_a = get_as<double>(h, "b_a", "hyper");
    if (h.contains("mu_delta")) c.hyper.mu_delta = get_as<double>(h, "mu_delta", "hyper");
    if (h.contains("sigma2_delta")) c.hyper.sigma2_delta = get_as<double>(h, "sigma2_delta", "hyper");
  }
  if (j.contains("chain")) c.chain = chain_from_json(j["chain"]);
  if (j.contains("wbic")) c.wbic = get_as<bool>(j, "wbic", where);
  if (j.contains("wbic_n")) {
    const auto v = get_as<std::string>(j, "wbic_n", where);
    if (v == "pooled") {
      c.wbic_n = TemperatureN::kPooled;
    } else if (v == "mean_study") {
      c.wbic_n = TemperatureN::kMeanStudy;
    } else {
      throw ConfigError("wbic_n must be 'pooled' or 'mean_study'");
    }
  }
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed", where);
  if (j.contains("output_dir")) c.output_dir = get_as<std::string>(j, "output_dir", where);
  if (c.seed) c.chain.seed = *c.seed;
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  j["studies"] = c.studies;
  j["group_column"] = c.schema.group_column;
  j["centering"] = to_string(c.centering);
  if (c.q) {
    j["q"] = *c.q;
  } else {
    j["q"] = "auto";
  }
  j["q_s"] = c.q_s;
  j["threshold"] = c.threshold;
  j["hyper"] = {{"a", c.hyper.a},
                {"b_a", c.hyper.b_a},
                {"mu_delta", c.hyper.mu_delta},
                {"sigma2_delta", c.hyper.sigma2_delta}};
  j["chain"] = chain_to_json(c.chain);
  j["wbic"] = c.wbic;
  j["wbic_n"] = c.wbic_n == TemperatureN::kPooled ? "pooled" : "mean_study";
  if (c.seed) j["seed"] = *c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---- manifest and locking --------------------------------------------------

std::uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "' for hashing");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::optional<std::uint64_t> seed, const json& timings,
                    const std::vector<std::string>& outputs) {
  json files = json::array();
  for (const auto& name : outputs) {
    const fs::path p = dir / name;
    files.push_back({{"file", name}, {"bytes", fs::file_size(p)}, {"fnv1a64", hex64(fnv1a_file(p))}});
  }
  json m;
  m["tool"] = "sufa";
  m["version"] = version_string();
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed ? json(*seed) : json(nullptr);
  m["timings_seconds"] = timings;
  m["outputs"] = files;
  write_json(dir / "manifest.json", m);
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".sufa.lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
  fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd_ < 0) {
    if (errno == EEXIST) {
      throw ConfigError("output directory '" + dir.string() +
                        "' is in use by another run (remove .sufa.lock if it is stale)");
    }
    throw InputError("cannot create lock file '" + path_.string() + "': " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

}  // namespace sufa
