#pragma once

// File formats: study CSVs, matrix CSVs, the binary draw format with its
// JSON sidecar, run configuration, manifests and the output-directory lock.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sufa/hmc.hpp"
#include "sufa/model.hpp"
#include "sufa/priors.hpp"

namespace sufa {

using nlohmann::json;
namespace fs = std::filesystem;

const char* version_string();

// ---- CSV -------------------------------------------------------------------

struct ColumnSchema {
  std::string group_column;  // empty: no group labels
};

struct StudyData {
  std::string source;
  std::vector<std::string> features;
  MatrixXd y;                       // n x d
  std::vector<std::string> groups;  // one per row when a group column exists
};

/// Header row of feature names, then numeric rows. Errors carry 1-based
/// line and column numbers.
StudyData load_study_csv(const fs::path& path, const ColumnSchema& schema = {});
StudyData parse_study_csv(const std::string& text, const std::string& source,
                          const ColumnSchema& schema = {});

/// Restricts every study to the features present in all of them, in the
/// order of the first study. Dropped names are appended to `warnings`.
std::vector<std::string> intersect_features(std::vector<StudyData>& studies,
                                            std::vector<std::string>* warnings = nullptr);

enum class Centering { kPerStudy, kPerGroup, kNone };
Centering parse_centering(const std::string& name);
std::string to_string(Centering c);

/// Subtracts column means, overall or within each group label.
MatrixXd center(const MatrixXd& y, Centering mode, const std::vector<std::string>& groups = {});

/// Writes with 17 significant digits, so reading back is exact.
void write_matrix_csv(const fs::path& path, const MatrixXd& m,
                      const std::vector<std::string>& header = {});
/// Reads a numeric CSV; set `has_header` when the first row holds names.
MatrixXd read_matrix_csv(const fs::path& path, bool has_header,
                         std::vector<std::string>* header = nullptr);

// ---- draws -----------------------------------------------------------------

struct DrawFile {
  int d = 0;
  int q = 0;
  std::vector<int> q_s;
  double beta = 1.0;
  std::vector<ParamSet> draws;
  std::vector<double> loglik;
  std::vector<double> log_posterior;
  std::vector<DlState> dl;  // empty when not stored
};

inline constexpr char kDrawMagic[8] = {'S', 'U', 'F', 'A', 'D', 'R', 'A', 'W'};
inline constexpr std::uint32_t kDrawVersion = 1;

/// Layout: magic, u32 version, u32 flags (bit 0: DL state stored), u32 d,
/// u32 q, u32 S, S x u32 q_s, u64 count, f64 beta, then per draw the
/// little-endian f64 values loglik, log_posterior, Lambda row-major,
/// log_delta, each A_s row-major and, when flagged, tau, phi row-major,
/// psi row-major.
void write_draws(const fs::path& path, const McmcOutput& chain, const ModelDims& dims);
DrawFile read_draws(const fs::path& path);
/// JSON description of the layout written next to the binary file.
json draw_sidecar(const McmcOutput& chain, const ModelDims& dims);

// ---- config ----------------------------------------------------------------

struct RunConfig {
  std::vector<std::string> studies;
  ColumnSchema schema;
  Centering centering = Centering::kPerStudy;
  std::optional<int> q;  // empty: select from the data
  std::vector<int> q_s;  // empty: q / S rule
  double threshold = 0.95;
  PriorHyper hyper = default_hyperparameters();
  ChainConfig chain;
  bool wbic = false;  // temper at beta = 1 / log n
  TemperatureN wbic_n = TemperatureN::kPooled;
  std::optional<std::uint64_t> seed;
  std::string output_dir;

  void validate() const;
};

RunConfig config_from_json(const json& j);
json config_to_json(const RunConfig& c);
RunConfig load_config(const fs::path& path);

json chain_to_json(const ChainConfig& c);
ChainConfig chain_from_json(const json& j, ChainConfig base = {});

// ---- manifest and locking --------------------------------------------------

/// 64-bit FNV-1a of a file's bytes.
std::uint64_t fnv1a_file(const fs::path& path);
std::string hex64(std::uint64_t v);

/// manifest.json with the tool version, command, config, seed, timings and
/// hashes of the listed output files (paths relative to `dir`).
void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::optional<std::uint64_t> seed, const json& timings,
                    const std::vector<std::string>& outputs);

/// Holds `<dir>/.sufa.lock` for its lifetime; a second holder fails.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

}  // namespace sufa
