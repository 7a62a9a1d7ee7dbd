#pragma once

#include <string>
#include <vector>

#include "sufa/io.hpp"

namespace sufa {

struct FitSummary {
  ModelDims dims;
  std::vector<std::string> features;
  double acceptance = 0.0;
  int numeric_rejections = 0;
  double beta = 1.0;
  double wbic = 0.0;  // only when tempered
};

/// ingest -> center -> select dimensions if needed -> run chain -> persist.
/// Everything goes to config.output_dir, which is locked for the duration.
FitSummary run_fit(const RunConfig& config);

/// Study summaries persisted by run_fit.
std::vector<StudySummary> load_study_summaries(const fs::path& run_dir);

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace sufa
