#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rsfc/classify.hpp"
#include "rsfc/core_data.hpp"
#include "rsfc/embedding.hpp"
#include "rsfc/entropy.hpp"
#include "rsfc/error.hpp"

namespace rsfc::pipeline {

/// A stage failed for a reason that is neither bad configuration nor bad data.
class StageError : public Error {
 public:
  using Error::Error;
};

struct KRange {
  int k_min = 1;
  int k_max = 10;
  int n_restarts = 10;
  int max_iter = 300;
  std::vector<int> values() const;
};

struct PipelineConfig {
  // Relative paths in a config file are resolved against the file's directory.
  std::filesystem::path manifest;
  std::filesystem::path roi_table;
  std::filesystem::path out_dir = "out";
  std::filesystem::path ground_truth;  // optional synth ground_truth.json

  std::uint64_t seed = 0;
  std::size_t workers = 1;

  EntropyParams entropy;
  StageBins stage_bins;

  KRange stage_clustering{1, 10, 10, 300};

  double test_fraction = 0.2;
  std::vector<ClassifierKind> classifiers = {ClassifierKind::RandomForest,
                                             ClassifierKind::LinearSvm, ClassifierKind::Knn};
  std::map<std::string, Hyperparams> hyperparams;  // keyed by classifier name

  double threshold = 0.3;
  std::vector<double> threshold_grid;  // empty means 0.05..0.95
  double clamp_epsilon = 1e-7;
  double edge_cutoff = 0.5;

  KRange network_clustering{1, 12, 10, 300};
  TsneParams tsne;  // seed is derived from `seed`
  int embed_neighbors = 5;

  double outlier_lo_pct = 2.5;
  double outlier_hi_pct = 97.5;
  /// "roi_table": networks from the ROI table; "clusters": the ROI k-means
  /// partition, relabelled to the table's networks when k matches.
  std::string metrics_partition = "roi_table";

  /// Throws ConfigError on unknown keys or invalid values.
  static PipelineConfig from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir);
  static PipelineConfig load(const std::filesystem::path& path);
  /// Full document, paths included.
  nlohmann::json to_json() const;
  /// Throws ConfigError for invalid values or missing input files.
  void validate() const;
};

/// Stage names in execution order.
const std::vector<std::string>& stage_names();

/// Stages a CLI command runs as targets ("run" = all of them).
std::vector<std::string> stages_for_command(const std::string& command);

struct StageOutcome {
  std::string name;
  bool skipped = false;
};

struct RunResult {
  std::vector<StageOutcome> stages;
};

/// Runs `targets` and everything upstream of them. A stage is skipped when
/// its recorded input key matches and all its recorded outputs exist, unless
/// an upstream stage ran in this invocation. Progress lines go to `log`.
/// Errors carry the stage name; ConfigError and DataError keep their type,
/// anything else becomes StageError.
RunResult run_pipeline(const PipelineConfig& config, const std::vector<std::string>& targets,
                       std::ostream* log = nullptr);

/// Aggregates the stage summaries present under `out_dir` into report.json
/// and returns the document.
nlohmann::json write_report(const std::filesystem::path& out_dir);

}  // namespace rsfc::pipeline
