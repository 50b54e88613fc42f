#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "rsfc/classify.hpp"
#include "rsfc/core_data.hpp"
#include "rsfc/netmetrics.hpp"

namespace rsfc::synth {

/// base + slope * (age - 7), in correlation (r) units.
struct AgeLine {
  double base = 0.0;
  double slope = 0.0;
  double at(double age) const { return base + slope * (age - 7.0); }
};

struct NetworkTrend {
  Network network = Network::DMN;
  int size = 2;
  AgeLine wnc;  // within-block correlation
  AgeLine bnc;  // this network's share of cross-block correlation
};

/// Block-structured correlation targets that drift linearly with age. The
/// cross-block target between networks a and b is (bnc_a + bnc_b) / 2.
struct TrendSpec {
  std::vector<NetworkTrend> networks;
  double noise_sd = 0.0;  // per-subject jitter of every target, r units
  int t_points = 2000;

  int roi_count() const;
  /// Throws ConfigError if a block has < 2 nodes, t_points < 3, or any
  /// target leaves (-0.95, 0.95) for ages 7..89.
  void validate() const;
  NetworkMap network_map() const;
  RoiTable roi_table() const;
};

/// The template's six networks and sizes with flat, moderately segregated
/// targets (within 0.45, between 0.10).
TrendSpec default_trend_spec();

/// Per-subject correlation target with jitter drawn from `rng_seed`.
Eigen::MatrixXd target_correlation(const TrendSpec& spec, double age, std::uint64_t rng_seed);

struct PdRepair {
  Eigen::MatrixXd matrix;
  bool repaired = false;
  double min_eigenvalue = 0.0;  // before repair
};

/// Clips eigenvalues at `floor` and rescales back to a unit diagonal.
/// Throws DataError if the result is still not positive definite.
PdRepair nearest_correlation_pd(const Eigen::Ref<const Eigen::MatrixXd>& target,
                                double floor = 1e-6);

struct SyntheticSubject {
  TimeSeriesMatrix series;
  Eigen::MatrixXd correlation;  // the (possibly repaired) population correlation
  bool repaired = false;
};

/// Draws `spec.t_points` samples of a zero-mean Gaussian with the subject's
/// target correlation via its symmetric square root. Samples are rounded to
/// 1e-6.
SyntheticSubject generate_subject(const TrendSpec& spec, double age, std::uint64_t seed);

struct GroundTruthTrend {
  std::string network;
  Measure measure = Measure::Wnc;
  double slope = 0.0;  // per year, Fisher-z units
  double intercept = 0.0;
};

struct SyntheticCohort {
  std::vector<SubjectRecord> subjects;  // sorted by age, ids S001..
  std::vector<TimeSeriesMatrix> series;
  NetworkMap networks;
  RoiTable roi_table;
  std::vector<GroundTruthTrend> ground_truth;
  int repaired_subjects = 0;
};

/// One subject per age (ordered by age, then input position). Ground truth
/// is the OLS trend of each subject's population WNC/BNC/NS, computed in
/// Fisher-z space from the correlation each subject was drawn from.
SyntheticCohort generate_cohort(const TrendSpec& spec, const std::vector<double>& ages,
                                std::uint64_t seed);

nlohmann::json ground_truth_json(const TrendSpec& spec, const SyntheticCohort& cohort);

/// Writes manifest.csv, rois.csv, timeseries/<id>.csv and ground_truth.json.
void write_cohort(const std::filesystem::path& dir, const TrendSpec& spec,
                  const SyntheticCohort& cohort);

/// `n` ages evenly spread over [lo, hi] with a seeded jitter of up to half a
/// step.
std::vector<double> spread_ages(int n, double lo, double hi, std::uint64_t seed);

struct StageFeatureOptions {
  int n_rois = 160;
  double separation = 1.0;  // per-feature SD of stage centre offsets, in noise SDs
  double noise_sd = 1.0;
};

/// Feature rows `sampen_000.., age_years` with four planted stage clusters.
/// Labels are 0-based stages; ages are drawn inside each stage's bin.
LabeledDataset stage_features(const std::vector<int>& counts_per_stage, std::uint64_t seed,
                              const StageFeatureOptions& options = {});

/// Symmetric block matrix with zero diagonal: `within` inside blocks,
/// `between` across, plus symmetric Gaussian noise.
Eigen::MatrixXd block_z_matrix(const std::vector<int>& sizes, double within, double between,
                               double noise_sd, std::uint64_t seed);

}  // namespace rsfc::synth
