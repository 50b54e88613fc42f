#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rsfc/core_data.hpp"

namespace rsfc {

/// Pearson correlations: symmetric, unit diagonal, entries in [-1, 1].
struct CorrMatrix {
  Eigen::MatrixXd values;
  Eigen::Index roi_count() const { return values.rows(); }
};

/// Fisher z of a correlation matrix: symmetric, zero diagonal, finite.
struct ZMatrix {
  Eigen::MatrixXd values;
  double clamp_epsilon = 1e-7;
  Eigen::Index roi_count() const { return values.rows(); }
};

/// Binary adjacency: symmetric, zero diagonal.
struct BinMatrix {
  Eigen::MatrixXd values;
  double threshold_used = 0.0;
  Eigen::Index roi_count() const { return values.rows(); }
  /// Number of undirected edges.
  long edge_count() const;
};

struct ThresholdCurve {
  std::vector<double> thresholds;
  std::vector<long> edge_counts;
};

struct PearsonResult {
  CorrMatrix corr;
  /// Columns with zero variance; their rows/columns are zero (diagonal one).
  std::vector<Eigen::Index> constant_columns;
};

/// Sample Pearson correlation between every pair of ROI columns.
/// Throws DataError if T < 3 or every column is constant.
PearsonResult pearson_matrix(const TimeSeriesMatrix& subject);

/// Fisher z-transform of a single coefficient, clamped to +/-(1 - eps).
/// Odd in r by construction.
template <typename Scalar>
Scalar fisher_z(Scalar r, Scalar clamp_epsilon = Scalar(1e-7)) {
  const Scalar limit = Scalar(1) - clamp_epsilon;
  const Scalar mag = std::min(std::abs(r), limit);
  return std::copysign(std::atanh(mag), r);
}

/// Element-wise Fisher z with the diagonal forced to zero. Negative
/// correlations keep their sign. Throws ConfigError unless eps in (0, 1e-3].
ZMatrix fisher_z(const CorrMatrix& corr, double clamp_epsilon = 1e-7);

/// Default scan grid 0.05, 0.10, ..., 0.95.
std::vector<double> default_threshold_grid();

/// Upper-triangle count of |r| >= t for each t. Throws ConfigError on an
/// empty or non-ascending grid or values outside [0, 1].
ThresholdCurve threshold_scan(const CorrMatrix& corr, std::span<const double> grid);

/// Edge iff |r| >= threshold, off-diagonal only.
BinMatrix binarize(const CorrMatrix& corr, double threshold);

/// Element-wise mean by pairwise summation, so the result is independent of
/// how the list was partitioned across workers. Throws DataError on an
/// empty list or mismatched shapes.
Eigen::MatrixXd group_average(std::span<const Eigen::MatrixXd> matrices);

/// BrainNet Viewer node file: `x y z color size label` per ROI, with color
/// the 1-based network index and size 1.
std::string brainnet_node_text(const RoiTable& roi_table);
/// BrainNet Viewer edge file: R rows of R values, entries below the cutoff
/// zeroed, zero diagonal.
std::string brainnet_edge_text(const Eigen::Ref<const Eigen::MatrixXd>& prevalence,
                               double edge_cutoff);
/// Prevalence matrix with entries below `edge_cutoff` zeroed and a zero diagonal.
Eigen::MatrixXd apply_edge_cutoff(const Eigen::Ref<const Eigen::MatrixXd>& prevalence,
                                  double edge_cutoff);

void export_brainnet(const Eigen::Ref<const Eigen::MatrixXd>& prevalence,
                     const RoiTable& roi_table, const std::filesystem::path& node_path,
                     const std::filesystem::path& edge_path, double edge_cutoff = 0.5);

/// Parses a whitespace-separated square edge file.
Eigen::MatrixXd read_edge_file(const std::filesystem::path& path);

}  // namespace rsfc
