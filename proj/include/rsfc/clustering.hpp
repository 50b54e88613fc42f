#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rsfc {

/// Assignment of N items to k non-empty clusters.
struct Partition {
  Eigen::VectorXi assignments;  // item -> 0..k-1
  Eigen::MatrixXd centroids;    // k x D
  int k = 0;
  double inertia = 0.0;  // sum of squared distances to assigned centroids
  int iterations = 0;
};

struct KMeansOptions {
  int k = 2;
  std::uint64_t seed = 0;
  int max_iter = 300;
  int n_restarts = 10;
};

/// Lloyd's algorithm from k-means++ seeding, best of `n_restarts` by inertia
/// (ties go to the earlier restart). Empty clusters are repaired by moving
/// the point farthest from its centroid into them. When `inertia_trace` is
/// given it receives the per-iteration inertia of the winning restart.
/// Throws ConfigError if k < 1 or k > N.
Partition kmeans(const Eigen::Ref<const Eigen::MatrixXd>& data, const KMeansOptions& options,
                 std::vector<double>* inertia_trace = nullptr);

/// Sum of squared distances of each row to its cluster centroid, recomputed
/// from the assignments.
double inertia(const Eigen::Ref<const Eigen::MatrixXd>& data,
               const Eigen::Ref<const Eigen::VectorXi>& assignments, int k);

struct DistortionScores {
  double inertia = 0.0;         // within-cluster sum of squares
  double between = 0.0;         // sum_c n_c * |centroid_c - grand_mean|^2
  double within_between = 0.0;  // inertia / between (inf when between == 0)
};

DistortionScores distortion(const Eigen::Ref<const Eigen::MatrixXd>& data,
                            const Partition& partition);

struct ElbowResult {
  std::vector<int> k_range;
  std::vector<double> distortion_scores;  // inertia per k
  std::vector<double> within_between;     // auxiliary ratio per k
  int chosen_k = 0;
  std::string method = "kneedle_chord";
  bool degenerate = false;  // no knee; chosen_k is the smallest k
};

/// Knee of a decreasing curve: the point with the largest perpendicular
/// distance below the chord joining the endpoints, after scaling both axes
/// to [0, 1]. Ties go to the smaller k. A curve with no point strictly below
/// the chord yields the first k and `degenerate`.
ElbowResult locate_knee(std::vector<int> k_range, std::vector<double> scores);

/// Runs kmeans for every k in `k_range` and locates the knee.
/// Throws ConfigError unless k_range is ascending, within [1, N] and has at
/// least three entries.
ElbowResult elbow(const Eigen::Ref<const Eigen::MatrixXd>& data, const std::vector<int>& k_range,
                  std::uint64_t seed, int n_restarts = 10, int max_iter = 300);

/// Chance-corrected pair-counting agreement between two labelings.
double adjusted_rand_index(const Eigen::Ref<const Eigen::VectorXi>& a,
                           const Eigen::Ref<const Eigen::VectorXi>& b);

struct Reordered {
  Eigen::MatrixXd matrix;
  std::vector<Eigen::Index> ordering;  // new position -> original index
};

/// Permutes rows and columns so clusters are contiguous: ascending cluster
/// id, ascending original index within a cluster.
Reordered reorder_by_partition(const Eigen::Ref<const Eigen::MatrixXd>& matrix,
                               const Eigen::Ref<const Eigen::VectorXi>& assignments);

/// Relabels `assignments` (0..k-1) to maximise overlap with `reference`
/// (0..k-1) over all k! bijections; k <= 8.
Eigen::VectorXi match_labels(const Eigen::Ref<const Eigen::VectorXi>& assignments,
                             const Eigen::Ref<const Eigen::VectorXi>& reference, int k);

/// Zero-mean, unit-variance columns; constant columns are centred only.
Eigen::MatrixXd standardize_columns(const Eigen::Ref<const Eigen::MatrixXd>& data);

}  // namespace rsfc
