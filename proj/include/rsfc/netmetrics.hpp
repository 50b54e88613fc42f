#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rsfc {

/// ROI -> network id (0-based) with a label per network id.
struct NetworkMap {
  Eigen::VectorXi assignments;
  std::vector<std::string> labels;

  int network_count() const { return static_cast<int>(labels.size()); }
  int size_of(int network) const { return static_cast<int>((assignments.array() == network).count()); }
};

/// Mean z over unordered node pairs inside `network`. Throws DataError when
/// the network has fewer than two nodes.
double within_connectivity(const Eigen::Ref<const Eigen::MatrixXd>& z, const NetworkMap& map,
                           int network);

/// Mean z over all (inside, outside) node pairs. Throws DataError when the
/// network is empty or covers every node.
double between_connectivity(const Eigen::Ref<const Eigen::MatrixXd>& z, const NetworkMap& map,
                            int network);

struct Segregation {
  double value = 0.0;
  bool defined = true;  // false when wnc == 0
};

/// (wnc - bnc) / wnc.
inline Segregation segregation(double wnc, double bnc) {
  if (wnc == 0.0) return {0.0, false};
  return {(wnc - bnc) / wnc, true};
}

struct NetworkConnectivityStats {
  std::string subject_id;
  double age_years = 0.0;
  std::string network;
  double wnc = 0.0;
  double bnc = 0.0;
  Segregation ns;
};

/// One row per network for a subject's z-matrix under a shared partition.
std::vector<NetworkConnectivityStats> subject_network_stats(const std::string& subject_id,
                                                            double age_years,
                                                            const Eigen::Ref<const Eigen::MatrixXd>& z,
                                                            const NetworkMap& map);

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Linear-interpolation percentile (0..100) of unsorted values.
double percentile(std::vector<double> values, double pct);

/// Keeps points whose y lies inside [P_lo, P_hi] of the y values.
/// Throws ConfigError unless 0 <= lo < hi <= 100, DataError for < 3 points.
std::vector<Point> percentile_outlier_filter(const std::vector<Point>& points, double lo_pct,
                                             double hi_pct);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  bool degenerate = false;  // y had zero variance; r_squared reported as 0
};

/// Ordinary least squares of y on x. Throws DataError for < 3 points or
/// constant x.
LinearFit linear_fit(const std::vector<Point>& points);

enum class Measure { Wnc, Bnc, Ns };
std::string_view to_string(Measure m);

struct SegregationTrend {
  std::string network;
  Measure measure = Measure::Wnc;
  LinearFit fit;
  int n_input = 0;
  int n_used = 0;
  int n_undefined = 0;  // NS rows dropped because wnc == 0
  std::vector<Point> used;  // filtered points, sorted by (x, y)
};

struct TrendTable {
  std::vector<SegregationTrend> trends;
  /// "network/measure: reason" for cells skipped for lack of points.
  std::vector<std::string> skipped;
};

/// Per network x measure: outlier filter then OLS against age. Points are
/// sorted before fitting, so the result does not depend on subject order.
TrendTable cohort_trends(const std::vector<NetworkConnectivityStats>& stats, double lo_pct = 2.5,
                         double hi_pct = 97.5);

std::string trend_table_csv(const TrendTable& table);
std::string subject_stats_csv(const std::vector<NetworkConnectivityStats>& stats);

}  // namespace rsfc
