#include "rsfc/connectivity.hpp"

#include <algorithm>
#include <functional>

#include "rsfc/error.hpp"
#include "rsfc/io.hpp"

namespace rsfc {

long BinMatrix::edge_count() const {
  long n = 0;
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    for (Eigen::Index i = 0; i < j; ++i)
      if (values(i, j) != 0.0) ++n;
  return n;
}

PearsonResult pearson_matrix(const TimeSeriesMatrix& subject) {
  const Eigen::MatrixXd& x = subject.values();
  const Eigen::Index t = x.rows();
  const Eigen::Index r = x.cols();
  if (t < 3) throw DataError("pearson: needs at least 3 timepoints");

  Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::VectorXd norms = centered.colwise().norm().transpose();

  PearsonResult out;
  for (Eigen::Index c = 0; c < r; ++c) {
    // Exactly constant columns center to zero; anything else is real signal.
    if ((x.col(c).array() == x(0, c)).all() || norms(c) == 0.0) {
      out.constant_columns.push_back(c);
      centered.col(c).setZero();
      norms(c) = 1.0;
    } else {
      centered.col(c) /= norms(c);
    }
  }
  if (static_cast<Eigen::Index>(out.constant_columns.size()) == r)
    throw DataError("pearson: every ROI column is constant");

  Eigen::MatrixXd corr(r, r);
  corr.noalias() = centered.transpose() * centered;
  for (Eigen::Index j = 0; j < r; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) {
      const double v = std::clamp(0.5 * (corr(i, j) + corr(j, i)), -1.0, 1.0);
      corr(i, j) = v;
      corr(j, i) = v;
    }
    corr(j, j) = 1.0;
  }
  out.corr.values = std::move(corr);
  return out;
}

ZMatrix fisher_z(const CorrMatrix& corr, double clamp_epsilon) {
  if (!(clamp_epsilon > 0.0 && clamp_epsilon <= 1e-3))
    throw ConfigError("fisher_z: clamp epsilon must lie in (0, 1e-3]");
  ZMatrix z;
  z.clamp_epsilon = clamp_epsilon;
  z.values = corr.values.unaryExpr([clamp_epsilon](double r) { return fisher_z(r, clamp_epsilon); });
  z.values.diagonal().setZero();
  return z;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 19; ++k) grid.push_back(k / 20.0);
  return grid;
}

ThresholdCurve threshold_scan(const CorrMatrix& corr, std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("threshold_scan: empty grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0))
      throw ConfigError("threshold_scan: grid values must lie in [0, 1]");
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw ConfigError("threshold_scan: grid must be strictly ascending");
  }
  // Sort the upper-triangle magnitudes once; each threshold is a binary search.
  std::vector<double> mags;
  const Eigen::Index n = corr.values.rows();
  mags.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) mags.push_back(std::abs(corr.values(i, j)));
  std::sort(mags.begin(), mags.end());

  ThresholdCurve curve;
  for (double t : grid) {
    const auto first = std::lower_bound(mags.begin(), mags.end(), t);
    curve.thresholds.push_back(t);
    curve.edge_counts.push_back(static_cast<long>(mags.end() - first));
  }
  return curve;
}

BinMatrix binarize(const CorrMatrix& corr, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ConfigError("binarize: threshold must lie in [0, 1]");
  BinMatrix b;
  b.threshold_used = threshold;
  b.values = (corr.values.array().abs() >= threshold).cast<double>().matrix();
  b.values.diagonal().setZero();
  return b;
}

Eigen::MatrixXd group_average(std::span<const Eigen::MatrixXd> matrices) {
  if (matrices.empty()) throw DataError("group_average: empty list");
  const auto rows = matrices.front().rows();
  const auto cols = matrices.front().cols();
  for (const auto& m : matrices)
    if (m.rows() != rows || m.cols() != cols) throw DataError("group_average: shape mismatch");

  std::function<Eigen::MatrixXd(std::size_t, std::size_t)> sum = [&](std::size_t lo,
                                                                     std::size_t hi) {
    if (hi - lo == 1) return Eigen::MatrixXd(matrices[lo]);
    const std::size_t mid = lo + (hi - lo) / 2;
    Eigen::MatrixXd left = sum(lo, mid);
    left += sum(mid, hi);
    return left;
  };
  return sum(0, matrices.size()) / static_cast<double>(matrices.size());
}

std::string brainnet_node_text(const RoiTable& roi_table) {
  std::string out;
  for (const auto& row : roi_table.rows()) {
    const std::string label = row.name.empty() ? "-" : row.name;
    out += io::format_double(row.mni_xyz.x()) + ' ' + io::format_double(row.mni_xyz.y()) + ' ' +
           io::format_double(row.mni_xyz.z()) + ' ' +
           std::to_string(static_cast<int>(row.network) + 1) + " 1 " + label + '\n';
  }
  return out;
}

Eigen::MatrixXd apply_edge_cutoff(const Eigen::Ref<const Eigen::MatrixXd>& prevalence,
                                  double edge_cutoff) {
  Eigen::MatrixXd out = (prevalence.array() < edge_cutoff).select(0.0, prevalence);
  out.diagonal().setZero();
  return out;
}

std::string brainnet_edge_text(const Eigen::Ref<const Eigen::MatrixXd>& prevalence,
                               double edge_cutoff) {
  return io::matrix_to_csv(apply_edge_cutoff(prevalence, edge_cutoff), ' ');
}

void export_brainnet(const Eigen::Ref<const Eigen::MatrixXd>& prevalence,
                     const RoiTable& roi_table, const std::filesystem::path& node_path,
                     const std::filesystem::path& edge_path, double edge_cutoff) {
  const auto r = static_cast<Eigen::Index>(roi_table.size());
  if (prevalence.rows() != r || prevalence.cols() != r)
    throw DataError("export_brainnet: matrix is " + std::to_string(prevalence.rows()) + "x" +
                    std::to_string(prevalence.cols()) + " but ROI table has " +
                    std::to_string(r) + " rows");
  io::write_file_atomic(node_path, brainnet_node_text(roi_table));
  io::write_file_atomic(edge_path, brainnet_edge_text(prevalence, edge_cutoff));
}

Eigen::MatrixXd read_edge_file(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::vector<std::vector<double>> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    const auto cells = io::split_whitespace(line);
    if (cells.empty()) continue;
    std::vector<double> row;
    for (auto c : cells) row.push_back(io::parse_double(c));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != n)
      throw DataError(path.string() + ": edge file is not square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

}  // namespace rsfc
