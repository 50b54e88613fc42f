#include "rsfc/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "rsfc/error.hpp"

namespace rsfc {

Eigen::MatrixXd PcaModel::transform(const Eigen::Ref<const Eigen::MatrixXd>& data) const {
  if (data.cols() != mean.size()) throw DataError("pca transform: dimension mismatch");
  return (data.rowwise() - mean) * components.transpose();
}

namespace {

struct Decomposition {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd centered;
  Eigen::MatrixXd axes;  // D x r, columns are principal directions
  Eigen::VectorXd variance;
  double total = 0.0;
};

Decomposition decompose(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  if (data.rows() < 2) throw DataError("pca: needs at least 2 rows");
  if (!data.allFinite()) throw DataError("pca: non-finite data");
  Decomposition d;
  d.mean = data.colwise().mean();
  d.centered = data.rowwise() - d.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(d.centered, Eigen::ComputeThinV);
  const double denom = static_cast<double>(data.rows() - 1);
  d.variance = svd.singularValues().array().square() / denom;
  d.total = d.centered.squaredNorm() / denom;
  if (!(d.total > 0.0)) throw DataError("pca: data has zero variance (rank 0)");
  d.axes = svd.matrixV();
  for (Eigen::Index c = 0; c < d.axes.cols(); ++c) {
    Eigen::Index arg = 0;
    d.axes.col(c).cwiseAbs().maxCoeff(&arg);
    if (d.axes(arg, c) < 0.0) d.axes.col(c) *= -1.0;
  }
  return d;
}

std::pair<PcaModel, Eigen::MatrixXd> keep(Decomposition d, int p) {
  PcaModel model;
  model.p = p;
  model.mean = d.mean;
  model.components = d.axes.leftCols(p).transpose();
  model.explained_variance = d.variance.head(p);
  model.explained_variance_ratio = d.variance.head(p) / d.total;
  Eigen::MatrixXd projected = d.centered * d.axes.leftCols(p);
  return {std::move(model), std::move(projected)};
}

}  // namespace

std::pair<PcaModel, Eigen::MatrixXd> pca_fit_transform(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                       double variance_fraction) {
  if (!(variance_fraction > 0.0 && variance_fraction <= 1.0))
    throw ConfigError("pca: variance fraction must lie in (0, 1]");
  Decomposition d = decompose(data);
  const Eigen::Index available = d.variance.size();
  int p = 0;
  double cumulative = 0.0;
  // A relative slack of 1e-12 absorbs rounding when the target is reached exactly.
  while (p < available) {
    cumulative += d.variance(p) / d.total;
    ++p;
    if (cumulative >= variance_fraction - 1e-12) break;
  }
  return keep(std::move(d), p);
}

std::pair<PcaModel, Eigen::MatrixXd> pca_fit_components(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                        int n_components) {
  if (n_components < 1) throw ConfigError("pca: need at least one component");
  Decomposition d = decompose(data);
  const int p = static_cast<int>(std::min<Eigen::Index>(n_components, d.variance.size()));
  return keep(std::move(d), p);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd squared_distances(const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    d(j, j) = 0.0;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = (x.row(i) - x.row(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

double kl_divergence(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
  const Eigen::Index n = y.rows();
  Eigen::MatrixXd num(n, n);
  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      num(i, j) = v;
      sum += v;
    }
  double kl = 0.0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j || p(i, j) <= 0.0) continue;
      const double q = std::max(num(i, j) / sum, std::numeric_limits<double>::min());
      kl += p(i, j) * std::log(p(i, j) / q);
    }
  return kl;
}

}  // namespace

Eigen::MatrixXd conditional_affinities(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                       double perplexity, Eigen::VectorXd* row_perplexity) {
  const Eigen::Index n = data.rows();
  if (!(perplexity > 0.0)) throw ConfigError("perplexity must be positive");
  const Eigen::MatrixXd dist = squared_distances(data);
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  if (row_perplexity) row_perplexity->resize(n);

  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) min_d = std::min(min_d, dist(i, j));

    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double entropy = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
      // Shifting by the nearest distance keeps exp() from underflowing.
      double sum = 0.0;
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double shifted = j == i ? 0.0 : dist(i, j) - min_d;
        row(j) = j == i ? 0.0 : std::exp(-beta * shifted);
        sum += row(j);
        weighted += row(j) * shifted;
      }
      entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-10) break;
      if (diff > 0.0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
    if (row_perplexity) (*row_perplexity)(i) = std::exp(entropy);
  }
  return p;
}

Eigen::MatrixXd joint_affinities(const Eigen::Ref<const Eigen::MatrixXd>& data, double perplexity) {
  const Eigen::MatrixXd cond = conditional_affinities(data, perplexity);
  const double n = static_cast<double>(data.rows());
  Eigen::MatrixXd joint = (cond + cond.transpose()) / (2.0 * n);
  return joint;
}

TsneResult tsne(const Eigen::Ref<const Eigen::MatrixXd>& data, const TsneParams& params) {
  const Eigen::Index n = data.rows();
  if (n < 10) throw ConfigError("tsne: needs at least 10 points");
  if (!(params.perplexity > 0.0) || params.perplexity >= (static_cast<double>(n) - 1.0) / 3.0)
    throw ConfigError("tsne: perplexity must be positive and below (N - 1) / 3");
  if (params.initial_dims < 1 || params.max_iter < 1 || !(params.learning_rate > 0.0))
    throw ConfigError("tsne: initial_dims, max_iter and learning_rate must be positive");
  if (!data.allFinite()) throw DataError("tsne: non-finite data");

  Eigen::MatrixXd x = data;
  if (x.cols() > params.initial_dims) x = pca_fit_components(data, params.initial_dims).second;

  const Eigen::MatrixXd p = joint_affinities(x, params.perplexity);

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> gauss(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index d = 0; d < 2; ++d) y(i, d) = gauss(rng);

  Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd grad(n, 2);
  Eigen::MatrixXd num(n, n);

  TsneResult result;
  for (int iter = 0; iter < params.max_iter; ++iter) {
    const bool exaggerating = iter < params.exaggeration_iters;
    const double exaggeration = exaggerating ? params.early_exaggeration : 1.0;
    const double momentum = exaggerating ? params.initial_momentum : params.final_momentum;

    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      num(j, j) = 0.0;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
        num(i, j) = v;
        num(j, i) = v;
        sum += 2.0 * v;
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::RowVector2d g = Eigen::RowVector2d::Zero();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double mult = (exaggeration * p(i, j) - num(i, j) / sum) * num(i, j);
        g += mult * (y.row(i) - y.row(j));
      }
      grad.row(i) = 4.0 * g;
    }
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index d = 0; d < 2; ++d) {
        const bool same_sign = (grad(i, d) > 0.0) == (velocity(i, d) > 0.0);
        gains(i, d) = same_sign ? std::max(gains(i, d) * 0.8, 0.01) : gains(i, d) + 0.2;
        velocity(i, d) = momentum * velocity(i, d) - params.learning_rate * gains(i, d) * grad(i, d);
      }
    y += velocity;
    y.rowwise() -= y.colwise().mean();

    const int done = iter + 1;
    if (params.checkpoint_every > 0 &&
        (done % params.checkpoint_every == 0 || done == params.max_iter))
      result.kl_checkpoints.emplace_back(done, kl_divergence(p, y));
  }
  result.final_kl =
      result.kl_checkpoints.empty() ? kl_divergence(p, y) : result.kl_checkpoints.back().second;
  result.embedding = std::move(y);
  return result;
}

// ---------------------------------------------------------------------------

namespace {

/// Indices of the other points ordered by distance to `i` (ties by index).
std::vector<Eigen::Index> neighbor_order(const Eigen::MatrixXd& dist, Eigen::Index i) {
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(dist.rows() - 1));
  for (Eigen::Index j = 0; j < dist.rows(); ++j)
    if (j != i) idx.push_back(j);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return dist(i, a) < dist(i, b); });
  return idx;
}

}  // namespace

double trustworthiness(const Eigen::Ref<const Eigen::MatrixXd>& high,
                       const Eigen::Ref<const Eigen::MatrixXd>& low, int k) {
  const Eigen::Index n = high.rows();
  if (low.rows() != n) throw DataError("trustworthiness: row count mismatch");
  if (k < 1 || 2 * k >= n) throw ConfigError("trustworthiness: k must satisfy 1 <= k < N/2");
  const Eigen::MatrixXd dh = squared_distances(high);
  const Eigen::MatrixXd dl = squared_distances(low);
  double penalty = 0.0;
  std::vector<Eigen::Index> rank(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto order_high = neighbor_order(dh, i);
    for (std::size_t r = 0; r < order_high.size(); ++r)
      rank[static_cast<std::size_t>(order_high[r])] = static_cast<Eigen::Index>(r) + 1;
    const auto order_low = neighbor_order(dl, i);
    for (int r = 0; r < k; ++r) {
      const Eigen::Index excess = rank[static_cast<std::size_t>(order_low[static_cast<std::size_t>(r)])] - k;
      if (excess > 0) penalty += static_cast<double>(excess);
    }
  }
  const double nn = static_cast<double>(n);
  const double kk = static_cast<double>(k);
  return 1.0 - 2.0 / (nn * kk * (2.0 * nn - 3.0 * kk - 1.0)) * penalty;
}

double neighbor_label_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& points,
                               const Eigen::Ref<const Eigen::VectorXi>& labels, int k) {
  const Eigen::Index n = points.rows();
  if (labels.size() != n) throw DataError("neighbor_label_accuracy: length mismatch");
  if (k < 1 || k >= n) throw ConfigError("neighbor_label_accuracy: k out of range");
  const Eigen::MatrixXd d = squared_distances(points);
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto order = neighbor_order(d, i);
    std::map<int, int> votes;
    for (int r = 0; r < k; ++r) ++votes[labels(order[static_cast<std::size_t>(r)])];
    int best_label = votes.begin()->first;
    int best_votes = -1;
    for (const auto& [label, count] : votes)
      if (count > best_votes) {
        best_votes = count;
        best_label = label;
      }
    if (best_label == labels(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace rsfc
