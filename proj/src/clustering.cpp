#include "rsfc/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "rsfc/error.hpp"
#include "rsfc/parallel.hpp"

namespace rsfc {

namespace {

using Rng = std::mt19937_64;

Eigen::MatrixXd kmeans_pp_init(const Eigen::Ref<const Eigen::MatrixXd>& data, int k, Rng& rng) {
  const Eigen::Index n = data.rows();
  Eigen::MatrixXd centroids(k, data.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  Eigen::Index first = pick(rng);
  centroids.row(0) = data.row(first);
  chosen[static_cast<std::size_t>(first)] = true;

  Eigen::VectorXd d2 = (data.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index next = -1;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target && d2(i) > 0.0) {
          next = i;
          break;
        }
      }
      if (next < 0)  // rounding at the tail
        for (Eigen::Index i = n - 1; i >= 0; --i)
          if (d2(i) > 0.0) {
            next = i;
            break;
          }
    } else {
      // Every remaining point coincides with a centroid; take an unused one.
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) free.push_back(i);
      std::uniform_int_distribution<std::size_t> f(0, free.size() - 1);
      next = free[f(rng)];
    }
    chosen[static_cast<std::size_t>(next)] = true;
    centroids.row(c) = data.row(next);
    d2 = d2.cwiseMin((data.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

/// Nearest centroid per row (ties to the lower index) and its squared distance.
void assign(const Eigen::Ref<const Eigen::MatrixXd>& data, const Eigen::MatrixXd& centroids,
            Eigen::VectorXi& labels, Eigen::VectorXd& dist2) {
  const Eigen::Index n = data.rows();
  const Eigen::Index k = centroids.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < k; ++c) {
      const double d = (data.row(i) - centroids.row(c)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    labels(i) = arg;
    dist2(i) = best;
  }
}

/// Recomputes centroids as cluster means, moving far points into empty
/// clusters first.
void update(const Eigen::Ref<const Eigen::MatrixXd>& data, Eigen::VectorXi& labels,
            Eigen::MatrixXd& centroids) {
  const Eigen::Index n = data.rows();
  const int k = static_cast<int>(centroids.rows());
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(labels(i))];

  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (counts[static_cast<std::size_t>(labels(i))] < 2) continue;
      const double d = (data.row(i) - centroids.row(labels(i))).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    --counts[static_cast<std::size_t>(labels(far))];
    labels(far) = c;
    counts[static_cast<std::size_t>(c)] = 1;
  }

  centroids.setZero();
  for (Eigen::Index i = 0; i < n; ++i) centroids.row(labels(i)) += data.row(i);
  for (int c = 0; c < k; ++c) centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
}

struct Run {
  Partition partition;
  std::vector<double> trace;
};

Run lloyd(const Eigen::Ref<const Eigen::MatrixXd>& data, int k, int max_iter, Rng& rng) {
  const Eigen::Index n = data.rows();
  Run run;
  Eigen::MatrixXd centroids = kmeans_pp_init(data, k, rng);
  Eigen::VectorXi labels = Eigen::VectorXi::Constant(n, -1);
  Eigen::VectorXi next(n);
  Eigen::VectorXd dist2(n);
  int it = 0;
  for (; it < max_iter; ++it) {
    assign(data, centroids, next, dist2);
    if (it > 0 && next == labels) break;
    labels = next;
    update(data, labels, centroids);
    run.trace.push_back(inertia(data, labels, k));
  }
  run.partition.assignments = std::move(labels);
  run.partition.centroids = std::move(centroids);
  run.partition.k = k;
  run.partition.iterations = it;
  run.partition.inertia = inertia(data, run.partition.assignments, k);
  return run;
}

}  // namespace

double inertia(const Eigen::Ref<const Eigen::MatrixXd>& data,
               const Eigen::Ref<const Eigen::VectorXi>& assignments, int k) {
  if (assignments.size() != data.rows()) throw DataError("inertia: assignment length mismatch");
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (assignments(i) < 0 || assignments(i) >= k) throw DataError("inertia: label out of range");
    sums.row(assignments(i)) += data.row(i);
    counts(assignments(i)) += 1.0;
  }
  for (int c = 0; c < k; ++c)
    if (counts(c) > 0) sums.row(c) /= counts(c);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    total += (data.row(i) - sums.row(assignments(i))).squaredNorm();
  return total;
}

Partition kmeans(const Eigen::Ref<const Eigen::MatrixXd>& data, const KMeansOptions& options,
                 std::vector<double>* inertia_trace) {
  const Eigen::Index n = data.rows();
  if (options.k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (options.k > n) throw ConfigError("kmeans: k exceeds the number of items");
  if (options.n_restarts < 1 || options.max_iter < 1)
    throw ConfigError("kmeans: restarts and max_iter must be >= 1");
  if (!data.allFinite()) throw DataError("kmeans: non-finite data");

  Run best;
  bool have = false;
  for (int r = 0; r < options.n_restarts; ++r) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(r)));
    Run run = lloyd(data, options.k, options.max_iter, rng);
    if (!have || run.partition.inertia < best.partition.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  if (inertia_trace) *inertia_trace = best.trace;
  return std::move(best.partition);
}

DistortionScores distortion(const Eigen::Ref<const Eigen::MatrixXd>& data,
                            const Partition& partition) {
  if (partition.assignments.size() != data.rows())
    throw DataError("distortion: partition does not match data");
  if (partition.centroids.size() > 0 && partition.centroids.cols() != data.cols())
    throw DataError("distortion: centroid dimension mismatch");
  DistortionScores s;
  s.inertia = inertia(data, partition.assignments, partition.k);
  const Eigen::RowVectorXd grand = data.colwise().mean();
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(partition.k, data.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(partition.k);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    means.row(partition.assignments(i)) += data.row(i);
    counts(partition.assignments(i)) += 1.0;
  }
  for (int c = 0; c < partition.k; ++c)
    if (counts(c) > 0) s.between += counts(c) * (means.row(c) / counts(c) - grand).squaredNorm();
  s.within_between = s.between > 0.0 ? s.inertia / s.between
                                     : std::numeric_limits<double>::infinity();
  return s;
}

ElbowResult locate_knee(std::vector<int> k_range, std::vector<double> scores) {
  if (k_range.size() != scores.size() || k_range.size() < 3)
    throw ConfigError("elbow: need at least three (k, score) points");
  ElbowResult res;
  res.k_range = std::move(k_range);
  res.distortion_scores = std::move(scores);
  const auto& ks = res.k_range;
  const auto& ys = res.distortion_scores;
  const double x0 = ks.front();
  const double x1 = ks.back();
  const auto [ymin_it, ymax_it] = std::minmax_element(ys.begin(), ys.end());
  const double yspan = *ymax_it - *ymin_it;

  res.chosen_k = ks.front();
  res.degenerate = true;
  if (!(yspan > 0.0)) return res;

  auto nx = [&](std::size_t i) { return (ks[i] - x0) / (x1 - x0); };
  auto ny = [&](std::size_t i) { return (ys[i] - *ymin_it) / yspan; };
  const double ya = ny(0);
  const double yb = ny(ys.size() - 1);
  const double slope = yb - ya;  // chord over unit x
  const double scale = std::sqrt(1.0 + slope * slope);

  constexpr double kMinDepth = 1e-9;
  double best = kMinDepth;
  for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
    const double below = (ya + slope * nx(i) - ny(i)) / scale;
    if (below > best + 1e-12) {
      best = below;
      res.chosen_k = ks[i];
      res.degenerate = false;
    }
  }
  return res;
}

ElbowResult elbow(const Eigen::Ref<const Eigen::MatrixXd>& data, const std::vector<int>& k_range,
                  std::uint64_t seed, int n_restarts, int max_iter) {
  if (k_range.size() < 3) throw ConfigError("elbow: k range needs at least three values");
  for (std::size_t i = 0; i < k_range.size(); ++i) {
    if (k_range[i] < 1 || k_range[i] > data.rows())
      throw ConfigError("elbow: k range must lie within [1, N]");
    if (i > 0 && k_range[i] <= k_range[i - 1]) throw ConfigError("elbow: k range must ascend");
  }
  std::vector<double> scores;
  std::vector<double> ratios;
  for (int k : k_range) {
    const Partition p =
        kmeans(data, {k, derive_seed(seed, static_cast<std::uint64_t>(k)), max_iter, n_restarts});
    const DistortionScores d = distortion(data, p);
    scores.push_back(d.inertia);
    ratios.push_back(d.within_between);
  }
  ElbowResult res = locate_knee(k_range, std::move(scores));
  res.within_between = std::move(ratios);
  return res;
}

double adjusted_rand_index(const Eigen::Ref<const Eigen::VectorXi>& a,
                           const Eigen::Ref<const Eigen::VectorXi>& b) {
  if (a.size() != b.size()) throw DataError("adjusted_rand_index: length mismatch");
  if (a.size() < 2) return 1.0;  // no pairs to disagree on
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows;
  std::map<int, double> cols;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    table[{a(i), b(i)}] += 1.0;
    rows[a(i)] += 1.0;
    cols[b(i)] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  double sum_a = 0.0;
  for (const auto& [key, v] : rows) sum_a += c2(v);
  double sum_b = 0.0;
  for (const auto& [key, v] : cols) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both trivial (single cluster or all singletons)
  return (index - expected) / (max_index - expected);
}

Reordered reorder_by_partition(const Eigen::Ref<const Eigen::MatrixXd>& matrix,
                               const Eigen::Ref<const Eigen::VectorXi>& assignments) {
  const Eigen::Index n = matrix.rows();
  if (matrix.cols() != n || assignments.size() != n)
    throw DataError("reorder_by_partition: size mismatch");
  Reordered out;
  out.ordering.resize(static_cast<std::size_t>(n));
  std::iota(out.ordering.begin(), out.ordering.end(), Eigen::Index{0});
  std::stable_sort(out.ordering.begin(), out.ordering.end(),
                   [&](Eigen::Index x, Eigen::Index y) { return assignments(x) < assignments(y); });
  out.matrix.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out.matrix(i, j) = matrix(out.ordering[static_cast<std::size_t>(i)],
                                out.ordering[static_cast<std::size_t>(j)]);
  return out;
}

Eigen::VectorXi match_labels(const Eigen::Ref<const Eigen::VectorXi>& assignments,
                             const Eigen::Ref<const Eigen::VectorXi>& reference, int k) {
  if (assignments.size() != reference.size()) throw DataError("match_labels: length mismatch");
  if (k < 1 || k > 8) throw ConfigError("match_labels: k must lie in [1, 8]");
  Eigen::MatrixXi overlap = Eigen::MatrixXi::Zero(k, k);
  for (Eigen::Index i = 0; i < assignments.size(); ++i) {
    if (assignments(i) < 0 || assignments(i) >= k || reference(i) < 0 || reference(i) >= k)
      throw DataError("match_labels: label out of range");
    ++overlap(assignments(i), reference(i));
  }
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  int best_score = -1;
  do {
    int score = 0;
    for (int c = 0; c < k; ++c) score += overlap(c, perm[static_cast<std::size_t>(c)]);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  Eigen::VectorXi out(assignments.size());
  for (Eigen::Index i = 0; i < assignments.size(); ++i)
    out(i) = best[static_cast<std::size_t>(assignments(i))];
  return out;
}

Eigen::MatrixXd standardize_columns(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  Eigen::MatrixXd out = data.rowwise() - data.colwise().mean();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double sd = std::sqrt(out.col(c).squaredNorm() / static_cast<double>(out.rows()));
    if (sd > 0.0) out.col(c) /= sd;
  }
  return out;
}

}  // namespace rsfc
