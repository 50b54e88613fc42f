#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rsfc {

/// Principal axes of a centred data matrix.
struct PcaModel {
  Eigen::RowVectorXd mean;                  // 1 x D
  Eigen::MatrixXd components;               // p x D, orthonormal rows
  Eigen::VectorXd explained_variance_ratio;  // p, non-increasing
  Eigen::VectorXd explained_variance;        // p, sample variance per axis
  int p = 0;

  /// Projects rows of `data` (M x D) onto the retained axes (M x p).
  Eigen::MatrixXd transform(const Eigen::Ref<const Eigen::MatrixXd>& data) const;
  double cumulative_ratio() const { return explained_variance_ratio.sum(); }
};

/// Keeps the fewest axes whose cumulative explained variance reaches
/// `variance_fraction` (in (0, 1]). Each axis is signed so its
/// largest-magnitude loading is positive. Throws DataError for N < 2,
/// non-finite data or zero total variance.
std::pair<PcaModel, Eigen::MatrixXd> pca_fit_transform(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                       double variance_fraction);

/// Keeps exactly min(n_components, rank-bounded) leading axes.
std::pair<PcaModel, Eigen::MatrixXd> pca_fit_components(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                        int n_components);

struct TsneParams {
  int initial_dims = 50;
  double perplexity = 30.0;
  int max_iter = 1000;
  double learning_rate = 200.0;
  std::uint64_t seed = 0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int checkpoint_every = 50;
};

struct TsneResult {
  Eigen::MatrixXd embedding;  // N x 2
  /// (iteration, KL(P || Q)) against the un-exaggerated P.
  std::vector<std::pair<int, double>> kl_checkpoints;
  double final_kl = 0.0;
};

/// Row-conditional Gaussian affinities whose perplexity matches the target
/// by bisection on the precision. Returns the N x N matrix and, through
/// `row_perplexity`, the achieved perplexity per row.
Eigen::MatrixXd conditional_affinities(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                       double perplexity,
                                       Eigen::VectorXd* row_perplexity = nullptr);

/// (P_cond + P_cond^T) / 2N.
Eigen::MatrixXd joint_affinities(const Eigen::Ref<const Eigen::MatrixXd>& data, double perplexity);

/// Exact O(N^2) t-SNE to two dimensions. Inputs wider than
/// `initial_dims` are first reduced by PCA. Throws ConfigError if N < 10 or
/// perplexity >= (N - 1) / 3.
TsneResult tsne(const Eigen::Ref<const Eigen::MatrixXd>& data, const TsneParams& params = {});

/// Trustworthiness of a low-dimensional embedding with k neighbours: 1 when
/// every embedded neighbourhood is a true neighbourhood. Throws ConfigError
/// unless 1 <= k < N/2.
double trustworthiness(const Eigen::Ref<const Eigen::MatrixXd>& high,
                       const Eigen::Ref<const Eigen::MatrixXd>& low, int k);

/// Leave-one-out k-NN label accuracy of `points`; used to judge whether an
/// embedding keeps known groups apart.
double neighbor_label_accuracy(const Eigen::Ref<const Eigen::MatrixXd>& points,
                               const Eigen::Ref<const Eigen::VectorXi>& labels, int k);

}  // namespace rsfc
