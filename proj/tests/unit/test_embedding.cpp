#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rsfc/embedding.hpp"
#include "rsfc/error.hpp"
#include "rsfc/synth.hpp"

using namespace rsfc;
using rsfc::testing::gaussian_matrix;

namespace {

struct Blobs {
  Eigen::MatrixXd data;
  Eigen::VectorXi labels;
};

Blobs blobs(int k, int per, int dim, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::MatrixXd centres = spread * gaussian_matrix(k, dim, seed + 1000);
  Blobs b{Eigen::MatrixXd(k * per, dim), Eigen::VectorXi(k * per)};
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < per; ++i) {
      b.labels(c * per + i) = c;
      for (int d = 0; d < dim; ++d) b.data(c * per + i, d) = centres(c, d) + g(rng);
    }
  return b;
}

// Direct transcription of the trustworthiness definition with full rank tables.
double trust_oracle(const Eigen::MatrixXd& high, const Eigen::MatrixXd& low, int k) {
  const int n = static_cast<int>(high.rows());
  auto ranks = [n](const Eigen::MatrixXd& x, int i) {
    std::vector<int> order;
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return (x.row(a) - x.row(i)).squaredNorm() < (x.row(b) - x.row(i)).squaredNorm();
    });
    std::vector<int> rank(static_cast<std::size_t>(n), 0);
    for (std::size_t r = 0; r < order.size(); ++r) rank[static_cast<std::size_t>(order[r])] = static_cast<int>(r) + 1;
    return rank;
  };
  double penalty = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto rh = ranks(high, i);
    const auto rl = ranks(low, i);
    for (int j = 0; j < n; ++j)
      if (j != i && rl[static_cast<std::size_t>(j)] <= k)
        penalty += std::max(0, rh[static_cast<std::size_t>(j)] - k);
  }
  return 1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty;
}

}  // namespace

TEST_CASE("pca: rank-one data needs one axis") {
  Eigen::MatrixXd x(30, 5);
  Eigen::RowVectorXd dir(5);
  dir << 1, -2, 0.5, 3, 1;
  for (int i = 0; i < 30; ++i) x.row(i) = (0.3 * i - 4.0) * dir + Eigen::RowVectorXd::Constant(5, 2.0);
  const auto [model, proj] = pca_fit_transform(x, 0.9);
  CHECK(model.p == 1);
  CHECK(model.explained_variance_ratio(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(proj.cols() == 1);
  // largest-magnitude loading is positive
  Eigen::Index arg;
  model.components.row(0).cwiseAbs().maxCoeff(&arg);
  CHECK(model.components(0, arg) > 0.0);
}

TEST_CASE("pca: isotropic Gaussian needs every axis") {
  const auto [model, proj] = pca_fit_transform(gaussian_matrix(5000, 3, 12), 0.9);
  CHECK(model.p == 3);
}

TEST_CASE("pca invariants on random correlated data") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Eigen::MatrixXd mix = gaussian_matrix(8, 8, seed + 50);
    const Eigen::MatrixXd x = gaussian_matrix(200, 8, seed) * mix;
    for (double f : {0.5, 0.8, 0.9, 1.0}) {
      const auto [model, proj] = pca_fit_transform(x, f);
      const Eigen::MatrixXd gram = model.components * model.components.transpose();
      CHECK((gram - Eigen::MatrixXd::Identity(model.p, model.p)).cwiseAbs().maxCoeff() <= 1e-10);
      for (int i = 1; i < model.p; ++i)
        CHECK(model.explained_variance_ratio(i) <= model.explained_variance_ratio(i - 1));
      CHECK(model.cumulative_ratio() >= f - 1e-12);
      CHECK(model.cumulative_ratio() <= 1.0 + 1e-12);

      // decorrelated scores
      const Eigen::MatrixXd centred = proj.rowwise() - proj.colwise().mean();
      const Eigen::MatrixXd cov = centred.transpose() * centred / 199.0;
      const Eigen::MatrixXd off = cov - Eigen::MatrixXd(cov.diagonal().asDiagonal());
      CHECK(off.cwiseAbs().maxCoeff() <= 1e-8);

      // reconstruction error matches the discarded variance
      const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
      const Eigen::MatrixXd recon = proj * model.components;
      const double total = xc.squaredNorm();
      CHECK((xc - recon).squaredNorm() <= (1.0 - model.cumulative_ratio()) * total + 1e-9 * total);

      CHECK((model.transform(x) - proj).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("pca errors") {
  CHECK_THROWS_AS(pca_fit_transform(gaussian_matrix(1, 3, 1), 0.9), DataError);
  CHECK_THROWS_AS(pca_fit_transform(Eigen::MatrixXd::Constant(10, 3, 2.0), 0.9), DataError);
  CHECK_THROWS_AS(pca_fit_transform(gaussian_matrix(10, 3, 1), 0.0), ConfigError);
  CHECK(pca_fit_components(gaussian_matrix(40, 6, 1), 4).first.p == 4);
}

TEST_CASE("affinities: perplexity is hit and P is a symmetric distribution") {
  const Blobs b = blobs(3, 30, 10, 4.0, 2);
  Eigen::VectorXd perp;
  const Eigen::MatrixXd cond = conditional_affinities(b.data, 20.0, &perp);
  CHECK((perp.array() - 20.0).abs().maxCoeff() <= 1e-3);
  CHECK((cond.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(cond.diagonal().isZero(0.0));

  const Eigen::MatrixXd p = joint_affinities(b.data, 20.0);
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tsne: blobs stay apart, deterministic, KL descends") {
  const Blobs b = blobs(3, 25, 50, 3.0, 7);
  TsneParams params;
  params.perplexity = 15.0;
  params.seed = 3;
  const TsneResult r1 = tsne(b.data, params);
  const TsneResult r2 = tsne(b.data, params);
  CHECK(r1.embedding == r2.embedding);
  CHECK(r1.embedding.cols() == 2);
  CHECK(neighbor_label_accuracy(r1.embedding, b.labels, 5) >= 0.95);
  CHECK(trustworthiness(b.data, r1.embedding, 5) >= 0.95);

  REQUIRE(r1.kl_checkpoints.size() == 20);
  double kl100 = 0.0;
  for (const auto& [it, kl] : r1.kl_checkpoints) {
    CHECK(kl > 0.0);
    if (it == 100) kl100 = kl;
  }
  CHECK(r1.final_kl <= kl100);
  CHECK(r1.final_kl == r1.kl_checkpoints.back().second);
}

TEST_CASE("tsne errors") {
  CHECK_THROWS_AS(tsne(gaussian_matrix(9, 3, 1)), ConfigError);
  TsneParams p;
  p.perplexity = 10.0;
  CHECK_THROWS_AS(tsne(gaussian_matrix(30, 3, 1), p), ConfigError);  // needs (N-1)/3 > 10
}

TEST_CASE("trustworthiness: rotations, oracle agreement and a permutation null") {
  const Eigen::MatrixXd high = gaussian_matrix(60, 2, 5);
  Eigen::Matrix2d rot;
  const double a = 0.7;
  rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  CHECK(trustworthiness(high, high * rot.transpose(), 5) == doctest::Approx(1.0).epsilon(1e-15));

  const Eigen::MatrixXd h10 = gaussian_matrix(50, 10, 6);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Eigen::MatrixXd low = gaussian_matrix(50, 2, 100 + s);
    for (int k : {1, 5, 12})
      CHECK(trustworthiness(h10, low, k) == doctest::Approx(trust_oracle(h10, low, k)).epsilon(1e-12));
  }

  // Random embedding of structured data against row-shuffled embeddings:
  // both are random, so the score must sit inside the null's 5-95 band.
  const Blobs b = blobs(4, 15, 8, 3.0, 9);
  std::vector<double> null;
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd base = gaussian_matrix(60, 2, 77);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd shuffled(60, 2);
    for (int i = 0; i < 60; ++i) shuffled.row(i) = base.row(perm[static_cast<std::size_t>(i)]);
    null.push_back(trustworthiness(b.data, shuffled, 5));
  }
  std::sort(null.begin(), null.end());
  const double score = trustworthiness(b.data, gaussian_matrix(60, 2, 4242), 5);
  CHECK(score >= null[10]);
  CHECK(score <= null[189]);

  CHECK_THROWS_AS(trustworthiness(high, high, 0), ConfigError);
  CHECK_THROWS_AS(trustworthiness(high, high, 30), ConfigError);
}

TEST_CASE("tsne on block z-matrix rows separates the six networks") {
  const std::vector<int> sizes = {34, 21, 32, 33, 22, 18};
  const Eigen::MatrixXd z = synth::block_z_matrix(sizes, 0.6, 0.1, 0.1, 11);
  Eigen::VectorXi labels(160);
  int row = 0;
  for (int c = 0; c < 6; ++c)
    for (int i = 0; i < sizes[static_cast<std::size_t>(c)]; ++i) labels(row++) = c;
  TsneParams params;
  params.seed = 5;
  const TsneResult r = tsne(z, params);
  CHECK(neighbor_label_accuracy(r.embedding, labels, 5) >= 0.95);
  CHECK(trustworthiness(z, r.embedding, 5) >= 0.95);
  // Non-increasing once the first un-exaggerated checkpoint is reached. The
  // step across the switch itself can rise while the clusters re-expand.
  for (std::size_t i = 1; i < r.kl_checkpoints.size(); ++i)
    if (r.kl_checkpoints[i - 1].first > params.exaggeration_iters)
      CHECK(r.kl_checkpoints[i].second <= r.kl_checkpoints[i - 1].second + 1e-12);
}
