#include "doctest.h"
#include "test_support.hpp"

#include <random>

#include "rsfc/classify.hpp"
#include "rsfc/error.hpp"

using namespace rsfc;

namespace {

// Gaussian blobs with the given per-class counts; centres `spread` apart on average.
LabeledDataset blob_dataset(const std::vector<int>& counts, int dim, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  int n = 0;
  for (int c : counts) n += c;
  LabeledDataset d{Eigen::MatrixXd(n, dim), Eigen::VectorXi(n), {}};
  for (int j = 0; j < dim; ++j) d.feature_names.push_back("f" + std::to_string(j));
  const Eigen::MatrixXd centres = spread * rsfc::testing::gaussian_matrix(static_cast<Eigen::Index>(counts.size()), dim, seed + 7);
  int row = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (int i = 0; i < counts[c]; ++i, ++row) {
      d.labels(row) = static_cast<int>(c);
      for (int j = 0; j < dim; ++j) d.features(row, j) = centres(static_cast<Eigen::Index>(c), j) + g(rng);
    }
  return d;
}

std::vector<int> class_counts(const Eigen::VectorXi& labels, int k) {
  std::vector<int> out(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < labels.size(); ++i) ++out[static_cast<std::size_t>(labels(i))];
  return out;
}

}  // namespace

TEST_CASE("stratified_split: arithmetic, skew, determinism") {
  const LabeledDataset balanced = blob_dataset({25, 25, 25, 25}, 3, 2.0, 1);
  const auto [train, test] = stratified_split(balanced, 0.2, 4);
  CHECK(class_counts(test.labels, 4) == std::vector<int>{5, 5, 5, 5});
  CHECK(train.size() + test.size() == 100);

  const LabeledDataset skew = blob_dataset({276, 647, 118, 57}, 2, 2.0, 2);
  const auto [tr2, te2] = stratified_split(skew, 0.2, 9);
  const auto counts = class_counts(te2.labels, 4);
  CHECK(std::abs(counts[0] - 55) <= 1);
  CHECK(std::abs(counts[1] - 129) <= 1);
  CHECK(std::abs(counts[2] - 24) <= 1);
  CHECK(std::abs(counts[3] - 11) <= 1);

  const auto again = stratified_split(skew, 0.2, 9);
  CHECK(again.second.features == te2.features);
  CHECK(again.first.labels == tr2.labels);
}

TEST_CASE("stratified_split property: proportions, disjointness, exhaustiveness") {
  const LabeledDataset skew = blob_dataset({276, 647, 118, 57}, 1, 1.0, 3);
  // Feature values are continuous, so rows are identified by their value.
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto [train, test] = stratified_split(skew, 0.2, seed);
    const auto c = class_counts(test.labels, 4);
    const std::vector<double> expected = {55.2, 129.4, 23.6, 11.4};
    for (int k = 0; k < 4; ++k) CHECK(std::abs(c[static_cast<std::size_t>(k)] - expected[static_cast<std::size_t>(k)]) <= 1.0);
    std::vector<double> all;
    for (Eigen::Index i = 0; i < train.size(); ++i) all.push_back(train.features(i, 0));
    for (Eigen::Index i = 0; i < test.size(); ++i) all.push_back(test.features(i, 0));
    std::vector<double> orig(skew.features.data(), skew.features.data() + skew.size());
    std::sort(all.begin(), all.end());
    std::sort(orig.begin(), orig.end());
    CHECK(all == orig);
  }
}

TEST_CASE("stratified_split errors") {
  LabeledDataset d = blob_dataset({5, 1, 4}, 2, 1.0, 4);
  CHECK_THROWS_AS(stratified_split(d, 0.2, 1), DataError);
  const LabeledDataset ok = blob_dataset({5, 5}, 2, 1.0, 4);
  CHECK_THROWS_AS(stratified_split(ok, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(stratified_split(ok, 0.6, 1), ConfigError);
}

TEST_CASE("knn: k = 1 reproduces training labels; uniform scaling changes nothing") {
  const LabeledDataset d = blob_dataset({20, 20, 20}, 4, 1.0, 5);
  const ClassifierModel m = train_classifier(ClassifierKind::Knn, d, {{"k", 1}}, 0);
  CHECK(predict(m, d.features) == d.labels);

  const LabeledDataset probe = blob_dataset({10, 10, 10}, 4, 1.0, 6);
  LabeledDataset scaled = d;
  scaled.features *= 3.5;
  const ClassifierModel ms = train_classifier(ClassifierKind::Knn, scaled, {{"k", 1}}, 0);
  CHECK(predict(ms, probe.features * 3.5) == predict(m, probe.features));
}

TEST_CASE("knn: vote ties go to the lower class") {
  LabeledDataset d{Eigen::MatrixXd(4, 1), Eigen::VectorXi(4), {"x"}};
  d.features << -1.0, 1.0, -2.0, 2.0;
  d.labels << 1, 0, 1, 0;
  const ClassifierModel m = train_classifier(ClassifierKind::Knn, d, {{"k", 2}}, 0);
  Eigen::MatrixXd q(1, 1);
  q << 0.0;
  CHECK(predict(m, q)(0) == 0);
}

TEST_CASE("forest: separable blobs") {
  const LabeledDataset d = blob_dataset({60, 60, 60, 60}, 6, 4.0, 8);
  const auto [train, test] = stratified_split(d, 0.25, 2);
  const ClassifierModel m = train_classifier(ClassifierKind::RandomForest, train, {}, 11);
  CHECK(evaluate(predict(m, train.features), train.labels).accuracy == 1.0);
  CHECK(evaluate(predict(m, test.features), test.labels).accuracy >= 0.95);

  // the worker count does not change the fitted forest
  const ClassifierModel m2 = train_classifier(ClassifierKind::RandomForest, train, {}, 11, 3);
  CHECK(model_to_json(m) == model_to_json(m2));
}

TEST_CASE("forest: consistent column permutation keeps accuracy on a separable suite") {
  const LabeledDataset d = blob_dataset({50, 50, 50}, 5, 6.0, 12);
  const auto [train, test] = stratified_split(d, 0.2, 1);
  const std::vector<int> perm = {3, 0, 4, 1, 2};
  auto permute = [&](const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (int j = 0; j < 5; ++j) out.col(j) = x.col(perm[static_cast<std::size_t>(j)]);
    return out;
  };
  LabeledDataset ptrain = train;
  ptrain.features = permute(train.features);
  const double a = evaluate(predict(train_classifier(ClassifierKind::RandomForest, train, {}, 3), test.features), test.labels).accuracy;
  const double b = evaluate(predict(train_classifier(ClassifierKind::RandomForest, ptrain, {}, 3), permute(test.features)), test.labels).accuracy;
  CHECK(a == 1.0);
  CHECK(b == 1.0);
}

TEST_CASE("svm: class weights help the minority class") {
  int better_or_equal = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const LabeledDataset d = blob_dataset({270, 30}, 2, 1.2, 40 + seed);
    const auto [train, test] = stratified_split(d, 0.3, seed);
    const ClassifierModel w = train_classifier(ClassifierKind::LinearSvm, train, {{"class_weighted", 1}}, seed);
    const ClassifierModel u = train_classifier(ClassifierKind::LinearSvm, train, {{"class_weighted", 0}}, seed);
    const double rw = evaluate(predict(w, test.features), test.labels, 2).recall[1];
    const double ru = evaluate(predict(u, test.features), test.labels, 2).recall[1];
    better_or_equal += rw >= ru ? 1 : 0;

    const auto& hist = std::get<SvmState>(w.state).objective_history;
    REQUIRE(hist.size() == 201);
    CHECK(hist.back() < hist.front());
  }
  CHECK(better_or_equal == 10);
}

TEST_CASE("persistence round-trip gives identical predictions") {
  const LabeledDataset d = blob_dataset({40, 30, 20, 10}, 5, 2.0, 21);
  const LabeledDataset probes = blob_dataset({250, 250, 250, 250}, 5, 2.5, 22);
  for (ClassifierKind kind : {ClassifierKind::Knn, ClassifierKind::RandomForest, ClassifierKind::LinearSvm}) {
    const ClassifierModel m = train_classifier(kind, d, {}, 5);
    const nlohmann::json doc = model_to_json(m);
    CHECK(doc.at("format") == "rsfc-classifier");
    const ClassifierModel back = model_from_json(nlohmann::json::parse(doc.dump()));
    CHECK(predict(back, probes.features) == predict(m, probes.features));
    CHECK(parse_classifier_kind(to_string(kind)) == kind);
  }
  CHECK_THROWS(model_from_json(nlohmann::json{{"format", "other"}}));
}

TEST_CASE("train and predict errors") {
  const LabeledDataset one_class = blob_dataset({10}, 2, 1.0, 1);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::RandomForest, one_class, {}, 0), DataError);
  const LabeledDataset d = blob_dataset({10, 10}, 2, 1.0, 1);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::Knn, d, {{"k", 0}}, 0), ConfigError);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::LinearSvm, d, {{"C", -1}}, 0), ConfigError);
  CHECK_THROWS_AS(train_classifier(ClassifierKind::Knn, d, {{"bogus", 1}}, 0), ConfigError);
  const ClassifierModel m = train_classifier(ClassifierKind::Knn, d, {}, 0);
  CHECK_THROWS_AS(predict(m, Eigen::MatrixXd::Zero(3, 3)), DataError);
}

TEST_CASE("evaluate: identity, majority arithmetic, permutation null") {
  Eigen::VectorXi truth(1098);
  int row = 0;
  const std::vector<int> skew = {276, 647, 118, 57};
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < skew[static_cast<std::size_t>(c)]; ++i) truth(row++) = c;

  const Evaluation same = evaluate(truth, truth);
  CHECK(same.accuracy == 1.0);
  CHECK(same.confusion(1, 1) == 647);
  CHECK(same.confusion.sum() == same.confusion.trace());

  const Evaluation majority = evaluate(Eigen::VectorXi::Ones(1098), truth);
  CHECK(majority.accuracy == doctest::Approx(647.0 / 1098.0).epsilon(1e-15));
  CHECK(majority.confusion(0, 1) == 276);
  CHECK(majority.recall[1] == 1.0);

  std::mt19937_64 rng(5);
  Eigen::VectorXi perm = truth;
  std::shuffle(perm.data(), perm.data() + perm.size(), rng);
  double chance = 0.0;
  for (int c : skew) chance += (c / 1098.0) * (c / 1098.0);
  CHECK(std::abs(evaluate(perm, truth).accuracy - chance) <= 0.05);

  CHECK_THROWS_AS(evaluate(Eigen::VectorXi::Zero(3), Eigen::VectorXi::Zero(4)), DataError);
  CHECK_THROWS_AS(evaluate(Eigen::VectorXi::Constant(3, 4), Eigen::VectorXi::Zero(3)), DataError);
  const nlohmann::json j = evaluation_to_json(majority);
  CHECK(j.at("confusion").size() == 4);
}
