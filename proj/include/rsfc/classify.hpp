#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace rsfc {

struct LabeledDataset {
  Eigen::MatrixXd features;  // N x D
  Eigen::VectorXi labels;    // N, 0-based class ids
  std::vector<std::string> feature_names;

  Eigen::Index size() const { return features.rows(); }
  /// Throws DataError if shapes disagree, labels are negative or features
  /// are non-finite.
  void validate() const;
  LabeledDataset subset(const std::vector<Eigen::Index>& rows) const;
};

/// Per-class random split; each class sends round(fraction * n_c) items to
/// the test side, clamped so both sides keep at least one. Throws
/// ConfigError unless fraction in (0, 0.5] and DataError if any present
/// class has fewer than two members.
std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data,
                                                           double test_fraction,
                                                           std::uint64_t seed);

enum class ClassifierKind { Knn, RandomForest, LinearSvm };

std::string_view to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view name);

/// Hyperparameters by name. Recognised keys:
///   knn:           k (default 5)
///   random_forest: n_trees (100), max_depth (0 = unlimited),
///                  max_features (0 = floor(sqrt(D))), min_samples_split (2)
///   linear_svm:    C (1.0), epochs (200), learning_rate (0.1),
///                  class_weighted (1 = inverse-frequency weights, 0 = none)
using Hyperparams = std::map<std::string, double>;

struct KnnState {
  int k = 5;
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;  // majority class at a leaf
};

struct ForestState {
  std::vector<std::vector<TreeNode>> trees;
};

struct SvmState {
  Eigen::RowVectorXd mean;   // feature standardisation
  Eigen::RowVectorXd scale;
  Eigen::MatrixXd weights;   // classes x D
  Eigen::VectorXd bias;      // classes
  std::vector<double> objective_history;  // mean one-vs-rest objective per epoch
};

struct ClassifierModel {
  ClassifierKind kind = ClassifierKind::Knn;
  Hyperparams hyperparams;
  int n_classes = 0;
  int n_features = 0;
  std::variant<KnnState, ForestState, SvmState> state;
};

/// Throws DataError for a training set with fewer than two classes and
/// ConfigError for invalid hyperparameters.
ClassifierModel train_classifier(ClassifierKind kind, const LabeledDataset& train,
                                 const Hyperparams& hyperparams, std::uint64_t seed,
                                 std::size_t workers = 1);

/// Deterministic labels; vote ties resolve to the lower class id.
/// Throws DataError on a feature-count mismatch.
Eigen::VectorXi predict(const ClassifierModel& model,
                        const Eigen::Ref<const Eigen::MatrixXd>& features);

nlohmann::json model_to_json(const ClassifierModel& model);
ClassifierModel model_from_json(const nlohmann::json& doc);

struct Evaluation {
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;  // rows = truth, cols = predicted
  std::vector<double> precision;
  std::vector<double> recall;
};

/// Throws DataError on a length mismatch or labels outside [0, n_classes).
Evaluation evaluate(const Eigen::Ref<const Eigen::VectorXi>& predicted,
                    const Eigen::Ref<const Eigen::VectorXi>& truth, int n_classes = 4);

nlohmann::json evaluation_to_json(const Evaluation& e);

}  // namespace rsfc
