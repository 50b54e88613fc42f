#include "rsfc/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "rsfc/error.hpp"
#include "rsfc/parallel.hpp"

namespace rsfc {

void LabeledDataset::validate() const {
  if (labels.size() != features.rows()) throw DataError("dataset: label count != row count");
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != features.cols())
    throw DataError("dataset: feature name count != column count");
  if (labels.size() > 0 && labels.minCoeff() < 0) throw DataError("dataset: negative label");
  if (!features.allFinite()) throw DataError("dataset: non-finite feature");
}

LabeledDataset LabeledDataset::subset(const std::vector<Eigen::Index>& rows) const {
  LabeledDataset out;
  out.feature_names = feature_names;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.labels(static_cast<Eigen::Index>(i)) = labels(rows[i]);
  }
  return out;
}

namespace {

int class_count(const Eigen::Ref<const Eigen::VectorXi>& labels) {
  return labels.size() == 0 ? 0 : labels.maxCoeff() + 1;
}

int argmax_low(const std::vector<double>& votes) {
  int best = 0;
  for (std::size_t c = 1; c < votes.size(); ++c)
    if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  return best;
}

double param(const Hyperparams& h, const std::string& key, double fallback) {
  const auto it = h.find(key);
  return it == h.end() ? fallback : it->second;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data,
                                                           double test_fraction,
                                                           std::uint64_t seed) {
  data.validate();
  if (!(test_fraction > 0.0 && test_fraction <= 0.5))
    throw ConfigError("stratified_split: test fraction must lie in (0, 0.5]");
  const int k = class_count(data.labels);
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < data.size(); ++i)
    members[static_cast<std::size_t>(data.labels(i))].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> train_rows;
  std::vector<Eigen::Index> test_rows;
  for (int c = 0; c < k; ++c) {
    auto& m = members[static_cast<std::size_t>(c)];
    if (m.empty()) continue;
    if (m.size() < 2)
      throw DataError("stratified_split: class " + std::to_string(c) + " has a single member");
    std::shuffle(m.begin(), m.end(), rng);
    const auto n = static_cast<long>(m.size());
    const long n_test = std::clamp(std::lround(test_fraction * static_cast<double>(n)), 1L, n - 1);
    test_rows.insert(test_rows.end(), m.begin(), m.begin() + n_test);
    train_rows.insert(train_rows.end(), m.begin() + n_test, m.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::Knn: return "knn";
    case ClassifierKind::RandomForest: return "random_forest";
    case ClassifierKind::LinearSvm: return "linear_svm";
  }
  return "unknown";
}

ClassifierKind parse_classifier_kind(std::string_view name) {
  if (name == "knn") return ClassifierKind::Knn;
  if (name == "random_forest") return ClassifierKind::RandomForest;
  if (name == "linear_svm") return ClassifierKind::LinearSvm;
  throw ConfigError("unknown classifier kind: '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Random forest

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXi& y;
  int n_classes;
  int max_depth;  // 0 = unlimited
  int max_features;
  int min_samples_split;
  std::mt19937_64 rng;
  std::vector<TreeNode> nodes;

  int majority(const std::vector<Eigen::Index>& rows) const {
    std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
    for (auto r : rows) counts[static_cast<std::size_t>(y(r))] += 1.0;
    return argmax_low(counts);
  }

  static double gini(const std::vector<double>& counts, double total) {
    if (total <= 0.0) return 0.0;
    double s = 0.0;
    for (double c : counts) s += (c / total) * (c / total);
    return 1.0 - s;
  }

  int build(std::vector<Eigen::Index> rows, int depth) {
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{});
    nodes[static_cast<std::size_t>(id)].label = majority(rows);

    bool pure = true;
    for (auto r : rows)
      if (y(r) != y(rows.front())) {
        pure = false;
        break;
      }
    if (pure || static_cast<int>(rows.size()) < min_samples_split ||
        (max_depth > 0 && depth >= max_depth))
      return id;

    std::vector<int> features(static_cast<std::size_t>(x.cols()));
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng);

    const double total = static_cast<double>(rows.size());
    std::vector<double> all(static_cast<std::size_t>(n_classes), 0.0);
    for (auto r : rows) all[static_cast<std::size_t>(y(r))] += 1.0;

    double best_score = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;
    int examined = 0;
    std::vector<Eigen::Index> sorted = rows;
    for (int f : features) {
      if (examined >= max_features) break;
      std::sort(sorted.begin(), sorted.end(), [&](Eigen::Index a, Eigen::Index b) {
        return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
      });
      if (x(sorted.front(), f) == x(sorted.back(), f)) continue;  // constant here
      ++examined;
      std::vector<double> left(static_cast<std::size_t>(n_classes), 0.0);
      std::vector<double> right = all;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const int c = y(sorted[i]);
        left[static_cast<std::size_t>(c)] += 1.0;
        right[static_cast<std::size_t>(c)] -= 1.0;
        const double a = x(sorted[i], f);
        const double b = x(sorted[i + 1], f);
        if (a == b) continue;
        const double nl = static_cast<double>(i + 1);
        const double score = nl * gini(left, nl) + (total - nl) * gini(right, total - nl);
        if (score < best_score - 1e-12) {
          best_score = score;
          best_feature = f;
          const double mid = 0.5 * (a + b);
          best_threshold = mid < b ? mid : a;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Eigen::Index> lrows;
    std::vector<Eigen::Index> rrows;
    for (auto r : rows) (x(r, best_feature) <= best_threshold ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(std::move(lrows), depth + 1);
    const int r = build(std::move(rrows), depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

int tree_predict(const std::vector<TreeNode>& tree, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int at = 0;
  while (tree[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& n = tree[static_cast<std::size_t>(at)];
    at = row(n.feature) <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(at)].label;
}

ForestState fit_forest(const LabeledDataset& train, int n_classes, const Hyperparams& h,
                       std::uint64_t seed, std::size_t workers) {
  const int n_trees = static_cast<int>(param(h, "n_trees", 100));
  const int max_depth = static_cast<int>(param(h, "max_depth", 0));
  int max_features = static_cast<int>(param(h, "max_features", 0));
  const int min_split = static_cast<int>(param(h, "min_samples_split", 2));
  if (n_trees < 1 || max_depth < 0 || max_features < 0 || min_split < 2)
    throw ConfigError("random_forest: invalid hyperparameters");
  const auto d = static_cast<int>(train.features.cols());
  if (max_features == 0) max_features = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(d))));
  max_features = std::min(max_features, d);

  ForestState forest;
  forest.trees.resize(static_cast<std::size_t>(n_trees));
  parallel_for(static_cast<std::size_t>(n_trees), workers, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(seed, t));
    std::uniform_int_distribution<Eigen::Index> pick(0, train.size() - 1);
    std::vector<Eigen::Index> boot(static_cast<std::size_t>(train.size()));
    for (auto& b : boot) b = pick(rng);
    TreeBuilder builder{train.features, train.labels, n_classes, max_depth,
                        max_features,   min_split,    std::move(rng), {}};
    builder.build(std::move(boot), 0);
    forest.trees[t] = std::move(builder.nodes);
  });
  return forest;
}

// ---------------------------------------------------------------------------
// Linear SVM, one-vs-rest

SvmState fit_svm(const LabeledDataset& train, int n_classes, const Hyperparams& h) {
  const double c_param = param(h, "C", 1.0);
  const int epochs = static_cast<int>(param(h, "epochs", 200));
  const double lr = param(h, "learning_rate", 0.1);
  const bool weighted = param(h, "class_weighted", 1.0) != 0.0;
  if (!(c_param > 0.0) || epochs < 1 || !(lr > 0.0))
    throw ConfigError("linear_svm: invalid hyperparameters");

  const Eigen::Index n = train.size();
  const Eigen::Index d = train.features.cols();
  SvmState s;
  s.mean = train.features.colwise().mean();
  Eigen::MatrixXd x = train.features.rowwise() - s.mean;
  s.scale = (x.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(s.scale(j) > 0.0)) s.scale(j) = 1.0;
  x = x.array().rowwise() / s.scale.array();

  std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) counts[static_cast<std::size_t>(train.labels(i))] += 1.0;
  Eigen::VectorXd sample_weight(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nc = counts[static_cast<std::size_t>(train.labels(i))];
    sample_weight(i) = weighted ? static_cast<double>(n) / (n_classes * nc) : 1.0;
  }
  const double weight_total = sample_weight.sum();
  const double lambda = 1.0 / (c_param * static_cast<double>(n));

  s.weights = Eigen::MatrixXd::Zero(n_classes, d);
  s.bias = Eigen::VectorXd::Zero(n_classes);
  s.objective_history.assign(static_cast<std::size_t>(epochs) + 1, 0.0);

  for (int c = 0; c < n_classes; ++c) {
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) target(i) = train.labels(i) == c ? 1.0 : -1.0;

    auto objective = [&](const Eigen::VectorXd& w, double b, Eigen::VectorXd* margins) {
      Eigen::VectorXd m = (target.array() * ((x * w).array() + b)).matrix();
      double hinge = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) hinge += sample_weight(i) * std::max(0.0, 1.0 - m(i));
      if (margins) *margins = std::move(m);
      return 0.5 * lambda * w.squaredNorm() + hinge / weight_total;
    };

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    Eigen::VectorXd margins;
    double current = objective(w, b, &margins);
    Eigen::VectorXd best_w = w;
    double best_b = b;
    double best = current;
    s.objective_history[0] += current / n_classes;
    for (int e = 0; e < epochs; ++e) {
      Eigen::VectorXd gw = lambda * w;
      double gb = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (margins(i) >= 1.0) continue;
        const double coef = sample_weight(i) * target(i) / weight_total;
        gw -= coef * x.row(i).transpose();
        gb -= coef;
      }
      const double step = lr / std::sqrt(1.0 + e);
      w -= step * gw;
      b -= step * gb;
      current = objective(w, b, &margins);
      if (current < best) {
        best = current;
        best_w = w;
        best_b = b;
      }
      s.objective_history[static_cast<std::size_t>(e) + 1] += best / n_classes;
    }
    s.weights.row(c) = best_w.transpose();
    s.bias(c) = best_b;
  }
  return s;
}

}  // namespace

ClassifierModel train_classifier(ClassifierKind kind, const LabeledDataset& train,
                                 const Hyperparams& hyperparams, std::uint64_t seed,
                                 std::size_t workers) {
  train.validate();
  if (train.size() == 0) throw DataError("train_classifier: empty training set");
  const int n_classes = class_count(train.labels);
  int present = 0;
  {
    std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
    for (Eigen::Index i = 0; i < train.size(); ++i) seen[static_cast<std::size_t>(train.labels(i))] = true;
    present = static_cast<int>(std::count(seen.begin(), seen.end(), true));
  }
  if (present < 2) throw DataError("train_classifier: training set has a single class");

  static const std::map<ClassifierKind, std::vector<std::string>> known = {
      {ClassifierKind::Knn, {"k"}},
      {ClassifierKind::RandomForest, {"n_trees", "max_depth", "max_features", "min_samples_split"}},
      {ClassifierKind::LinearSvm, {"C", "epochs", "learning_rate", "class_weighted"}}};
  const auto& keys = known.at(kind);
  for (const auto& [name, value] : hyperparams) {
    if (std::find(keys.begin(), keys.end(), name) == keys.end())
      throw ConfigError(std::string(to_string(kind)) + ": unknown hyperparameter '" + name + "'");
    if (!std::isfinite(value)) throw ConfigError(name + ": must be finite");
  }

  ClassifierModel model;
  model.kind = kind;
  model.hyperparams = hyperparams;
  model.n_classes = n_classes;
  model.n_features = static_cast<int>(train.features.cols());
  switch (kind) {
    case ClassifierKind::Knn: {
      const int k = static_cast<int>(param(hyperparams, "k", 5));
      if (k < 1 || k > train.size()) throw ConfigError("knn: k must lie in [1, N]");
      model.state = KnnState{k, train.features, train.labels};
      break;
    }
    case ClassifierKind::RandomForest:
      model.state = fit_forest(train, n_classes, hyperparams, seed, workers);
      break;
    case ClassifierKind::LinearSvm:
      model.state = fit_svm(train, n_classes, hyperparams);
      break;
  }
  return model;
}

Eigen::VectorXi predict(const ClassifierModel& model,
                        const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (features.cols() != model.n_features)
    throw DataError("predict: expected " + std::to_string(model.n_features) + " features, got " +
                    std::to_string(features.cols()));
  const Eigen::Index m = features.rows();
  Eigen::VectorXi out(m);
  std::visit(
      [&](const auto& st) {
        using T = std::decay_t<decltype(st)>;
        if constexpr (std::is_same_v<T, KnnState>) {
          const Eigen::Index n = st.features.rows();
          std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
          Eigen::VectorXd d(n);
          for (Eigen::Index q = 0; q < m; ++q) {
            d = (st.features.rowwise() - features.row(q)).rowwise().squaredNorm();
            std::iota(idx.begin(), idx.end(), Eigen::Index{0});
            std::partial_sort(idx.begin(), idx.begin() + st.k, idx.end(),
                              [&](Eigen::Index a, Eigen::Index b) {
                                return d(a) < d(b) || (d(a) == d(b) && a < b);
                              });
            std::vector<double> votes(static_cast<std::size_t>(model.n_classes), 0.0);
            for (int j = 0; j < st.k; ++j) votes[static_cast<std::size_t>(st.labels(idx[static_cast<std::size_t>(j)]))] += 1.0;
            out(q) = argmax_low(votes);
          }
        } else if constexpr (std::is_same_v<T, ForestState>) {
          for (Eigen::Index q = 0; q < m; ++q) {
            std::vector<double> votes(static_cast<std::size_t>(model.n_classes), 0.0);
            for (const auto& tree : st.trees) votes[static_cast<std::size_t>(tree_predict(tree, features.row(q)))] += 1.0;
            out(q) = argmax_low(votes);
          }
        } else {
          const Eigen::MatrixXd x =
              (features.rowwise() - st.mean).array().rowwise() / st.scale.array();
          const Eigen::MatrixXd scores = (x * st.weights.transpose()).rowwise() + st.bias.transpose();
          for (Eigen::Index q = 0; q < m; ++q) {
            int best = 0;
            for (Eigen::Index c = 1; c < scores.cols(); ++c)
              if (scores(q, c) > scores(q, best)) best = static_cast<int>(c);
            out(q) = best;
          }
        }
      },
      model.state);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

using nlohmann::json;

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const auto& row = rows.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw DataError("model: ragged matrix");
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = row.at(static_cast<std::size_t>(j)).get<double>();
  }
  return m;
}

Eigen::RowVectorXd row_from(const json& v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = v.at(static_cast<std::size_t>(i)).get<double>();
  return r;
}

}  // namespace

nlohmann::json model_to_json(const ClassifierModel& model) {
  json doc;
  doc["format"] = "rsfc-classifier";
  doc["version"] = 1;
  doc["kind"] = std::string(to_string(model.kind));
  doc["hyperparams"] = model.hyperparams;
  doc["n_classes"] = model.n_classes;
  doc["n_features"] = model.n_features;
  std::visit(
      [&](const auto& st) {
        using T = std::decay_t<decltype(st)>;
        json s;
        if constexpr (std::is_same_v<T, KnnState>) {
          s["k"] = st.k;
          s["features"] = to_json(st.features);
          s["labels"] = std::vector<int>(st.labels.data(), st.labels.data() + st.labels.size());
        } else if constexpr (std::is_same_v<T, ForestState>) {
          json trees = json::array();
          for (const auto& tree : st.trees) {
            json nodes = json::array();
            for (const auto& n : tree) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.label});
            trees.push_back(std::move(nodes));
          }
          s["trees"] = std::move(trees);
        } else {
          s["mean"] = std::vector<double>(st.mean.data(), st.mean.data() + st.mean.size());
          s["scale"] = std::vector<double>(st.scale.data(), st.scale.data() + st.scale.size());
          s["weights"] = to_json(st.weights);
          s["bias"] = std::vector<double>(st.bias.data(), st.bias.data() + st.bias.size());
          s["objective_history"] = st.objective_history;
        }
        doc["state"] = std::move(s);
      },
      model.state);
  return doc;
}

ClassifierModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format") != "rsfc-classifier") throw DataError("model: unexpected format tag");
    if (doc.at("version").get<int>() != 1) throw DataError("model: unsupported version");
    ClassifierModel model;
    model.kind = parse_classifier_kind(doc.at("kind").get<std::string>());
    model.hyperparams = doc.at("hyperparams").get<Hyperparams>();
    model.n_classes = doc.at("n_classes").get<int>();
    model.n_features = doc.at("n_features").get<int>();
    const auto& s = doc.at("state");
    switch (model.kind) {
      case ClassifierKind::Knn: {
        KnnState st;
        st.k = s.at("k").get<int>();
        st.features = matrix_from(s.at("features"), model.n_features);
        const auto labels = s.at("labels").get<std::vector<int>>();
        st.labels = Eigen::Map<const Eigen::VectorXi>(labels.data(), static_cast<Eigen::Index>(labels.size()));
        model.state = std::move(st);
        break;
      }
      case ClassifierKind::RandomForest: {
        ForestState st;
        for (const auto& tree : s.at("trees")) {
          std::vector<TreeNode> nodes;
          for (const auto& n : tree)
            nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                             n.at(3).get<int>(), n.at(4).get<int>()});
          st.trees.push_back(std::move(nodes));
        }
        model.state = std::move(st);
        break;
      }
      case ClassifierKind::LinearSvm: {
        SvmState st;
        st.mean = row_from(s.at("mean"));
        st.scale = row_from(s.at("scale"));
        st.weights = matrix_from(s.at("weights"), model.n_features);
        st.bias = row_from(s.at("bias")).transpose();
        st.objective_history = s.at("objective_history").get<std::vector<double>>();
        model.state = std::move(st);
        break;
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: malformed document: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

Evaluation evaluate(const Eigen::Ref<const Eigen::VectorXi>& predicted,
                    const Eigen::Ref<const Eigen::VectorXi>& truth, int n_classes) {
  if (predicted.size() != truth.size()) throw DataError("evaluate: length mismatch");
  if (predicted.size() == 0) throw DataError("evaluate: no predictions");
  Evaluation e;
  e.confusion = Eigen::MatrixXi::Zero(n_classes, n_classes);
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (truth(i) < 0 || truth(i) >= n_classes || predicted(i) < 0 || predicted(i) >= n_classes)
      throw DataError("evaluate: label out of range");
    ++e.confusion(truth(i), predicted(i));
  }
  e.accuracy = static_cast<double>(e.confusion.trace()) / static_cast<double>(truth.size());
  for (int c = 0; c < n_classes; ++c) {
    const int tp = e.confusion(c, c);
    const int col = e.confusion.col(c).sum();
    const int row = e.confusion.row(c).sum();
    e.precision.push_back(col ? static_cast<double>(tp) / col : 0.0);
    e.recall.push_back(row ? static_cast<double>(tp) / row : 0.0);
  }
  return e;
}

nlohmann::json evaluation_to_json(const Evaluation& e) {
  nlohmann::json doc;
  doc["accuracy"] = e.accuracy;
  nlohmann::json conf = nlohmann::json::array();
  for (Eigen::Index i = 0; i < e.confusion.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < e.confusion.cols(); ++j) row.push_back(e.confusion(i, j));
    conf.push_back(std::move(row));
  }
  doc["confusion"] = std::move(conf);
  doc["precision"] = e.precision;
  doc["recall"] = e.recall;
  return doc;
}

}  // namespace rsfc
