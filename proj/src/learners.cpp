#include "handpass/learners.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "handpass/error.hpp"
#include "handpass/rng.hpp"
#include "tree_builder.hpp"

namespace handpass {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomForest:
      return "rf";
    case ModelKind::DecisionTree:
      return "dt";
    case ModelKind::KNN:
      return "knn";
    case ModelKind::GaussianNB:
      return "nb";
    case ModelKind::LinearSVM:
      return "svm";
  }
  return "rf";
}

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomForest:
      return "RandomForest";
    case ModelKind::DecisionTree:
      return "DecisionTree";
    case ModelKind::KNN:
      return "KNN";
    case ModelKind::GaussianNB:
      return "GaussianNB";
    case ModelKind::LinearSVM:
      return "LinearSVM";
  }
  return "RandomForest";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) {
  for (const auto kind : {ModelKind::RandomForest, ModelKind::DecisionTree, ModelKind::KNN,
                          ModelKind::GaussianNB, ModelKind::LinearSVM}) {
    if (name == to_string(kind) || name == display_name(kind)) return kind;
  }
  return std::nullopt;
}

double gini(std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  std::map<int, std::size_t> counts;
  for (const int l : labels) ++counts[l];
  const auto n = static_cast<double>(labels.size());
  double sum_sq = 0;
  for (const auto& [label, count] : counts) sum_sq += (count / n) * (count / n);
  return 1.0 - sum_sq;
}

namespace {

struct LabelIndex {
  std::vector<int> classes;
  std::vector<int> index;  ///< class position per row
};

LabelIndex index_labels(std::span<const int> labels) {
  LabelIndex out;
  out.classes.assign(labels.begin(), labels.end());
  std::sort(out.classes.begin(), out.classes.end());
  out.classes.erase(std::unique(out.classes.begin(), out.classes.end()), out.classes.end());
  out.index.reserve(labels.size());
  for (const int l : labels) {
    out.index.push_back(static_cast<int>(std::lower_bound(out.classes.begin(), out.classes.end(), l) -
                                         out.classes.begin()));
  }
  return out;
}

void validate_training_input(const Eigen::MatrixXd& features, std::span<const int> labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionMismatch("feature rows (" + std::to_string(features.rows()) + ") and labels (" +
                            std::to_string(labels.size()) + ") differ");
  }
  if (!features.allFinite()) throw NonFiniteFeature("training features contain NaN or infinity");
}

int default_max_features(ModelKind kind, const HyperParams& hyper, Eigen::Index d) {
  if (hyper.max_features > 0) return static_cast<int>(std::min<Eigen::Index>(hyper.max_features, d));
  if (kind == ModelKind::DecisionTree) return static_cast<int>(d);
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(d)))));
}

// Scales a non-negative vector to unit sum; all-zero stays zero.
Eigen::VectorXd normalized(const Eigen::VectorXd& v) {
  const double total = v.sum();
  return total > 0 ? Eigen::VectorXd(v / total) : Eigen::VectorXd(Eigen::VectorXd::Zero(v.size()));
}

Eigen::VectorXd forest_importance(const RandomForestModel& forest, Eigen::Index d) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  for (const auto& tree : forest.trees) sum += normalized(tree.impurity_decrease);
  return sum;
}

// Importances of a model with no informative split are spread uniformly so
// that they still sum to one.
Eigen::VectorXd finish_importance(const Eigen::VectorXd& raw) {
  if (raw.sum() > 0) return normalized(raw);
  return Eigen::VectorXd::Constant(raw.size(), 1.0 / static_cast<double>(raw.size()));
}

RandomForestModel train_forest(const Eigen::MatrixXd& features, const LabelIndex& labels,
                               const HyperParams& hyper, std::uint64_t seed, int max_features) {
  const detail::RankedColumns ranked(features);
  const auto n = static_cast<std::size_t>(features.rows());
  const int n_classes = static_cast<int>(labels.classes.size());
  const detail::TreeOptions options{max_features, hyper.max_depth, hyper.min_samples_split};

  RandomForestModel forest;
  forest.trees.resize(static_cast<std::size_t>(std::max(1, hyper.n_trees)));
  auto grow = [&](std::size_t t) {
    Rng rng(mix_seed(seed, t));
    std::vector<double> weights(n, hyper.bootstrap ? 0.0 : 1.0);
    if (hyper.bootstrap) {
      for (std::size_t i = 0; i < n; ++i) weights[rng.below(n)] += 1.0;
    }
    forest.trees[t] = detail::grow_tree(ranked, labels.index, n_classes, weights, options, rng);
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, hyper.threads)), forest.trees.size());
  if (workers <= 1) {
    for (std::size_t t = 0; t < forest.trees.size(); ++t) grow(t);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < forest.trees.size(); t += workers) grow(t);
      });
    }
    for (auto& th : pool) th.join();
  }
  return forest;
}

DecisionTreeModel train_tree(const Eigen::MatrixXd& features, const LabelIndex& labels,
                             const HyperParams& hyper, std::uint64_t seed, int max_features) {
  const detail::RankedColumns ranked(features);
  const std::vector<double> weights(static_cast<std::size_t>(features.rows()), 1.0);
  Rng rng(mix_seed(seed, 0));
  const detail::TreeOptions options{max_features, hyper.max_depth, hyper.min_samples_split};
  return detail::grow_tree(ranked, labels.index, static_cast<int>(labels.classes.size()), weights, options,
                           rng);
}

GaussianNbModel train_gnb(const Eigen::MatrixXd& features, const LabelIndex& labels,
                          const HyperParams& hyper) {
  const auto c = static_cast<Eigen::Index>(labels.classes.size());
  const Eigen::Index d = features.cols();
  GaussianNbModel m;
  m.means = Eigen::MatrixXd::Zero(c, d);
  m.variances = Eigen::MatrixXd::Zero(c, d);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(c);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const int k = labels.index[static_cast<std::size_t>(r)];
    m.means.row(k) += features.row(r);
    counts(k) += 1;
  }
  m.means.array().colwise() /= counts.array();
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const int k = labels.index[static_cast<std::size_t>(r)];
    m.variances.row(k).array() += (features.row(r) - m.means.row(k)).array().square();
  }
  m.variances.array().colwise() /= counts.array();

  const Eigen::RowVectorXd overall_mean = features.colwise().mean();
  const double max_var = ((features.rowwise() - overall_mean).array().square().colwise().sum() /
                          static_cast<double>(features.rows()))
                             .maxCoeff();
  double epsilon = hyper.var_smoothing * max_var;
  if (!(epsilon > 0)) epsilon = hyper.var_smoothing > 0 ? hyper.var_smoothing : 1e-9;
  m.variances.array() += epsilon;
  m.log_priors = (counts.array() / static_cast<double>(features.rows())).log().matrix();
  return m;
}

LinearSvmModel train_svm(const Eigen::MatrixXd& features, const LabelIndex& labels,
                         const HyperParams& hyper) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  const auto c = static_cast<Eigen::Index>(labels.classes.size());
  Eigen::MatrixXd targets = Eigen::MatrixXd::Constant(n, c, -1.0);
  for (Eigen::Index r = 0; r < n; ++r) targets(r, labels.index[static_cast<std::size_t>(r)]) = 1.0;

  LinearSvmModel m;
  m.weights = Eigen::MatrixXd::Zero(d, c);
  m.bias = Eigen::RowVectorXd::Zero(c);
  Eigen::MatrixXd avg_w = Eigen::MatrixXd::Zero(d, c);
  Eigen::RowVectorXd avg_b = Eigen::RowVectorXd::Zero(c);
  int averaged = 0;
  const int epochs = std::max(1, hyper.svm_epochs);
  const int average_from = epochs / 2;
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd grad(n, c);
  for (int t = 1; t <= epochs; ++t) {
    const Eigen::MatrixXd margins = (features * m.weights).rowwise() + m.bias;
    grad = ((targets.array() * margins.array()) < 1.0).select(-targets * inv_n, 0.0);
    const double step = hyper.svm_learning_rate / std::sqrt(static_cast<double>(t));
    m.weights -= step * (hyper.svm_regularization * m.weights + features.transpose() * grad);
    m.bias -= step * grad.colwise().sum();
    if (t > average_from) {
      avg_w += m.weights;
      avg_b += m.bias;
      ++averaged;
    }
  }
  m.weights = avg_w / averaged;
  m.bias = avg_b / averaged;
  return m;
}

void check_width(const TrainedModel& model, const Eigen::MatrixXd& rows) {
  if (rows.cols() != model.n_features) {
    throw DimensionMismatch("model expects " + std::to_string(model.n_features) + " features, got " +
                            std::to_string(rows.cols()));
  }
}

Eigen::MatrixXd knn_scores(const KnnModel& m, const Eigen::MatrixXd& rows, Eigen::Index n_classes) {
  const Eigen::Index n_points = m.points.rows();
  const int k = static_cast<int>(std::min<Eigen::Index>(std::max(1, m.k), n_points));
  const Eigen::VectorXd point_norms = m.points.rowwise().squaredNorm();
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(rows.rows(), n_classes);
  constexpr Eigen::Index kBlock = 256;
  std::vector<std::pair<double, Eigen::Index>> candidates(static_cast<std::size_t>(n_points));
  for (Eigen::Index start = 0; start < rows.rows(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, rows.rows() - start);
    const auto block = rows.middleRows(start, len);
    const Eigen::MatrixXd cross = block * m.points.transpose();
    const Eigen::VectorXd row_norms = block.rowwise().squaredNorm();
    for (Eigen::Index i = 0; i < len; ++i) {
      for (Eigen::Index p = 0; p < n_points; ++p) {
        const double dist = std::max(0.0, row_norms(i) + point_norms(p) - 2.0 * cross(i, p));
        candidates[static_cast<std::size_t>(p)] = {dist, p};
      }
      std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
      double total = 0;
      for (int j = 0; j < k; ++j) {
        const double w = 1.0 / (j + 1);
        scores(start + i, m.class_index[static_cast<std::size_t>(candidates[static_cast<std::size_t>(j)].second)]) += w;
        total += w;
      }
      scores.row(start + i) /= total;
    }
  }
  return scores;
}

Eigen::MatrixXd gnb_log_joint(const GaussianNbModel& m, const Eigen::MatrixXd& rows) {
  const Eigen::Index c = m.means.rows();
  Eigen::MatrixXd out(rows.rows(), c);
  constexpr double kLog2Pi = 1.8378770664093453;
  for (Eigen::Index k = 0; k < c; ++k) {
    const Eigen::ArrayXd inv_var = m.variances.row(k).array().inverse().transpose();
    const double norm = -0.5 * (m.variances.row(k).array().log().sum() + kLog2Pi * m.means.cols());
    const Eigen::MatrixXd centered = rows.rowwise() - m.means.row(k);
    out.col(k) = (centered.array().square().matrix() * inv_var.matrix() * -0.5).array() + norm + m.log_priors(k);
  }
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

}  // namespace

TrainedModel train(ModelKind kind, const Eigen::MatrixXd& features, std::span<const int> labels,
                   const HyperParams& hyper, std::uint64_t seed) {
  validate_training_input(features, labels);
  const LabelIndex index = index_labels(labels);
  if (index.classes.size() < 2) {
    throw DegenerateLabels("training needs at least two classes, got " + std::to_string(index.classes.size()));
  }
  if (features.cols() == 0) throw EmptyMatrix("training matrix has no feature columns");

  TrainedModel model;
  model.kind = kind;
  model.hyper = hyper;
  model.seed = seed;
  model.classes = index.classes;
  model.n_features = features.cols();

  switch (kind) {
    case ModelKind::RandomForest: {
      auto forest = train_forest(features, index, hyper, seed, default_max_features(kind, hyper, features.cols()));
      model.feature_importances = finish_importance(forest_importance(forest, features.cols()));
      model.params = std::move(forest);
      break;
    }
    case ModelKind::DecisionTree: {
      auto tree = train_tree(features, index, hyper, seed, default_max_features(kind, hyper, features.cols()));
      model.feature_importances = finish_importance(tree.impurity_decrease);
      model.params = std::move(tree);
      break;
    }
    case ModelKind::KNN:
      model.params = KnnModel{features, index.index, hyper.k_neighbors};
      break;
    case ModelKind::GaussianNB:
      model.params = train_gnb(features, index, hyper);
      break;
    case ModelKind::LinearSVM:
      model.params = train_svm(features, index, hyper);
      break;
  }
  return model;
}

Eigen::MatrixXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& rows) {
  check_width(model, rows);
  const auto c = static_cast<Eigen::Index>(model.classes.size());
  return std::visit(
      [&](const auto& params) -> Eigen::MatrixXd {
        using T = std::decay_t<decltype(params)>;
        if constexpr (std::is_same_v<T, RandomForestModel>) {
          Eigen::MatrixXd votes = Eigen::MatrixXd::Zero(rows.rows(), c);
          for (const auto& tree : params.trees) {
            for (Eigen::Index r = 0; r < rows.rows(); ++r) votes(r, tree.leaf_for(rows.row(r)).majority) += 1.0;
          }
          return votes / static_cast<double>(params.trees.size());
        } else if constexpr (std::is_same_v<T, DecisionTreeModel>) {
          Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows.rows(), c);
          for (Eigen::Index r = 0; r < rows.rows(); ++r) {
            const TreeNode& leaf = params.leaf_for(rows.row(r));
            for (int v = leaf.value_begin; v < leaf.value_end; ++v) {
              out(r, params.value_class[static_cast<std::size_t>(v)]) = params.value_share[static_cast<std::size_t>(v)];
            }
          }
          return out;
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          return knn_scores(params, rows, c);
        } else if constexpr (std::is_same_v<T, GaussianNbModel>) {
          return softmax_rows(gnb_log_joint(params, rows));
        } else {
          return softmax_rows((rows * params.weights).rowwise() + params.bias);
        }
      },
      model.params);
}

std::vector<int> predict(const TrainedModel& model, const Eigen::MatrixXd& rows) {
  const Eigen::MatrixXd scores = predict_scores(model, rows);
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k) {
      if (scores(r, k) > scores(r, best)) best = k;
    }
    out[static_cast<std::size_t>(r)] = model.classes[static_cast<std::size_t>(best)];
  }
  return out;
}

Eigen::VectorXd feature_importance(const TrainedModel& model) {
  if (model.kind != ModelKind::RandomForest && model.kind != ModelKind::DecisionTree) {
    throw UnsupportedModel(std::string(display_name(model.kind)) + " has no feature importances");
  }
  if (model.feature_importances) return *model.feature_importances;
  if (const auto* tree = std::get_if<DecisionTreeModel>(&model.params)) {
    return finish_importance(tree->impurity_decrease);
  }
  return finish_importance(forest_importance(std::get<RandomForestModel>(model.params), model.n_features));
}

std::vector<int> select_subcarriers(const Eigen::VectorXd& importances, const FeatureLayout& layout,
                                    int top_m) {
  if (importances.size() != layout.width()) {
    throw DimensionMismatch("importances have " + std::to_string(importances.size()) +
                            " entries, layout has " + std::to_string(layout.width()) + " columns");
  }
  std::map<int, double> credit;
  for (Eigen::Index col = 0; col < importances.size(); ++col) credit[layout.subcarrier_of(col)] += importances(col);
  std::vector<std::pair<int, double>> ranked(credit.begin(), credit.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto keep = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, top_m)), ranked.size());
  std::vector<int> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(ranked[i].first);
  return out;
}

}  // namespace handpass
