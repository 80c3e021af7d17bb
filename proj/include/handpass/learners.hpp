#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "handpass/dataset.hpp"
#include "handpass/scaler.hpp"

namespace handpass {

enum class ModelKind { RandomForest, DecisionTree, KNN, GaussianNB, LinearSVM };

/// Short CLI names: rf, dt, knn, nb, svm.
std::string_view to_string(ModelKind kind);
std::string_view display_name(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view name);

struct HyperParams {
  // Random forest
  int n_trees = 100;
  int max_features = 0;  ///< per split; 0 = floor(sqrt(d)) for forests, d for a single tree
  bool bootstrap = true;
  // Trees
  int max_depth = 0;  ///< 0 = unlimited
  int min_samples_split = 2;
  // KNN
  int k_neighbors = 5;
  // Gaussian naive Bayes
  double var_smoothing = 1e-9;
  // Linear SVM (one-vs-rest hinge, full-batch sub-gradient descent)
  int svm_epochs = 200;
  double svm_regularization = 1e-4;
  double svm_learning_rate = 0.5;
  /// Worker threads for forest training; results do not depend on it.
  int threads = 1;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

// ---------------------------------------------------------------------------
// Model parameters

struct TreeNode {
  int feature = -1;  ///< -1 marks a leaf
  double threshold = 0;  ///< x <= threshold goes left
  int left = -1;
  int right = -1;
  int value_begin = 0;  ///< leaf class proportions: [value_begin, value_end)
  int value_end = 0;
  int majority = 0;  ///< class position with the largest proportion (lowest on ties)

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Flat CART tree. Leaf class proportions are stored sparsely.
struct DecisionTreeModel {
  std::vector<TreeNode> nodes;
  std::vector<int> value_class;
  std::vector<double> value_share;
  /// Unnormalized weighted Gini decrease per feature.
  Eigen::VectorXd impurity_decrease;

  const TreeNode& leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  int depth() const;
};

struct RandomForestModel {
  std::vector<DecisionTreeModel> trees;
};

struct KnnModel {
  Eigen::MatrixXd points;
  std::vector<int> class_index;  ///< per stored point
  int k = 5;
};

struct GaussianNbModel {
  Eigen::MatrixXd means;      ///< classes x features
  Eigen::MatrixXd variances;  ///< smoothed
  Eigen::VectorXd log_priors;
};

struct LinearSvmModel {
  Eigen::MatrixXd weights;  ///< features x classes
  Eigen::RowVectorXd bias;
};

using ModelParams =
    std::variant<RandomForestModel, DecisionTreeModel, KnnModel, GaussianNbModel, LinearSvmModel>;

struct TrainedModel {
  ModelKind kind = ModelKind::RandomForest;
  HyperParams hyper;
  std::uint64_t seed = 0;
  std::vector<int> classes;  ///< ascending labels; scores use this column order
  Eigen::Index n_features = 0;
  std::optional<Eigen::VectorXd> feature_importances;
  ModelParams params;
};

// ---------------------------------------------------------------------------

double gini(std::span<const int> labels);

TrainedModel train(ModelKind kind, const Eigen::MatrixXd& features, std::span<const int> labels,
                   const HyperParams& hyper = {}, std::uint64_t seed = 42);

/// rows x classes; each row sums to 1.
Eigen::MatrixXd predict_scores(const TrainedModel& model, const Eigen::MatrixXd& rows);

/// argmax of predict_scores, ties to the lowest label.
std::vector<int> predict(const TrainedModel& model, const Eigen::MatrixXd& rows);

/// Mean decrease in Gini, normalized to sum to 1. Throws UnsupportedModel for
/// non-tree models.
Eigen::VectorXd feature_importance(const TrainedModel& model);

/// Credits amplitude and phase columns to their subcarrier and returns the
/// top_m subcarriers by summed importance, ties by ascending index.
std::vector<int> select_subcarriers(const Eigen::VectorXd& importances, const FeatureLayout& layout,
                                    int top_m);

// ---------------------------------------------------------------------------
// Persistence (JSON document, schema "handpass.model" version 1)

std::string save_model_string(const TrainedModel& model);
TrainedModel load_model_string(const std::string& text);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cross-validation and metrics

struct Metrics {
  double accuracy = 0;
  double precision = 0;  ///< macro
  double recall = 0;     ///< macro
  double f1 = 0;         ///< macro
};

/// rows = true class, columns = predicted class, both in `classes` order.
Eigen::MatrixXi confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                 std::span<const int> classes);

/// Macro-averaged metrics; classes never predicted get precision 0.
Metrics metrics_from_confusion(const Eigen::MatrixXi& confusion);

struct CvOptions {
  int folds = 10;
  HyperParams hyper;
  std::uint64_t seed = 42;
  /// When set, a scaler of this kind is fitted on each training fold and
  /// applied to both sides of the split.
  std::optional<ScalerKind> fold_scaler;
};

struct CvReport {
  ModelKind kind = ModelKind::RandomForest;
  std::uint64_t seed = 0;
  std::vector<int> classes;
  std::vector<Metrics> per_fold;
  std::vector<std::size_t> fold_sizes;
  /// accuracy is pooled over all folds (equal to the confusion-matrix
  /// accuracy); precision, recall and f1 are means of the per-fold values.
  Metrics mean;
  Eigen::MatrixXi confusion;
};

/// Per-class seeded shuffle, then round-robin dealing into k folds.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

CvReport cross_validate(ModelKind kind, const Eigen::MatrixXd& features, std::span<const int> labels,
                        const CvOptions& options = {});

}  // namespace handpass
