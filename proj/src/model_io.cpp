#include <fstream>
#include <sstream>

#include <json.hpp>

#include "handpass/error.hpp"
#include "handpass/learners.hpp"

namespace handpass {
namespace {

using nlohmann::json;

constexpr const char* kSchema = "handpass.model";
constexpr int kVersion = 1;

json matrix_to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.reshaped<Eigen::RowMajor>().begin(), m.reshaped<Eigen::RowMajor>().end())}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw BadModelDocument("matrix data size mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json hyper_to_json(const HyperParams& h) {
  return {{"n_trees", h.n_trees},
          {"max_features", h.max_features},
          {"bootstrap", h.bootstrap},
          {"max_depth", h.max_depth},
          {"min_samples_split", h.min_samples_split},
          {"k_neighbors", h.k_neighbors},
          {"var_smoothing", h.var_smoothing},
          {"svm_epochs", h.svm_epochs},
          {"svm_regularization", h.svm_regularization},
          {"svm_learning_rate", h.svm_learning_rate},
          {"threads", h.threads}};
}

HyperParams hyper_from_json(const json& j) {
  HyperParams h;
  h.n_trees = j.value("n_trees", h.n_trees);
  h.max_features = j.value("max_features", h.max_features);
  h.bootstrap = j.value("bootstrap", h.bootstrap);
  h.max_depth = j.value("max_depth", h.max_depth);
  h.min_samples_split = j.value("min_samples_split", h.min_samples_split);
  h.k_neighbors = j.value("k_neighbors", h.k_neighbors);
  h.var_smoothing = j.value("var_smoothing", h.var_smoothing);
  h.svm_epochs = j.value("svm_epochs", h.svm_epochs);
  h.svm_regularization = j.value("svm_regularization", h.svm_regularization);
  h.svm_learning_rate = j.value("svm_learning_rate", h.svm_learning_rate);
  h.threads = j.value("threads", h.threads);
  return h;
}

json tree_to_json(const DecisionTreeModel& t) {
  std::vector<int> feature, left, right, vbegin, vend, majority;
  std::vector<double> threshold;
  for (const TreeNode& n : t.nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    vbegin.push_back(n.value_begin);
    vend.push_back(n.value_end);
    majority.push_back(n.majority);
  }
  return {{"feature", feature},         {"threshold", threshold},         {"left", left},
          {"right", right},             {"value_begin", vbegin},          {"value_end", vend},
          {"majority", majority},       {"value_class", t.value_class},   {"value_share", t.value_share},
          {"impurity_decrease", vector_to_json(t.impurity_decrease)}};
}

DecisionTreeModel tree_from_json(const json& j) {
  DecisionTreeModel t;
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto vbegin = j.at("value_begin").get<std::vector<int>>();
  const auto vend = j.at("value_end").get<std::vector<int>>();
  const auto majority = j.at("majority").get<std::vector<int>>();
  const std::size_t n = feature.size();
  if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || vbegin.size() != n ||
      vend.size() != n || majority.size() != n) {
    throw BadModelDocument("tree node arrays have inconsistent lengths");
  }
  t.value_class = j.at("value_class").get<std::vector<int>>();
  t.value_share = j.at("value_share").get<std::vector<double>>();
  t.impurity_decrease = vector_from_json(j.at("impurity_decrease"));
  const auto n_nodes = static_cast<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode node{feature[i], threshold[i], left[i], right[i], vbegin[i], vend[i], majority[i]};
    if (!node.is_leaf() && (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
                            node.left >= n_nodes || node.right >= n_nodes)) {
      throw BadModelDocument("tree node " + std::to_string(i) + " has invalid children");
    }
    if (node.is_leaf() && (node.value_begin < 0 || node.value_end > static_cast<int>(t.value_class.size()))) {
      throw BadModelDocument("tree leaf " + std::to_string(i) + " has invalid values");
    }
    t.nodes.push_back(node);
  }
  return t;
}

json params_to_json(const ModelParams& params) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RandomForestModel>) {
          json trees = json::array();
          for (const auto& t : p.trees) trees.push_back(tree_to_json(t));
          return {{"trees", trees}};
        } else if constexpr (std::is_same_v<T, DecisionTreeModel>) {
          return {{"tree", tree_to_json(p)}};
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          return {{"k", p.k}, {"points", matrix_to_json(p.points)}, {"class_index", p.class_index}};
        } else if constexpr (std::is_same_v<T, GaussianNbModel>) {
          return {{"means", matrix_to_json(p.means)},
                  {"variances", matrix_to_json(p.variances)},
                  {"log_priors", vector_to_json(p.log_priors)}};
        } else {
          return {{"weights", matrix_to_json(p.weights)},
                  {"bias", vector_to_json(p.bias.transpose())}};
        }
      },
      params);
}

ModelParams params_from_json(ModelKind kind, const json& j) {
  switch (kind) {
    case ModelKind::RandomForest: {
      RandomForestModel f;
      for (const auto& t : j.at("trees")) f.trees.push_back(tree_from_json(t));
      if (f.trees.empty()) throw BadModelDocument("forest has no trees");
      return f;
    }
    case ModelKind::DecisionTree:
      return tree_from_json(j.at("tree"));
    case ModelKind::KNN:
      return KnnModel{matrix_from_json(j.at("points")), j.at("class_index").get<std::vector<int>>(),
                      j.at("k").get<int>()};
    case ModelKind::GaussianNB:
      return GaussianNbModel{matrix_from_json(j.at("means")), matrix_from_json(j.at("variances")),
                             vector_from_json(j.at("log_priors"))};
    case ModelKind::LinearSVM:
      return LinearSvmModel{matrix_from_json(j.at("weights")), vector_from_json(j.at("bias")).transpose()};
  }
  throw BadModelDocument("unknown model kind");
}

}  // namespace

std::string save_model_string(const TrainedModel& model) {
  json doc = {{"schema", kSchema},
              {"version", kVersion},
              {"kind", std::string(display_name(model.kind))},
              {"seed", model.seed},
              {"hyper", hyper_to_json(model.hyper)},
              {"classes", model.classes},
              {"n_features", model.n_features},
              {"params", params_to_json(model.params)}};
  if (model.feature_importances) doc["feature_importances"] = vector_to_json(*model.feature_importances);
  return doc.dump();
}

TrainedModel load_model_string(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("schema").get<std::string>() != kSchema) throw BadModelDocument("not a handpass model document");
    if (doc.at("version").get<int>() != kVersion) {
      throw BadModelDocument("unsupported model version " + std::to_string(doc.at("version").get<int>()));
    }
    const auto kind = parse_model_kind(doc.at("kind").get<std::string>());
    if (!kind) throw BadModelDocument("unknown model kind " + doc.at("kind").dump());
    TrainedModel model;
    model.kind = *kind;
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.hyper = hyper_from_json(doc.at("hyper"));
    model.classes = doc.at("classes").get<std::vector<int>>();
    model.n_features = doc.at("n_features").get<Eigen::Index>();
    if (doc.contains("feature_importances")) model.feature_importances = vector_from_json(doc["feature_importances"]);
    model.params = params_from_json(*kind, doc.at("params"));
    if (model.classes.size() < 2) throw BadModelDocument("model has fewer than two classes");
    return model;
  } catch (const json::exception& ex) {
    throw BadModelDocument(std::string("malformed model document: ") + ex.what());
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoFailure("cannot create " + path.string());
  out << save_model_string(model) << '\n';
  if (!out) throw IoFailure("write error on " + path.string());
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_model_string(buf.str());
}

}  // namespace handpass
