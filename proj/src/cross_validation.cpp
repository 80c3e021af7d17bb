#include <algorithm>
#include <map>

#include "handpass/error.hpp"
#include "handpass/learners.hpp"
#include "handpass/rng.hpp"

namespace handpass {

Eigen::MatrixXi confusion_matrix(std::span<const int> truth, std::span<const int> predicted,
                                 std::span<const int> classes) {
  if (truth.size() != predicted.size()) throw DimensionMismatch("truth and prediction lengths differ");
  const auto c = static_cast<Eigen::Index>(classes.size());
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(c, c);
  auto position = [&classes](int label) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), label);
    if (it == classes.end() || *it != label) throw DimensionMismatch("label " + std::to_string(label) + " is not a known class");
    return static_cast<Eigen::Index>(it - classes.begin());
  };
  for (std::size_t i = 0; i < truth.size(); ++i) ++out(position(truth[i]), position(predicted[i]));
  return out;
}

Metrics metrics_from_confusion(const Eigen::MatrixXi& confusion) {
  Metrics m;
  const Eigen::Index c = confusion.rows();
  const double total = confusion.sum();
  if (total == 0 || c == 0) return m;
  m.accuracy = confusion.trace() / total;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  for (Eigen::Index k = 0; k < c; ++k) {
    const double tp = confusion(k, k);
    const double predicted = confusion.col(k).sum();
    const double actual = confusion.row(k).sum();
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = actual > 0 ? tp / actual : 0.0;
    precision += p;
    recall += r;
    f1 += (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  m.precision = precision / c;
  m.recall = recall / c;
  m.f1 = f1 / c;
  return m;
}

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw TooFewSamples("cross-validation needs at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<int> assignment(labels.size(), 0);
  Rng rng(mix_seed(seed, 0xF01D));
  int offset = 0;
  for (auto& [label, rows] : by_class) {
    if (rows.size() < static_cast<std::size_t>(folds)) {
      throw TooFewSamples("class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                          " samples, fewer than " + std::to_string(folds) + " folds");
    }
    rng.shuffle(rows.begin(), rows.end());
    // Rotating the starting fold keeps fold sizes within one of each other
    // when class sizes are not multiples of k.
    for (std::size_t j = 0; j < rows.size(); ++j) {
      assignment[rows[j]] = static_cast<int>((j + static_cast<std::size_t>(offset)) % static_cast<std::size_t>(folds));
    }
    offset = static_cast<int>((static_cast<std::size_t>(offset) + rows.size()) % static_cast<std::size_t>(folds));
  }
  return assignment;
}

CvReport cross_validate(ModelKind kind, const Eigen::MatrixXd& features, std::span<const int> labels,
                        const CvOptions& options) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw DimensionMismatch("feature rows and labels differ");
  }
  const std::vector<int> fold_of = stratified_folds(labels, options.folds, options.seed);

  CvReport report;
  report.kind = kind;
  report.seed = options.seed;
  report.classes.assign(labels.begin(), labels.end());
  std::sort(report.classes.begin(), report.classes.end());
  report.classes.erase(std::unique(report.classes.begin(), report.classes.end()), report.classes.end());
  const auto c = static_cast<Eigen::Index>(report.classes.size());
  report.confusion = Eigen::MatrixXi::Zero(c, c);

  for (int fold = 0; fold < options.folds; ++fold) {
    std::vector<Eigen::Index> train_rows;
    std::vector<Eigen::Index> test_rows;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      (fold_of[i] == fold ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
    }
    Eigen::MatrixXd train_x = features(train_rows, Eigen::all);
    Eigen::MatrixXd test_x = features(test_rows, Eigen::all);
    std::vector<int> train_y;
    std::vector<int> test_y;
    for (const auto r : train_rows) train_y.push_back(labels[static_cast<std::size_t>(r)]);
    for (const auto r : test_rows) test_y.push_back(labels[static_cast<std::size_t>(r)]);
    if (options.fold_scaler) {
      const FittedScaler scaler = fit_scaler(*options.fold_scaler, train_x);
      train_x = apply_scaler(scaler, train_x);
      test_x = apply_scaler(scaler, test_x);
    }
    const TrainedModel model = train(kind, train_x, train_y, options.hyper, mix_seed(options.seed, 1000 + fold));
    const std::vector<int> predicted = predict(model, test_x);
    const Eigen::MatrixXi confusion = confusion_matrix(test_y, predicted, report.classes);
    report.confusion += confusion;
    report.per_fold.push_back(metrics_from_confusion(confusion));
    report.fold_sizes.push_back(test_rows.size());
  }

  for (const Metrics& m : report.per_fold) {
    report.mean.precision += m.precision;
    report.mean.recall += m.recall;
    report.mean.f1 += m.f1;
  }
  const auto k = static_cast<double>(report.per_fold.size());
  report.mean.precision /= k;
  report.mean.recall /= k;
  report.mean.f1 /= k;
  report.mean.accuracy = static_cast<double>(report.confusion.trace()) / static_cast<double>(report.confusion.sum());
  return report;
}

}  // namespace handpass
