#pragma once

// Internal CART machinery shared by the decision tree and the forest.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "handpass/learners.hpp"
#include "handpass/rng.hpp"

namespace handpass::detail {

/// Column-major rank encoding of a feature matrix: ranks[f * rows + r] is
/// the position of X(r, f) among the sorted distinct values of column f.
struct RankedColumns {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::uint32_t> ranks;
  std::vector<std::vector<double>> distinct;

  explicit RankedColumns(const Eigen::MatrixXd& features);

  std::uint32_t rank(Eigen::Index row, Eigen::Index feature) const {
    return ranks[static_cast<std::size_t>(feature * rows + row)];
  }
};

struct TreeOptions {
  int max_features = 0;  ///< > 0
  int max_depth = 0;     ///< 0 = unlimited
  int min_samples_split = 2;
};

/// Grows one tree on the rows with positive weight. `class_index` holds
/// 0-based class positions; weights are bootstrap multiplicities.
DecisionTreeModel grow_tree(const RankedColumns& data, std::span<const int> class_index, int n_classes,
                            std::span<const double> weights, const TreeOptions& options, Rng& rng);

}  // namespace handpass::detail
