#include <algorithm>
#include <array>
#include <numeric>

#include "tree_builder.hpp"

namespace handpass {

const TreeNode& DecisionTreeModel::leaf_for(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    node = &nodes[static_cast<std::size_t>(row(node->feature) <= node->threshold ? node->left : node->right)];
  }
  return *node;
}

int DecisionTreeModel::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    const auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    if (!n.is_leaf()) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return deepest;
}

namespace detail {

RankedColumns::RankedColumns(const Eigen::MatrixXd& features)
    : rows(features.rows()), cols(features.cols()) {
  ranks.resize(static_cast<std::size_t>(rows * cols));
  distinct.resize(static_cast<std::size_t>(cols));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
  for (Eigen::Index f = 0; f < cols; ++f) {
    const auto col = features.col(f);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&col](Eigen::Index a, Eigen::Index b) { return col(a) < col(b); });
    auto& values = distinct[static_cast<std::size_t>(f)];
    values.clear();
    std::uint32_t* out = ranks.data() + f * rows;
    for (const Eigen::Index r : order) {
      if (values.empty() || col(r) != values.back()) values.push_back(col(r));
      out[r] = static_cast<std::uint32_t>(values.size() - 1);
    }
  }
}

namespace {

constexpr std::uint64_t kPositionMask = 0xFFFFFFFFull;

struct Candidate {
  double score = -1.0;  ///< sum over children of (sum of squared class weights) / weight
  int feature = -1;
  std::uint32_t rank_lo = 0;
  std::uint32_t rank_hi = 0;
};

struct PendingNode {
  int id;
  std::size_t begin;
  std::size_t end;
  int depth;
};

class TreeBuilder {
 public:
  TreeBuilder(const RankedColumns& data, std::span<const int> class_index, int n_classes,
              std::span<const double> weights, const TreeOptions& options, Rng& rng)
      : data_(data),
        class_index_(class_index),
        weights_(weights),
        n_classes_(n_classes),
        options_(options),
        rng_(rng),
        counts_(static_cast<std::size_t>(n_classes)),
        left_(static_cast<std::size_t>(n_classes)) {
    for (Eigen::Index r = 0; r < data.rows; ++r) {
      if (weights[static_cast<std::size_t>(r)] > 0) samples_.push_back(static_cast<std::uint32_t>(r));
    }
    features_.resize(static_cast<std::size_t>(data.cols));
    tree_.impurity_decrease = Eigen::VectorXd::Zero(data.cols);
  }

  DecisionTreeModel build() {
    std::vector<PendingNode> stack;
    stack.push_back({new_node(), 0, samples_.size(), 0});
    while (!stack.empty()) {
      const PendingNode node = stack.back();
      stack.pop_back();
      expand(node, stack);
    }
    return std::move(tree_);
  }

 private:
  int new_node() {
    tree_.nodes.emplace_back();
    return static_cast<int>(tree_.nodes.size() - 1);
  }

  void expand(const PendingNode& node, std::vector<PendingNode>& stack) {
    std::fill(counts_.begin(), counts_.end(), 0.0);
    double total = 0;
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const auto r = samples_[i];
      counts_[static_cast<std::size_t>(class_index_[r])] += weights_[r];
      total += weights_[r];
    }
    double sum_sq = 0;
    int present = 0;
    for (const double c : counts_) {
      sum_sq += c * c;
      present += c > 0;
    }

    const std::size_t n = node.end - node.begin;
    const bool depth_reached = options_.max_depth > 0 && node.depth >= options_.max_depth;
    if (present <= 1 || n < static_cast<std::size_t>(options_.min_samples_split) || depth_reached) {
      make_leaf(node.id, total);
      return;
    }

    node_class_.resize(n);
    node_weight_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = samples_[node.begin + i];
      node_class_[i] = class_index_[r];
      node_weight_[i] = weights_[r];
    }
    const Candidate best = find_split(node, total, sum_sq);
    if (best.feature < 0) {
      make_leaf(node.id, total);
      return;
    }

    const auto& values = data_.distinct[static_cast<std::size_t>(best.feature)];
    const double lo = values[best.rank_lo];
    const double hi = values[best.rank_hi];
    double threshold = lo + (hi - lo) / 2;
    if (!(threshold < hi)) threshold = lo;

    const auto split = std::stable_partition(
        samples_.begin() + static_cast<std::ptrdiff_t>(node.begin),
        samples_.begin() + static_cast<std::ptrdiff_t>(node.end),
        [&](std::uint32_t r) { return data_.rank(r, best.feature) <= best.rank_lo; });
    const auto mid = static_cast<std::size_t>(split - samples_.begin());

    tree_.impurity_decrease(best.feature) += std::max(0.0, best.score - sum_sq / total);
    const int left = new_node();
    const int right = new_node();
    TreeNode& parent = tree_.nodes[static_cast<std::size_t>(node.id)];
    parent.feature = best.feature;
    parent.threshold = threshold;
    parent.left = left;
    parent.right = right;
    stack.push_back({right, mid, node.end, node.depth + 1});
    stack.push_back({left, node.begin, mid, node.depth + 1});
  }

  void make_leaf(int id, double total) {
    TreeNode& leaf = tree_.nodes[static_cast<std::size_t>(id)];
    leaf.feature = -1;
    leaf.value_begin = static_cast<int>(tree_.value_class.size());
    double best = -1;
    for (int c = 0; c < n_classes_; ++c) {
      const double w = counts_[static_cast<std::size_t>(c)];
      if (w <= 0) continue;
      tree_.value_class.push_back(c);
      tree_.value_share.push_back(w / total);
      if (w > best) {
        best = w;
        leaf.majority = c;
      }
    }
    leaf.value_end = static_cast<int>(tree_.value_class.size());
  }

  Candidate find_split(const PendingNode& node, double total, double sum_sq) {
    Candidate best;
    std::iota(features_.begin(), features_.end(), 0);
    std::size_t remaining = features_.size();
    int evaluated = 0;
    while (remaining > 0 && evaluated < options_.max_features) {
      const std::size_t pick = rng_.below(remaining);
      const int feature = features_[pick];
      std::swap(features_[pick], features_[remaining - 1]);
      --remaining;
      if (scan_feature(node, feature, total, sum_sq, best)) ++evaluated;
    }
    return best;
  }

  // Returns false when the feature is constant within the node.
  bool scan_feature(const PendingNode& node, int feature, double total, double sum_sq, Candidate& best) {
    const std::size_t n = node.end - node.begin;
    keys_.resize(n);
    const std::uint32_t* col = data_.ranks.data() + static_cast<std::size_t>(feature) * data_.rows;
    std::uint32_t min_rank = UINT32_MAX;
    std::uint32_t max_rank = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t r = col[samples_[node.begin + i]];
      min_rank = std::min(min_rank, r);
      max_rank = std::max(max_rank, r);
      keys_[i] = (static_cast<std::uint64_t>(r) << 32) | i;
    }
    if (min_rank == max_rank) return false;
    sort_keys(min_rank, max_rank);

    std::fill(left_.begin(), left_.end(), 0.0);
    double left_w = 0;
    double left_sq = 0;
    double right_sq = sum_sq;
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const auto i = static_cast<std::size_t>(keys_[j] & kPositionMask);
      const auto c = static_cast<std::size_t>(node_class_[i]);
      const double w = node_weight_[i];
      const double right_c = counts_[c] - left_[c];
      left_sq += w * (2 * left_[c] + w);
      right_sq += w * (w - 2 * right_c);
      left_[c] += w;
      left_w += w;
      const auto rank_here = static_cast<std::uint32_t>(keys_[j] >> 32);
      const auto rank_next = static_cast<std::uint32_t>(keys_[j + 1] >> 32);
      if (rank_here == rank_next) continue;
      const double score = left_sq / left_w + right_sq / (total - left_w);
      if (score > best.score || (score == best.score && feature < best.feature)) {
        best = {score, feature, rank_here, rank_next};
      }
    }
    return true;
  }

  // Stable sort on the rank half of the packed keys, so the result matches
  // std::sort on (rank, position).
  void sort_keys(std::uint32_t min_rank, std::uint32_t max_rank) {
    const std::size_t n = keys_.size();
    if (n < 64) {
      std::sort(keys_.begin(), keys_.end());
      return;
    }
    const std::uint32_t span = max_rank - min_rank;
    scratch_.resize(n);
    for (int shift = 0; shift < 32 && (span >> shift) != 0; shift += 8) {
      std::array<std::uint32_t, 257> bucket{};
      for (const auto k : keys_) ++bucket[digit(k, min_rank, shift) + 1];
      for (std::size_t b = 1; b < bucket.size(); ++b) bucket[b] += bucket[b - 1];
      for (const auto k : keys_) scratch_[bucket[digit(k, min_rank, shift)]++] = k;
      keys_.swap(scratch_);
    }
  }

  static std::size_t digit(std::uint64_t key, std::uint32_t min_rank, int shift) {
    return ((static_cast<std::uint32_t>(key >> 32) - min_rank) >> shift) & 0xFFu;
  }

  const RankedColumns& data_;
  std::span<const int> class_index_;
  std::span<const double> weights_;
  int n_classes_;
  TreeOptions options_;
  Rng& rng_;

  DecisionTreeModel tree_;
  std::vector<std::uint32_t> samples_;
  std::vector<int> features_;
  std::vector<double> counts_;
  std::vector<double> left_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint64_t> scratch_;
  std::vector<int> node_class_;
  std::vector<double> node_weight_;
};

}  // namespace

DecisionTreeModel grow_tree(const RankedColumns& data, std::span<const int> class_index, int n_classes,
                            std::span<const double> weights, const TreeOptions& options, Rng& rng) {
  return TreeBuilder(data, class_index, n_classes, weights, options, rng).build();
}

}  // namespace detail
}  // namespace handpass
