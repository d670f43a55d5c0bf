#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acq/error.hpp"

namespace acq {

inline constexpr int kNoNode = -1;
inline constexpr int kDefaultPositiveLeafCount = 8;

enum class NodeKind { kZeroSet, kInterval };

// One node of the cost tree. Interval nodes cover (lo, hi]; the zero-set node
// covers exactly {0}. Leaf fields are meaningful only when left == kNoNode.
struct TreeNode {
  int id = kNoNode;
  NodeKind kind = NodeKind::kInterval;
  double lo = 0.0;
  double hi = 0.0;
  int parent = kNoNode;
  int left = kNoNode;
  int right = kNoNode;
  double leaf_value = 0.0;
  double leaf_value_sq = 0.0;
  std::size_t sample_count = 0;
  int classifier = -1;  // index into the classifier heads, internal nodes only

  bool is_leaf() const { return left == kNoNode; }
};

enum class Branch : int { kRight = 0, kLeft = 1 };

struct PathStep {
  int classifier;
  Branch branch;
};

struct PathSpec {
  int leaf_id = kNoNode;
  std::vector<PathStep> steps;
};

// Binary tree over cost labels: the root splits {0} from the positive costs,
// and the positive side is an equal-frequency partition arranged as a
// balanced subtree. Each internal node carries one binary classifier whose
// output is the probability of descending to its left child.
//
// Immutable after construction; all const members are safe to call
// concurrently.
class UnbalancedCostTree {
 public:
  static UnbalancedCostTree Build(std::span<const double> costs,
                                  int positive_leaf_count = kDefaultPositiveLeafCount);

  static UnbalancedCostTree Parse(std::string_view text);
  std::string Serialize() const;
  std::uint64_t Checksum() const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int id) const;
  int root_id() const { return 0; }
  const std::vector<int>& leaf_ids() const { return leaf_ids_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  int leaf_count() const { return static_cast<int>(leaf_ids_.size()); }
  int classifier_count() const { return static_cast<int>(classifier_nodes_.size()); }
  int classifier_node(int classifier) const { return classifier_nodes_.at(classifier); }

  // Position of a leaf inside leaf_ids(), or -1 for internal/unknown ids.
  int LeafIndex(int leaf_id) const;

  // Set when the build data had no zeros or no positive costs.
  const std::string& warning() const { return warning_; }

  int AssignLeaf(double cost) const;
  PathSpec PathLabels(int leaf_id) const;

  // Per-leaf probabilities (in leaf_ids() order) from the per-classifier
  // probability of taking the left branch.
  std::vector<double> LeafDistribution(std::span<const double> left_probs) const;

  double ExpectedCost(std::span<const double> leaf_probs) const;
  double ExpectedSquaredCost(std::span<const double> leaf_probs) const;
  double ExpectedCostStd(std::span<const double> leaf_probs) const;

  // Unchecked kernels shared by training code at any floating-point type.
  template <class T>
  void LeafMasses(std::span<const T> left_probs, std::span<T> leaf_probs) const;

  // Given dLoss/dP(leaf) for every leaf, writes dLoss/dp for every classifier
  // (p = probability of the left branch).
  template <class T>
  void BackpropLeafGradient(std::span<const T> left_probs, std::span<const T> leaf_grad,
                            std::span<T> prob_grad) const;

 private:
  int BuildRange(const std::vector<TreeNode>& leaves, std::size_t begin, std::size_t end,
                 int parent);
  void Finalize();

  std::vector<TreeNode> nodes_;
  std::vector<int> leaf_ids_;
  std::vector<int> leaf_index_;  // node id -> leaf position, -1 otherwise
  std::vector<int> classifier_nodes_;
  std::vector<PathSpec> leaf_paths_;
  int zero_leaf_ = kNoNode;
  std::string warning_;
};

template <class T>
void UnbalancedCostTree::LeafMasses(std::span<const T> left_probs,
                                    std::span<T> leaf_probs) const {
  for (std::size_t i = 0; i < leaf_paths_.size(); ++i) {
    T mass = T(1);
    for (const PathStep& step : leaf_paths_[i].steps) {
      const T p = left_probs[step.classifier];
      mass *= step.branch == Branch::kLeft ? p : T(1) - p;
    }
    leaf_probs[i] = mass;
  }
}

template <class T>
void UnbalancedCostTree::BackpropLeafGradient(std::span<const T> left_probs,
                                              std::span<const T> leaf_grad,
                                              std::span<T> prob_grad) const {
  // Node ids are preorder, so children always follow their parent.
  const std::size_t n = nodes_.size();
  std::vector<T> mass(n, T(0));
  std::vector<T> downstream(n, T(0));
  mass[0] = T(1);
  for (std::size_t id = 0; id < n; ++id) {
    const TreeNode& node = nodes_[id];
    if (node.is_leaf()) continue;
    const T p = left_probs[node.classifier];
    mass[node.left] = mass[id] * p;
    mass[node.right] = mass[id] * (T(1) - p);
  }
  for (std::size_t k = n; k-- > 0;) {
    const TreeNode& node = nodes_[k];
    if (node.is_leaf()) {
      downstream[k] = leaf_grad[leaf_index_[k]];
      continue;
    }
    const T p = left_probs[node.classifier];
    downstream[k] = p * downstream[node.left] + (T(1) - p) * downstream[node.right];
    prob_grad[node.classifier] = mass[k] * (downstream[node.left] - downstream[node.right]);
  }
}

}  // namespace acq
