#include "acq/tree.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "acq/io.hpp"

namespace acq {

namespace {

void ValidateCost(double cost) {
  if (!std::isfinite(cost)) Fail(ErrorKind::kInvalidArgument, "cost must be finite");
  if (cost < 0.0) Fail(ErrorKind::kInvalidArgument, "cost must be non-negative");
}

TreeNode MakeLeaf(NodeKind kind, double lo, double hi, std::span<const double> members) {
  TreeNode leaf;
  leaf.kind = kind;
  leaf.lo = lo;
  leaf.hi = hi;
  leaf.sample_count = members.size();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double c : members) {
    sum += c;
    sum_sq += c * c;
  }
  if (!members.empty()) {
    leaf.leaf_value = sum / static_cast<double>(members.size());
    leaf.leaf_value_sq = sum_sq / static_cast<double>(members.size());
  }
  return leaf;
}

std::string FieldOrDash(int value) { return value == kNoNode ? "-" : std::to_string(value); }

}  // namespace

UnbalancedCostTree UnbalancedCostTree::Build(std::span<const double> costs,
                                             int positive_leaf_count) {
  if (costs.empty()) Fail(ErrorKind::kInvalidArgument, "build_tree: empty cost list");
  if (positive_leaf_count < 1) {
    Fail(ErrorKind::kInvalidArgument, "build_tree: positive_leaf_count must be >= 1");
  }
  std::vector<double> positives;
  std::size_t zeros = 0;
  for (double c : costs) {
    ValidateCost(c);
    if (c == 0.0) {
      ++zeros;
    } else {
      positives.push_back(c);
    }
  }
  std::sort(positives.begin(), positives.end());

  // Equal-frequency upper boundaries; repeated quantiles collapse into one leaf.
  std::vector<TreeNode> positive_leaves;
  if (!positives.empty()) {
    const std::size_t count = positives.size();
    const std::size_t groups =
        std::min<std::size_t>(static_cast<std::size_t>(positive_leaf_count), count);
    std::size_t begin = 0;
    double lo = 0.0;
    for (std::size_t g = 1; g <= groups; ++g) {
      const std::size_t idx = (g * count + groups - 1) / groups - 1;
      const double boundary = positives[idx];
      if (boundary <= lo) continue;
      const std::size_t end = static_cast<std::size_t>(
          std::upper_bound(positives.begin(), positives.end(), boundary) - positives.begin());
      positive_leaves.push_back(MakeLeaf(NodeKind::kInterval, lo, boundary,
                                         std::span(positives).subspan(begin, end - begin)));
      begin = end;
      lo = boundary;
    }
  }

  UnbalancedCostTree tree;
  const std::vector<double> zero_members(zeros, 0.0);
  if (positives.empty()) {
    tree.warning_ = "build_tree: no positive costs; tree reduced to the zero leaf";
    TreeNode leaf = MakeLeaf(NodeKind::kZeroSet, 0.0, 0.0, zero_members);
    leaf.id = 0;
    tree.nodes_.push_back(leaf);
  } else if (zeros == 0) {
    tree.warning_ = "build_tree: no zero costs; tree has no zero leaf";
    tree.BuildRange(positive_leaves, 0, positive_leaves.size(), kNoNode);
  } else {
    TreeNode root;
    root.id = 0;
    root.kind = NodeKind::kInterval;
    root.lo = 0.0;
    root.hi = positives.back();
    root.sample_count = costs.size();
    tree.nodes_.push_back(root);
    TreeNode zero = MakeLeaf(NodeKind::kZeroSet, 0.0, 0.0, zero_members);
    zero.id = 1;
    zero.parent = 0;
    tree.nodes_.push_back(zero);
    tree.nodes_[0].left = 1;
    const int right = tree.BuildRange(positive_leaves, 0, positive_leaves.size(), 0);
    tree.nodes_[0].right = right;
  }
  tree.Finalize();
  return tree;
}

int UnbalancedCostTree::BuildRange(const std::vector<TreeNode>& leaves, std::size_t begin,
                                   std::size_t end, int parent) {
  const int id = static_cast<int>(nodes_.size());
  if (end - begin == 1) {
    TreeNode leaf = leaves[begin];
    leaf.id = id;
    leaf.parent = parent;
    nodes_.push_back(leaf);
    return id;
  }
  TreeNode node;
  node.id = id;
  node.kind = NodeKind::kInterval;
  node.lo = leaves[begin].lo;
  node.hi = leaves[end - 1].hi;
  node.parent = parent;
  for (std::size_t i = begin; i < end; ++i) node.sample_count += leaves[i].sample_count;
  nodes_.push_back(node);
  const std::size_t mid = begin + (end - begin) / 2;
  const int left = BuildRange(leaves, begin, mid, id);
  const int right = BuildRange(leaves, mid, end, id);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void UnbalancedCostTree::Finalize() {
  leaf_ids_.clear();
  classifier_nodes_.clear();
  leaf_index_.assign(nodes_.size(), -1);
  zero_leaf_ = kNoNode;
  for (TreeNode& node : nodes_) {
    if (node.is_leaf()) {
      node.classifier = -1;
      leaf_index_[node.id] = static_cast<int>(leaf_ids_.size());
      leaf_ids_.push_back(node.id);
      if (node.kind == NodeKind::kZeroSet) zero_leaf_ = node.id;
    } else {
      node.classifier = static_cast<int>(classifier_nodes_.size());
      classifier_nodes_.push_back(node.id);
    }
  }
  leaf_paths_.clear();
  for (int leaf : leaf_ids_) {
    PathSpec path;
    path.leaf_id = leaf;
    for (int child = leaf; nodes_[child].parent != kNoNode; child = nodes_[child].parent) {
      const TreeNode& parent = nodes_[nodes_[child].parent];
      path.steps.push_back(
          {parent.classifier, parent.left == child ? Branch::kLeft : Branch::kRight});
    }
    std::reverse(path.steps.begin(), path.steps.end());
    leaf_paths_.push_back(std::move(path));
  }
}

const TreeNode& UnbalancedCostTree::node(int id) const {
  if (id < 0 || id >= node_count()) Fail(ErrorKind::kInvalidArgument, "unknown node id");
  return nodes_[id];
}

int UnbalancedCostTree::LeafIndex(int leaf_id) const {
  if (leaf_id < 0 || leaf_id >= node_count()) return -1;
  return leaf_index_[leaf_id];
}

int UnbalancedCostTree::AssignLeaf(double cost) const {
  ValidateCost(cost);
  if (cost == 0.0 && zero_leaf_ != kNoNode) return zero_leaf_;
  // Positive leaves follow the zero leaf in ascending interval order.
  int last_positive = kNoNode;
  for (int leaf : leaf_ids_) {
    const TreeNode& node = nodes_[leaf];
    if (node.kind == NodeKind::kZeroSet) continue;
    if (cost <= node.hi) return leaf;
    last_positive = leaf;
  }
  return last_positive != kNoNode ? last_positive : zero_leaf_;
}

PathSpec UnbalancedCostTree::PathLabels(int leaf_id) const {
  const int index = LeafIndex(leaf_id);
  if (index < 0) Fail(ErrorKind::kInvalidArgument, "path_labels: node is not a leaf");
  return leaf_paths_[index];
}

std::vector<double> UnbalancedCostTree::LeafDistribution(
    std::span<const double> left_probs) const {
  Require(static_cast<int>(left_probs.size()) == classifier_count(),
          "leaf_distribution: expected one probability per classifier");
  for (double p : left_probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      Fail(ErrorKind::kInvalidArgument, "leaf_distribution: probability outside [0,1]");
    }
  }
  std::vector<double> out(leaf_ids_.size());
  LeafMasses<double>(left_probs, out);
  return out;
}

namespace {

void ValidateLeafProbs(std::span<const double> leaf_probs, std::size_t leaves) {
  Require(leaf_probs.size() == leaves, "expected one probability per leaf");
  double total = 0.0;
  for (double p : leaf_probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      Fail(ErrorKind::kInvalidArgument, "leaf probability outside [0,1]");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    Fail(ErrorKind::kInvalidArgument, "leaf probabilities do not sum to 1");
  }
}

}  // namespace

double UnbalancedCostTree::ExpectedCost(std::span<const double> leaf_probs) const {
  ValidateLeafProbs(leaf_probs, leaf_ids_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < leaf_ids_.size(); ++i) {
    total += leaf_probs[i] * nodes_[leaf_ids_[i]].leaf_value;
  }
  return total;
}

double UnbalancedCostTree::ExpectedSquaredCost(std::span<const double> leaf_probs) const {
  ValidateLeafProbs(leaf_probs, leaf_ids_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < leaf_ids_.size(); ++i) {
    total += leaf_probs[i] * nodes_[leaf_ids_[i]].leaf_value_sq;
  }
  return total;
}

double UnbalancedCostTree::ExpectedCostStd(std::span<const double> leaf_probs) const {
  const double mean = ExpectedCost(leaf_probs);
  const double second = ExpectedSquaredCost(leaf_probs);
  return std::sqrt(std::max(0.0, second - mean * mean));
}

std::string UnbalancedCostTree::Serialize() const {
  std::ostringstream out;
  out << "# acq-tree v1 node_count " << nodes_.size() << " leaves";
  for (int leaf : leaf_ids_) out << ' ' << leaf;
  out << '\n';
  for (const TreeNode& node : nodes_) {
    const bool interval = node.kind == NodeKind::kInterval;
    out << node.id << ' ' << (interval ? "interval" : "zero") << ' '
        << (interval ? io::FormatDouble(node.lo) : "-") << ' '
        << (interval ? io::FormatDouble(node.hi) : "-") << ' ' << FieldOrDash(node.parent) << ' '
        << FieldOrDash(node.left) << ' ' << FieldOrDash(node.right) << ' '
        << (node.is_leaf() ? io::FormatDouble(node.leaf_value) : "-") << ' '
        << (node.is_leaf() ? io::FormatDouble(node.leaf_value_sq) : "-") << ' '
        << node.sample_count << '\n';
  }
  return out.str();
}

std::uint64_t UnbalancedCostTree::Checksum() const { return io::Fnv1a64(Serialize()); }

UnbalancedCostTree UnbalancedCostTree::Parse(std::string_view text) {
  const auto lines = io::SplitLines(text);
  auto bad = [](const std::string& why) -> void {
    Fail(ErrorKind::kSchemaMismatch, "tree file: " + why);
  };
  if (lines.empty()) bad("empty");
  const auto header = io::SplitFields(lines[0]);
  if (header.size() < 5 || header[0] != "#" || header[1] != "acq-tree" || header[2] != "v1" ||
      header[3] != "node_count") {
    bad("unrecognized header");
  }
  const auto node_count = io::ParseInt(header[4]);
  if (node_count < 1) bad("node_count must be positive");

  UnbalancedCostTree tree;
  auto optional_int = [](std::string_view field) {
    return field == "-" ? kNoNode : static_cast<int>(io::ParseInt(field));
  };
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = io::SplitFields(lines[i]);
    if (fields.empty()) continue;
    if (fields.size() != 10) bad("node line needs 10 fields");
    TreeNode node;
    node.id = static_cast<int>(io::ParseInt(fields[0]));
    if (node.id != static_cast<int>(tree.nodes_.size())) bad("node ids must be dense and ordered");
    if (fields[1] == "interval") {
      node.kind = NodeKind::kInterval;
      node.lo = io::ParseDouble(fields[2]);
      node.hi = io::ParseDouble(fields[3]);
    } else if (fields[1] == "zero") {
      node.kind = NodeKind::kZeroSet;
    } else {
      bad("unknown node kind");
    }
    node.parent = optional_int(fields[4]);
    node.left = optional_int(fields[5]);
    node.right = optional_int(fields[6]);
    if ((node.left == kNoNode) != (node.right == kNoNode)) bad("internal nodes need two children");
    if (node.is_leaf()) {
      node.leaf_value = io::ParseDouble(fields[7]);
      node.leaf_value_sq = io::ParseDouble(fields[8]);
    }
    node.sample_count = static_cast<std::size_t>(io::ParseInt(fields[9]));
    tree.nodes_.push_back(node);
  }
  if (static_cast<std::int64_t>(tree.nodes_.size()) != node_count) bad("node_count mismatch");
  for (const TreeNode& node : tree.nodes_) {
    for (int child : {node.left, node.right}) {
      if (child == kNoNode) continue;
      if (child <= node.id || child >= static_cast<int>(tree.nodes_.size()) ||
          tree.nodes_[child].parent != node.id) {
        bad("inconsistent parent/child links");
      }
    }
  }
  tree.Finalize();
  std::vector<int> declared;
  for (std::size_t i = 5; i < header.size(); ++i) {
    if (header[i] == "leaves") continue;
    declared.push_back(static_cast<int>(io::ParseInt(header[i])));
  }
  if (declared != tree.leaf_ids_) bad("leaf id list does not match node lines");
  return tree;
}

}  // namespace acq
