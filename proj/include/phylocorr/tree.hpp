#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace phylocorr {

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed Newick input; offset is the byte position where parsing stopped.
class NewickError : public TreeError {
 public:
  NewickError(const std::string& what, std::size_t offset);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

struct TreeNode {
  int parent = -1;
  std::vector<int> children;
  double length = 0.0;  // length of the branch above this node
  std::string label;

  bool is_tip() const { return children.empty(); }
};

/// Rooted tree with branch lengths. Immutable once built: every constructor
/// path goes through validation, so a Tree value always satisfies the
/// structural invariants (single root, acyclic, unique non-empty tip labels,
/// non-negative lengths).
class Tree {
 public:
  Tree() = default;

  /// Validates and adopts a node array. Throws TreeError on any violation.
  Tree(std::vector<TreeNode> nodes, int root);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t tip_count() const { return tips_.size(); }
  int root() const { return root_; }
  const TreeNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  /// Tip node indices in left-to-right (Newick) order.
  const std::vector<int>& tips() const { return tips_; }
  std::vector<std::string> tip_labels() const;
  std::optional<int> find_tip(std::string_view label) const;

  /// Node indices with every parent before its children.
  const std::vector<int>& preorder() const { return preorder_; }

  /// Root-to-node distances (the root's own branch is not counted).
  std::vector<double> depths() const;

  /// Largest |depth(tip) - mean tip depth| is at most tol * mean depth.
  bool is_ultrametric(double tol = 1e-9) const;

  /// Stable internal-node naming used in reconstruction output: the node's
  /// own label when present, otherwise "node<k>" with k its preorder rank.
  std::string node_name(int i) const;

  /// Sorted tip labels below node i; identifies a clade independently of
  /// node numbering or child order.
  std::vector<std::string> clade(int i) const;

 private:
  std::vector<TreeNode> nodes_;
  int root_ = -1;
  std::vector<int> tips_;
  std::vector<int> preorder_;
  std::vector<int> preorder_rank_;
};

struct NewickWarning {
  std::size_t offset;
  std::string message;
};

/// Parses a single Newick statement terminated by ';'. Bracket comments are
/// skipped, single-quoted labels are supported ('' escapes a quote). Branch
/// lengths that are absent default to 0 and produce a warning record.
Tree parse_newick(std::string_view text, std::vector<NewickWarning>* warnings = nullptr);

Tree read_newick_file(const std::string& path, std::vector<NewickWarning>* warnings = nullptr);

struct NewickFormat {
  int precision = 17;
  /// Per-node bracket comments written after the label, e.g. "&mean=0.3".
  std::map<int, std::string> comments;
  bool internal_labels = true;
};

std::string to_newick(const Tree& tree, const NewickFormat& format = {});

/// Restricts the tree to `keep`. Unary nodes are collapsed with their branch
/// lengths summed, so path lengths among kept tips are unchanged.
Tree prune(const Tree& tree, const std::set<std::string>& keep);

/// Rescales branch lengths so every tip sits at the mean original tip depth.
/// Top-down: a branch receives the average over its descendant tips of the
/// factor each tip would need to fill the remaining depth budget; tip
/// branches take up the exact remainder.
Tree make_ultrametric(const Tree& tree);

/// Tip-to-tip path lengths t_ij, indexed in Tree::tips() order.
struct PathMatrix {
  std::vector<std::string> labels;
  Eigen::MatrixXd t;

  std::size_t size() const { return labels.size(); }
};

PathMatrix path_length_matrix(const Tree& tree);

/// CSV with a header row of tip labels and one row per tip.
std::string path_matrix_csv(const PathMatrix& m);

/// Distances between all node pairs plus each pair's most recent common
/// ancestor, indexed by node id. Used by the full-node OU covariance.
struct NodeDistances {
  Eigen::MatrixXd distance;
  std::vector<std::vector<int>> mrca;
};

NodeDistances node_distances(const Tree& tree);

}  // namespace phylocorr

namespace phylocorr {

/// Kingman coalescent topology with tips "t1".."tN", scaled so the root
/// sits at `height` above the (contemporaneous) tips.
Tree random_coalescent_tree(int ntips, double height, std::uint64_t seed);

/// For each tip in tips() order, the index of the clade it belongs to after
/// cutting every branch that crosses root distance `cut_depth`. Clades are
/// numbered in order of first appearance.
std::vector<int> clades_at_depth(const Tree& tree, double cut_depth);

}  // namespace phylocorr
