#include "phylocorr/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "phylocorr/csv.hpp"

namespace phylocorr {

Tree::Tree(std::vector<TreeNode> nodes, int root) : nodes_(std::move(nodes)), root_(root) {
  const int n = static_cast<int>(nodes_.size());
  if (n == 0) throw TreeError("tree has no nodes");
  if (root_ < 0 || root_ >= n) throw TreeError("root index out of range");
  if (nodes_[root_].parent != -1) throw TreeError("root node has a parent");

  for (int i = 0; i < n; ++i) {
    const TreeNode& nd = nodes_[i];
    if (!std::isfinite(nd.length) || nd.length < 0.0)
      throw TreeError("node " + std::to_string(i) + " has an invalid branch length");
    if (i != root_) {
      if (nd.parent < 0 || nd.parent >= n)
        throw TreeError("node " + std::to_string(i) + " has no valid parent");
      const auto& sib = nodes_[nd.parent].children;
      if (std::count(sib.begin(), sib.end(), i) != 1)
        throw TreeError("parent/child links disagree at node " + std::to_string(i));
    }
    for (int c : nd.children) {
      if (c < 0 || c >= n || nodes_[c].parent != i)
        throw TreeError("child link of node " + std::to_string(i) + " is inconsistent");
    }
  }

  // Reachability from the root doubles as the acyclicity check: with one
  // parent per node, visiting every node exactly once means a tree.
  std::vector<char> seen(n, 0);
  std::vector<int> stack{root_};
  preorder_.reserve(n);
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (seen[v]) throw TreeError("cycle detected at node " + std::to_string(v));
    seen[v] = 1;
    preorder_.push_back(v);
    const auto& ch = nodes_[v].children;
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  if (static_cast<int>(preorder_.size()) != n) throw TreeError("tree is not connected");

  preorder_rank_.assign(n, 0);
  for (int r = 0; r < n; ++r) preorder_rank_[preorder_[r]] = r;

  std::unordered_set<std::string> labels;
  for (int v : preorder_) {
    if (!nodes_[v].is_tip()) continue;
    const std::string& lab = nodes_[v].label;
    if (lab.empty()) throw TreeError("tip node " + std::to_string(v) + " has an empty label");
    if (!labels.insert(lab).second) throw TreeError("duplicate tip label '" + lab + "'");
    tips_.push_back(v);
  }
}

std::vector<std::string> Tree::tip_labels() const {
  std::vector<std::string> out;
  out.reserve(tips_.size());
  for (int t : tips_) out.push_back(nodes_[t].label);
  return out;
}

std::optional<int> Tree::find_tip(std::string_view label) const {
  for (int t : tips_)
    if (nodes_[t].label == label) return t;
  return std::nullopt;
}

std::vector<double> Tree::depths() const {
  std::vector<double> d(nodes_.size(), 0.0);
  for (int v : preorder_)
    if (v != root_) d[v] = d[nodes_[v].parent] + nodes_[v].length;
  return d;
}

bool Tree::is_ultrametric(double tol) const {
  if (tips_.empty()) return false;
  const auto d = depths();
  double mean = 0.0;
  for (int t : tips_) mean += d[t];
  mean /= static_cast<double>(tips_.size());
  double worst = 0.0;
  for (int t : tips_) worst = std::max(worst, std::abs(d[t] - mean));
  return worst <= tol * std::max(mean, 1e-300);
}

std::string Tree::node_name(int i) const {
  const TreeNode& nd = node(i);
  if (!nd.label.empty()) return nd.label;
  return "node" + std::to_string(preorder_rank_.at(i));
}

std::vector<std::string> Tree::clade(int i) const {
  std::vector<std::string> out;
  std::vector<int> stack{i};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (nodes_[v].is_tip()) out.push_back(nodes_[v].label);
    for (int c : nodes_[v].children) stack.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

// Descendant tips of every node, built in reverse preorder.
std::vector<std::vector<int>> descendant_tips(const Tree& tree) {
  std::vector<std::vector<int>> below(tree.node_count());
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int v = *it;
    const TreeNode& nd = tree.node(v);
    if (nd.is_tip()) {
      below[v].push_back(v);
      continue;
    }
    for (int c : nd.children) below[v].insert(below[v].end(), below[c].begin(), below[c].end());
  }
  return below;
}

}  // namespace

Tree prune(const Tree& tree, const std::set<std::string>& keep) {
  if (keep.size() < 2) throw TreeError("prune needs at least two tips to keep");
  std::vector<char> kept(tree.node_count(), 0);
  for (const auto& lab : keep) {
    auto t = tree.find_tip(lab);
    if (!t) throw TreeError("tip '" + lab + "' is not in the tree");
    kept[*t] = 1;
  }
  const auto& pre = tree.preorder();
  for (auto it = pre.rbegin(); it != pre.rend(); ++it) {
    const int v = *it;
    for (int c : tree.node(v).children)
      if (kept[c]) kept[v] = 1;
  }

  std::vector<TreeNode> out;
  std::function<int(int, double, int)> build = [&](int old, double extra, int parent) -> int {
    const TreeNode& nd = tree.node(old);
    std::vector<int> live;
    for (int c : nd.children)
      if (kept[c]) live.push_back(c);
    if (!nd.is_tip() && live.size() == 1) return build(live.front(), extra + nd.length, parent);

    const int idx = static_cast<int>(out.size());
    out.push_back(TreeNode{parent, {}, nd.length + extra, nd.label});
    for (int c : live) {
      const int child = build(c, 0.0, idx);
      out[idx].children.push_back(child);
    }
    return idx;
  };
  const int root = build(tree.root(), 0.0, -1);
  return Tree(std::move(out), root);
}

Tree make_ultrametric(const Tree& tree) {
  if (tree.tip_count() < 2) throw TreeError("make_ultrametric needs at least two tips");
  const auto depth = tree.depths();
  double target = 0.0;
  for (int t : tree.tips()) {
    if (!(depth[t] > 0.0))
      throw TreeError("tip '" + tree.node(t).label + "' is at distance 0 from the root");
    target += depth[t];
  }
  target /= static_cast<double>(tree.tip_count());

  const auto below = descendant_tips(tree);
  std::vector<TreeNode> nodes = tree.nodes();
  std::vector<double> new_depth(tree.node_count(), 0.0);
  for (int v : tree.preorder()) {
    if (v == tree.root()) continue;
    const int p = tree.node(v).parent;
    const double budget = target - new_depth[p];
    double len;
    if (tree.node(v).is_tip()) {
      len = budget;
    } else {
      double factor_sum = 0.0;
      int used = 0;
      for (int t : below[v]) {
        const double h = depth[t] - depth[p];
        if (h > 0.0) {
          factor_sum += budget / h;
          ++used;
        }
      }
      const double factor = used > 0 ? factor_sum / used : 1.0;
      len = std::clamp(tree.node(v).length * factor, 0.0, std::max(budget, 0.0));
    }
    nodes[v].length = std::max(len, 0.0);
    new_depth[v] = new_depth[p] + nodes[v].length;
  }
  return Tree(std::move(nodes), tree.root());
}

PathMatrix path_length_matrix(const Tree& tree) {
  const auto& tips = tree.tips();
  const std::size_t n = tips.size();
  std::vector<int> pos(tree.node_count(), -1);
  for (std::size_t i = 0; i < n; ++i) pos[tips[i]] = static_cast<int>(i);

  PathMatrix m;
  m.labels = tree.tip_labels();
  m.t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto depth = tree.depths();
  const auto below = descendant_tips(tree);
  for (int v = 0; v < static_cast<int>(tree.node_count()); ++v) {
    const auto& ch = tree.node(v).children;
    for (std::size_t a = 0; a < ch.size(); ++a) {
      for (std::size_t b = a + 1; b < ch.size(); ++b) {
        for (int ti : below[ch[a]]) {
          for (int tj : below[ch[b]]) {
            const double d = depth[ti] + depth[tj] - 2.0 * depth[v];
            m.t(pos[ti], pos[tj]) = d;
            m.t(pos[tj], pos[ti]) = d;
          }
        }
      }
    }
  }
  return m;
}

std::string path_matrix_csv(const PathMatrix& m) {
  std::ostringstream os;
  os.precision(17);
  os << "taxon";
  for (const auto& l : m.labels) os << ',' << csv_quote(l);
  os << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    os << csv_quote(m.labels[i]);
    for (std::size_t j = 0; j < m.size(); ++j)
      os << ',' << m.t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    os << '\n';
  }
  return os.str();
}

NodeDistances node_distances(const Tree& tree) {
  const int n = static_cast<int>(tree.node_count());
  const auto depth = tree.depths();
  const auto& pre = tree.preorder();

  // Subtree of v occupies a contiguous preorder range [rank, rank + size).
  std::vector<int> rank(n), size(n, 1);
  for (int r = 0; r < n; ++r) rank[pre[r]] = r;
  for (auto it = pre.rbegin(); it != pre.rend(); ++it)
    if (*it != tree.root()) size[tree.node(*it).parent] += size[*it];

  // mrca row of v = row of parent(v), overwritten with v inside subtree(v).
  NodeDistances out;
  out.mrca.assign(n, std::vector<int>(n, tree.root()));
  for (int v : pre) {
    if (v != tree.root()) out.mrca[v] = out.mrca[tree.node(v).parent];
    for (int r = rank[v]; r < rank[v] + size[v]; ++r) out.mrca[v][pre[r]] = v;
  }
  out.distance.resize(n, n);
  for (int u = 0; u < n; ++u)
    for (int v = 0; v < n; ++v)
      out.distance(u, v) = depth[u] + depth[v] - 2.0 * depth[out.mrca[u][v]];
  return out;
}

}  // namespace phylocorr
