#include <random>

#include "phylocorr/tree.hpp"

namespace phylocorr {

Tree random_coalescent_tree(int ntips, double height, std::uint64_t seed) {
  if (ntips < 1) throw std::invalid_argument("need at least one tip");
  if (!(height > 0.0)) throw std::invalid_argument("tree height must be positive");
  std::mt19937_64 rng(seed);
  std::vector<TreeNode> nodes(static_cast<std::size_t>(ntips));
  std::vector<double> time(static_cast<std::size_t>(ntips), 0.0);
  std::vector<int> live(static_cast<std::size_t>(ntips));
  for (int i = 0; i < ntips; ++i) {
    nodes[static_cast<std::size_t>(i)].label = "t" + std::to_string(i + 1);
    live[static_cast<std::size_t>(i)] = i;
  }
  double now = 0.0;
  while (live.size() > 1) {
    const double k = static_cast<double>(live.size());
    now += std::exponential_distribution<double>(k * (k - 1.0) / 2.0)(rng);
    std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    const int u = live[a], v = live[b];
    const int p = static_cast<int>(nodes.size());
    nodes.emplace_back();
    time.push_back(now);
    for (int c : {u, v}) {
      nodes[static_cast<std::size_t>(c)].parent = p;
      nodes[static_cast<std::size_t>(c)].length = now - time[static_cast<std::size_t>(c)];
      nodes.back().children.push_back(c);
    }
    live[std::min(a, b)] = p;
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::max(a, b)));
  }
  const double scale = now > 0.0 ? height / now : 1.0;
  for (auto& n : nodes) n.length *= scale;
  return Tree(std::move(nodes), live.front());
}

std::vector<int> clades_at_depth(const Tree& tree, double cut_depth) {
  const std::vector<double> depth = tree.depths();
  std::vector<int> clade_root(tree.node_count(), -1);
  for (int v : tree.preorder()) {
    const int p = tree.node(v).parent;
    const auto vi = static_cast<std::size_t>(v);
    if (p < 0) {
      clade_root[vi] = cut_depth <= 0.0 ? v : -1;
    } else if (clade_root[static_cast<std::size_t>(p)] >= 0) {
      clade_root[vi] = clade_root[static_cast<std::size_t>(p)];
    } else if (depth[vi] >= cut_depth) {
      clade_root[vi] = v;
    }
  }
  std::vector<int> out;
  std::vector<int> index(tree.node_count(), -1);
  int next = 0;
  for (int tip : tree.tips()) {
    int r = clade_root[static_cast<std::size_t>(tip)];
    if (r < 0) r = tip;  // zero-length tip above the cut
    int& k = index[static_cast<std::size_t>(r)];
    if (k < 0) k = next++;
    out.push_back(k);
  }
  return out;
}

}  // namespace phylocorr
