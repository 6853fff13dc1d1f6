// Writes the two bundled surrogate datasets (affix/adposition and
// inventory/population) into <out>/affix and <out>/soundpop. Output is a
// pure function of the fixed seeds below.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <CLI11.hpp>

#include "phylocorr/simulate.hpp"

namespace fs = std::filesystem;
using namespace phylocorr;

namespace {

struct World {
  Tree tree;                        // ultrametric, height 1
  std::vector<std::string> family;  // per tip in tips() order; "" for isolates
};

std::vector<int> family_sizes(int families, int isolates, int tips, std::mt19937_64& rng) {
  std::vector<int> sizes(static_cast<std::size_t>(families), 1);
  const int grouped = families - isolates;
  // heavy tail: sizes ~ 2 + Pareto
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(grouped));
  for (auto& x : w) x = std::pow(1.0 - u(rng), -1.0 / 1.2);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const int budget = tips - isolates - 2 * grouped;
  int used = 0;
  for (int f = 0; f < grouped; ++f) {
    const int extra = static_cast<int>(std::floor(budget * w[static_cast<std::size_t>(f)] / total));
    sizes[static_cast<std::size_t>(f)] = 2 + extra;
    used += extra;
  }
  // remainder to the largest families, one each
  std::vector<int> order(static_cast<std::size_t>(grouped));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return w[static_cast<std::size_t>(a)] > w[static_cast<std::size_t>(b)]; });
  for (int k = 0; used < budget; ++k, ++used) ++sizes[static_cast<std::size_t>(order[static_cast<std::size_t>(k % grouped)])];
  std::shuffle(sizes.begin(), sizes.end(), rng);
  return sizes;
}

// Backbone coalescent over family stems (all splits in the top `backbone`
// of the depth), then a coalescent subtree per family of random age.
World make_world(int families, int isolates, int tips, const std::string& prefix, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<int> sizes = family_sizes(families, isolates, tips, rng);
  const double backbone = 0.55;
  const Tree bb = random_coalescent_tree(families, 1.0, rng());
  std::vector<TreeNode> nodes = bb.nodes();
  for (auto& n : nodes) n.length *= backbone;
  std::uniform_real_distribution<double> age(0.12, 0.40);
  int fam_no = 0, lang_no = 0;
  auto lang_name = [&]() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04d", prefix.c_str(), ++lang_no);
    return std::string(buf);
  };
  const std::vector<int> bb_tips = bb.tips();
  std::map<int, std::string> fam_of_node;
  for (std::size_t k = 0; k < bb_tips.size(); ++k) {
    const int stem = bb_tips[k];
    const int size = sizes[k];
    if (size == 1) {
      nodes[static_cast<std::size_t>(stem)].length += 1.0 - backbone;
      nodes[static_cast<std::size_t>(stem)].label = lang_name();
      fam_of_node[stem] = "";
      continue;
    }
    char fname[32];
    std::snprintf(fname, sizeof fname, "family%03d", ++fam_no);
    const double h = age(rng);
    nodes[static_cast<std::size_t>(stem)].length += 1.0 - backbone - h;
    nodes[static_cast<std::size_t>(stem)].label.clear();
    const Tree sub = random_coalescent_tree(size, h, rng());
    // graft: sub root becomes `stem`
    std::vector<int> map(sub.node_count(), -1);
    map[static_cast<std::size_t>(sub.root())] = stem;
    for (int v : sub.preorder()) {
      if (v == sub.root()) continue;
      const int id = static_cast<int>(nodes.size());
      map[static_cast<std::size_t>(v)] = id;
      TreeNode n;
      n.parent = map[static_cast<std::size_t>(sub.node(v).parent)];
      n.length = sub.node(v).length;
      if (sub.node(v).is_tip()) {
        n.label = lang_name();
        fam_of_node[id] = fname;
      }
      nodes.push_back(n);
      nodes[static_cast<std::size_t>(n.parent)].children.push_back(id);
    }
  }
  World w{Tree(std::move(nodes), bb.root()), {}};
  for (int t : w.tree.tips()) w.family.push_back(fam_of_node.at(t));
  return w;
}

// Lognormal rate noise per branch: a non-ultrametric "estimated" tree.
Tree perturb(const Tree& t, double sdlog, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::lognormal_distribution<double> noise(0.0, sdlog);
  std::vector<TreeNode> nodes = t.nodes();
  for (int v : t.preorder())
    if (v != t.root()) nodes[static_cast<std::size_t>(v)].length *= noise(rng);
  return Tree(std::move(nodes), t.root());
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

ModelData layout_of(const World& w) {
  ModelData d;
  d.taxa = w.tree.tip_labels();
  std::map<std::string, int> idx;
  for (std::size_t i = 0; i < d.taxa.size(); ++i) {
    const std::string name = w.family[i].empty() ? "isolate:" + d.taxa[i] : w.family[i];
    auto [it, fresh] = idx.emplace(name, static_cast<int>(d.family_names.size()));
    if (fresh) d.family_names.push_back(name);
    d.family.push_back(it->second);
  }
  d.tree = w.tree;
  return d;
}

// Affix/adposition: 589 complete rows with the published crosstab.
void make_affix(const fs::path& dir) {
  const int complete = 589, incomplete_in_tree = 6, incomplete_off_tree = 6, tree_only = 15;
  const World w = make_world(150, 55, complete + incomplete_in_tree + tree_only, "aff", 20260601);
  const ModelData lay = layout_of(w);

  TrueParams tp;
  tp.cutpoints = {-0.511, 2.014, 6.057, 9.698};
  tp.mu << 0.505, -0.755;
  tp.lang = {0.544, 2.618, 3.950};
  tp.fam = {0.554, 1.5, 2.5};
  tp.lambda << 0.115, 0.051;
  const SimulatedData sim = simulate(ModelSpec::numbered(5), tp, lay, 20260602);

  std::mt19937_64 rng(20260603);
  std::vector<std::size_t> rows(lay.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  const std::vector<std::size_t> done(rows.begin(), rows.begin() + complete);
  const std::vector<std::size_t> partial(rows.begin() + complete, rows.begin() + complete + incomplete_in_tree);

  // rank matching onto the published counts
  const int post[5] = {214, 50, 52, 24, 9};
  const int pre[5] = {63, 33, 61, 43, 40};
  std::vector<std::size_t> by_adp = done;
  std::sort(by_adp.begin(), by_adp.end(), [&](std::size_t a, std::size_t b) { return sim.latent(a, 1) < sim.latent(b, 1); });
  std::map<std::size_t, std::pair<int, int>> value;  // row -> (affix 1..5, adposition 1..2)
  auto assign = [&](std::vector<std::size_t> group, const int* counts, int adp) {
    std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) { return sim.latent(a, 0) < sim.latent(b, 0); });
    std::size_t k = 0;
    for (int level = 0; level < 5; ++level)
      for (int c = 0; c < counts[level]; ++c) value[group[k++]] = {level + 1, adp};
  };
  assign(std::vector<std::size_t>(by_adp.begin(), by_adp.begin() + 349), post, 1);
  assign(std::vector<std::size_t>(by_adp.begin() + 349, by_adp.end()), pre, 2);

  const char* affix[5] = {"Strongly suffixing", "Weakly suffixing", "Equal prefixing and suffixing",
                          "Weakly prefixing", "Strongly prefixing"};
  const char* adp[2] = {"Postposition", "Preposition"};
  auto fam = [&](std::size_t i) { return w.family[i]; };

  std::vector<std::string> lines;
  for (std::size_t i : done)
    lines.push_back(lay.taxa[i] + "," + fam(i) + "," + csv_field(affix[value[i].first - 1]) + "," + adp[value[i].second - 1]);
  for (std::size_t k = 0; k < partial.size(); ++k) {
    const std::size_t i = partial[k];
    const std::string a = k % 2 ? "" : affix[sim.data.ordinal[i] - 1];
    const std::string b = k % 2 ? adp[sim.data.binary[i]] : "";
    lines.push_back(lay.taxa[i] + "," + fam(i) + "," + csv_field(a) + "," + b);
  }
  for (int k = 0; k < incomplete_off_tree; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "affx%03d", k + 1);
    lines.push_back(std::string(name) + ",," + (k % 2 ? "" : affix[k % 5]) + "," + (k % 2 ? adp[k % 2] : ""));
  }
  std::sort(lines.begin(), lines.end());
  std::string csv = "taxon,family,affix,adposition\n";
  for (const auto& l : lines) csv += l + "\n";

  fs::create_directories(dir);
  write_file(dir / "languages.csv", csv);
  Schema s;
  s.traits.push_back({"affix", TraitKind::Ordinal, {affix, affix + 5}, Transform::None});
  s.traits.push_back({"adposition", TraitKind::Binary, {adp, adp + 2}, Transform::None});
  write_file(dir / "schema.json", schema_to_json(s) + "\n");
  NewickFormat fmt;
  fmt.precision = 8;
  fmt.internal_labels = false;
  write_file(dir / "tree.nwk", to_newick(perturb(w.tree, 0.2, 20260604), fmt) + "\n");
  write_file(dir / "truth.json", true_params_to_json(tp) + "\n");
}

// Inventory/population: pooled log-standardized correlation 0.35.
void make_soundpop(const fs::path& dir) {
  const int complete = 1470, missing = 20;
  const World w = make_world(200, 70, complete + missing, "snd", 20260611);
  const ModelData lay = layout_of(w);
  const auto n = static_cast<Eigen::Index>(lay.size());
  const auto nf = static_cast<Eigen::Index>(lay.family_count());

  // whitened normals: sample covariances hit the targets exactly
  std::mt19937_64 rng(20260612);
  std::normal_distribution<double> nd;
  auto white = [&](Eigen::Index rows) {
    Eigen::MatrixX2d e(rows, 2);
    for (Eigen::Index i = 0; i < rows; ++i) e.row(i) << nd(rng), nd(rng);
    e.rowwise() -= e.colwise().mean();
    const Eigen::Matrix2d cov = e.transpose() * e / static_cast<double>(rows - 1);
    const Eigen::Matrix2d L = cov.llt().matrixL();
    return Eigen::MatrixX2d(e * L.transpose().inverse());
  };
  const Eigen::MatrixX2d el = white(n), ef = white(nf);
  auto chol = [](const CorrelationBlock& b) {
    Eigen::Matrix2d s;
    s << b.sigma1 * b.sigma1, b.rho * b.sigma1 * b.sigma2, b.rho * b.sigma1 * b.sigma2, b.sigma2 * b.sigma2;
    return Eigen::Matrix2d(s.llt().matrixL());
  };
  const Eigen::Vector2d mu(-0.578, -0.352);
  const CorrelationBlock lang{-0.010, 0.696, 0.682};

  std::vector<std::size_t> order(lay.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 pick(20260613);
  std::shuffle(order.begin(), order.end(), pick);
  const std::set<std::size_t> missing_rows(order.begin(), order.begin() + missing);

  struct Raw {
    std::vector<double> pop;
    std::vector<long> seg;
  };
  auto raw_for = [&](double rho_f) {
    const Eigen::MatrixX2d zf = ef * chol({rho_f, 0.753, 0.880}).transpose();
    const Eigen::MatrixX2d zl = el * chol(lang).transpose();
    Raw r;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::RowVector2d x = mu.transpose() + zf.row(lay.family[static_cast<std::size_t>(i)]) + zl.row(i);
      r.pop.push_back(std::round(std::exp(8.5 + 2.5 * x[0])) + 1.0);
      r.seg.push_back(std::lround(std::exp(3.4 + 0.3 * x[1])));
    }
    return r;
  };
  auto pooled_corr = [&](const Raw& r) {
    std::vector<double> a, b;
    for (Eigen::Index i = 0; i < n; ++i)
      if (!missing_rows.count(static_cast<std::size_t>(i))) {
        a.push_back(std::log(r.pop[static_cast<std::size_t>(i)]));
        b.push_back(std::log(static_cast<double>(r.seg[static_cast<std::size_t>(i)])));
      }
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
  };
  double lo = -0.95, hi = 0.95;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (pooled_corr(raw_for(mid)) < 0.35 ? lo : hi) = mid;
  }
  const double rho_f = 0.5 * (lo + hi);
  const Raw r = raw_for(rho_f);
  std::cerr << "soundpop: rho_f = " << rho_f << ", pooled r = " << pooled_corr(r) << "\n";

  std::vector<std::string> lines;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    char pop[64];
    std::snprintf(pop, sizeof pop, "%.0f", r.pop[k]);
    lines.push_back(lay.taxa[k] + "," + w.family[k] + "," + (missing_rows.count(k) ? std::string() : std::string(pop)) +
                    "," + std::to_string(r.seg[k]));
  }
  std::sort(lines.begin(), lines.end());
  std::string csv = "taxon,family,pop,seg\n";
  for (const auto& l : lines) csv += l + "\n";

  fs::create_directories(dir);
  write_file(dir / "languages.csv", csv);
  Schema s;
  s.traits.push_back({"pop", TraitKind::Continuous, {}, Transform::LogStandardize});
  s.traits.push_back({"seg", TraitKind::Continuous, {}, Transform::LogStandardize});
  write_file(dir / "schema.json", schema_to_json(s) + "\n");
  NewickFormat fmt;
  fmt.precision = 8;
  fmt.internal_labels = false;
  write_file(dir / "tree.nwk", to_newick(perturb(w.tree, 0.2, 20260614), fmt) + "\n");
  TrueParams tp;
  tp.mu = mu;
  tp.lang = lang;
  tp.fam = {rho_f, 0.753, 0.880};
  write_file(dir / "truth.json", true_params_to_json(tp) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate the bundled case-study datasets"};
  std::string out = "data";
  app.add_option("--out", out, "Output root");
  CLI11_PARSE(app, argc, argv);
  try {
    make_affix(fs::path(out) / "affix");
    make_soundpop(fs::path(out) / "soundpop");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
