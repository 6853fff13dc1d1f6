#include <cmath>
#include <random>

#include <json.hpp>

#include "phylocorr/simulate.hpp"

namespace phylocorr {

using json = nlohmann::json;

namespace {

void check_block(const CorrelationBlock& b, const char* what) {
  if (!(std::abs(b.rho) < 1.0) || !(b.sigma1 > 0.0) || !(b.sigma2 > 0.0))
    throw std::invalid_argument(std::string("true ") + what +
                                " block needs |rho| < 1 and positive scales");
}

// One draw of N(0, [[s11, s12], [s12, s22]]) from two standard normals.
Eigen::Vector2d correlated(double s11, double s12, double s22, double e1, double e2) {
  const double l11 = std::sqrt(s11);
  const double l21 = l11 > 0.0 ? s12 / l11 : 0.0;
  const double l22 = std::sqrt(std::max(0.0, s22 - l21 * l21));
  return {l11 * e1, l21 * e1 + l22 * e2};
}

Eigen::Vector2d block_draw(const CorrelationBlock& b, double e1, double e2) {
  return correlated(b.sigma1 * b.sigma1, b.rho * b.sigma1 * b.sigma2, b.sigma2 * b.sigma2, e1, e2);
}

double logistic_noise(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double p = u(rng);
  while (p <= 0.0) p = u(rng);
  return std::log(p) - std::log1p(-p);
}

}  // namespace

void TrueParams::validate(const ModelSpec& spec) const {
  if (!mu.allFinite()) throw std::invalid_argument("true mu must be finite");
  if (spec.likelihood == Likelihood::OrdinalBinary) {
    if (cutpoints.empty()) throw std::invalid_argument("ordinal simulation needs cutpoints");
    for (std::size_t k = 1; k < cutpoints.size(); ++k)
      if (!(cutpoints[k] > cutpoints[k - 1]))
        throw std::invalid_argument("true cutpoints must be strictly increasing");
  }
  switch (spec.dependency) {
    case Dependency::Pooled: check_block(pooled, "pooled"); break;
    case Dependency::Family:
      check_block(fam, "family");
      check_block(lang, "language");
      break;
    case Dependency::Phylo:
      check_block(fam, "family");
      check_block(lang, "language");
      if (!(lambda[0] > 0.0) || !(lambda[1] > 0.0))
        throw std::invalid_argument("true lambda must be positive");
      break;
  }
}

TrueParams true_params_from_json(std::string_view text) {
  TrueParams p;
  try {
    const json j = json::parse(text);
    auto pair = [&](const char* key, double& a, double& b) {
      if (!j.contains(key)) return;
      const auto& v = j[key];
      if (v.is_number()) {
        a = b = v.get<double>();
      } else {
        const auto w = v.get<std::vector<double>>();
        if (w.size() != 2) throw std::invalid_argument(std::string(key) + " needs two values");
        a = w[0];
        b = w[1];
      }
    };
    if (j.contains("cutpoints")) p.cutpoints = j["cutpoints"].get<std::vector<double>>();
    pair("mu", p.mu[0], p.mu[1]);
    p.pooled.rho = j.value("rho", p.pooled.rho);
    pair("sigma", p.pooled.sigma1, p.pooled.sigma2);
    p.fam.rho = j.value("rho_f", p.fam.rho);
    pair("sigma_f", p.fam.sigma1, p.fam.sigma2);
    p.lang.rho = j.value("rho_l", p.lang.rho);
    pair("sigma_l", p.lang.sigma1, p.lang.sigma2);
    pair("lambda", p.lambda[0], p.lambda[1]);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad true-parameter file: ") + e.what());
  }
  return p;
}

std::string true_params_to_json(const TrueParams& p) {
  json j;
  j["cutpoints"] = p.cutpoints;
  j["mu"] = {p.mu[0], p.mu[1]};
  j["rho"] = p.pooled.rho;
  j["sigma"] = {p.pooled.sigma1, p.pooled.sigma2};
  j["rho_f"] = p.fam.rho;
  j["sigma_f"] = {p.fam.sigma1, p.fam.sigma2};
  j["rho_l"] = p.lang.rho;
  j["sigma_l"] = {p.lang.sigma1, p.lang.sigma2};
  j["lambda"] = {p.lambda[0], p.lambda[1]};
  return j.dump(2);
}

SimulatedData simulate(const ModelSpec& spec, const TrueParams& params, const ModelData& layout,
                       std::uint64_t seed) {
  params.validate(spec);
  const std::size_t n = layout.size();
  if (layout.family.size() != n) throw std::invalid_argument("layout family vector has the wrong length");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);

  SimulatedData out;
  out.data.taxa = layout.taxa;
  out.data.family = layout.family;
  out.data.family_names = layout.family_names;
  out.data.tree = layout.tree;
  const std::size_t nf = layout.family_count();
  out.family_effect = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(nf), 2);
  out.latent.resize(static_cast<Eigen::Index>(n), 2);
  for (std::size_t i = 0; i < n; ++i) out.latent.row(static_cast<Eigen::Index>(i)) = params.mu.transpose();

  if (spec.dependency != Dependency::Pooled) {
    for (std::size_t f = 0; f < nf; ++f) {
      const double e1 = nd(rng), e2 = nd(rng);
      out.family_effect.row(static_cast<Eigen::Index>(f)) = block_draw(params.fam, e1, e2).transpose();
    }
    for (std::size_t i = 0; i < n; ++i)
      out.latent.row(static_cast<Eigen::Index>(i)) +=
          out.family_effect.row(static_cast<Eigen::Index>(layout.family[i]));
  }

  if (spec.dependency == Dependency::Phylo) {
    if (!layout.tree) throw std::invalid_argument("phylo simulation needs a tree");
    const Tree& tree = *layout.tree;
    const double l1 = params.lambda[0], l2 = params.lambda[1];
    const CorrelationBlock& b = params.lang;
    const double s11 = b.sigma1 * b.sigma1 / (2.0 * l1);
    const double s12 = b.rho * b.sigma1 * b.sigma2 / (l1 + l2);
    const double s22 = b.sigma2 * b.sigma2 / (2.0 * l2);
    Eigen::MatrixX2d y(static_cast<Eigen::Index>(tree.node_count()), 2);
    // Exact OU transitions down the tree from a stationary root.
    for (int v : tree.preorder()) {
      const int p = tree.node(v).parent;
      const double e1 = nd(rng), e2 = nd(rng);
      if (p < 0) {
        y.row(v) = correlated(s11, s12, s22, e1, e2).transpose();
        continue;
      }
      const double t = tree.node(v).length;
      const Eigen::Vector2d innov = correlated(s11 * -std::expm1(-2.0 * l1 * t),
                                               s12 * -std::expm1(-(l1 + l2) * t),
                                               s22 * -std::expm1(-2.0 * l2 * t), e1, e2);
      y(v, 0) = std::exp(-l1 * t) * y(p, 0) + innov[0];
      y(v, 1) = std::exp(-l2 * t) * y(p, 1) + innov[1];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto tip = tree.find_tip(layout.taxa[i]);
      if (!tip) throw std::invalid_argument("taxon " + layout.taxa[i] + " is not a tip of the tree");
      out.latent.row(static_cast<Eigen::Index>(i)) += y.row(*tip);
    }
  } else {
    const CorrelationBlock& b = spec.dependency == Dependency::Pooled ? params.pooled : params.lang;
    for (std::size_t i = 0; i < n; ++i) {
      const double e1 = nd(rng), e2 = nd(rng);
      out.latent.row(static_cast<Eigen::Index>(i)) += block_draw(b, e1, e2).transpose();
    }
  }

  if (spec.likelihood == Likelihood::Continuous) {
    for (std::size_t i = 0; i < n; ++i) {
      out.data.x1.push_back(out.latent(static_cast<Eigen::Index>(i), 0));
      out.data.x2.push_back(out.latent(static_cast<Eigen::Index>(i), 1));
    }
  } else {
    const auto& c = params.cutpoints;
    out.data.levels = static_cast<int>(c.size()) + 1;
    for (std::size_t i = 0; i < n; ++i) {
      // Latent-variable form of the links: logistic noise, then thresholds.
      const double u1 = out.latent(static_cast<Eigen::Index>(i), 0) + logistic_noise(rng);
      const double u2 = out.latent(static_cast<Eigen::Index>(i), 1) + logistic_noise(rng);
      int k = 1;
      while (k <= static_cast<int>(c.size()) && u1 > c[static_cast<std::size_t>(k - 1)]) ++k;
      out.data.ordinal.push_back(k);
      out.data.binary.push_back(u2 > 0.0 ? 1 : 0);
    }
  }
  return out;
}

ModelData family_layout(const std::vector<int>& family_sizes) {
  ModelData d;
  int next = 1;
  for (std::size_t f = 0; f < family_sizes.size(); ++f) {
    if (family_sizes[f] < 1) throw std::invalid_argument("family sizes must be positive");
    const int first = next;
    for (int k = 0; k < family_sizes[f]; ++k) {
      d.taxa.push_back("t" + std::to_string(next++));
      d.family.push_back(static_cast<int>(f));
    }
    d.family_names.push_back(family_sizes[f] == 1 ? "isolate:t" + std::to_string(first)
                                                  : "fam" + std::to_string(f + 1));
  }
  return d;
}

ModelData tree_layout(const Tree& tree, double cut_depth) {
  ModelData d;
  d.taxa = tree.tip_labels();
  d.family = clades_at_depth(tree, cut_depth);
  int nf = 0;
  for (int f : d.family) nf = std::max(nf, f + 1);
  std::vector<int> size(static_cast<std::size_t>(nf), 0), first(static_cast<std::size_t>(nf), -1);
  for (std::size_t i = 0; i < d.family.size(); ++i) {
    const auto f = static_cast<std::size_t>(d.family[i]);
    if (size[f]++ == 0) first[f] = static_cast<int>(i);
  }
  for (int f = 0; f < nf; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    d.family_names.push_back(size[fi] == 1 ? "isolate:" + d.taxa[static_cast<std::size_t>(first[fi])]
                                           : "fam" + std::to_string(f + 1));
  }
  d.tree = tree;
  return d;
}

Schema schema_for(const ModelData& data) {
  Schema s;
  if (data.levels > 0) {
    ColumnSchema o{"ordinal", TraitKind::Ordinal, {}, Transform::None};
    for (int k = 1; k <= data.levels; ++k) o.levels.push_back(std::to_string(k));
    s.traits.push_back(o);
    s.traits.push_back({"binary", TraitKind::Binary, {"0", "1"}, Transform::None});
  } else {
    s.traits.push_back({"x1", TraitKind::Continuous, {}, Transform::None});
    s.traits.push_back({"x2", TraitKind::Continuous, {}, Transform::None});
  }
  return s;
}

TraitTable to_trait_table(const ModelData& data) {
  TraitTable t;
  t.taxa = data.taxa;
  for (int f : data.family) t.families.push_back(data.family_names[static_cast<std::size_t>(f)]);
  const Schema s = schema_for(data);
  for (const auto& cs : s.traits) {
    TraitColumn c{cs.name, cs.kind, cs.levels, {}};
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (cs.kind == TraitKind::Ordinal) c.values.emplace_back(data.ordinal[i]);
      else if (cs.kind == TraitKind::Binary) c.values.emplace_back(data.binary[i] + 1);
      else c.values.emplace_back(cs.name == "x1" ? data.x1[i] : data.x2[i]);
    }
    t.columns.push_back(std::move(c));
  }
  return t;
}

}  // namespace phylocorr
