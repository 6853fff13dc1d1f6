#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "phylocorr/model.hpp"
#include "phylocorr/simd/kernels.hpp"

namespace phylocorr {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kLog2Pi = 1.83787706640934548356;
constexpr double kInf = std::numeric_limits<double>::infinity();

// rho = tanh(u); sigma_a = exp(u_a). om = 1 - rho^2 and sq = sqrt(om) are
// computed from u directly so they stay accurate when |rho| is near 1.
struct Block {
  double rho, s1, s2, om, sq, log_om;
};

double log_sech2(double u) {
  const double au = std::abs(u);
  return 2.0 * (M_LN2 - au - std::log1p(std::exp(-2.0 * au)));
}

Block block_at(const double* u) {
  Block b;
  b.rho = std::tanh(u[0]);
  b.log_om = log_sech2(u[0]);
  b.om = std::exp(b.log_om);
  b.sq = std::exp(0.5 * b.log_om);
  b.s1 = std::exp(u[1]);
  b.s2 = std::exp(u[2]);
  return b;
}

// Adjoints: d/du_rho, d/dsigma1, d/dsigma2.
struct BlockGrad {
  double urho = 0.0, s1 = 0.0, s2 = 0.0;
};

void flush(const Block& b, const BlockGrad& bg, double* g) {
  g[0] += bg.urho;
  g[1] += bg.s1 * b.s1;
  g[2] += bg.s2 * b.s2;
}

// Uniform(-1, 1) on rho plus the tanh Jacobian.
double rho_prior(double u, double* g) {
  if (g) *g += -2.0 * std::tanh(u);
  return -M_LN2 + log_sech2(u);
}

// LogNormal(0, sd) on exp(u) plus the exp Jacobian.
double log_scale_prior(double u, double sd, double* g) {
  if (g) *g -= u / (sd * sd);
  return -std::log(sd) - kHalfLog2Pi - u * u / (2.0 * sd * sd);
}

// z = L e with L the Cholesky factor of the block's covariance.
inline void apply(const Block& b, double e1, double e2, double& z1, double& z2) {
  z1 = b.s1 * e1;
  z2 = b.s2 * (b.rho * e1 + b.sq * e2);
}

inline void backprop(const Block& b, double g1, double g2, double e1, double e2, BlockGrad& bg,
                     double& ge1, double& ge2) {
  bg.s1 += g1 * e1;
  bg.s2 += g2 * (b.rho * e1 + b.sq * e2);
  bg.urho += g2 * b.s2 * (b.om * e1 - b.rho * b.sq * e2);
  ge1 += g1 * b.s1 + g2 * b.s2 * b.rho;
  ge2 += g2 * b.s2 * b.sq;
}

// Bivariate normal log density of a residual under the block covariance.
double bvn(const Block& b, double r1, double r2, double* dr1, double* dr2, BlockGrad* bg) {
  const double a = r1 / b.s1, c = r2 / b.s2;
  const double q = (a * a - 2.0 * b.rho * a * c + c * c) / b.om;
  const double ll = -kLog2Pi - std::log(b.s1) - std::log(b.s2) - 0.5 * b.log_om - 0.5 * q;
  if (dr1) {
    *dr1 = -(a - b.rho * c) / (b.om * b.s1);
    *dr2 = -(c - b.rho * a) / (b.om * b.s2);
  }
  if (bg) {
    bg->s1 += (-1.0 + a * (a - b.rho * c) / b.om) / b.s1;
    bg->s2 += (-1.0 + c * (c - b.rho * a) / b.om) / b.s2;
    bg->urho += b.rho + a * c - b.rho * q;
  }
  return ll;
}

struct Chol2 {
  double l11 = 0.0, l21 = 0.0, l22 = 0.0;
};

bool chol2(double q11, double q21, double q22, Chol2& out) {
  if (!(q11 > 0.0)) return false;
  out.l11 = std::sqrt(q11);
  out.l21 = q21 / out.l11;
  const double r = q22 - out.l21 * out.l21;
  if (!(r > 0.0) || !std::isfinite(r)) return false;
  out.l22 = std::sqrt(r);
  return true;
}

// Adjoints of the entries of Q from adjoints of the entries of L = chol(Q).
void chol2_backprop(const Chol2& l, double b11, double b21, double b22, double& q11, double& q21,
                    double& q22) {
  q22 = b22 / (2.0 * l.l22);
  const double b21t = b21 - b22 * l.l21 / l.l22;
  q21 = b21t / l.l11;
  const double b11t = b11 - b21t * l.l21 / l.l11;
  q11 = b11t / (2.0 * l.l11);
}

// Stationary covariance S of the bivariate OU and its parameter adjoints.
struct Stationary {
  double s11, s12, s22;
};

Stationary stationary(const Block& b, double l1, double l2) {
  return {b.s1 * b.s1 / (2.0 * l1), b.rho * b.s1 * b.s2 / (l1 + l2), b.s2 * b.s2 / (2.0 * l2)};
}

void stationary_backprop(const Block& b, double l1, double l2, const Stationary& s, double sb11,
                         double sb12, double sb22, BlockGrad& bg, double& lb1, double& lb2) {
  const double ls = l1 + l2;
  bg.s1 += sb11 * b.s1 / l1 + sb12 * b.rho * b.s2 / ls;
  bg.s2 += sb22 * b.s2 / l2 + sb12 * b.rho * b.s1 / ls;
  bg.urho += sb12 * b.s1 * b.s2 / ls * b.om;
  lb1 += -sb11 * s.s11 / l1 - sb12 * s.s12 / ls;
  lb2 += -sb22 * s.s22 / l2 - sb12 * s.s12 / ls;
}

}  // namespace

// DensityModel defaults.

std::vector<std::string> DensityModel::parameter_names() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < dim(); ++i) out.push_back("theta[" + std::to_string(i + 1) + "]");
  return out;
}

void DensityModel::constrain(std::span<const double> theta, std::span<double> out) const {
  std::copy(theta.begin(), theta.end(), out.begin());
}

void DensityModel::unconstrain(std::span<const double> values, std::span<double> theta) const {
  std::copy(values.begin(), values.end(), theta.begin());
}

Posterior::Posterior(ModelSpec spec, ModelData data) : spec_(std::move(spec)), data_(std::move(data)) {
  const std::size_t n = data_.size();
  if (n == 0) throw std::invalid_argument("model data has no taxa");
  if (data_.family.size() != n) throw std::invalid_argument("family vector length mismatch");
  for (int f : data_.family)
    if (f < 0 || static_cast<std::size_t>(f) >= data_.family_count())
      throw std::invalid_argument("family index out of range");

  const bool ordbin = spec_.likelihood == Likelihood::OrdinalBinary;
  if (ordbin) {
    if (data_.levels < 2) throw std::invalid_argument("ordinal trait needs at least 2 levels");
    if (data_.ordinal.size() != n || data_.binary.size() != n)
      throw std::invalid_argument("ordinal/binary vectors do not match the taxa");
    level_count_.assign(static_cast<std::size_t>(data_.levels) + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int k = data_.ordinal[i];
      if (k < 1 || k > data_.levels) throw std::invalid_argument("ordinal value out of range");
      if (data_.binary[i] != 0 && data_.binary[i] != 1)
        throw std::invalid_argument("binary value must be 0 or 1");
      ++level_count_[static_cast<std::size_t>(k)];
    }
  } else {
    if (data_.x1.size() != n || data_.x2.size() != n)
      throw std::invalid_argument("continuous vectors do not match the taxa");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(data_.x1[i]) || !std::isfinite(data_.x2[i]))
        throw std::invalid_argument("continuous values must be finite");
  }

  if (spec_.dependency == Dependency::Phylo) {
    if (!data_.tree) throw std::invalid_argument("the phylogenetic model needs a tree");
    const Tree& t = *data_.tree;
    std::unordered_map<std::string, int> tip_of;
    for (int tip : t.tips()) tip_of.emplace(t.node(tip).label, tip);
    if (tip_of.size() != n) throw std::invalid_argument("tree tips do not match the taxa");
    tip_node_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = tip_of.find(data_.taxa[i]);
      if (it == tip_of.end())
        throw std::invalid_argument("taxon " + data_.taxa[i] + " is not a tip of the tree");
      tip_node_[i] = it->second;
    }
    preorder_ = t.preorder();
    parent_.resize(t.node_count());
    length_.resize(t.node_count());
    for (std::size_t v = 0; v < t.node_count(); ++v) {
      parent_[v] = t.node(static_cast<int>(v)).parent;
      length_[v] = t.node(static_cast<int>(v)).length;
    }
    if (!ordbin) {
      if (!t.is_ultrametric(1e-6))
        throw std::invalid_argument("the continuous phylogenetic model needs an ultrametric tree");
      const PathMatrix pm = path_length_matrix(t);
      std::vector<Eigen::Index> pos(n);
      std::unordered_map<std::string, Eigen::Index> col;
      for (std::size_t k = 0; k < pm.size(); ++k) col.emplace(pm.labels[k], static_cast<Eigen::Index>(k));
      for (std::size_t i = 0; i < n; ++i) pos[i] = col.at(data_.taxa[i]);
      paths_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          paths_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = pm.t(pos[i], pos[j]);
    }
  }

  // Layout and names.
  auto& L = layout_;
  int k = 0;
  auto pair_names = [&](const std::string& base, const std::string& unit) {
    names_.push_back(base + "[" + unit + ",1]");
    names_.push_back(base + "[" + unit + ",2]");
  };
  if (ordbin) {
    L.cut = k;
    L.ncut = data_.levels - 1;
    k += L.ncut;
    for (int j = 1; j <= L.ncut; ++j) names_.push_back("c[" + std::to_string(j) + "]");
  }
  if (spec_.means_free()) {
    L.mu = k;
    k += 2;
    names_.insert(names_.end(), {"mu[1]", "mu[2]"});
  }
  if (spec_.dependency == Dependency::Pooled) {
    L.pooled = k;
    k += 3;
    names_.insert(names_.end(), {"rho", "sigma[1]", "sigma[2]"});
  } else {
    L.fam = k;
    L.lang = k + 3;
    k += 6;
    names_.insert(names_.end(),
                  {"rho_f", "sigma_f[1]", "sigma_f[2]", "rho_l", "sigma_l[1]", "sigma_l[2]"});
  }
  if (spec_.dependency == Dependency::Phylo) {
    L.drift = k;
    L.ndrift = spec_.shared_drift ? 1 : 2;
    k += L.ndrift;
    if (spec_.shared_drift) {
      names_.push_back("lambda");
    } else {
      names_.insert(names_.end(), {"lambda[1]", "lambda[2]"});
    }
  }
  L.latent_begin = k;
  if (ordbin && spec_.dependency == Dependency::Pooled) {
    L.eps_obs = k;
    k += 2 * static_cast<int>(n);
    for (const auto& t : data_.taxa) pair_names("eps", t);
  }
  if (spec_.dependency != Dependency::Pooled) {
    L.eps_fam = k;
    k += 2 * static_cast<int>(data_.family_count());
    for (const auto& f : data_.family_names) pair_names("eps_f", f);
  }
  if (ordbin && spec_.dependency == Dependency::Family) {
    L.eps_lang = k;
    k += 2 * static_cast<int>(n);
    for (const auto& t : data_.taxa) pair_names("eps_l", t);
  }
  if (ordbin && spec_.dependency == Dependency::Phylo) {
    L.eps_node = k;
    k += 2 * static_cast<int>(data_.tree->node_count());
    for (std::size_t v = 0; v < data_.tree->node_count(); ++v)
      pair_names("eps_node", data_.tree->node_name(static_cast<int>(v)));
  }
  L.dim = k;
}

double Posterior::evaluate(std::span<const double> theta, double* g, DensityTerms* terms_out,
                           std::vector<double>* pointwise, DecodedDraw* decoded) const {
  if (theta.size() != dim()) throw std::invalid_argument("parameter vector has the wrong length");
  const auto& L = layout_;
  const auto& P = spec_.priors;
  const double* th = theta.data();
  const std::size_t n = data_.size();
  const std::size_t nf = data_.family_count();
  const bool ordbin = spec_.likelihood == Likelihood::OrdinalBinary;
  const Dependency dep = spec_.dependency;
  if (g) std::fill(g, g + dim(), 0.0);
  for (double v : theta)
    if (!std::isfinite(v)) return -kInf;

  DensityTerms t;
  if (pointwise) pointwise->assign(n, 0.0);

  // Cutpoints: c1 free, later ones by positive gaps.
  const double min_gap = spec_.cutpoint_min_gap();
  std::vector<double> c, gap;
  if (L.cut >= 0) {
    c.resize(static_cast<std::size_t>(L.ncut));
    gap.resize(static_cast<std::size_t>(L.ncut - 1));
    c[0] = th[L.cut];
    t.prior += -std::log(P.cut1_sd) - kHalfLog2Pi - c[0] * c[0] / (2.0 * P.cut1_sd * P.cut1_sd);
    if (g) g[L.cut] -= c[0] / (P.cut1_sd * P.cut1_sd);
    for (int m = 1; m < L.ncut; ++m) {
      const double u = th[L.cut + m];
      gap[static_cast<std::size_t>(m - 1)] = std::exp(u);
      c[static_cast<std::size_t>(m)] = c[static_cast<std::size_t>(m - 1)] +
                                       gap[static_cast<std::size_t>(m - 1)] + min_gap;
      t.prior += log_scale_prior(u, P.gap_sdlog, g ? g + L.cut + m : nullptr);
    }
  }

  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  if (L.mu >= 0) {
    for (int a = 0; a < 2; ++a) {
      mu[a] = th[L.mu + a];
      const double d = mu[a] - P.mean_loc[a];
      t.prior += -std::log(P.mean_sd) - kHalfLog2Pi - d * d / (2.0 * P.mean_sd * P.mean_sd);
      if (g) g[L.mu + a] -= d / (P.mean_sd * P.mean_sd);
    }
  }

  auto load_block = [&](int off) {
    t.prior += rho_prior(th[off], g ? g + off : nullptr);
    t.prior += log_scale_prior(th[off + 1], P.scale_sdlog, g ? g + off + 1 : nullptr);
    t.prior += log_scale_prior(th[off + 2], P.scale_sdlog, g ? g + off + 2 : nullptr);
    return block_at(th + off);
  };
  Block bp{}, bf{}, bl{};
  if (L.pooled >= 0) bp = load_block(L.pooled);
  if (L.fam >= 0) bf = load_block(L.fam);
  if (L.lang >= 0) bl = load_block(L.lang);

  double lam[2] = {1.0, 1.0};
  if (L.drift >= 0) {
    for (int a = 0; a < L.ndrift; ++a) {
      lam[a] = std::exp(th[L.drift + a]);
      t.prior += log_scale_prior(th[L.drift + a], P.scale_sdlog, g ? g + L.drift + a : nullptr);
    }
    if (L.ndrift == 1) lam[1] = lam[0];
  }

  for (int i = L.latent_begin; i < L.dim; ++i) {
    t.latent += -0.5 * th[i] * th[i] - kHalfLog2Pi;
    if (g) g[i] -= th[i];
  }

  // Family effects.
  Eigen::MatrixX2d zf;
  if (L.eps_fam >= 0) {
    zf.resize(static_cast<Eigen::Index>(nf), 2);
    for (std::size_t f = 0; f < nf; ++f) {
      const double* e = th + L.eps_fam + 2 * f;
      double z1, z2;
      apply(bf, e[0], e[1], z1, z2);
      zf(static_cast<Eigen::Index>(f), 0) = z1;
      zf(static_cast<Eigen::Index>(f), 1) = z2;
    }
  }
  Eigen::MatrixX2d zf_bar;
  if (g && L.eps_fam >= 0) zf_bar = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(nf), 2);

  BlockGrad gp, gf, gl;
  double lam_bar[2] = {0.0, 0.0};
  bool ok = true;

  if (ordbin) {
    // Latent pair per taxon.
    Eigen::MatrixX2d z(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) z.row(static_cast<Eigen::Index>(i)) = mu.transpose();

    // Phylo forward pass (tree innovations), kept for the reverse pass.
    Eigen::MatrixX2d y;
    std::vector<Chol2> lq;
    Chol2 ls;
    Stationary S{};
    if (dep == Dependency::Phylo) {
      const std::size_t nv = parent_.size();
      y.resize(static_cast<Eigen::Index>(nv), 2);
      lq.resize(nv);
      S = stationary(bl, lam[0], lam[1]);
      ok = chol2(S.s11, S.s12, S.s22, ls);
      const int root = preorder_.front();
      const double* er = th + L.eps_node + 2 * root;
      y(root, 0) = ls.l11 * er[0];
      y(root, 1) = ls.l21 * er[0] + ls.l22 * er[1];
      for (std::size_t k = 1; ok && k < preorder_.size(); ++k) {
        const int v = preorder_[k];
        const int p = parent_[static_cast<std::size_t>(v)];
        const double b = length_[static_cast<std::size_t>(v)];
        y(v, 0) = std::exp(-lam[0] * b) * y(p, 0);
        y(v, 1) = std::exp(-lam[1] * b) * y(p, 1);
        if (b > 0.0) {
          const double c1 = -std::expm1(-2.0 * lam[0] * b);
          const double c2 = -std::expm1(-2.0 * lam[1] * b);
          const double c12 = -std::expm1(-(lam[0] + lam[1]) * b);
          Chol2& q = lq[static_cast<std::size_t>(v)];
          if (!chol2(S.s11 * c1, S.s12 * c12, S.s22 * c2, q)) {
            ok = false;
            break;
          }
          const double* e = th + L.eps_node + 2 * v;
          y(v, 0) += q.l11 * e[0];
          y(v, 1) += q.l21 * e[0] + q.l22 * e[1];
        }
      }
      if (!ok) return -kInf;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (dep == Dependency::Pooled) {
        const double* e = th + L.eps_obs + 2 * i;
        double z1, z2;
        apply(bp, e[0], e[1], z1, z2);
        z(r, 0) += z1;
        z(r, 1) += z2;
      } else {
        const auto f = static_cast<Eigen::Index>(data_.family[i]);
        z(r, 0) += zf(f, 0);
        z(r, 1) += zf(f, 1);
        if (dep == Dependency::Family) {
          const double* e = th + L.eps_lang + 2 * i;
          double z1, z2;
          apply(bl, e[0], e[1], z1, z2);
          z(r, 0) += z1;
          z(r, 1) += z2;
        } else {
          z(r, 0) += y(tip_node_[i], 0);
          z(r, 1) += y(tip_node_[i], 1);
        }
      }
    }

    // Observation model through the interval-logit kernel.
    const int K = data_.levels;
    std::vector<double> zz(2 * n), lo(2 * n), hi(2 * n), ll(2 * n), dlo(2 * n), dhi(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const int k = data_.ordinal[i];
      zz[i] = z(static_cast<Eigen::Index>(i), 0);
      lo[i] = k > 1 ? c[static_cast<std::size_t>(k - 2)] : -kInf;
      hi[i] = k < K ? c[static_cast<std::size_t>(k - 1)] : kInf;
      zz[n + i] = z(static_cast<Eigen::Index>(i), 1);
      lo[n + i] = data_.binary[i] == 1 ? 0.0 : -kInf;
      hi[n + i] = data_.binary[i] == 1 ? kInf : 0.0;
    }
    simd::interval_logit(zz, lo, hi, ll, dlo, dhi);
    // Interior categories also carry log(1 - exp(-(c_k - c_{k-1}))).
    std::vector<double> gap_term(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 2; k < K; ++k) {
      const double delta = gap[static_cast<std::size_t>(k - 2)] + min_gap;
      gap_term[static_cast<std::size_t>(k)] = log1m_exp_neg(delta);
      t.likelihood += level_count_[static_cast<std::size_t>(k)] * gap_term[static_cast<std::size_t>(k)];
    }
    for (std::size_t i = 0; i < 2 * n; ++i) t.likelihood += ll[i];
    if (pointwise)
      for (std::size_t i = 0; i < n; ++i)
        (*pointwise)[i] = ll[i] + ll[n + i] + gap_term[static_cast<std::size_t>(data_.ordinal[i])];

    if (decoded) {
      decoded->z = z;
      if (dep == Dependency::Phylo) decoded->y_node = y;
    }

    if (g) {
      // Cutpoints.
      std::vector<double> cbar(static_cast<std::size_t>(L.ncut), 0.0);
      std::vector<double> gbar(gap.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const int k = data_.ordinal[i];
        if (k > 1) cbar[static_cast<std::size_t>(k - 2)] += dlo[i];
        if (k < K) cbar[static_cast<std::size_t>(k - 1)] += dhi[i];
      }
      for (int k = 2; k < K; ++k) {
        const double delta = gap[static_cast<std::size_t>(k - 2)] + min_gap;
        gbar[static_cast<std::size_t>(k - 2)] +=
            level_count_[static_cast<std::size_t>(k)] / std::expm1(delta);
      }
      double suffix = 0.0;
      for (int m = L.ncut - 1; m >= 1; --m) {
        suffix += cbar[static_cast<std::size_t>(m)];
        g[L.cut + m] += gap[static_cast<std::size_t>(m - 1)] * (suffix + gbar[static_cast<std::size_t>(m - 1)]);
      }
      g[L.cut] += suffix + cbar[0];

      Eigen::MatrixX2d zbar(static_cast<Eigen::Index>(n), 2);
      for (std::size_t i = 0; i < n; ++i) {
        zbar(static_cast<Eigen::Index>(i), 0) = -(dlo[i] + dhi[i]);
        zbar(static_cast<Eigen::Index>(i), 1) = -(dlo[n + i] + dhi[n + i]);
      }
      if (L.mu >= 0) {
        g[L.mu] += zbar.col(0).sum();
        g[L.mu + 1] += zbar.col(1).sum();
      }

      if (dep == Dependency::Pooled) {
        for (std::size_t i = 0; i < n; ++i) {
          double* ge = g + L.eps_obs + 2 * i;
          const double* e = th + L.eps_obs + 2 * i;
          backprop(bp, zbar(static_cast<Eigen::Index>(i), 0), zbar(static_cast<Eigen::Index>(i), 1),
                   e[0], e[1], gp, ge[0], ge[1]);
        }
      } else {
        for (std::size_t i = 0; i < n; ++i)
          zf_bar.row(data_.family[i]) += zbar.row(static_cast<Eigen::Index>(i));
      }

      if (dep == Dependency::Family) {
        for (std::size_t i = 0; i < n; ++i) {
          double* ge = g + L.eps_lang + 2 * i;
          const double* e = th + L.eps_lang + 2 * i;
          backprop(bl, zbar(static_cast<Eigen::Index>(i), 0), zbar(static_cast<Eigen::Index>(i), 1),
                   e[0], e[1], gl, ge[0], ge[1]);
        }
      }

      if (dep == Dependency::Phylo) {
        const std::size_t nv = parent_.size();
        Eigen::MatrixX2d ybar = Eigen::MatrixX2d::Zero(static_cast<Eigen::Index>(nv), 2);
        for (std::size_t i = 0; i < n; ++i) ybar.row(tip_node_[i]) += zbar.row(static_cast<Eigen::Index>(i));
        double sb11 = 0.0, sb12 = 0.0, sb22 = 0.0;
        for (std::size_t k = preorder_.size() - 1; k >= 1; --k) {
          const int v = preorder_[k];
          const int p = parent_[static_cast<std::size_t>(v)];
          const double b = length_[static_cast<std::size_t>(v)];
          const double a1 = std::exp(-lam[0] * b), a2 = std::exp(-lam[1] * b);
          const double yb0 = ybar(v, 0), yb1 = ybar(v, 1);
          if (b > 0.0) {
            const Chol2& q = lq[static_cast<std::size_t>(v)];
            const double* e = th + L.eps_node + 2 * v;
            double* ge = g + L.eps_node + 2 * v;
            ge[0] += q.l11 * yb0 + q.l21 * yb1;
            ge[1] += q.l22 * yb1;
            double q11, q21, q22;
            chol2_backprop(q, yb0 * e[0], yb1 * e[0], yb1 * e[1], q11, q21, q22);
            const double c1 = -std::expm1(-2.0 * lam[0] * b);
            const double c2 = -std::expm1(-2.0 * lam[1] * b);
            const double c12 = -std::expm1(-(lam[0] + lam[1]) * b);
            sb11 += q11 * c1;
            sb12 += q21 * c12;
            sb22 += q22 * c2;
            lam_bar[0] += q11 * S.s11 * 2.0 * b * a1 * a1 + q21 * S.s12 * b * a1 * a2;
            lam_bar[1] += q22 * S.s22 * 2.0 * b * a2 * a2 + q21 * S.s12 * b * a1 * a2;
          }
          lam_bar[0] += yb0 * y(p, 0) * (-b * a1);
          lam_bar[1] += yb1 * y(p, 1) * (-b * a2);
          ybar(p, 0) += a1 * yb0;
          ybar(p, 1) += a2 * yb1;
        }
        const int root = preorder_.front();
        {
          const double* e = th + L.eps_node + 2 * root;
          double* ge = g + L.eps_node + 2 * root;
          const double yb0 = ybar(root, 0), yb1 = ybar(root, 1);
          ge[0] += ls.l11 * yb0 + ls.l21 * yb1;
          ge[1] += ls.l22 * yb1;
          double q11, q21, q22;
          chol2_backprop(ls, yb0 * e[0], yb1 * e[0], yb1 * e[1], q11, q21, q22);
          sb11 += q11;
          sb12 += q21;
          sb22 += q22;
        }
        stationary_backprop(bl, lam[0], lam[1], S, sb11, sb12, sb22, gl, lam_bar[0], lam_bar[1]);
      }
    }
  } else if (dep != Dependency::Phylo) {
    // Independent bivariate normal residuals.
    const Block& b = dep == Dependency::Pooled ? bp : bl;
    BlockGrad& bg = dep == Dependency::Pooled ? gp : gl;
    for (std::size_t i = 0; i < n; ++i) {
      double r1 = data_.x1[i] - mu[0], r2 = data_.x2[i] - mu[1];
      Eigen::Index f = 0;
      if (dep == Dependency::Family) {
        f = data_.family[i];
        r1 -= zf(f, 0);
        r2 -= zf(f, 1);
      }
      double d1 = 0.0, d2 = 0.0;
      const double li = bvn(b, r1, r2, g ? &d1 : nullptr, g ? &d2 : nullptr, g ? &bg : nullptr);
      t.likelihood += li;
      if (pointwise) (*pointwise)[i] = li;
      if (g) {
        if (L.mu >= 0) {
          g[L.mu] -= d1;
          g[L.mu + 1] -= d2;
        }
        if (dep == Dependency::Family) {
          zf_bar(f, 0) -= d1;
          zf_bar(f, 1) -= d2;
        }
      }
    }
  } else {
    // Continuous phylo: dense Gaussian over all 2N tip values.
    const auto N = static_cast<Eigen::Index>(n);
    const Stationary S = stationary(bl, lam[0], lam[1]);
    Eigen::MatrixXd e1(N, N), e2(N, N), e12(N, N);
    for (Eigen::Index j = 0; j < N; ++j) {
      const std::span<const double> tj(paths_.col(j).data(), n);
      simd::scaled_decay(tj, 1.0, lam[0], std::span<double>(e1.col(j).data(), n));
      simd::scaled_decay(tj, 1.0, lam[1], std::span<double>(e2.col(j).data(), n));
      simd::scaled_decay(tj, 1.0, 0.5 * (lam[0] + lam[1]), std::span<double>(e12.col(j).data(), n));
    }
    Eigen::MatrixXd C(2 * N, 2 * N);
    C.topLeftCorner(N, N) = S.s11 * e1;
    C.bottomRightCorner(N, N) = S.s22 * e2;
    C.topRightCorner(N, N) = S.s12 * e12;
    C.bottomLeftCorner(N, N) = S.s12 * e12.transpose();
    Eigen::VectorXd r(2 * N);
    for (Eigen::Index i = 0; i < N; ++i) {
      r[i] = data_.x1[static_cast<std::size_t>(i)] - mu[0];
      r[N + i] = data_.x2[static_cast<std::size_t>(i)] - mu[1];
      if (L.eps_fam >= 0) {
        const auto f = static_cast<Eigen::Index>(data_.family[static_cast<std::size_t>(i)]);
        r[i] -= zf(f, 0);
        r[N + i] -= zf(f, 1);
      }
    }
    FactoredCovariance fc;
    try {
      fc = factor_covariance(C, spec_.jitter);
    } catch (const NotPositiveDefinite&) {
      return -kInf;
    }
    const Eigen::VectorXd alpha = fc.llt.solve(r);
    const double logdet = 2.0 * fc.llt.matrixLLT().diagonal().array().log().sum();
    t.likelihood += -static_cast<double>(N) * kLog2Pi - 0.5 * logdet - 0.5 * r.dot(alpha);

    if (g || pointwise) {
      const Eigen::MatrixXd kinv = fc.llt.solve(Eigen::MatrixXd::Identity(2 * N, 2 * N));
      if (pointwise) {
        for (Eigen::Index i = 0; i < N; ++i) {
          const double k11 = kinv(i, i), k22 = kinv(N + i, N + i), k12 = kinv(i, N + i);
          const double det = k11 * k22 - k12 * k12;
          const double a1 = alpha[i], a2 = alpha[N + i];
          const double q = (k22 * a1 * a1 - 2.0 * k12 * a1 * a2 + k11 * a2 * a2) / det;
          (*pointwise)[static_cast<std::size_t>(i)] = -kLog2Pi + 0.5 * std::log(det) - 0.5 * q;
        }
      }
      if (g) {
        const Eigen::MatrixXd W = kinv - alpha * alpha.transpose();
        const auto w11 = W.topLeftCorner(N, N);
        const auto w22 = W.bottomRightCorner(N, N);
        const auto w12 = W.topRightCorner(N, N);
        const double A1 = (w11.array() * e1.array()).sum();
        const double B1 = (w11.array() * e1.array() * paths_.array()).sum();
        const double A2 = (w22.array() * e2.array()).sum();
        const double B2 = (w22.array() * e2.array() * paths_.array()).sum();
        const double A12 = (w12.array() * e12.array()).sum();
        const double B12 = (w12.array() * e12.array() * paths_.array()).sum();
        lam_bar[0] += 0.5 * S.s11 * B1 + 0.5 * S.s12 * B12;
        lam_bar[1] += 0.5 * S.s22 * B2 + 0.5 * S.s12 * B12;
        stationary_backprop(bl, lam[0], lam[1], S, -0.5 * A1, -A12, -0.5 * A2, gl, lam_bar[0],
                            lam_bar[1]);
        for (Eigen::Index i = 0; i < N; ++i) {
          if (L.mu >= 0) {
            g[L.mu] += alpha[i];
            g[L.mu + 1] += alpha[N + i];
          }
          if (L.eps_fam >= 0) {
            const auto f = static_cast<Eigen::Index>(data_.family[static_cast<std::size_t>(i)]);
            zf_bar(f, 0) += alpha[i];
            zf_bar(f, 1) += alpha[N + i];
          }
        }
      }
    }
  }

  if (g) {
    if (L.eps_fam >= 0) {
      for (std::size_t f = 0; f < nf; ++f) {
        const double* e = th + L.eps_fam + 2 * f;
        double* ge = g + L.eps_fam + 2 * f;
        backprop(bf, zf_bar(static_cast<Eigen::Index>(f), 0), zf_bar(static_cast<Eigen::Index>(f), 1),
                 e[0], e[1], gf, ge[0], ge[1]);
      }
    }
    if (L.pooled >= 0) flush(bp, gp, g + L.pooled);
    if (L.fam >= 0) flush(bf, gf, g + L.fam);
    if (L.lang >= 0) flush(bl, gl, g + L.lang);
    if (L.drift >= 0) {
      if (L.ndrift == 1) {
        g[L.drift] += (lam_bar[0] + lam_bar[1]) * lam[0];
      } else {
        g[L.drift] += lam_bar[0] * lam[0];
        g[L.drift + 1] += lam_bar[1] * lam[1];
      }
    }
  }

  if (decoded) {
    decoded->cutpoints = c;
    decoded->mu = mu;
    auto cb = [](const Block& b) { return CorrelationBlock{b.rho, b.s1, b.s2}; };
    if (L.pooled >= 0) decoded->pooled = cb(bp);
    if (L.fam >= 0) decoded->fam = cb(bf);
    if (L.lang >= 0) decoded->lang = cb(bl);
    decoded->lambda = Eigen::Vector2d(lam[0], lam[1]);
    decoded->z_family = zf;
  }
  if (terms_out) *terms_out = t;
  const double total = t.total();
  return std::isfinite(total) ? total : -kInf;
}

double Posterior::log_density(std::span<const double> theta) const {
  return evaluate(theta, nullptr, nullptr, nullptr, nullptr);
}

double Posterior::log_density_gradient(std::span<const double> theta,
                                       std::span<double> grad) const {
  if (grad.size() != dim()) throw std::invalid_argument("gradient buffer has the wrong length");
  return evaluate(theta, grad.data(), nullptr, nullptr, nullptr);
}

DensityTerms Posterior::terms(std::span<const double> theta) const {
  DensityTerms t;
  evaluate(theta, nullptr, &t, nullptr, nullptr);
  return t;
}

std::vector<double> Posterior::pointwise_loglik(std::span<const double> theta) const {
  std::vector<double> out;
  if (!std::isfinite(evaluate(theta, nullptr, nullptr, &out, nullptr)))
    out.assign(data_.size(), -kInf);
  return out;
}

DecodedDraw Posterior::decode(std::span<const double> theta) const {
  DecodedDraw d;
  evaluate(theta, nullptr, nullptr, nullptr, &d);
  return d;
}

void Posterior::constrain(std::span<const double> theta, std::span<double> out) const {
  const auto& L = layout_;
  if (theta.size() != dim() || out.size() != dim())
    throw std::invalid_argument("constrain: wrong vector length");
  std::copy(theta.begin(), theta.end(), out.begin());
  if (L.cut >= 0) {
    for (int m = 1; m < L.ncut; ++m)
      out[static_cast<std::size_t>(L.cut + m)] =
          out[static_cast<std::size_t>(L.cut + m - 1)] +
          std::exp(theta[static_cast<std::size_t>(L.cut + m)]) + spec_.cutpoint_min_gap();
  }
  for (int off : {L.pooled, L.fam, L.lang}) {
    if (off < 0) continue;
    const auto o = static_cast<std::size_t>(off);
    out[o] = std::tanh(theta[o]);
    out[o + 1] = std::exp(theta[o + 1]);
    out[o + 2] = std::exp(theta[o + 2]);
  }
  for (int a = 0; a < L.ndrift; ++a)
    out[static_cast<std::size_t>(L.drift + a)] = std::exp(theta[static_cast<std::size_t>(L.drift + a)]);
}

void Posterior::unconstrain(std::span<const double> values, std::span<double> theta) const {
  const auto& L = layout_;
  if (theta.size() != dim() || values.size() != dim())
    throw std::invalid_argument("unconstrain: wrong vector length");
  std::copy(values.begin(), values.end(), theta.begin());
  if (L.cut >= 0) {
    for (int m = 1; m < L.ncut; ++m)
      theta[static_cast<std::size_t>(L.cut + m)] =
          std::log(values[static_cast<std::size_t>(L.cut + m)] -
                   values[static_cast<std::size_t>(L.cut + m - 1)] - spec_.cutpoint_min_gap());
  }
  for (int off : {L.pooled, L.fam, L.lang}) {
    if (off < 0) continue;
    const auto o = static_cast<std::size_t>(off);
    theta[o] = std::atanh(values[o]);
    theta[o + 1] = std::log(values[o + 1]);
    theta[o + 2] = std::log(values[o + 2]);
  }
  for (int a = 0; a < L.ndrift; ++a)
    theta[static_cast<std::size_t>(L.drift + a)] = std::log(values[static_cast<std::size_t>(L.drift + a)]);
}

std::vector<std::size_t> Posterior::headline_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < static_cast<std::size_t>(layout_.latent_begin); ++i) out.push_back(i);
  return out;
}

}  // namespace phylocorr
