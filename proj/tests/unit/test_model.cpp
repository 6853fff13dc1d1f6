#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "phylocorr/model.hpp"
#include "test_util.hpp"

using namespace phylocorr;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double fd_max_rel_error(const Posterior& p, const std::vector<double>& th) {
  std::vector<double> g(p.dim());
  p.log_density_gradient(th, g);
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < th.size(); ++i) {
    auto up = th, dn = th;
    up[i] += h;
    dn[i] -= h;
    const double fd = (p.log_density(up) - p.log_density(dn)) / (2.0 * h);
    worst = std::max(worst, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::MatrixXd& c) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  const Eigen::VectorXd a = llt.solve(x);
  return -0.5 * static_cast<double>(x.size()) * kLog2Pi -
         llt.matrixLLT().diagonal().array().log().sum() - 0.5 * x.dot(a);
}

}  // namespace

class GradientAllModels : public ::testing::TestWithParam<int> {};

TEST_P(GradientAllModels, MatchesCentralDifferences) {
  const int model = GetParam();
  for (int rep = 0; rep < 3; ++rep) {
    const ModelData d = testutil::toy_data(5 + 2 * rep, 2, 60 + rep);
    for (bool shared : {false, true}) {
      ModelSpec s = ModelSpec::numbered(model);
      s.shared_drift = shared;
      const Posterior p(s, d);
      const auto th = testutil::random_theta(p.dim(), 1000 + rep);
      ASSERT_TRUE(std::isfinite(p.log_density(th)));
      EXPECT_LT(fd_max_rel_error(p, th), 1e-5) << s.label() << " rep " << rep;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Models, GradientAllModels, ::testing::Range(1, 7));

TEST(Gradient, ReturnedValueMatchesLogDensity) {
  const ModelData d = testutil::toy_data(6, 2, 3);
  for (int m = 1; m <= 6; ++m) {
    const Posterior p(ModelSpec::numbered(m), d);
    const auto th = testutil::random_theta(p.dim(), 5);
    std::vector<double> g(p.dim());
    EXPECT_DOUBLE_EQ(p.log_density_gradient(th, g), p.log_density(th));
  }
}

TEST(Gradient, ZeroLengthBranchesAndFreeMeansOverride) {
  ModelData d = testutil::toy_data(5, 2, 9);
  d.tree = parse_newick("((t0:0,t1:0.5):0.5,((t2:0.2,t3:0):0.8,t4:1):0);");
  ModelSpec s = ModelSpec::numbered(5);
  s.free_means = false;
  const Posterior p(s, d);
  EXPECT_EQ(p.layout().mu, -1);
  const auto th = testutil::random_theta(p.dim(), 21);
  EXPECT_LT(fd_max_rel_error(p, th), 1e-5);
}

TEST(Gradient, PriorModeOfGaussianBlock) {
  // At rho = 0, sigma = 1 (u = 0) and eps = 0 nothing depends on the block,
  // and the prior terms are stationary there.
  const ModelData d = testutil::toy_data(6, 2, 4);
  const Posterior p(ModelSpec::numbered(1), d);
  std::vector<double> th(p.dim(), 0.0);
  th[0] = -0.5;
  std::vector<double> g(p.dim());
  p.log_density_gradient(th, g);
  const int off = p.layout().pooled;
  for (int k = 0; k < 3; ++k) EXPECT_EQ(g[static_cast<std::size_t>(off + k)], 0.0);
}

TEST(LogPosterior, PooledContinuousSingleTaxonAtMean) {
  ModelData d;
  d.taxa = {"a"};
  d.family = {0};
  d.family_names = {"F"};
  d.x1 = {0.3};
  d.x2 = {-1.2};
  const Posterior p(ModelSpec::numbered(2), d);
  std::vector<double> th(p.dim(), 0.0);
  th[static_cast<std::size_t>(p.layout().mu)] = 0.3;
  th[static_cast<std::size_t>(p.layout().mu + 1)] = -1.2;
  EXPECT_NEAR(p.terms(th).likelihood, 2.0 * std::log(1.0 / std::sqrt(2.0 * M_PI)), 1e-14);
}

TEST(LogPosterior, TranslationEquivariance) {
  const ModelData d = testutil::toy_data(7, 2, 11);
  for (int m : {2, 4, 6}) {
    ModelSpec s = ModelSpec::numbered(m);
    const Posterior p(s, d);
    const auto th = testutil::random_theta(p.dim(), 31);
    ModelData shifted = d;
    for (auto& v : shifted.x1) v += 2.5;
    for (auto& v : shifted.x2) v -= 1.25;
    ModelSpec s2 = s;
    s2.priors.mean_loc[0] = 2.5;
    s2.priors.mean_loc[1] = -1.25;
    const Posterior q(s2, shifted);
    auto th2 = th;
    th2[static_cast<std::size_t>(p.layout().mu)] += 2.5;
    th2[static_cast<std::size_t>(p.layout().mu + 1)] -= 1.25;
    EXPECT_NEAR(q.terms(th2).likelihood, p.terms(th).likelihood, 1e-9) << m;
    EXPECT_NEAR(q.log_density(th2), p.log_density(th), 1e-9) << m;
  }
}

TEST(LogPosterior, DenseReferenceContinuousPhylo) {
  const ModelData d = testutil::toy_data(5, 2, 17);
  const Posterior p(ModelSpec::numbered(6), d);
  const auto th = testutil::random_theta(p.dim(), 41);
  const DecodedDraw dd = p.decode(th);
  // Covariance in taxa order from the formula-level builder.
  const auto pm = path_length_matrix(*d.tree);
  PathMatrix ordered{d.taxa, Eigen::MatrixXd(5, 5)};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const auto pi = std::find(pm.labels.begin(), pm.labels.end(), d.taxa[static_cast<std::size_t>(i)]) - pm.labels.begin();
      const auto pj = std::find(pm.labels.begin(), pm.labels.end(), d.taxa[static_cast<std::size_t>(j)]) - pm.labels.begin();
      ordered.t(i, j) = pm.t(pi, pj);
    }
  const auto C = build_phylo_cov(ordered, {dd.lambda[0], dd.lang.sigma1, 0.0},
                                 {dd.lambda[1], dd.lang.sigma2, 0.0}, dd.lang.rho);
  Eigen::VectorXd r(10);
  for (int i = 0; i < 5; ++i) {
    const int f = d.family[static_cast<std::size_t>(i)];
    r[i] = d.x1[static_cast<std::size_t>(i)] - dd.mu[0] - dd.z_family(f, 0);
    r[5 + i] = d.x2[static_cast<std::size_t>(i)] - dd.mu[1] - dd.z_family(f, 1);
  }
  EXPECT_NEAR(p.terms(th).likelihood, mvn_logpdf(r, C), 1e-10);
}

TEST(LogPosterior, DenseReferenceContinuousFamily) {
  const ModelData d = testutil::toy_data(6, 2, 19);
  const Posterior p(ModelSpec::numbered(4), d);
  const auto th = testutil::random_theta(p.dim(), 43);
  const DecodedDraw dd = p.decode(th);
  const Eigen::Matrix2d sig = build_sigma(dd.lang);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(12, 12);
  Eigen::VectorXd r(12);
  for (int i = 0; i < 6; ++i) {
    const int f = d.family[static_cast<std::size_t>(i)];
    r[2 * i] = d.x1[static_cast<std::size_t>(i)] - dd.mu[0] - dd.z_family(f, 0);
    r[2 * i + 1] = d.x2[static_cast<std::size_t>(i)] - dd.mu[1] - dd.z_family(f, 1);
    C.block<2, 2>(2 * i, 2 * i) = sig;
  }
  EXPECT_NEAR(p.terms(th).likelihood, mvn_logpdf(r, C), 1e-10);
}

TEST(LogPosterior, OrdinalLikelihoodFromLinks) {
  const ModelData d = testutil::toy_data(8, 3, 23);
  for (int m : {1, 3, 5}) {
    const Posterior p(ModelSpec::numbered(m), d);
    const auto th = testutil::random_theta(p.dim(), 47);
    const DecodedDraw dd = p.decode(th);
    double ref = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      ref += ordered_logistic_logpmf(dd.z(r, 0), dd.cutpoints, d.ordinal[i]);
      ref += bernoulli_logit_logpmf(dd.z(r, 1), d.binary[i] == 1);
    }
    EXPECT_NEAR(p.terms(th).likelihood, ref, 1e-10) << m;
    const auto pw = p.pointwise_loglik(th);
    EXPECT_NEAR(std::accumulate(pw.begin(), pw.end(), 0.0), ref, 1e-10) << m;
  }
}

TEST(LogPosterior, CutpointsRespectMinimumGap) {
  const ModelData d = testutil::toy_data(5, 2, 29);
  const Posterior p(ModelSpec::numbered(5), d);
  auto th = testutil::random_theta(p.dim(), 3);
  for (int m = 1; m < p.layout().ncut; ++m) th[static_cast<std::size_t>(p.layout().cut + m)] = -30.0;
  const auto c = p.decode(th).cutpoints;
  for (std::size_t k = 1; k < c.size(); ++k) EXPECT_GE(c[k] - c[k - 1], 0.01);
}

// The tree-innovation parameterization is y = M eps. Its columns come from
// decoding unit innovations; M M^T must equal the full-node covariance, and
// the density over eps must equal the centered density at y plus log|det M|.
TEST(NonCentered, ConsistentWithCenteredDensity) {
  for (int rep = 0; rep < 3; ++rep) {
    const ModelData d = testutil::toy_data(5, 2, 70 + rep);
    const Posterior p(ModelSpec::numbered(5), d);
    auto th = testutil::random_theta(p.dim(), 90 + rep);
    const int nv = static_cast<int>(d.tree->node_count());
    const int off = p.layout().eps_node;
    const DecodedDraw base = p.decode(th);

    Eigen::MatrixXd M(2 * nv, 2 * nv);
    for (int k = 0; k < 2 * nv; ++k) {
      auto e = th;
      for (int j = 0; j < 2 * nv; ++j) e[static_cast<std::size_t>(off + j)] = j == k ? 1.0 : 0.0;
      const DecodedDraw dk = p.decode(e);
      for (int v = 0; v < nv; ++v) {
        M(v, k) = dk.y_node(v, 0);
        M(nv + v, k) = dk.y_node(v, 1);
      }
    }
    const auto C = full_node_ou_cov(*d.tree, {base.lambda[0], base.lang.sigma1, 0.0},
                                    {base.lambda[1], base.lang.sigma2, 0.0}, base.lang.rho);
    EXPECT_LT((M * M.transpose() - C).cwiseAbs().maxCoeff(), 1e-10);

    Eigen::VectorXd eps(2 * nv), y(2 * nv);
    for (int j = 0; j < 2 * nv; ++j) {
      // eps_node stores (eps1, eps2) pairs per node; M's columns are in that order.
      eps[j] = th[static_cast<std::size_t>(off + j)];
    }
    Eigen::VectorXd eps_tm(2 * nv);  // pair layout -> M column order
    eps_tm = eps;
    y = M * eps_tm;
    for (int v = 0; v < nv; ++v) {
      EXPECT_NEAR(y[v], base.y_node(v, 0), 1e-12);
      EXPECT_NEAR(y[nv + v], base.y_node(v, 1), 1e-12);
    }
    const double log_std = -0.5 * eps.squaredNorm() - nv * kLog2Pi;
    const double log_det = std::log(std::abs(M.determinant()));
    EXPECT_NEAR(log_std, mvn_logpdf(y, C) + log_det, 1e-8);
  }
}

TEST(LogPosterior, PermutationInvariance) {
  const ModelData d = testutil::toy_data(7, 3, 31);
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(4);
  std::shuffle(perm.begin(), perm.end(), rng);
  // Families relabelled in reverse.
  const int nf = static_cast<int>(d.family_count());
  ModelData q = d;
  q.family_names.assign(d.family_names.rbegin(), d.family_names.rend());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t s = perm[i];
    q.taxa[i] = d.taxa[s];
    q.family[i] = nf - 1 - d.family[s];
    q.ordinal[i] = d.ordinal[s];
    q.binary[i] = d.binary[s];
    q.x1[i] = d.x1[s];
    q.x2[i] = d.x2[s];
  }
  for (int m = 1; m <= 6; ++m) {
    const Posterior a(ModelSpec::numbered(m), d), b(ModelSpec::numbered(m), q);
    const auto th = testutil::random_theta(a.dim(), 100 + m);
    auto th2 = th;
    const auto& L = a.layout();
    auto move_pairs = [&](int off, auto src_of) {
      if (off < 0) return;
      for (std::size_t i = 0; i < src_of.size(); ++i)
        for (int k = 0; k < 2; ++k)
          th2[static_cast<std::size_t>(off) + 2 * i + static_cast<std::size_t>(k)] =
              th[static_cast<std::size_t>(off) + 2 * src_of[i] + static_cast<std::size_t>(k)];
    };
    move_pairs(L.eps_obs, perm);
    move_pairs(L.eps_lang, perm);
    std::vector<std::size_t> fperm(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) fperm[static_cast<std::size_t>(f)] = static_cast<std::size_t>(nf - 1 - f);
    move_pairs(L.eps_fam, fperm);
    const double la = a.log_density(th), lb = b.log_density(th2);
    EXPECT_NEAR(la, lb, 1e-10 * std::abs(la)) << m;
  }
}

TEST(LogPosterior, PointwiseContinuousPhyloMatchesDenseConditioning) {
  const ModelData d = testutil::toy_data(5, 2, 37);
  const Posterior p(ModelSpec::numbered(6), d);
  const auto th = testutil::random_theta(p.dim(), 53);
  const auto pw = p.pointwise_loglik(th);
  const DecodedDraw dd = p.decode(th);
  const auto pm = path_length_matrix(*d.tree);
  // Build covariance in taxa order by label lookup.
  Eigen::MatrixXd t(5, 5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const auto pi = std::find(pm.labels.begin(), pm.labels.end(), d.taxa[static_cast<std::size_t>(i)]) - pm.labels.begin();
      const auto pj = std::find(pm.labels.begin(), pm.labels.end(), d.taxa[static_cast<std::size_t>(j)]) - pm.labels.begin();
      t(i, j) = pm.t(pi, pj);
    }
  const auto C = build_phylo_cov(PathMatrix{d.taxa, t}, {dd.lambda[0], dd.lang.sigma1, 0.0},
                                 {dd.lambda[1], dd.lang.sigma2, 0.0}, dd.lang.rho);
  Eigen::VectorXd r(10);
  for (int i = 0; i < 5; ++i) {
    const int f = d.family[static_cast<std::size_t>(i)];
    r[i] = d.x1[static_cast<std::size_t>(i)] - dd.mu[0] - dd.z_family(f, 0);
    r[5 + i] = d.x2[static_cast<std::size_t>(i)] - dd.mu[1] - dd.z_family(f, 1);
  }
  for (int i = 0; i < 5; ++i) {
    // Schur-complement conditioning of taxon i's pair on the other 8 values.
    std::vector<int> a{i, 5 + i}, b;
    for (int k = 0; k < 10; ++k)
      if (k != i && k != 5 + i) b.push_back(k);
    Eigen::MatrixXd Caa(2, 2), Cab(2, 8), Cbb(8, 8);
    Eigen::VectorXd ra(2), rb(8);
    for (int x = 0; x < 2; ++x) {
      ra[x] = r[a[static_cast<std::size_t>(x)]];
      for (int y = 0; y < 2; ++y) Caa(x, y) = C(a[static_cast<std::size_t>(x)], a[static_cast<std::size_t>(y)]);
      for (int y = 0; y < 8; ++y) Cab(x, y) = C(a[static_cast<std::size_t>(x)], b[static_cast<std::size_t>(y)]);
    }
    for (int x = 0; x < 8; ++x) {
      rb[x] = r[b[static_cast<std::size_t>(x)]];
      for (int y = 0; y < 8; ++y) Cbb(x, y) = C(b[static_cast<std::size_t>(x)], b[static_cast<std::size_t>(y)]);
    }
    const Eigen::MatrixXd K = Cab * Cbb.inverse();
    const Eigen::VectorXd m = K * rb;
    const Eigen::MatrixXd V = Caa - K * Cab.transpose();
    EXPECT_NEAR(pw[static_cast<std::size_t>(i)], mvn_logpdf(ra - m, V), 1e-9) << i;
  }
}

TEST(LogPosterior, PointwisePooledContinuousIsBivariateNormal) {
  const ModelData d = testutil::toy_data(6, 2, 41);
  const Posterior p(ModelSpec::numbered(2), d);
  const auto th = testutil::random_theta(p.dim(), 59);
  const auto pw = p.pointwise_loglik(th);
  const DecodedDraw dd = p.decode(th);
  const Eigen::Matrix2d sig = build_sigma(dd.pooled);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Eigen::Vector2d r(d.x1[i] - dd.mu[0], d.x2[i] - dd.mu[1]);
    EXPECT_NEAR(pw[i], mvn_logpdf(r, sig), 1e-12);
  }
}

TEST(Posterior, ConstrainRoundTripAndNames) {
  const ModelData d = testutil::toy_data(6, 2, 43);
  for (int m = 1; m <= 6; ++m) {
    const Posterior p(ModelSpec::numbered(m), d);
    const auto th = testutil::random_theta(p.dim(), 7);
    std::vector<double> v(p.dim()), back(p.dim());
    p.constrain(th, v);
    p.unconstrain(v, back);
    for (std::size_t i = 0; i < th.size(); ++i) EXPECT_NEAR(back[i], th[i], 1e-10);
    const auto names = p.parameter_names();
    EXPECT_EQ(names.size(), p.dim());
    std::set<std::string> uniq(names.begin(), names.end());
    EXPECT_EQ(uniq.size(), names.size());
    for (std::size_t i : p.headline_indices()) EXPECT_NE(names[i].rfind("eps", 0), 0u);
  }
}

TEST(Posterior, InvalidInputs) {
  ModelData d = testutil::toy_data(5, 2, 1);
  ModelData no_tree = d;
  no_tree.tree.reset();
  EXPECT_THROW(Posterior(ModelSpec::numbered(5), no_tree), std::invalid_argument);
  ModelData bad = d;
  bad.ordinal[0] = 9;
  EXPECT_THROW(Posterior(ModelSpec::numbered(1), bad), std::invalid_argument);
  const Posterior p(ModelSpec::numbered(1), d);
  std::vector<double> wrong(p.dim() + 1, 0.0);
  EXPECT_THROW(p.log_density(wrong), std::invalid_argument);
  auto th = testutil::random_theta(p.dim(), 2);
  th[0] = std::nan("");
  EXPECT_FALSE(std::isfinite(p.log_density(th)));
}

TEST(ModelSpecJson, RoundTripAndOverrides) {
  ModelSpec s = ModelSpec::numbered(5);
  s.shared_drift = true;
  s.jitter.attempts = 5;
  const ModelSpec back = model_spec_from_json(model_spec_to_json(s));
  EXPECT_EQ(back.model_number(), 5);
  EXPECT_TRUE(back.shared_drift);
  EXPECT_TRUE(back.means_free());
  EXPECT_DOUBLE_EQ(back.cutpoint_min_gap(), 0.01);
  EXPECT_EQ(back.jitter.attempts, 5);
  const ModelSpec o = model_spec_from_json(
      R"({"likelihood":"ordbin","dependency":"hier","free_means":true,"priors":{"mean_sd":3}})");
  EXPECT_EQ(o.model_number(), 3);
  EXPECT_TRUE(o.means_free());
  EXPECT_DOUBLE_EQ(o.priors.mean_sd, 3.0);
  EXPECT_THROW(model_spec_from_json(R"({"likelihood":"poisson"})"), std::invalid_argument);
  EXPECT_FALSE(ModelSpec::numbered(1).means_free());
  EXPECT_FALSE(ModelSpec::numbered(3).means_free());
  EXPECT_TRUE(ModelSpec::numbered(2).means_free());
}
