#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../common/ou_sim.hpp"
#include "phylocorr/ou.hpp"
#include "test_util.hpp"

using namespace phylocorr;

TEST(BuildSigma, Examples) {
  EXPECT_TRUE(build_sigma({0.0, 1.0, 1.0}).isApprox(Eigen::Matrix2d::Identity()));
  const Eigen::Matrix2d s = build_sigma({0.84, 2.03, 2.11});
  EXPECT_NEAR(s(0, 1), 3.598, 5e-4);
  EXPECT_DOUBLE_EQ(s(0, 1), 0.84 * 2.03 * 2.11);
  EXPECT_DOUBLE_EQ(s(1, 0), s(0, 1));
  double prev = s.determinant();
  for (double r : {0.9, 0.99, 0.999, 0.99999}) {
    const double d = build_sigma({r, 2.03, 2.11}).determinant();
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(std::abs(build_sigma({-0.9999999, 1.0, 1.0}).determinant()), 1e-6);
}

TEST(OuCov, Examples) {
  EXPECT_DOUBLE_EQ(ou_cov(0.5, 1.0, 0.0), 1.0);
  EXPECT_NEAR(ou_cov(0.5, 1.0, 2.0), std::exp(-1.0), 1e-15);
  EXPECT_LT(ou_cov(1e4, 1.0, 1.0), 1e-300);
}

TEST(OuCov, MonotoneProperty) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> lam(0.01, 5.0), sig(0.1, 3.0), tt(0.01, 5.0);
  for (int k = 0; k < 500; ++k) {
    const double l = lam(rng), s = sig(rng), t = tt(rng);
    EXPECT_LT(ou_cov(l, s, t * 1.1), ou_cov(l, s, t));
    EXPECT_LT(ou_cov(l * 1.1, s, t), ou_cov(l, s, t));
  }
}

TEST(OuCrossCov, Examples) {
  for (double t : {0.0, 0.3, 2.0}) {
    EXPECT_NEAR(ou_cross_cov(0.7, 0.7, 1.3, 1.3, 1.0, t), ou_cov(0.7, 1.3, t), 1e-15);
    EXPECT_EQ(ou_cross_cov(0.1, 0.3, 1.0, 1.0, 0.0, t), 0.0);
  }
  EXPECT_NEAR(ou_cross_cov(0.1, 0.3, 1.0, 1.0, 0.5, 2.0), 0.5 / 0.4 * std::exp(-0.4), 1e-15);
  // 0.837900..., not 0.83795
  EXPECT_NEAR(ou_cross_cov(0.1, 0.3, 1.0, 1.0, 0.5, 2.0), 0.83790006, 1e-8);
  EXPECT_GT(std::abs(ou_cross_cov(0.1, 0.3, 1.0, 1.0, 0.5, 2.0) - 0.83795), 4e-5);
}

TEST(PhyloCov, SingleTip) {
  PathMatrix pm{{"A"}, Eigen::MatrixXd::Zero(1, 1)};
  const auto c = build_phylo_cov(pm, {0.4, 1.5, 0.0}, {0.9, 0.7, 0.0}, 0.3);
  EXPECT_NEAR(c(0, 0), 1.5 * 1.5 / 0.8, 1e-15);
  EXPECT_NEAR(c(1, 1), 0.7 * 0.7 / 1.8, 1e-15);
  EXPECT_NEAR(c(0, 1), 0.3 * 1.5 * 0.7 / 1.3, 1e-15);
}

TEST(PhyloCov, KroneckerWhenDriftsAreEqual) {
  const Tree t = parse_newick("((A:0.5,B:0.5):0.5,C:1);");
  const auto pm = path_length_matrix(t);
  const double lam = 0.6, s1 = 1.4, s2 = 0.8, rho = -0.35;
  const auto c = build_phylo_cov(pm, {lam, s1, 0.0}, {lam, s2, 0.0}, rho);
  Eigen::Matrix3d R;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) R(i, j) = std::exp(-lam * pm.t(i, j)) / (2.0 * lam);
  const Eigen::Matrix2d sig = build_sigma({rho, s1, s2});
  Eigen::MatrixXd kron(6, 6);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) kron.block(3 * a, 3 * b, 3, 3) = sig(a, b) * R;
  EXPECT_LT((c - kron).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PhyloCov, SymmetricAndPsdOnRandomTrees) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lam(0.02, 3.0), sig(0.2, 3.0), r(-0.99, 0.99);
  for (int k = 0; k < 40; ++k) {
    const Tree t = testutil::random_tree(3 + k, 300 + k, true);
    const auto pm = path_length_matrix(t);
    const OUParams a{lam(rng), sig(rng), 0.0}, b{lam(rng), sig(rng), 0.0};
    const double rho = r(rng);
    JitterPolicy none{1e-9, 0};
    Eigen::MatrixXd c;
    try {
      c = build_phylo_cov(pm, a, b, rho, none);
    } catch (const NotPositiveDefinite& e) {
      EXPECT_GT(e.min_eigenvalue(), -1e-8);
      continue;
    }
    EXPECT_LT((c - c.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-8);
  }
}

TEST(PhyloCov, JitterExhaustedReportsEigenvalue) {
  // Two identical tips with rho = 1 and equal drifts give a singular matrix.
  const Tree t = parse_newick("(A:0,B:0):1;");
  const auto pm = path_length_matrix(t);
  try {
    build_phylo_cov(pm, {1.0, 1.0, 0.0}, {1.0, 1.0, 0.0}, 1.0, {0.0, 3});
    FAIL() << "expected NotPositiveDefinite";
  } catch (const NotPositiveDefinite& e) {
    EXPECT_NEAR(e.min_eigenvalue(), 0.0, 1e-12);
    EXPECT_NE(std::string(e.what()).find("eigenvalue"), std::string::npos);
  }
  // Default jitter rescues the same matrix.
  const auto c = build_phylo_cov(pm, {1.0, 1.0, 0.0}, {1.0, 1.0, 0.0}, 1.0);
  EXPECT_GT(c(0, 0), 0.5);
}

TEST(PhyloCov, FullNodeCovarianceReducesToTips) {
  const Tree t = testutil::random_tree(7, 77, true);
  const OUParams a{0.3, 1.1, 0.0}, b{1.7, 0.6, 0.0};
  const auto full = full_node_ou_cov(t, a, b, 0.45);
  const auto tips = build_phylo_cov(path_length_matrix(t), a, b, 0.45);
  const auto v = static_cast<Eigen::Index>(t.node_count());
  const auto n = static_cast<Eigen::Index>(t.tip_count());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (int p = 0; p < 2; ++p)
        for (int q = 0; q < 2; ++q)
          EXPECT_NEAR(full(p * v + t.tips()[static_cast<std::size_t>(i)],
                           q * v + t.tips()[static_cast<std::size_t>(j)]),
                      tips(p * n + i, q * n + j), 1e-12);
  // Single trait: sigma^2/(2 lambda) exp(-lambda d(u,v)) for every node pair.
  const auto nd = node_distances(t);
  for (Eigen::Index u = 0; u < v; ++u)
    for (Eigen::Index w = 0; w < v; ++w)
      EXPECT_NEAR(full(u, w), ou_cov(a.lambda, a.sigma, nd.distance(u, w)), 1e-12);
}

TEST(PhyloCov, MatchesEulerMaruyamaSimulation) {
  const Tree t = parse_newick("((A:0.5,B:0.5):0.5,C:1);");
  const OUParams a{0.3, 1.0, 0.0}, b{0.15, 0.8, 0.0};
  const double rho = 0.6;
  const auto c = build_phylo_cov(path_length_matrix(t), a, b, rho);
  const auto sim = testutil::simulate_tip_covariance(t, a, b, rho, 100000, 0.005, 424242);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      EXPECT_LT(std::abs(sim.cov(i, j) - c(i, j)), 3.0 * sim.se(i, j))
          << i << "," << j << " sim " << sim.cov(i, j) << " exact " << c(i, j);
}

TEST(Links, OrderedLogistic) {
  const std::vector<double> one{0.7};
  EXPECT_NEAR(std::exp(ordered_logistic_logpmf(0.7, one, 1)), 0.5, 1e-15);
  const std::vector<double> c{-0.36, 0.54, 2.03, 3.50};
  auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double z = 0.0;
  const double ref[5] = {1.0 - logistic(z - c[0]), logistic(z - c[0]) - logistic(z - c[1]),
                         logistic(z - c[1]) - logistic(z - c[2]),
                         logistic(z - c[2]) - logistic(z - c[3]), logistic(z - c[3])};
  for (int k = 1; k <= 5; ++k)
    EXPECT_NEAR(std::exp(ordered_logistic_logpmf(z, c, k)), ref[k - 1], 1e-14);
  EXPECT_EQ(ordered_logistic_logpmf(0.0, c, 0), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(ordered_logistic_logpmf(0.0, c, 6), -std::numeric_limits<double>::infinity());
}

TEST(Links, OrderedLogisticNormalizes) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::exponential_distribution<double> gap(0.7);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> c{nd(rng)};
    const int K = 2 + rep % 6;
    for (int k = 2; k < K; ++k) c.push_back(c.back() + gap(rng) + 1e-6);
    const double z = nd(rng) * 2.0;
    double s = 0.0;
    for (int k = 1; k <= K; ++k) s += std::exp(ordered_logistic_logpmf(z, c, k));
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Links, Bernoulli) {
  EXPECT_NEAR(std::exp(bernoulli_logit_logpmf(0.0, true)), 0.5, 1e-15);
  EXPECT_NEAR(std::exp(bernoulli_logit_logpmf(1.0, true)), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(std::exp(bernoulli_logit_logpmf(1.0, false)), 1.0 - 0.7310585786300049, 1e-15);
  EXPECT_NEAR(bernoulli_logit_logpmf(800.0, true), 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(bernoulli_logit_logpmf(800.0, false)));
}
