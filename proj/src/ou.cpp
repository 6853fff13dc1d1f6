#include "phylocorr/ou.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "phylocorr/simd/kernels.hpp"

namespace phylocorr {

Eigen::Matrix2d build_sigma(const CorrelationBlock& b) {
  Eigen::Matrix2d s;
  const double off = b.rho * b.sigma1 * b.sigma2;
  s << b.sigma1 * b.sigma1, off, off, b.sigma2 * b.sigma2;
  return s;
}

double ou_cov(double lambda, double sigma, double t) {
  return sigma * sigma / (2.0 * lambda) * std::exp(-lambda * t);
}

double ou_cross_cov(double lambda1, double lambda2, double sigma1, double sigma2, double rho,
                    double t) {
  const double ls = lambda1 + lambda2;
  return rho * sigma1 * sigma2 / ls * std::exp(-ls * t / 2.0);
}

Eigen::Matrix2d ou_stationary(const OUParams& a, const OUParams& b, double rho) {
  Eigen::Matrix2d s;
  s(0, 0) = a.sigma * a.sigma / (2.0 * a.lambda);
  s(1, 1) = b.sigma * b.sigma / (2.0 * b.lambda);
  s(0, 1) = s(1, 0) = rho * a.sigma * b.sigma / (a.lambda + b.lambda);
  return s;
}

FactoredCovariance factor_covariance(const Eigen::MatrixXd& cov, const JitterPolicy& policy) {
  FactoredCovariance f;
  f.llt.compute(cov);
  if (f.llt.info() == Eigen::Success) return f;

  const double step = policy.scale * cov.trace() / static_cast<double>(cov.rows());
  Eigen::MatrixXd work = cov;
  for (int k = 0; k < policy.attempts; ++k) {
    work.diagonal().array() += step;
    f.jitter += step;
    f.llt.compute(work);
    if (f.llt.info() == Eigen::Success) return f;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double min_ev = es.eigenvalues().minCoeff();
  throw NotPositiveDefinite("covariance is not positive definite (smallest eigenvalue " +
                                std::to_string(min_ev) + ")",
                            min_ev);
}

Eigen::MatrixXd build_phylo_cov(const PathMatrix& paths, const OUParams& trait1,
                                const OUParams& trait2, double rho, const JitterPolicy& policy) {
  const Eigen::Index n = static_cast<Eigen::Index>(paths.size());
  const Eigen::Matrix2d s = ou_stationary(trait1, trait2, rho);
  Eigen::MatrixXd c(2 * n, 2 * n);

  // Column-wise fill through the decay kernel; t is symmetric so columns of
  // t are rows as well.
  std::vector<double> col(static_cast<std::size_t>(n));
  const double cross_rate = (trait1.lambda + trait2.lambda) / 2.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::span<const double> tj(paths.t.col(j).data(), static_cast<std::size_t>(n));
    simd::scaled_decay(tj, s(0, 0), trait1.lambda, col);
    for (Eigen::Index i = 0; i < n; ++i) c(i, j) = col[static_cast<std::size_t>(i)];
    simd::scaled_decay(tj, s(1, 1), trait2.lambda, col);
    for (Eigen::Index i = 0; i < n; ++i) c(n + i, n + j) = col[static_cast<std::size_t>(i)];
    simd::scaled_decay(tj, s(0, 1), cross_rate, col);
    for (Eigen::Index i = 0; i < n; ++i) {
      c(i, n + j) = col[static_cast<std::size_t>(i)];
      c(n + j, i) = col[static_cast<std::size_t>(i)];
    }
  }
  auto f = factor_covariance(c, policy);
  if (f.jitter > 0.0) c.diagonal().array() += f.jitter;
  return c;
}

Eigen::MatrixXd full_node_ou_cov(const Tree& tree, const OUParams& trait1, const OUParams& trait2,
                                 double rho) {
  const auto nd = node_distances(tree);
  const auto depth = tree.depths();
  const Eigen::Index v = static_cast<Eigen::Index>(tree.node_count());
  const Eigen::Matrix2d s = ou_stationary(trait1, trait2, rho);
  const double lam[2] = {trait1.lambda, trait2.lambda};
  Eigen::MatrixXd c(2 * v, 2 * v);
  for (Eigen::Index u = 0; u < v; ++u) {
    for (Eigen::Index w = 0; w < v; ++w) {
      const int m = nd.mrca[static_cast<std::size_t>(u)][static_cast<std::size_t>(w)];
      const double du = depth[static_cast<std::size_t>(u)] - depth[static_cast<std::size_t>(m)];
      const double dw = depth[static_cast<std::size_t>(w)] - depth[static_cast<std::size_t>(m)];
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          c(a * v + u, b * v + w) = s(a, b) * std::exp(-lam[a] * du - lam[b] * dw);
    }
  }
  return c;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log1m_exp_neg(double x) {
  return x < M_LN2 ? std::log(-std::expm1(-x)) : std::log1p(-std::exp(-x));
}

double ordered_logistic_logpmf(double z, std::span<const double> c, int k) {
  const int K = static_cast<int>(c.size()) + 1;
  if (k < 1 || k > K) return -std::numeric_limits<double>::infinity();
  if (K == 1) return 0.0;
  if (k == 1) return -softplus(z - c[0]);           // log(1 - logistic(z - c1))
  if (k == K) return -softplus(c[K - 2] - z);       // log logistic(z - c_{K-1})
  const double a = z - c[static_cast<std::size_t>(k - 2)];
  const double b = z - c[static_cast<std::size_t>(k - 1)];
  // logistic(a) - logistic(b) = logistic(a) logistic(-b) (1 - exp(-(a - b)))
  return -softplus(-a) - softplus(b) + log1m_exp_neg(a - b);
}

double bernoulli_logit_logpmf(double z, bool success) {
  return success ? -softplus(-z) : -softplus(z);
}

}  // namespace phylocorr
