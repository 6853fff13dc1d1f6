#pragma once

#include <span>
#include <stdexcept>

#include <Eigen/Dense>

#include "phylocorr/tree.hpp"

namespace phylocorr {

/// Correlation rho and the two marginal scales of a bivariate normal block.
struct CorrelationBlock {
  double rho = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

/// [[s1^2, rho s1 s2], [rho s1 s2, s2^2]]
Eigen::Matrix2d build_sigma(const CorrelationBlock& block);

/// Drift (mean reversion rate), diffusion, and long-term mean of one trait.
struct OUParams {
  double lambda = 1.0;
  double sigma = 1.0;
  double mu = 0.0;
};

/// Covariance of one OU trait between two tips at path distance t:
/// sigma^2 / (2 lambda) * exp(-lambda t). t = 0 gives the stationary variance.
double ou_cov(double lambda, double sigma, double t);

/// Stationary cross-covariance of a bivariate OU with diagonal drift between
/// trait 1 at one tip and trait 2 at another, on an ultrametric tree:
/// rho s1 s2 / (l1 + l2) * exp(-(l1 + l2) t / 2).
double ou_cross_cov(double lambda1, double lambda2, double sigma1, double sigma2, double rho,
                    double t);

/// Stationary 2x2 covariance S with S_ab = (B B^T)_ab / (lambda_a + lambda_b).
Eigen::Matrix2d ou_stationary(const OUParams& a, const OUParams& b, double rho);

struct JitterPolicy {
  double scale = 1e-9;  // jitter = scale * trace / dim
  int attempts = 3;
};

class NotPositiveDefinite : public std::runtime_error {
 public:
  NotPositiveDefinite(const std::string& what, double min_eigenvalue)
      : std::runtime_error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

/// Cholesky factor of a covariance, adding diagonal jitter per `policy` when
/// the plain factorization fails.
struct FactoredCovariance {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

FactoredCovariance factor_covariance(const Eigen::MatrixXd& cov, const JitterPolicy& policy = {});

/// Tip covariance of the bivariate OU on an ultrametric tree, trait-major:
/// [[C1, C12], [C12^T, C2]] with C_a = ou_cov(lambda_a, sigma_a, t) and
/// C12 = ou_cross_cov(..., t). Throws NotPositiveDefinite when the result
/// cannot be factored even after jitter.
Eigen::MatrixXd build_phylo_cov(const PathMatrix& paths, const OUParams& trait1,
                                const OUParams& trait2, double rho,
                                const JitterPolicy& policy = {});

/// Joint covariance over every node of the tree (2V x 2V, trait-major):
/// Cov(z_a(u), z_b(v)) = S_ab exp(-lambda_a d(m,u) - lambda_b d(m,v)) with m
/// the most recent common ancestor of u and v. Reduces to the per-trait
/// sigma^2/(2 lambda) exp(-lambda d(u,v)) and, for tips of an ultrametric
/// tree, to build_phylo_cov.
Eigen::MatrixXd full_node_ou_cov(const Tree& tree, const OUParams& trait1, const OUParams& trait2,
                                 double rho);

/// log P(k | z) under the ordered-logistic link, k in 1..K with K - 1
/// increasing cutpoints: log[logistic(z - c_{k-1}) - logistic(z - c_k)].
double ordered_logistic_logpmf(double z, std::span<const double> cutpoints, int k);

/// log P(y | z) for a Bernoulli outcome with P(y = 1) = 1 / (1 + exp(-z)).
double bernoulli_logit_logpmf(double z, bool success);

/// log(1 - exp(-x)) for x > 0.
double log1m_exp_neg(double x);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

}  // namespace phylocorr
