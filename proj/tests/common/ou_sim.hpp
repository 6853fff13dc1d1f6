#pragma once

// Forward Euler-Maruyama simulation of the bivariate OU along a tree. Used
// as an independent oracle for the closed-form tip covariance.

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "phylocorr/ou.hpp"
#include "phylocorr/tree.hpp"

namespace testutil {

struct SimCovariance {
  Eigen::MatrixXd cov;  // trait-major over tips, known zero mean
  Eigen::MatrixXd se;   // Monte-Carlo standard error of each entry
};

inline SimCovariance simulate_tip_covariance(const phylocorr::Tree& tree,
                                             const phylocorr::OUParams& p1,
                                             const phylocorr::OUParams& p2, double rho,
                                             long paths, double dt, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double sq = std::sqrt(1.0 - rho * rho);
  // Root from the stationary law.
  const Eigen::Matrix2d S = phylocorr::ou_stationary(p1, p2, rho);
  const Eigen::Matrix2d Ls = S.llt().matrixL();

  const auto& tips = tree.tips();
  const Eigen::Index n = static_cast<Eigen::Index>(tips.size());
  std::vector<int> tip_pos(tree.node_count(), -1);
  for (std::size_t k = 0; k < tips.size(); ++k) tip_pos[static_cast<std::size_t>(tips[k])] = static_cast<int>(k);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  std::vector<double> x1(tree.node_count()), x2(tree.node_count());
  Eigen::VectorXd tipv(2 * n);
  for (long it = 0; it < paths; ++it) {
    const int root = tree.root();
    const double e1 = nd(rng), e2 = nd(rng);
    x1[static_cast<std::size_t>(root)] = Ls(0, 0) * e1;
    x2[static_cast<std::size_t>(root)] = Ls(1, 0) * e1 + Ls(1, 1) * e2;
    for (std::size_t k = 1; k < tree.preorder().size(); ++k) {
      const int v = tree.preorder()[k];
      const int p = tree.node(v).parent;
      double a = x1[static_cast<std::size_t>(p)], b = x2[static_cast<std::size_t>(p)];
      const double len = tree.node(v).length;
      const int steps = static_cast<int>(std::lround(len / dt));
      const double h = steps > 0 ? len / steps : 0.0;
      const double sh = std::sqrt(h);
      for (int s = 0; s < steps; ++s) {
        const double w1 = nd(rng), w2 = nd(rng);
        const double da = -p1.lambda * a * h + p1.sigma * sh * w1;
        const double db = -p2.lambda * b * h + p2.sigma * sh * (rho * w1 + sq * w2);
        a += da;
        b += db;
      }
      x1[static_cast<std::size_t>(v)] = a;
      x2[static_cast<std::size_t>(v)] = b;
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      tipv[k] = x1[static_cast<std::size_t>(tips[static_cast<std::size_t>(k)])];
      tipv[n + k] = x2[static_cast<std::size_t>(tips[static_cast<std::size_t>(k)])];
    }
    const Eigen::MatrixXd outer = tipv * tipv.transpose();
    sum += outer;
    sumsq += outer.cwiseProduct(outer);
  }
  const double m = static_cast<double>(paths);
  SimCovariance out;
  out.cov = sum / m;
  const Eigen::MatrixXd var = (sumsq / m - out.cov.cwiseProduct(out.cov)) * (m / (m - 1.0));
  out.se = (var / m).cwiseSqrt();
  return out;
}

}  // namespace testutil
