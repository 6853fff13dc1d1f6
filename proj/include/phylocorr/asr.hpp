#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phylocorr/model.hpp"
#include "phylocorr/sampler.hpp"

namespace phylocorr {

/// Posterior summary of the reconstructed state at one node, per trait
/// (latent scale for ordinal models, data scale for continuous ones).
struct NodeReconstruction {
  int node = -1;
  std::string name;  // Tree::node_name
  bool tip = false;
  /// Family index when every tip below the node is in one family (the
  /// family effect is then included); -1 when the node spans families and
  /// the state is mu plus the phylogenetic component only.
  int family = -1;
  bool spans_families() const { return family < 0; }
  std::array<double, 2> mean{}, sd{}, q025{}, q975{};
};

struct ReconstructOptions {
  /// Draw internal states from their conditional law (true) or use the
  /// conditional mean of each posterior draw (false).
  bool sample = true;
  std::uint64_t seed = 1;
  /// Evenly thinned subset of posterior draws; 0 uses all of them.
  int max_draws = 0;
  int threads = 0;  // 0: PHYLOCORR_THREADS or the hardware count
};

/// Conditional law of internal-node phylogenetic components given the tip
/// components, from the full-node OU covariance. Index order: internal
/// nodes in increasing node id, trait-major (all trait 1 then all trait 2).
struct NodeConditional {
  std::vector<int> internal;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// `tip_values` is (tip count x 2) in Tree::tips() order, zero-mean phylo
/// components. Throws NotPositiveDefinite when the tip block cannot be
/// factored even with jitter.
NodeConditional condition_on_tips(const Tree& tree, const CorrelationBlock& lang,
                                  const Eigen::Vector2d& lambda, const Eigen::MatrixX2d& tip_values,
                                  const JitterPolicy& jitter = {});

/// The same law computed by message passing along the tree (the OU with
/// diagonal drift is Markov on branches). Row v of `mean` and `cov[v]` give
/// the marginal of node v; tips are returned as their conditioning values.
struct TreeConditional {
  Eigen::MatrixX2d mean;
  std::vector<Eigen::Matrix2d> cov;
};
TreeConditional condition_on_tips_fast(const Tree& tree, const CorrelationBlock& lang,
                                       const Eigen::Vector2d& lambda, const Eigen::MatrixX2d& tip_values);

/// One entry per tree node, in node id order.
std::vector<NodeReconstruction> reconstruct(const ModelSpec& spec, const Draws& draws,
                                            const ModelData& data, const ReconstructOptions& options = {});
/// Same, checking that `tree` carries exactly the fitted taxa.
std::vector<NodeReconstruction> reconstruct(const ModelSpec& spec, const Draws& draws,
                                            const ModelData& data, const Tree& tree,
                                            const ReconstructOptions& options = {});

/// Columns: node, name, tip, trait, mean, sd, q2.5, q97.5, spans_families.
std::string reconstruction_csv(const std::vector<NodeReconstruction>& recs);

/// Newick with "[&mean1=...,mean2=...,sd1=...,sd2=...,spans_families=0|1]"
/// comments on every node.
std::string annotated_newick(const Tree& tree, const std::vector<NodeReconstruction>& recs);

}  // namespace phylocorr
