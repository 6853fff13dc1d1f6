#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "phylocorr/model.hpp"

namespace phylocorr {

/// Generating values for simulate(). Blocks that the spec does not use are
/// ignored; `mu` is added whatever the spec's free_means setting.
struct TrueParams {
  std::vector<double> cutpoints;  // ordinal models, K-1 increasing values
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  CorrelationBlock pooled{0.0, 1.0, 1.0};
  CorrelationBlock fam{0.0, 1.0, 1.0};
  CorrelationBlock lang{0.0, 1.0, 1.0};
  Eigen::Vector2d lambda = Eigen::Vector2d::Ones();

  /// Throws std::invalid_argument when a value used by `spec` is out of domain.
  void validate(const ModelSpec& spec) const;
};

/// Keys: cutpoints, mu, rho, sigma, rho_f, sigma_f, rho_l, sigma_l, lambda
/// (sigma* and lambda and mu are two-element arrays; lambda may be a scalar).
TrueParams true_params_from_json(std::string_view json_text);
std::string true_params_to_json(const TrueParams& p);

struct SimulatedData {
  ModelData data;
  Eigen::MatrixX2d latent;         // per taxon: ordinal latent z, or continuous mean part
  Eigen::MatrixX2d family_effect;  // per family (zero when the spec has no family level)
};

/// Draws one dataset from the generative process of `spec`. `layout`
/// supplies taxa, families, the tree (phylo specs) and, for ordinal specs,
/// nothing else: K is taken from the cutpoint count. Observation fields of
/// `layout` are ignored.
SimulatedData simulate(const ModelSpec& spec, const TrueParams& params, const ModelData& layout,
                       std::uint64_t seed);

/// Taxa "t1".."tN" grouped by `family_sizes` (size-1 groups are isolates).
ModelData family_layout(const std::vector<int>& family_sizes);

/// Taxa from the tree's tips; families are the clades hanging below
/// root distance `cut_depth` (cut_depth <= 0 puts everything in one family).
ModelData tree_layout(const Tree& tree, double cut_depth);

/// Table and schema for writing a simulated dataset: ordinal levels "1".."K",
/// binary levels "0","1", continuous columns x1 and x2.
TraitTable to_trait_table(const ModelData& data);
Schema schema_for(const ModelData& data);

}  // namespace phylocorr
