#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "phylocorr/density.hpp"
#include "phylocorr/ou.hpp"
#include "phylocorr/traits.hpp"
#include "phylocorr/tree.hpp"

namespace phylocorr {

enum class Likelihood { OrdinalBinary, Continuous };
enum class Dependency { Pooled, Family, Phylo };

std::string_view to_string(Likelihood l);
std::string_view to_string(Dependency d);
/// Accepts "ordbin"/"ordinal_binary" and "cont"/"continuous".
Likelihood likelihood_from_string(std::string_view s);
/// Accepts "pooled"/"vanilla", "family"/"hier"/"hierarchical", "phylo"/"family+phylo".
Dependency dependency_from_string(std::string_view s);

struct Priors {
  double scale_sdlog = 1.0;  // sigma and lambda ~ LogNormal(0, scale_sdlog)
  double cut1_sd = 2.0;      // c1 ~ Normal(0, cut1_sd)
  double gap_sdlog = 2.0;    // gaps ~ LogNormal(0, gap_sdlog)
  double mean_sd = 2.0;      // mu ~ Normal(mean_loc, mean_sd^2 I)
  double mean_loc[2] = {0.0, 0.0};
};

struct ModelSpec {
  Likelihood likelihood = Likelihood::OrdinalBinary;
  Dependency dependency = Dependency::Pooled;
  Priors priors;
  /// Unset: free for continuous models and for the ordinal phylo model,
  /// fixed at 0 for the other ordinal models.
  std::optional<bool> free_means;
  /// One drift rate for both traits instead of two.
  bool shared_drift = false;
  /// Unset: 0.01 for the ordinal phylo model, 0 otherwise.
  std::optional<double> min_gap;
  JitterPolicy jitter;

  bool means_free() const;
  double cutpoint_min_gap() const;
  /// 1..6 in the order (ordbin, cont) x (pooled, family, phylo), row-major
  /// by dependency: 1 ordbin pooled, 2 cont pooled, 3 ordbin family, ...
  int model_number() const;
  std::string label() const;  // e.g. "ordbin/phylo"

  static ModelSpec numbered(int model);
};

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(std::string_view json_text);

/// Numeric view of an aligned table used by the densities.
struct ModelData {
  std::vector<std::string> taxa;
  std::vector<int> family;  // index into family_names
  std::vector<std::string> family_names;
  int levels = 0;            // ordinal categories K
  std::vector<int> ordinal;  // 1..K
  std::vector<int> binary;   // 0 or 1 (second declared level)
  std::vector<double> x1, x2;
  std::optional<Tree> tree;  // tip labels are exactly `taxa`

  std::size_t size() const { return taxa.size(); }
  std::size_t family_count() const { return family_names.size(); }
};

/// Picks the first ordinal and first binary column (ordbin) or the first two
/// continuous columns (cont). Rows must be complete.
ModelData make_model_data(const TraitTable& table, Likelihood likelihood,
                          const Tree* tree = nullptr);

/// Offsets of each parameter group in the unconstrained vector; -1 when the
/// group is absent. Latent blocks store (eps1, eps2) pairs per unit.
struct ParameterLayout {
  int cut = -1, ncut = 0;
  int mu = -1;
  int pooled = -1;
  int fam = -1;
  int lang = -1;
  int drift = -1, ndrift = 0;
  int eps_obs = -1;   // per taxon (ordbin pooled)
  int eps_fam = -1;   // per family
  int eps_lang = -1;  // per taxon (ordbin family)
  int eps_node = -1;  // per tree node id (ordbin phylo)
  int latent_begin = 0;  // all eps blocks sit at the end
  int dim = 0;
};

/// Constrained parameters of one draw plus the implied latent values.
struct DecodedDraw {
  std::vector<double> cutpoints;
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  CorrelationBlock pooled, fam, lang;
  Eigen::Vector2d lambda = Eigen::Vector2d::Ones();
  Eigen::MatrixX2d z;         // per-taxon latent (ordbin), includes mu
  Eigen::MatrixX2d z_family;  // per-family effect
  Eigen::MatrixX2d y_node;    // phylo component per node id (ordbin phylo)
};

struct DensityTerms {
  double prior = 0.0;       // parameter priors including Jacobians
  double latent = 0.0;      // standard-normal terms of the latent innovations
  double likelihood = 0.0;  // observation model
  double total() const { return prior + latent + likelihood; }
};

/// Joint log density of one of the six models over its unconstrained vector.
class Posterior : public DensityModel {
 public:
  Posterior(ModelSpec spec, ModelData data);

  const ModelSpec& spec() const { return spec_; }
  const ModelData& data() const { return data_; }
  const ParameterLayout& layout() const { return layout_; }

  std::size_t dim() const override { return static_cast<std::size_t>(layout_.dim); }
  double log_density(std::span<const double> theta) const override;
  double log_density_gradient(std::span<const double> theta,
                              std::span<double> grad) const override;
  std::vector<std::string> parameter_names() const override { return names_; }
  void constrain(std::span<const double> theta, std::span<double> out) const override;
  void unconstrain(std::span<const double> values, std::span<double> theta) const override;

  DensityTerms terms(std::span<const double> theta) const;

  /// Per-taxon log-likelihood for leave-one-out. Ordinal models condition
  /// on the latent z_i; continuous phylo uses p(x_i | x_-i) under the draw.
  std::vector<double> pointwise_loglik(std::span<const double> theta) const;

  DecodedDraw decode(std::span<const double> theta) const;

  /// Indices of the non-latent parameters (everything except eps*).
  std::vector<std::size_t> headline_indices() const;

 private:
  double evaluate(std::span<const double> theta, double* grad, DensityTerms* terms,
                  std::vector<double>* pointwise, DecodedDraw* decoded) const;

  ModelSpec spec_;
  ModelData data_;
  ParameterLayout layout_;
  std::vector<std::string> names_;

  // Tree structure cached for the phylo models.
  std::vector<int> preorder_;
  std::vector<int> parent_;
  std::vector<double> length_;
  std::vector<int> tip_node_;  // taxon index -> node id
  Eigen::MatrixXd paths_;      // taxa order (continuous phylo)
  std::vector<int> level_count_;
};

/// Free-function forms of the density and its gradient.
double log_posterior(const ModelSpec& spec, std::span<const double> theta, const ModelData& data);
std::vector<double> grad_log_posterior(const ModelSpec& spec, std::span<const double> theta,
                                       const ModelData& data);

}  // namespace phylocorr
