#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "phylocorr/model.hpp"
#include "phylocorr/sampler.hpp"

namespace phylocorr {

class BridgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ll(s, i): log-likelihood of observation i under draw s.
struct PointwiseLogLik {
  Eigen::MatrixXd ll;
  std::vector<std::string> observations;
  /// Set for latent-variable models, where entries condition on the draw's
  /// latent values and the likelihood does not factorize marginally.
  bool conditional = false;
};

/// Draws are mapped back to the unconstrained scale of `posterior`; throws
/// std::invalid_argument when the parameter names differ.
PointwiseLogLik pointwise_loglik(const Posterior& posterior, const Draws& draws);
PointwiseLogLik pointwise_loglik(const ModelSpec& spec, const Draws& draws, const ModelData& data);

/// Pareto-smoothed log importance weights for one observation.
struct PsisWeights {
  std::vector<double> log_weights;  // normalized to log-sum-exp 0
  double k = 0.0;                   // +inf when the tail is constant
  bool degenerate = false;
};

/// Smooths raw log ratios: the largest 20% are replaced by expected order
/// statistics of a generalized Pareto fit, then everything is truncated at
/// the largest raw ratio.
PsisWeights psis_smooth(const std::vector<double>& log_ratios);

/// Zhang-Stephens estimate (with the weakly informative prior on k) for
/// exceedances over a threshold. Returns (k, sigma).
std::pair<double, double> gpd_fit(std::vector<double> exceedances);

struct LooResult {
  double elpd = 0.0;
  double se = 0.0;
  std::vector<double> pointwise;
  std::vector<double> pareto_k;
  int k_good = 0;       // k <= 0.5
  int k_ok = 0;         // 0.5 < k <= 0.7
  int k_bad = 0;        // 0.7 < k <= 1
  int k_very_bad = 0;   // k > 1
  int degenerate = 0;   // constant tail, no fit
  bool conditional = false;
  /// Sum of log mean exp(ll) over observations (in-sample, no leave-out).
  double lpd = 0.0;
};

/// Needs at least 100 draws.
LooResult psis_loo(const PointwiseLogLik& ll);
LooResult psis_loo(const Eigen::MatrixXd& ll);

struct BridgeOptions {
  double tolerance = 1e-8;    // final bracket width on the log ratio
  int max_iterations = 1000;  // bracketing plus bisection steps
  std::uint64_t seed = 1;
};

struct BridgeResult {
  double log_marginal = 0.0;
  int iterations = 0;
  std::size_t n_fit = 0;
  std::size_t n_bridge = 0;
  /// Kish effective sample size of the proposal draws weighted toward the
  /// posterior, as a fraction of their count. Near 0 means the normal
  /// proposal covers the posterior poorly.
  double proposal_ess_fraction = 0.0;
};

/// Meng-Wong iterative bridge estimate of log of the integral of
/// exp(log_density). The first half of each chain fits a normal proposal in
/// unconstrained space; the second half is used in the bridge.
BridgeResult log_marginal_bridge(const DensityModel& model, const Draws& draws,
                                 const BridgeOptions& options = {});
BridgeResult log_marginal_bridge(const ModelSpec& spec, const Draws& draws, const ModelData& data,
                                 const BridgeOptions& options = {});

/// Everything compare() needs about one fitted model.
struct ModelFit {
  std::string name;
  LooResult loo;
  std::optional<BridgeResult> bridge;
  std::string dataset_id;  // fits with different ids cannot be compared
};

/// LOO plus bridge for one spec and its draws.
ModelFit evaluate_fit(const std::string& name, const ModelSpec& spec, const Draws& draws,
                      const ModelData& data, const std::string& dataset_id,
                      const BridgeOptions& options = {});

struct ComparisonRow {
  std::string name;
  double elpd = 0.0;
  double elpd_se = 0.0;
  double delta_elpd = 0.0;
  double delta_elpd_se = 0.0;
  std::optional<double> log_marginal;
  std::optional<double> delta_log_bf;  // log p(y | model) - log p(y | reference)
  int k_over_07 = 0;
  int degenerate = 0;
  bool conditional = false;
};

struct ComparisonReport {
  std::string reference;
  std::vector<ComparisonRow> rows;
};

/// Pairwise deltas of `a` against `b`: (elpd_a - elpd_b, its se, log BF of a over b).
struct Delta {
  double elpd = 0.0;
  double se = 0.0;
  std::optional<double> log_bf;
};
Delta delta(const ModelFit& a, const ModelFit& b);

/// Deltas against `reference`, or by default against the model with the
/// highest log marginal likelihood (highest elpd when some model has no
/// marginal likelihood). Throws std::invalid_argument on dataset mismatch.
ComparisonReport compare(const std::vector<ModelFit>& fits,
                         const std::optional<std::string>& reference = std::nullopt);

std::string comparison_csv(const ComparisonReport& report);
std::string comparison_text(const ComparisonReport& report);

/// Side-by-side layout: one row per model name, a (log BF, delta elpd) pair
/// of columns per study. Models missing from a study show "NA".
std::string comparison_synopsis(const std::vector<std::pair<std::string, ComparisonReport>>& studies);

}  // namespace phylocorr
