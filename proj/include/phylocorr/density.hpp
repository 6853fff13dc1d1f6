#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace phylocorr {

/// Target density over an unconstrained real vector, as seen by the sampler
/// and the marginal-likelihood code. Implementations must be safe to call
/// concurrently from several threads.
class DensityModel {
 public:
  virtual ~DensityModel() = default;

  virtual std::size_t dim() const = 0;

  /// Non-finite results mark points outside the support.
  virtual double log_density(std::span<const double> theta) const = 0;

  /// Returns the log density and writes its gradient into `grad`.
  virtual double log_density_gradient(std::span<const double> theta,
                                      std::span<double> grad) const = 0;

  /// Names of the constrained values written by constrain().
  virtual std::vector<std::string> parameter_names() const;

  /// Maps an unconstrained point to reported (constrained) values. Identity
  /// by default.
  virtual void constrain(std::span<const double> theta, std::span<double> out) const;

  /// Inverse of constrain().
  virtual void unconstrain(std::span<const double> values, std::span<double> theta) const;
};

}  // namespace phylocorr
