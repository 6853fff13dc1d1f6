#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "phylocorr/density.hpp"

namespace phylocorr {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SamplerConfig {
  int chains = 4;
  int warmup = 2000;
  int iterations = 2000;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 1;
  double init_radius = 2.0;  // initial values ~ uniform(-r, r), unconstrained
  int init_tries = 100;
  /// Worker threads; 0 means PHYLOCORR_THREADS or the hardware count.
  int threads = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Posterior draws on the constrained scale plus per-iteration sampler
/// diagnostics, stored as [chain][iteration][column] with the diagnostic
/// columns after the parameters.
struct Draws {
  std::vector<std::string> names;
  std::vector<std::string> diag_names;
  int chains = 0;
  int iterations = 0;
  std::vector<double> values;

  // Adaptation results per chain (not part of the binary payload).
  std::vector<double> step_size;
  std::vector<std::vector<double>> inv_metric;

  std::size_t columns() const { return names.size() + diag_names.size(); }
  std::size_t params() const { return names.size(); }
  double at(int chain, int iter, std::size_t col) const {
    return values[(static_cast<std::size_t>(chain) * static_cast<std::size_t>(iterations) +
                   static_cast<std::size_t>(iter)) *
                      columns() +
                  col];
  }
  double& at(int chain, int iter, std::size_t col) {
    return values[(static_cast<std::size_t>(chain) * static_cast<std::size_t>(iterations) +
                   static_cast<std::size_t>(iter)) *
                      columns() +
                  col];
  }
  /// Column index by name across parameters and diagnostics; throws when absent.
  std::size_t index_of(const std::string& name) const;
  std::vector<double> chain_column(int chain, std::size_t col) const;
  /// All chains concatenated.
  std::vector<double> column(std::size_t col) const;
  /// One draw's parameter values.
  std::vector<double> draw(int chain, int iter) const;

  long divergent_count() const;
  long max_depth_hits(int max_depth) const;
};

/// Diagnostic column names, in storage order.
const std::vector<std::string>& diagnostic_names();

/// Runs independent NUTS chains in parallel. Chain c's random stream depends
/// only on (seed, c), so results are bit-identical for a given config
/// regardless of thread count.
Draws sample(const DensityModel& model, const SamplerConfig& config);

struct ModelSpec;
struct ModelData;
/// Builds the posterior for `spec` over `data` (tree inside `data`) and samples it.
Draws sample(const ModelSpec& spec, const ModelData& data, const SamplerConfig& config);

/// Hamiltonian -log p(q) + |p|^2/2 (unit metric) at the start and after
/// each of `steps` leapfrog steps from (q, p).
std::vector<double> leapfrog_energies(const DensityModel& model, std::vector<double> q,
                                      std::vector<double> p, double step, int steps);

/// Seed for chain `chain` derived from the run seed with SplitMix64.
std::uint64_t chain_seed(std::uint64_t seed, int chain);

/// Binary layout: "PHYD", u32 version (1), u32 chains, u32 iterations,
/// u32 parameter count, u32 diagnostic count, then each column name as u32
/// byte length + UTF-8 bytes, then chains*iterations*columns little-endian
/// f64 values ordered [chain][iteration][column].
std::string draws_to_binary(const Draws& d);
Draws draws_from_binary(std::string_view bytes);
void write_draws_binary(const std::string& path, const Draws& d);
Draws read_draws_binary(const std::string& path);

/// One row per draw: chain, iteration, parameters, diagnostics.
std::string draws_to_csv(const Draws& d);

}  // namespace phylocorr
