#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "phylocorr/model.hpp"
#include "phylocorr/sampler.hpp"
#include "phylocorr/traits.hpp"

namespace phylocorr::cli {

enum ExitCode { kOk = 0, kValidation = 1, kSampling = 2, kIo = 3 };

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a fit needs. Serialized as the run's config.json; feeding that
/// file back through --config reproduces the run.
struct RunConfig {
  std::string data, schema, tree;  // tree optional
  std::string model = "vanilla";   // vanilla | hier | phylo
  std::string likelihood;          // ordbin | cont; empty: from the schema
  int chains = 4;
  int warmup = 2000;
  int iters = 2000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_depth = 10;
  std::string out;
  bool emit_plots = false;

  void validate() const;  // throws ValidationError
};

std::string run_config_to_json(const RunConfig& c);
/// Unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text);

/// Stable 64-bit FNV-1a, hex encoded.
std::string content_hash(const std::string& bytes);

struct PreparedData {
  TraitTable table;  // aligned, transformed
  Schema schema;     // of `table` (transforms already applied)
  std::optional<Tree> tree;
  bool ultrametricized = false;
  std::vector<std::string> dropped_from_table, dropped_from_tree;
  std::string dataset_hash;
};

/// Load, align (or drop incomplete rows without a tree), ultrametricize,
/// then apply the schema's transforms.
PreparedData prepare_data(const RunConfig& c);

/// Entry point shared by the binary and the tests. args[0] is the program name.
int cli_main(const std::vector<std::string>& args);

}  // namespace phylocorr::cli
