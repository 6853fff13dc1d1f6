#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "phylocorr/tree.hpp"

namespace phylocorr {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TraitKind { Ordinal, Binary, Continuous };

std::string_view to_string(TraitKind k);
TraitKind trait_kind_from_string(std::string_view s);

enum class Transform { None, LogStandardize };

struct ColumnSchema {
  std::string name;
  TraitKind kind = TraitKind::Continuous;
  std::vector<std::string> levels;  // ordered labels; ordinal: K, binary: 2
  Transform transform = Transform::None;
};

/// Declares which CSV columns hold taxon ids, family names and traits.
/// Read from a JSON file:
///   {"taxon_column": "taxon", "family_column": "family",
///    "traits": [{"name": "affix", "kind": "ordinal", "levels": [...]}, ...]}
struct Schema {
  std::string taxon_column = "taxon";
  std::string family_column = "family";
  std::vector<ColumnSchema> traits;
};

Schema parse_schema(std::string_view json_text);
Schema load_schema(const std::string& path);
std::string schema_to_json(const Schema& s);

/// Ordinal values are 1..K, binary values 1..2 (index into `levels`).
struct TraitColumn {
  std::string name;
  TraitKind kind = TraitKind::Continuous;
  std::vector<std::string> levels;
  std::vector<std::optional<double>> values;

  std::size_t size() const { return values.size(); }
  bool complete() const;
};

struct TraitTable {
  std::vector<std::string> taxa;
  std::vector<std::string> families;  // isolates carry "isolate:<taxon>"
  std::vector<TraitColumn> columns;

  std::size_t rows() const { return taxa.size(); }
  const TraitColumn& column(std::string_view name) const;
  bool row_complete(std::size_t i) const;
  std::size_t complete_rows() const;

  /// Rows in the given order (indices into this table).
  TraitTable select(const std::vector<std::size_t>& rows) const;
};

TraitTable parse_table(std::string_view csv_text, const Schema& schema);
TraitTable load_table(const std::string& path, const Schema& schema);

/// Writes taxon, family and trait columns; categorical traits use labels.
std::string table_to_csv(const TraitTable& table);

struct Standardization {
  double mean = 0.0;
  double sd = 1.0;

  double forward(double raw) const;  // (ln raw - mean) / sd
  double inverse(double z) const;    // exp(mean + sd * z)
};

/// ln then z-score with the sample (n - 1) standard deviation. Missing
/// entries stay missing and do not contribute to the statistics.
std::pair<TraitColumn, Standardization> log_standardize(const TraitColumn& column,
                                                        const std::vector<std::string>& taxa);

/// Applies each column's declared transform in place of the raw values.
TraitTable apply_transforms(const TraitTable& table, const Schema& schema,
                            std::vector<Standardization>* fitted = nullptr);

TraitTable complete_cases(const TraitTable& table,
                          std::vector<std::string>* dropped = nullptr);

struct Alignment {
  TraitTable table;
  Tree tree;
  std::vector<std::string> dropped_from_table;
  std::vector<std::string> dropped_from_tree;
};

/// Restricts table and tree to the taxa present in both with complete rows.
/// Table rows come out in the pruned tree's tip order.
Alignment align(const TraitTable& table, const Tree& tree);

struct CrossTab {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXi counts;

  long total() const { return counts.cast<long>().sum(); }
};

CrossTab crosstab(const TraitColumn& ordinal, const TraitColumn& binary);
std::string crosstab_csv(const CrossTab& ct);

}  // namespace phylocorr
