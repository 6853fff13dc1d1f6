#include "phylocorr/traits.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "phylocorr/csv.hpp"

namespace phylocorr {

using nlohmann::json;

std::string_view to_string(TraitKind k) {
  switch (k) {
    case TraitKind::Ordinal: return "ordinal";
    case TraitKind::Binary: return "binary";
    case TraitKind::Continuous: return "continuous";
  }
  return "?";
}

TraitKind trait_kind_from_string(std::string_view s) {
  if (s == "ordinal") return TraitKind::Ordinal;
  if (s == "binary") return TraitKind::Binary;
  if (s == "continuous") return TraitKind::Continuous;
  throw DataError("unknown trait kind '" + std::string(s) + "'");
}

Schema parse_schema(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("schema is not valid JSON: ") + e.what());
  }
  Schema s;
  s.taxon_column = j.value("taxon_column", s.taxon_column);
  s.family_column = j.value("family_column", s.family_column);
  if (!j.contains("traits") || !j["traits"].is_array() || j["traits"].empty())
    throw DataError("schema must list at least one trait under \"traits\"");
  for (const auto& t : j["traits"]) {
    ColumnSchema c;
    c.name = t.at("name").get<std::string>();
    c.kind = trait_kind_from_string(t.at("kind").get<std::string>());
    if (t.contains("levels")) c.levels = t["levels"].get<std::vector<std::string>>();
    const std::string tr = t.value("transform", std::string("none"));
    if (tr == "log_standardize") {
      c.transform = Transform::LogStandardize;
    } else if (tr != "none") {
      throw DataError("unknown transform '" + tr + "' for column " + c.name);
    }
    if (c.kind == TraitKind::Binary && c.levels.size() != 2)
      throw DataError("binary column " + c.name + " needs exactly two levels");
    if (c.kind == TraitKind::Ordinal && c.levels.size() < 2)
      throw DataError("ordinal column " + c.name + " needs at least two levels");
    s.traits.push_back(std::move(c));
  }
  return s;
}

Schema load_schema(const std::string& path) { return parse_schema(read_text_file(path)); }

std::string schema_to_json(const Schema& s) {
  json j;
  j["taxon_column"] = s.taxon_column;
  j["family_column"] = s.family_column;
  j["traits"] = json::array();
  for (const auto& c : s.traits) {
    json t{{"name", c.name}, {"kind", std::string(to_string(c.kind))}};
    if (!c.levels.empty()) t["levels"] = c.levels;
    if (c.transform == Transform::LogStandardize) t["transform"] = "log_standardize";
    j["traits"].push_back(t);
  }
  return j.dump(2);
}

bool TraitColumn::complete() const {
  return std::all_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
}

const TraitColumn& TraitTable::column(std::string_view name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  throw DataError("no trait column named '" + std::string(name) + "'");
}

bool TraitTable::row_complete(std::size_t i) const {
  return std::all_of(columns.begin(), columns.end(),
                     [i](const TraitColumn& c) { return c.values[i].has_value(); });
}

std::size_t TraitTable::complete_rows() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows(); ++i) n += row_complete(i) ? 1 : 0;
  return n;
}

TraitTable TraitTable::select(const std::vector<std::size_t>& rows) const {
  TraitTable out;
  for (std::size_t r : rows) {
    out.taxa.push_back(taxa.at(r));
    out.families.push_back(families.at(r));
  }
  for (const auto& c : columns) {
    TraitColumn nc{c.name, c.kind, c.levels, {}};
    for (std::size_t r : rows) nc.values.push_back(c.values.at(r));
    out.columns.push_back(std::move(nc));
  }
  return out;
}

namespace {

bool is_missing(std::string_view s) {
  return s.empty() || s == "NA" || s == "?" || s == "NaN" || s == "na";
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

double parse_value(const ColumnSchema& c, const std::string& raw, std::size_t row) {
  auto err = [&](const std::string& why) {
    return DataError("row " + std::to_string(row) + ", column '" + c.name + "': " + why);
  };
  if (c.kind == TraitKind::Continuous) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc() || p != raw.data() + raw.size() || !std::isfinite(v))
      throw err("'" + raw + "' is not a finite number");
    return v;
  }
  for (std::size_t k = 0; k < c.levels.size(); ++k)
    if (c.levels[k] == raw) return static_cast<double>(k + 1);
  // Integer codes 1..K are accepted as well as labels.
  int code = 0;
  auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), code);
  if (ec == std::errc() && p == raw.data() + raw.size() && code >= 1 &&
      code <= static_cast<int>(c.levels.size()))
    return static_cast<double>(code);
  throw err("unknown " + std::string(to_string(c.kind)) + " level '" + raw + "'");
}

}  // namespace

TraitTable parse_table(std::string_view csv_text, const Schema& schema) {
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) throw DataError("trait table is empty");
  const CsvRow& header = rows.front();

  auto find_col = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (trim(header[i]) == name) return i;
    throw DataError("column '" + name + "' is not in the table header");
  };
  const std::size_t taxon_col = find_col(schema.taxon_column);
  const std::size_t family_col = find_col(schema.family_column);
  std::vector<std::size_t> trait_cols;
  for (const auto& c : schema.traits) trait_cols.push_back(find_col(c.name));

  TraitTable t;
  for (const auto& c : schema.traits) t.columns.push_back(TraitColumn{c.name, c.kind, c.levels, {}});

  std::unordered_set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.size() != header.size())
      throw DataError("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                      " fields, header has " + std::to_string(header.size()));
    std::string taxon = trim(row[taxon_col]);
    if (taxon.empty()) throw DataError("row " + std::to_string(r) + " has an empty taxon id");
    if (!seen.insert(taxon).second) throw DataError("duplicate taxon id '" + taxon + "'");
    std::string family = trim(row[family_col]);
    if (family.empty()) family = "isolate:" + taxon;
    t.taxa.push_back(std::move(taxon));
    t.families.push_back(std::move(family));
    for (std::size_t k = 0; k < schema.traits.size(); ++k) {
      const std::string raw = trim(row[trait_cols[k]]);
      if (is_missing(raw)) {
        t.columns[k].values.emplace_back();
      } else {
        t.columns[k].values.emplace_back(parse_value(schema.traits[k], raw, r));
      }
    }
  }
  if (t.rows() == 0) throw DataError("trait table has a header but no rows");
  return t;
}

TraitTable load_table(const std::string& path, const Schema& schema) {
  return parse_table(read_text_file(path), schema);
}

std::string table_to_csv(const TraitTable& table) {
  std::string out;
  CsvRow header{"taxon", "family"};
  for (const auto& c : table.columns) header.push_back(c.name);
  out += format_csv_row(header);
  char buf[64];
  for (std::size_t i = 0; i < table.rows(); ++i) {
    CsvRow row{table.taxa[i], table.families[i]};
    for (const auto& c : table.columns) {
      const auto& v = c.values[i];
      if (!v) {
        row.emplace_back("NA");
      } else if (c.kind == TraitKind::Continuous) {
        std::snprintf(buf, sizeof buf, "%.17g", *v);
        row.emplace_back(buf);
      } else {
        row.push_back(c.levels.at(static_cast<std::size_t>(*v) - 1));
      }
    }
    out += format_csv_row(row);
  }
  return out;
}

double Standardization::forward(double raw) const { return (std::log(raw) - mean) / sd; }
double Standardization::inverse(double z) const { return std::exp(mean + sd * z); }

std::pair<TraitColumn, Standardization> log_standardize(const TraitColumn& column,
                                                        const std::vector<std::string>& taxa) {
  if (column.kind != TraitKind::Continuous)
    throw DataError("log_standardize needs a continuous column, got " + column.name);
  std::vector<double> logs;
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (!column.values[i]) continue;
    const double v = *column.values[i];
    if (!(v > 0.0))
      throw DataError("column '" + column.name + "' has non-positive value " +
                      std::to_string(v) + " for taxon '" + (i < taxa.size() ? taxa[i] : "?") +
                      "'");
    logs.push_back(std::log(v));
  }
  if (logs.size() < 2) throw DataError("column '" + column.name + "' has fewer than two values");
  Standardization st;
  st.mean = std::accumulate(logs.begin(), logs.end(), 0.0) / static_cast<double>(logs.size());
  double ss = 0.0;
  for (double l : logs) ss += (l - st.mean) * (l - st.mean);
  st.sd = std::sqrt(ss / static_cast<double>(logs.size() - 1));
  if (!(st.sd > 0.0)) throw DataError("column '" + column.name + "' is constant (sd = 0)");

  TraitColumn out{column.name, column.kind, column.levels, {}};
  out.values.reserve(column.size());
  for (const auto& v : column.values) {
    if (v) {
      out.values.emplace_back((std::log(*v) - st.mean) / st.sd);
    } else {
      out.values.emplace_back();
    }
  }
  return {std::move(out), st};
}

TraitTable apply_transforms(const TraitTable& table, const Schema& schema,
                            std::vector<Standardization>* fitted) {
  TraitTable out = table;
  if (fitted) fitted->clear();
  for (auto& col : out.columns) {
    const auto it = std::find_if(schema.traits.begin(), schema.traits.end(),
                                 [&](const ColumnSchema& c) { return c.name == col.name; });
    if (it == schema.traits.end() || it->transform == Transform::None) {
      if (fitted) fitted->push_back(Standardization{});
      continue;
    }
    auto [z, st] = log_standardize(col, table.taxa);
    col = std::move(z);
    if (fitted) fitted->push_back(st);
  }
  return out;
}

TraitTable complete_cases(const TraitTable& table, std::vector<std::string>* dropped) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    if (table.row_complete(i)) {
      keep.push_back(i);
    } else if (dropped) {
      dropped->push_back(table.taxa[i]);
    }
  }
  return table.select(keep);
}

Alignment align(const TraitTable& table, const Tree& tree) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < table.rows(); ++i)
    if (table.row_complete(i)) row_of.emplace(table.taxa[i], i);

  Alignment out;
  std::set<std::string> keep;
  for (int t : tree.tips()) {
    const std::string& lab = tree.node(t).label;
    if (row_of.count(lab)) {
      keep.insert(lab);
    } else {
      out.dropped_from_tree.push_back(lab);
    }
  }
  for (std::size_t i = 0; i < table.rows(); ++i)
    if (!keep.count(table.taxa[i])) out.dropped_from_table.push_back(table.taxa[i]);

  if (keep.size() < 3)
    throw DataError("table and tree share only " + std::to_string(keep.size()) +
                    " complete taxa; at least 3 are needed");

  out.tree = keep.size() == tree.tip_count() ? tree : prune(tree, keep);
  std::vector<std::size_t> order;
  for (int t : out.tree.tips()) order.push_back(row_of.at(out.tree.node(t).label));
  out.table = table.select(order);
  return out;
}

CrossTab crosstab(const TraitColumn& ordinal, const TraitColumn& binary) {
  if (ordinal.size() != binary.size())
    throw DataError("crosstab columns differ in length (" + std::to_string(ordinal.size()) +
                    " vs " + std::to_string(binary.size()) + ")");
  if (binary.kind != TraitKind::Binary) throw DataError("crosstab column b must be binary");
  if (ordinal.kind == TraitKind::Continuous) throw DataError("crosstab column a must be categorical");
  CrossTab ct;
  ct.row_labels = ordinal.levels;
  ct.col_labels = binary.levels;
  ct.counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(ordinal.levels.size()), 2);
  for (std::size_t i = 0; i < ordinal.size(); ++i) {
    if (!ordinal.values[i] || !binary.values[i])
      throw DataError("crosstab needs complete columns; row " + std::to_string(i) + " is missing");
    ct.counts(static_cast<Eigen::Index>(*ordinal.values[i]) - 1,
              static_cast<Eigen::Index>(*binary.values[i]) - 1) += 1;
  }
  return ct;
}

std::string crosstab_csv(const CrossTab& ct) {
  std::string out;
  CsvRow header{"level"};
  header.insert(header.end(), ct.col_labels.begin(), ct.col_labels.end());
  out += format_csv_row(header);
  for (Eigen::Index r = 0; r < ct.counts.rows(); ++r) {
    CsvRow row{ct.row_labels[static_cast<std::size_t>(r)]};
    for (Eigen::Index c = 0; c < ct.counts.cols(); ++c) row.push_back(std::to_string(ct.counts(r, c)));
    out += format_csv_row(row);
  }
  return out;
}

}  // namespace phylocorr
