#pragma once

#include <string>
#include <vector>

#include "phylocorr/asr.hpp"
#include "phylocorr/traits.hpp"
#include "phylocorr/tree.hpp"

namespace phylocorr::cli {

struct ScatterPoint {
  std::string taxon;
  double x = 0.0, y = 0.0;
  std::string family;
};

struct Trend {
  std::string group;  // "all" or a family name
  int n = 0;
  double slope = 0.0, intercept = 0.0;
};

/// Least-squares lines for all points and for every family with at least
/// `min_size` members (families in first-seen order).
std::vector<Trend> trend_lines(const std::vector<ScatterPoint>& pts, int min_size = 5);

std::string scatter_svg(const std::vector<ScatterPoint>& pts, const std::vector<Trend>& trends,
                        const std::string& xlabel, const std::string& ylabel);
std::string crosstab_svg(const CrossTab& ct);
/// Phylogram with every node coloured by its reconstructed trait-1 mean.
std::string tree_svg(const Tree& tree, const std::vector<NodeReconstruction>& recs);

}  // namespace phylocorr::cli
