#pragma once

#include <string>
#include <vector>

#include "phylocorr/sampler.hpp"

namespace phylocorr {

/// NaN marks a value that is not available (Rhat for a single chain or a
/// constant parameter). n_eff is capped at S * log10(S) for S total draws.
struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double se_mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double n_eff = 0.0;
  double rhat = 0.0;
};

/// One row per parameter column (diagnostic columns are skipped).
std::vector<SummaryRow> summarize(const Draws& draws);
/// Rows for the named parameters only, in the given order.
std::vector<SummaryRow> summarize(const Draws& draws, const std::vector<std::string>& names);

/// True iff 0 lies outside the closed interval [q025, q975].
bool credible_interval_excludes_zero(const SummaryRow& row);

/// chains[c][t]. Split-chain, rank-normalized Rhat: the larger of the bulk
/// and folded values. NaN for fewer than 2 chains, fewer than 4 draws per
/// chain, or zero variance.
double split_rhat(const std::vector<std::vector<double>>& chains);
/// Classic split-chain Rhat on the raw values (no rank normalization).
double split_rhat_basic(const std::vector<std::vector<double>>& chains);
/// Bulk ESS on rank-normalized split chains.
double ess_bulk(const std::vector<std::vector<double>>& chains);
/// ESS of the raw values, chains not split. Autocorrelations from the FFT;
/// summed over pairs of lags until a pair sum turns negative, then made
/// monotone.
double ess_basic(const std::vector<std::vector<double>>& chains);

/// Type-7 (linear interpolation) quantile of unsorted values.
double quantile(std::vector<double> values, double p);

/// Standard normal quantile function.
double normal_quantile(double p);

std::string summary_csv(const std::vector<SummaryRow>& rows);
/// Aligned columns: Parameter, Mean, SE_Mean, SD, 2.5%, 97.5%, n_eff, Rhat.
std::string summary_text(const std::vector<SummaryRow>& rows);

}  // namespace phylocorr
