#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "phylocorr/diagnostics.hpp"

namespace phylocorr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
using Chains = std::vector<std::vector<double>>;

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

bool constant(const Chains& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains)
    for (double x : c)
      if (x != first) return false;
  return true;
}

Chains split(const Chains& chains) {
  Chains out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

// Normal scores of the pooled ranks (ties averaged), (r - 3/8) / (S + 1/4).
Chains rank_normalize(const Chains& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t t = 0; t < chains[c].size(); ++t)
      all.emplace_back(chains[c][t], c * chains[c].size() + t);
  std::sort(all.begin(), all.end());
  const double S = static_cast<double>(all.size());
  std::vector<double> score(all.size());
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      score[all[k].second] = normal_quantile((rank - 0.375) / (S + 0.25));
    i = j;
  }
  Chains out = chains;
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t t = 0; t < chains[c].size(); ++t) out[c][t] = score[c * chains[c].size() + t];
  return out;
}

double rhat_unsplit(const Chains& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean_of(c));
    vars.push_back(var_of(c));
  }
  const double W = mean_of(vars);
  const double B = n * var_of(means);
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

// Biased autocovariance at lags 0..n-1 via zero-padded FFT.
std::vector<double> autocovariance(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  const double mu = mean_of(x);
  std::vector<double> padded(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = x[i] - mu;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& f : freq) f = std::complex<double>(std::norm(f), 0.0);
  std::vector<double> back;
  fft.inv(back, freq);
  std::vector<double> acov(n);
  for (std::size_t k = 0; k < n; ++k) acov[k] = back[k] / static_cast<double>(n);
  return acov;
}

double ess_of(const Chains& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  if (n < 4) return kNaN;
  if (constant(chains)) return kNaN;
  std::vector<std::vector<double>> acov;
  std::vector<double> means, chain_var;
  for (const auto& c : chains) {
    acov.push_back(autocovariance(c));
    means.push_back(mean_of(c));
    chain_var.push_back(acov.back()[0] * static_cast<double>(n) / static_cast<double>(n - 1));
  }
  const double mean_var = mean_of(chain_var);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += var_of(means);
  auto rho_at = [&](std::size_t lag) {
    double a = 0.0;
    for (const auto& ac : acov) a += ac[lag];
    return 1.0 - (mean_var - a / static_cast<double>(m)) / var_plus;
  };

  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double even = 1.0;
  double odd = rho_at(1);
  rho[1] = odd;
  std::size_t t = 0;
  while (t + 5 < n && std::isfinite(even + odd) && even + odd > 0.0) {
    t += 2;
    even = rho_at(t);
    odd = rho_at(t + 1);
    if (even + odd >= 0.0) {
      rho[t] = even;
      rho[t + 1] = odd;
    }
  }
  const std::size_t max_t = t;
  if (even > 0.0) rho[max_t] = even;
  // Initial monotone sequence over the pair sums.
  for (std::size_t k = 2; k + 2 <= max_t; k += 2) {
    if (rho[k] + rho[k + 1] > rho[k - 2] + rho[k - 1]) {
      rho[k] = 0.5 * (rho[k - 2] + rho[k - 1]);
      rho[k + 1] = rho[k];
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0 + rho[max_t];
  for (std::size_t k = 0; k < max_t; ++k) tau += 2.0 * rho[k];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

bool usable(const Chains& chains) {
  if (chains.empty() || chains.front().empty()) return false;
  for (const auto& c : chains)
    if (c.size() != chains.front().size()) throw std::invalid_argument("chains differ in length");
  return true;
}

}  // namespace

double normal_quantile(double p) {
  // Wichura's AS241 (PPND16).
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return kNaN;
  }
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
               1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
               0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
               0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
               7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double split_rhat_basic(const Chains& chains) {
  if (!usable(chains) || chains.size() < 2 || chains.front().size() < 4) return kNaN;
  if (constant(chains)) return kNaN;
  return rhat_unsplit(split(chains));
}

double split_rhat(const Chains& chains) {
  if (!usable(chains) || chains.size() < 2 || chains.front().size() < 4) return kNaN;
  if (constant(chains)) return kNaN;
  const Chains s = split(chains);
  const double bulk = rhat_unsplit(rank_normalize(s));
  const double med = quantile([&] {
    std::vector<double> all;
    for (const auto& c : s) all.insert(all.end(), c.begin(), c.end());
    return all;
  }(), 0.5);
  Chains folded = s;
  for (auto& c : folded)
    for (double& x : c) x = std::abs(x - med);
  const double tail = rhat_unsplit(rank_normalize(folded));
  if (std::isnan(tail)) return bulk;
  return std::max(bulk, tail);
}

double ess_bulk(const Chains& chains) {
  if (!usable(chains) || chains.front().size() < 4) return kNaN;
  if (constant(chains)) return kNaN;
  return ess_of(rank_normalize(split(chains)));
}

double ess_basic(const Chains& chains) {
  if (!usable(chains)) return kNaN;
  return ess_of(chains);
}

std::vector<SummaryRow> summarize(const Draws& d, const std::vector<std::string>& names) {
  std::vector<SummaryRow> rows;
  for (const auto& name : names) {
    const std::size_t col = d.index_of(name);
    Chains chains;
    for (int c = 0; c < d.chains; ++c) chains.push_back(d.chain_column(c, col));
    const std::vector<double> all = d.column(col);
    SummaryRow r;
    r.name = name;
    r.mean = mean_of(all);
    r.sd = std::sqrt(var_of(all));
    r.q025 = quantile(all, 0.025);
    r.q975 = quantile(all, 0.975);
    r.n_eff = ess_bulk(chains);
    r.rhat = split_rhat(chains);
    r.se_mean = std::isnan(r.n_eff) ? (r.sd == 0.0 ? 0.0 : kNaN) : r.sd / std::sqrt(r.n_eff);
    rows.push_back(r);
  }
  return rows;
}

std::vector<SummaryRow> summarize(const Draws& d) { return summarize(d, d.names); }

bool credible_interval_excludes_zero(const SummaryRow& row) {
  return row.q025 > 0.0 || row.q975 < 0.0;
}

namespace {

std::string fmt(double v, int prec) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "parameter,mean,se_mean,sd,q2.5,q97.5,n_eff,rhat\n";
  auto num = [&](double v) -> std::ostream& {
    if (std::isnan(v)) return os << "NA";
    return os << v;
  };
  for (const auto& r : rows) {
    os << csv_field(r.name) << ',';
    num(r.mean) << ',';
    num(r.se_mean) << ',';
    num(r.sd) << ',';
    num(r.q025) << ',';
    num(r.q975) << ',';
    num(r.n_eff) << ',';
    num(r.rhat) << '\n';
  }
  return os.str();
}

std::string summary_text(const std::vector<SummaryRow>& rows) {
  const std::vector<std::string> head{"Parameter", "Mean", "SE_Mean", "SD", "2.5%", "97.5%", "n_eff", "Rhat"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& r : rows)
    cells.push_back({r.name, fmt(r.mean, 3), fmt(r.se_mean, 3), fmt(r.sd, 3), fmt(r.q025, 3),
                     fmt(r.q975, 3), fmt(r.n_eff, 0), fmt(r.rhat, 2)});
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k == 0) {
        os << row[k] << std::string(width[k] - row[k].size(), ' ');
      } else {
        os << "  " << std::string(width[k] - row[k].size(), ' ') << row[k];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace phylocorr
