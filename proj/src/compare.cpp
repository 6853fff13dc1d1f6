#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "phylocorr/compare.hpp"

namespace phylocorr {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, std::size_t n) {
  double m = -kInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == -kInf) return -kInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double log_sum_exp(const std::vector<double>& v) { return log_sum_exp(v.data(), v.size()); }

double lse2(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Chain-major unconstrained draws, one per row.
Eigen::MatrixXd unconstrained(const DensityModel& model, const Draws& draws) {
  if (draws.names != model.parameter_names())
    throw std::invalid_argument("draws do not match the model's parameters");
  const auto n = static_cast<Eigen::Index>(model.dim());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(draws.chains) * draws.iterations, n);
  std::vector<double> theta(model.dim());
  Eigen::Index row = 0;
  for (int c = 0; c < draws.chains; ++c)
    for (int t = 0; t < draws.iterations; ++t, ++row) {
      const std::vector<double> v = draws.draw(c, t);
      model.unconstrain(v, theta);
      for (Eigen::Index k = 0; k < n; ++k) out(row, k) = theta[static_cast<std::size_t>(k)];
    }
  return out;
}

double qgpd(double p, double k, double sigma) {
  if (k == 0.0) return -sigma * std::log1p(-p);
  return sigma * std::expm1(-k * std::log1p(-p)) / k;
}

}  // namespace

PointwiseLogLik pointwise_loglik(const Posterior& posterior, const Draws& draws) {
  const Eigen::MatrixXd theta = unconstrained(posterior, draws);
  PointwiseLogLik out;
  out.observations = posterior.data().taxa;
  // Ordinal models condition on latents; continuous family models condition
  // on family effects.
  out.conditional = posterior.spec().likelihood == Likelihood::OrdinalBinary ||
                    posterior.spec().dependency != Dependency::Pooled;
  const auto n = static_cast<Eigen::Index>(posterior.data().size());
  out.ll.resize(theta.rows(), n);
  std::vector<double> th(static_cast<std::size_t>(theta.cols()));
  for (Eigen::Index s = 0; s < theta.rows(); ++s) {
    for (Eigen::Index k = 0; k < theta.cols(); ++k) th[static_cast<std::size_t>(k)] = theta(s, k);
    const std::vector<double> p = posterior.pointwise_loglik(th);
    for (Eigen::Index i = 0; i < n; ++i) out.ll(s, i) = p[static_cast<std::size_t>(i)];
  }
  if (!out.ll.allFinite()) throw std::runtime_error("non-finite pointwise log-likelihood");
  return out;
}

PointwiseLogLik pointwise_loglik(const ModelSpec& spec, const Draws& draws, const ModelData& data) {
  return pointwise_loglik(Posterior(spec, data), draws);
}

std::pair<double, double> gpd_fit(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t N = x.size();
  const double prior = 3.0;
  const std::size_t M = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(N))));
  const double xstar = x[static_cast<std::size_t>(std::floor(static_cast<double>(N) / 4.0 + 0.5)) - 1];
  std::vector<double> theta(M), l_theta(M);
  for (std::size_t j = 0; j < M; ++j) {
    theta[j] = 1.0 / x[N - 1] +
               (1.0 - std::sqrt(static_cast<double>(M) / (static_cast<double>(j + 1) - 0.5))) / prior / xstar;
    // Profile log-likelihood.
    const double a = -theta[j];
    double k = 0.0;
    for (double xi : x) k += std::log1p(a * xi);
    k /= static_cast<double>(N);
    l_theta[j] = static_cast<double>(N) * (std::log(a / k) - k - 1.0);
  }
  const double lse = log_sum_exp(l_theta);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < M; ++j) theta_hat += theta[j] * std::exp(l_theta[j] - lse);
  double k = 0.0;
  for (double xi : x) k += std::log1p(-theta_hat * xi);
  k /= static_cast<double>(N);
  const double sigma = -k / theta_hat;
  // Shrink toward 0.5 with a weak prior worth 10 observations.
  k = k * static_cast<double>(N) / (static_cast<double>(N) + 10.0) + 10.0 * 0.5 / (static_cast<double>(N) + 10.0);
  if (std::isnan(k)) k = kInf;
  return {k, sigma};
}

PsisWeights psis_smooth(const std::vector<double>& log_ratios) {
  const std::size_t S = log_ratios.size();
  if (S < 100) throw std::invalid_argument("PSIS needs at least 100 draws");
  const std::size_t M = static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(S)));
  PsisWeights out;
  std::vector<double> lw = log_ratios;
  const double lw_max = *std::max_element(lw.begin(), lw.end());
  for (double& v : lw) v -= lw_max;

  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lw[a] < lw[b]; });
  const double tail_min = lw[order[S - M]];
  const double tail_max = lw[order[S - 1]];
  if (std::abs(tail_max - tail_min) < std::numeric_limits<double>::epsilon() / 100.0) {
    out.k = kInf;
    out.degenerate = true;
  } else {
    const double cutoff = lw[order[S - M - 1]];
    const double exp_cutoff = std::exp(cutoff);
    std::vector<double> exceed(M);
    for (std::size_t j = 0; j < M; ++j) exceed[j] = std::exp(lw[order[S - M + j]]) - exp_cutoff;
    const auto [k, sigma] = gpd_fit(exceed);
    out.k = k;
    if (std::isfinite(k)) {
      for (std::size_t j = 0; j < M; ++j) {
        const double p = (static_cast<double>(j + 1) - 0.5) / static_cast<double>(M);
        lw[order[S - M + j]] = std::log(qgpd(p, k, sigma) + exp_cutoff);
      }
    }
  }
  for (double& v : lw) v = std::min(v, 0.0);
  const double norm = log_sum_exp(lw);
  for (double& v : lw) v -= norm;
  out.log_weights = std::move(lw);
  return out;
}

LooResult psis_loo(const Eigen::MatrixXd& ll) {
  const auto S = static_cast<std::size_t>(ll.rows());
  const auto N = static_cast<std::size_t>(ll.cols());
  if (S < 100) throw std::invalid_argument("PSIS-LOO needs at least 100 draws");
  LooResult r;
  r.pointwise.resize(N);
  r.pareto_k.resize(N);
  std::vector<double> col(S), tmp(S);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t s = 0; s < S; ++s) col[s] = ll(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
    for (std::size_t s = 0; s < S; ++s) tmp[s] = -col[s];
    const PsisWeights w = psis_smooth(tmp);
    for (std::size_t s = 0; s < S; ++s) tmp[s] = w.log_weights[s] + col[s];
    r.pointwise[i] = log_sum_exp(tmp);
    r.pareto_k[i] = w.k;
    r.lpd += log_sum_exp(col) - std::log(static_cast<double>(S));
    if (w.degenerate) ++r.degenerate;
    else if (w.k <= 0.5) ++r.k_good;
    else if (w.k <= 0.7) ++r.k_ok;
    else if (w.k <= 1.0) ++r.k_bad;
    else ++r.k_very_bad;
  }
  r.elpd = std::accumulate(r.pointwise.begin(), r.pointwise.end(), 0.0);
  const double mean = r.elpd / static_cast<double>(N);
  double var = 0.0;
  for (double v : r.pointwise) var += (v - mean) * (v - mean);
  var = N > 1 ? var / static_cast<double>(N - 1) : 0.0;
  r.se = std::sqrt(static_cast<double>(N) * var);
  return r;
}

LooResult psis_loo(const PointwiseLogLik& ll) {
  LooResult r = psis_loo(ll.ll);
  r.conditional = ll.conditional;
  return r;
}

BridgeResult log_marginal_bridge(const DensityModel& model, const Draws& draws,
                                 const BridgeOptions& opt) {
  if (draws.chains < 2) throw std::invalid_argument("bridge sampling needs at least 2 chains");
  if (draws.iterations < 4) throw std::invalid_argument("bridge sampling needs at least 4 draws per chain");
  const Eigen::MatrixXd all = unconstrained(model, draws);
  const Eigen::Index d = all.cols();
  const int half = draws.iterations / 2;
  std::vector<Eigen::Index> fit_rows, bridge_rows;
  for (int c = 0; c < draws.chains; ++c)
    for (int t = 0; t < draws.iterations; ++t)
      (t < half ? fit_rows : bridge_rows).push_back(static_cast<Eigen::Index>(c) * draws.iterations + t);

  Eigen::MatrixXd fit(static_cast<Eigen::Index>(fit_rows.size()), d);
  for (std::size_t r = 0; r < fit_rows.size(); ++r) fit.row(static_cast<Eigen::Index>(r)) = all.row(fit_rows[r]);
  const Eigen::VectorXd mean = fit.colwise().mean();
  const Eigen::MatrixXd centered = fit.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(fit.rows() - 1);
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10 * cov.trace() / static_cast<double>(d);
    llt.compute(cov);
    if (llt.info() != Eigen::Success) throw BridgeError("proposal covariance is singular");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * 3.14159265358979323846) - 0.5 * log_det;
  auto log_g = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x - mean);
    return log_norm - 0.5 * z.squaredNorm();
  };

  const std::size_t n1 = bridge_rows.size();
  const std::size_t n2 = n1;
  std::vector<double> l1(n1), l2(n2);
  std::vector<double> th(static_cast<std::size_t>(d));
  auto log_q = [&](const Eigen::VectorXd& x) {
    for (Eigen::Index k = 0; k < d; ++k) th[static_cast<std::size_t>(k)] = x[k];
    return model.log_density(th);
  };
  for (std::size_t i = 0; i < n1; ++i) {
    const Eigen::VectorXd x = all.row(bridge_rows[i]).transpose();
    l1[i] = log_q(x) - log_g(x);
  }
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd z(d);
  for (std::size_t i = 0; i < n2; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) z[k] = nd(rng);
    const Eigen::VectorXd x = mean + L * z;
    l2[i] = log_q(x) - log_g(x);
    if (std::isnan(l2[i])) l2[i] = -kInf;
  }

  // Work relative to the median of l1 to keep exponents in range.
  std::vector<double> sorted = l1;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n1 / 2), sorted.end());
  const double lstar = sorted[n1 / 2];
  const double log_s1 = std::log(static_cast<double>(n1) / static_cast<double>(n1 + n2));
  const double log_s2 = std::log(static_cast<double>(n2) / static_cast<double>(n1 + n2));
  BridgeResult res;
  res.n_fit = fit_rows.size();
  res.n_bridge = n1;
  // The Meng-Wong fixed point is the root of F(x) = x + log mean_i 1/(s1 q/g + s2 e^x)
  // - log mean_j (q/g)/(s1 q/g + s2 e^x), x = log r, which is increasing in x.
  // Solved by bisection: the plain fixed-point iteration stalls when overlap is poor.
  std::vector<double> num(n2), den(n1);
  auto F = [&](double x) {
    for (std::size_t j = 0; j < n2; ++j) {
      const double a = l2[j] - lstar;
      num[j] = a == -kInf ? -kInf : a - lse2(log_s1 + a, log_s2 + x);
    }
    for (std::size_t i = 0; i < n1; ++i) den[i] = -lse2(log_s1 + (l1[i] - lstar), log_s2 + x);
    return x + log_sum_exp(den) - std::log(static_cast<double>(n1)) -
           (log_sum_exp(num) - std::log(static_cast<double>(n2)));
  };
  auto budget = [&] {
    if (++res.iterations > opt.max_iterations)
      throw BridgeError("bridge iteration did not converge in " + std::to_string(opt.max_iterations) +
                        " iterations");
  };
  budget();
  const double f0 = F(0.0);
  if (std::isnan(f0)) throw BridgeError("bridge iteration produced a non-finite value");
  double lo = 0.0, hi = 0.0, prev = 0.0;
  for (double step = 1.0; f0 != 0.0; step *= 2.0) {
    if (step > 1e6) throw BridgeError("bridge equation has no root (proposal misses the support)");
    budget();
    const double x = f0 > 0.0 ? -step : step;
    const double fx = F(x);
    if (std::isnan(fx)) throw BridgeError("bridge iteration produced a non-finite value");
    if (fx == 0.0 || (fx > 0.0) != (f0 > 0.0)) {
      lo = std::min(prev, x);
      hi = std::max(prev, x);
      break;
    }
    prev = x;
  }
  double log_r = 0.0;
  if (f0 != 0.0) {
    while (true) {
      log_r = 0.5 * (lo + hi);
      if (hi - lo < opt.tolerance) break;
      budget();
      const double fm = F(log_r);
      if (std::isnan(fm)) throw BridgeError("bridge iteration produced a non-finite value");
      if (fm == 0.0) break;
      (fm > 0.0 ? hi : lo) = log_r;
    }
  }
  res.log_marginal = log_r + lstar;

  const double lse_w = log_sum_exp(l2);
  double sum_sq = 0.0;
  for (double v : l2) sum_sq += std::exp(2.0 * (v - lse_w));
  res.proposal_ess_fraction = sum_sq > 0.0 ? 1.0 / sum_sq / static_cast<double>(n2) : 0.0;
  return res;
}

BridgeResult log_marginal_bridge(const ModelSpec& spec, const Draws& draws, const ModelData& data,
                                 const BridgeOptions& options) {
  return log_marginal_bridge(Posterior(spec, data), draws, options);
}

ModelFit evaluate_fit(const std::string& name, const ModelSpec& spec, const Draws& draws,
                      const ModelData& data, const std::string& dataset_id,
                      const BridgeOptions& options) {
  const Posterior post(spec, data);
  ModelFit f;
  f.name = name;
  f.dataset_id = dataset_id;
  f.loo = psis_loo(pointwise_loglik(post, draws));
  f.bridge = log_marginal_bridge(post, draws, options);
  return f;
}

Delta delta(const ModelFit& a, const ModelFit& b) {
  if (a.dataset_id != b.dataset_id)
    throw std::invalid_argument("models " + a.name + " and " + b.name + " were fitted to different data");
  if (a.loo.pointwise.size() != b.loo.pointwise.size())
    throw std::invalid_argument("models " + a.name + " and " + b.name + " differ in observation count");
  Delta d;
  const std::size_t n = a.loo.pointwise.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a.loo.pointwise[i] - b.loo.pointwise[i];
  d.elpd = a.loo.elpd - b.loo.elpd;
  if (n > 1) {
    const double m = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
    double v = 0.0;
    for (double x : diff) v += (x - m) * (x - m);
    d.se = std::sqrt(static_cast<double>(n) * v / static_cast<double>(n - 1));
  }
  if (a.bridge && b.bridge) d.log_bf = a.bridge->log_marginal - b.bridge->log_marginal;
  return d;
}

ComparisonReport compare(const std::vector<ModelFit>& fits, const std::optional<std::string>& reference) {
  if (fits.empty()) throw std::invalid_argument("nothing to compare");
  for (const auto& f : fits)
    if (f.dataset_id != fits.front().dataset_id)
      throw std::invalid_argument("model " + f.name + " was fitted to a different dataset");
  std::size_t ref = 0;
  if (reference) {
    const auto it = std::find_if(fits.begin(), fits.end(), [&](const ModelFit& f) { return f.name == *reference; });
    if (it == fits.end()) throw std::invalid_argument("no model named " + *reference);
    ref = static_cast<std::size_t>(it - fits.begin());
  } else {
    const bool all_ml = std::all_of(fits.begin(), fits.end(), [](const ModelFit& f) { return f.bridge.has_value(); });
    for (std::size_t i = 1; i < fits.size(); ++i) {
      const double vi = all_ml ? fits[i].bridge->log_marginal : fits[i].loo.elpd;
      const double vr = all_ml ? fits[ref].bridge->log_marginal : fits[ref].loo.elpd;
      if (vi > vr) ref = i;
    }
  }
  ComparisonReport rep;
  rep.reference = fits[ref].name;
  for (const auto& f : fits) {
    const Delta d = delta(f, fits[ref]);
    ComparisonRow row;
    row.name = f.name;
    row.elpd = f.loo.elpd;
    row.elpd_se = f.loo.se;
    row.delta_elpd = d.elpd;
    row.delta_elpd_se = d.se;
    if (f.bridge) row.log_marginal = f.bridge->log_marginal;
    row.delta_log_bf = d.log_bf;
    row.k_over_07 = f.loo.k_bad + f.loo.k_very_bad;
    row.degenerate = f.loo.degenerate;
    row.conditional = f.loo.conditional;
    rep.rows.push_back(row);
  }
  return rep;
}

namespace {

std::string num(std::optional<double> v, int prec) {
  if (!v || std::isnan(*v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, *v);
  return buf;
}

std::string table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t k = 0; k < row.size(); ++k) width[k] = std::max(width[k], row[k].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k == 0) os << row[k] << std::string(width[k] - row[k].size(), ' ');
      else os << "  " << std::string(width[k] - row[k].size(), ' ') << row[k];
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace

std::string comparison_csv(const ComparisonReport& r) {
  std::ostringstream os;
  os << "model,elpd,elpd_se,delta_elpd,delta_elpd_se,log_marginal,delta_log_bf,pareto_k_over_0.7,"
        "degenerate_k,conditional_loglik,reference\n";
  for (const auto& row : r.rows) {
    os << row.name << ',' << num(row.elpd, 6) << ',' << num(row.elpd_se, 6) << ','
       << num(row.delta_elpd, 6) << ',' << num(row.delta_elpd_se, 6) << ',' << num(row.log_marginal, 6)
       << ',' << num(row.delta_log_bf, 6) << ',' << row.k_over_07 << ',' << row.degenerate << ','
       << (row.conditional ? "true" : "false") << ',' << (row.name == r.reference ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string comparison_text(const ComparisonReport& r) {
  std::vector<std::vector<std::string>> cells{
      {"Model", "Bayes factor (log)", "delta elpd", "se", "elpd", "log p(y)", "k>0.7"}};
  bool caveat = false;
  for (const auto& row : r.rows) {
    cells.push_back({row.name, num(row.delta_log_bf, 0), num(row.delta_elpd, 0), num(row.delta_elpd_se, 1),
                     num(row.elpd, 1), num(row.log_marginal, 1), std::to_string(row.k_over_07)});
    caveat = caveat || row.conditional;
  }
  std::string out = table(cells);
  out += "reference: " + r.reference + "\n";
  if (caveat) out += "note: pointwise log-likelihoods condition on sampled latent values\n";
  return out;
}

std::string comparison_synopsis(const std::vector<std::pair<std::string, ComparisonReport>>& studies) {
  std::vector<std::string> models;
  for (const auto& [study, rep] : studies)
    for (const auto& row : rep.rows)
      if (std::find(models.begin(), models.end(), row.name) == models.end()) models.push_back(row.name);
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> h1{"Model"}, h2{""};
  for (const auto& [study, rep] : studies) {
    h1.push_back(study);
    h1.push_back("");
    h2.push_back("Bayes factor (log)");
    h2.push_back("delta elpd");
  }
  cells.push_back(h1);
  cells.push_back(h2);
  for (const auto& m : models) {
    std::vector<std::string> row{m};
    for (const auto& [study, rep] : studies) {
      const auto it = std::find_if(rep.rows.begin(), rep.rows.end(),
                                   [&](const ComparisonRow& r) { return r.name == m; });
      row.push_back(it == rep.rows.end() ? "NA" : num(it->delta_log_bf, 0));
      row.push_back(it == rep.rows.end() ? "NA" : num(it->delta_elpd, 0));
    }
    cells.push_back(row);
  }
  return table(cells);
}

}  // namespace phylocorr
