#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels_internal.hpp"

namespace phylocorr::simd::detail {

namespace {

// log(1 + exp(-|x|)) and exp(-|x|), shared by the sigmoid terms.
inline void softplus_parts(double x, double& u, double& lp) {
  u = std::exp(-std::abs(x));
  lp = std::log1p(u);
}

}  // namespace

void interval_logit_scalar(const double* z, const double* lo, const double* hi, double* ll,
                           double* dlo, double* dhi, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z[i] - lo[i];
    const double b = z[i] - hi[i];

    // log sigmoid(a) = -(log1p(exp(-|a|)) + max(-a, 0))
    double ua, lpa;
    softplus_parts(a, ua, lpa);
    const double log_sig_a = -(lpa + std::max(-a, 0.0));
    // 1 - sigmoid(a) = sigmoid(-a)
    const double sig_neg_a = a >= 0.0 ? ua / (1.0 + ua) : 1.0 / (1.0 + ua);

    double ub, lpb;
    softplus_parts(b, ub, lpb);
    const double log_sig_neg_b = -(lpb + std::max(b, 0.0));
    const double sig_b = b >= 0.0 ? 1.0 / (1.0 + ub) : ub / (1.0 + ub);

    ll[i] = log_sig_a + log_sig_neg_b;
    dlo[i] = -sig_neg_a;
    dhi[i] = sig_b;
  }
}

void scaled_decay_scalar(const double* t, double scale, double rate, double* out,
                         std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = scale * std::exp(-rate * t[i]);
}

double log_sum_exp_scalar(const double* x, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x, x + n);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace phylocorr::simd::detail
