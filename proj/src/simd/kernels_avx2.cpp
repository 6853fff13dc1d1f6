// AVX2 + FMA variants. Compiled with -mavx2 -mfma; only reached through the
// dispatcher after a CPUID check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels_internal.hpp"

namespace phylocorr::simd::detail {

namespace {

// Cephes-style exp: range reduction by ln 2 split into two constants, then a
// (2,3) Pade approximant on [-ln2/2, ln2/2]. Inputs below -708.39 flush to 0,
// inputs above 709 return +inf, NaN propagates.
inline __m256d exp256(__m256d x) {
  const __m256d hi = _mm256_set1_pd(709.0);
  const __m256d lo = _mm256_set1_pd(-708.3964185322641);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);

  const __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);
  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(fx, c1, xc);
  r = _mm256_fnmadd_pd(fx, c2, r);
  const __m256d rr = _mm256_mul_pd(r, r);

  __m256d p = _mm256_set1_pd(1.26177193074810590878e-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1));
  p = _mm256_mul_pd(p, r);

  __m256d q = _mm256_set1_pd(3.00198505138664455042e-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009e0));

  const __m256d one = _mm256_set1_pd(1.0);
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, one);

  // 2^n via the exponent field; n is in [-1022, 1023] after clamping.
  const __m128i n32 = _mm256_cvtpd_epi32(fx);
  __m256i n64 = _mm256_cvtepi32_epi64(n32);
  n64 = _mm256_add_epi64(n64, _mm256_set1_epi64x(1023));
  n64 = _mm256_slli_epi64(n64, 52);
  e = _mm256_mul_pd(e, _mm256_castsi256_pd(n64));

  const __m256d under = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d over = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  const __m256d nan = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  e = _mm256_andnot_pd(under, e);
  e = _mm256_blendv_pd(e, _mm256_set1_pd(std::numeric_limits<double>::infinity()), over);
  e = _mm256_blendv_pd(e, x, nan);
  return e;
}

// Cephes log for positive normal inputs: frexp, fold the mantissa into
// [sqrt(1/2), sqrt(2)), then a rational approximation of log(1 + x).
inline __m256d log256(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i half_bits = _mm256_set1_epi64x(0x3FE0000000000000LL);
  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_bits));

  // Biased exponent -> double via the 2^52 trick, then frexp convention.
  const __m256i ebits = _mm256_srli_epi64(bits, 52);
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(ebits, magic)),
                            _mm256_set1_pd(4503599627370496.0));
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d small = _mm256_cmp_pd(m, _mm256_set1_pd(0.70710678118654752440), _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, one));
  m = _mm256_add_pd(_mm256_sub_pd(m, one), _mm256_and_pd(small, m));

  const __m256d z = _mm256_mul_pd(m, m);

  __m256d p = _mm256_set1_pd(1.01875663804580931796e-4);
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(4.97494994976747001425e-1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(4.70579119878881725854e0));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(1.44989225341610930846e1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(1.79368678507819816313e1));
  p = _mm256_fmadd_pd(p, m, _mm256_set1_pd(7.70838733755885391666e0));

  __m256d q = _mm256_add_pd(m, _mm256_set1_pd(1.12873587189167450590e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(4.52279145837532221105e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(8.29875266912776603211e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(7.11544750618563894466e1));
  q = _mm256_fmadd_pd(q, m, _mm256_set1_pd(2.31251620126765340583e1));

  __m256d y = _mm256_mul_pd(_mm256_mul_pd(m, z), _mm256_div_pd(p, q));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, y);
  __m256d r = _mm256_add_pd(m, y);
  r = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), r);
  return r;
}

// log1p(u) for u in [0, 1], corrected for the rounding of 1 + u.
inline __m256d log1p_unit256(__m256d u) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d w = _mm256_add_pd(one, u);
  const __m256d err = _mm256_sub_pd(_mm256_sub_pd(w, one), u);
  return _mm256_sub_pd(log256(w), _mm256_div_pd(err, w));
}

inline __m256d abs256(__m256d x) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), x);
}

}  // namespace

void interval_logit_avx2(const double* z, const double* lo, const double* hi, double* ll,
                         double* dlo, double* dhi, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d zv = _mm256_loadu_pd(z + i);
    const __m256d a = _mm256_sub_pd(zv, _mm256_loadu_pd(lo + i));
    const __m256d b = _mm256_sub_pd(zv, _mm256_loadu_pd(hi + i));

    const __m256d ua = exp256(_mm256_sub_pd(zero, abs256(a)));
    const __m256d lpa = log1p_unit256(ua);
    const __m256d log_sig_a =
        _mm256_sub_pd(zero, _mm256_add_pd(lpa, _mm256_max_pd(_mm256_sub_pd(zero, a), zero)));
    const __m256d inv_a = _mm256_div_pd(one, _mm256_add_pd(one, ua));
    const __m256d a_pos = _mm256_cmp_pd(a, zero, _CMP_GE_OQ);
    const __m256d sig_neg_a = _mm256_blendv_pd(inv_a, _mm256_mul_pd(ua, inv_a), a_pos);

    const __m256d ub = exp256(_mm256_sub_pd(zero, abs256(b)));
    const __m256d lpb = log1p_unit256(ub);
    const __m256d log_sig_neg_b =
        _mm256_sub_pd(zero, _mm256_add_pd(lpb, _mm256_max_pd(b, zero)));
    const __m256d inv_b = _mm256_div_pd(one, _mm256_add_pd(one, ub));
    const __m256d b_pos = _mm256_cmp_pd(b, zero, _CMP_GE_OQ);
    const __m256d sig_b = _mm256_blendv_pd(_mm256_mul_pd(ub, inv_b), inv_b, b_pos);

    _mm256_storeu_pd(ll + i, _mm256_add_pd(log_sig_a, log_sig_neg_b));
    _mm256_storeu_pd(dlo + i, _mm256_sub_pd(zero, sig_neg_a));
    _mm256_storeu_pd(dhi + i, sig_b);
  }
  if (i < n) interval_logit_scalar(z + i, lo + i, hi + i, ll + i, dlo + i, dhi + i, n - i);
}

void scaled_decay_avx2(const double* t, double scale, double rate, double* out,
                       std::size_t n) {
  const __m256d s = _mm256_set1_pd(scale);
  const __m256d neg_rate = _mm256_set1_pd(-rate);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp256(_mm256_mul_pd(neg_rate, _mm256_loadu_pd(t + i)));
    _mm256_storeu_pd(out + i, _mm256_mul_pd(s, e));
  }
  if (i < n) scaled_decay_scalar(t + i, scale, rate, out + i, n - i);
}

double log_sum_exp_avx2(const double* x, std::size_t n) {
  if (n == 0) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x, x + n);
  if (!std::isfinite(m)) return m;
  const __m256d mv = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, exp256(_mm256_sub_pd(_mm256_loadu_pd(x + i), mv)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

}  // namespace phylocorr::simd::detail
