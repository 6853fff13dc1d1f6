#pragma once

#include <cstddef>

namespace phylocorr::simd::detail {

void interval_logit_scalar(const double* z, const double* lo, const double* hi, double* ll,
                           double* dlo, double* dhi, std::size_t n);
void scaled_decay_scalar(const double* t, double scale, double rate, double* out,
                         std::size_t n);
double log_sum_exp_scalar(const double* x, std::size_t n);

#if defined(PHYLOCORR_HAVE_AVX2)
void interval_logit_avx2(const double* z, const double* lo, const double* hi, double* ll,
                         double* dlo, double* dhi, std::size_t n);
void scaled_decay_avx2(const double* t, double scale, double rate, double* out,
                       std::size_t n);
double log_sum_exp_avx2(const double* x, std::size_t n);
#endif

}  // namespace phylocorr::simd::detail
