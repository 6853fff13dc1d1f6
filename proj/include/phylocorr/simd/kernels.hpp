#pragma once

// Data-parallel inner loops used by the model densities, the covariance
// builders and the leave-one-out code. Every kernel has a scalar reference
// implementation; vector variants are selected once at runtime and must agree
// with the reference to within a few ulps (see tests/unit/test_kernels.cpp).

#include <cstddef>
#include <span>
#include <string_view>

namespace phylocorr::simd {

/// Elementwise interval-logit terms.
///
/// For each i, with a = z[i] - lo[i] and b = z[i] - hi[i]:
///   ll[i]  = log sigmoid(a) + log sigmoid(-b)
///   dlo[i] = d ll / d lo = -(1 - sigmoid(a))
///   dhi[i] = d ll / d hi =  sigmoid(b)
/// lo = -inf or hi = +inf drops the corresponding term. The derivative with
/// respect to z is -(dlo[i] + dhi[i]).
///
/// This one form covers both links: an ordered-logistic category k uses
/// (lo, hi) = (c[k-1], c[k]) without the gap term, and a Bernoulli-logit
/// outcome uses (0, +inf) for success and (-inf, 0) for failure.
using IntervalLogitFn = void (*)(const double* z, const double* lo, const double* hi,
                                 double* ll, double* dlo, double* dhi, std::size_t n);

/// out[i] = scale * exp(-rate * t[i])
using ScaledDecayFn = void (*)(const double* t, double scale, double rate, double* out,
                               std::size_t n);

/// log(sum_i exp(x[i])); returns -inf for an empty range.
using LogSumExpFn = double (*)(const double* x, std::size_t n);

struct KernelTable {
  std::string_view isa;
  IntervalLogitFn interval_logit;
  ScaledDecayFn scaled_decay;
  LogSumExpFn log_sum_exp;
};

/// Portable reference kernels.
const KernelTable& scalar_kernels();

/// AVX2+FMA kernels, or nullptr when they were not compiled in or the CPU
/// lacks the instructions.
const KernelTable* avx2_kernels();

/// Kernel table chosen at first use. PHYLOCORR_SIMD=scalar forces the
/// reference path; otherwise the widest supported variant wins.
const KernelTable& active_kernels();

// Span conveniences over the active table.

void interval_logit(std::span<const double> z, std::span<const double> lo,
                    std::span<const double> hi, std::span<double> ll, std::span<double> dlo,
                    std::span<double> dhi);

void scaled_decay(std::span<const double> t, double scale, double rate, std::span<double> out);

double log_sum_exp(std::span<const double> x);

}  // namespace phylocorr::simd
