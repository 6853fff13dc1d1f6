#include <cassert>
#include <cstdlib>
#include <string_view>

#include "kernels_internal.hpp"
#include "phylocorr/simd/kernels.hpp"

namespace phylocorr::simd {

namespace {

const KernelTable kScalar{"scalar", &detail::interval_logit_scalar, &detail::scaled_decay_scalar,
                          &detail::log_sum_exp_scalar};

#if defined(PHYLOCORR_HAVE_AVX2)
const KernelTable kAvx2{"avx2", &detail::interval_logit_avx2, &detail::scaled_decay_avx2,
                        &detail::log_sum_exp_avx2};

bool cpu_has_avx2() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const KernelTable& choose() {
  if (const char* env = std::getenv("PHYLOCORR_SIMD")) {
    if (std::string_view(env) == "scalar") return kScalar;
  }
  if (const KernelTable* v = avx2_kernels()) return *v;
  return kScalar;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable* avx2_kernels() {
#if defined(PHYLOCORR_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? &kAvx2 : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active_kernels() {
  static const KernelTable& table = choose();
  return table;
}

void interval_logit(std::span<const double> z, std::span<const double> lo,
                    std::span<const double> hi, std::span<double> ll, std::span<double> dlo,
                    std::span<double> dhi) {
  const std::size_t n = z.size();
  assert(lo.size() == n && hi.size() == n && ll.size() == n && dlo.size() == n &&
         dhi.size() == n);
  active_kernels().interval_logit(z.data(), lo.data(), hi.data(), ll.data(), dlo.data(),
                                  dhi.data(), n);
}

void scaled_decay(std::span<const double> t, double scale, double rate, std::span<double> out) {
  assert(out.size() == t.size());
  active_kernels().scaled_decay(t.data(), scale, rate, out.data(), t.size());
}

double log_sum_exp(std::span<const double> x) {
  return active_kernels().log_sum_exp(x.data(), x.size());
}

}  // namespace phylocorr::simd
