// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Compiled with -mavx2 (no -mfma). Only reached after a runtime CPU check.

#include "pvtrace/simd/kernels.hpp"

#if defined(PVTRACE_HAVE_AVX2)

#include <immintrin.h>

#include <cstdint>

namespace pvtrace::simd {
namespace {

inline __m256i tail_mask(std::size_t rem) {
  alignas(32) static const std::int32_t kMask[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                     0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kMask + 8 - rem));
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 p = _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_add_ps(acc, p);
  }
  if (i < n) {
    const __m256i mask = tail_mask(n - i);
    const __m256 p = _mm256_mul_ps(_mm256_maskload_ps(a + i, mask),
                                   _mm256_maskload_ps(b + i, mask));
    acc = _mm256_add_ps(acc, p);
  }
  const __m128 s = _mm_add_ps(_mm256_castps256_ps128(acc), _mm256_extractf128_ps(acc, 1));
  const __m128 t = _mm_add_ps(s, _mm_movehl_ps(s, s));
  const __m128 r = _mm_add_ss(t, _mm_shuffle_ps(t, t, 0x55));
  return _mm_cvtss_f32(r);
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 p = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), p));
  }
  for (; i < n; ++i) {
    const float p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void add_avx2(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] = y[i] + x[i];
}

void scale_avx2(float alpha, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), va));
  for (; i < n; ++i) y[i] = y[i] * alpha;
}

void adam_avx2(const AdamStep& s, const float* grad, float* param, float* m, float* v,
               std::size_t n) {
  const float omb1 = 1.f - s.beta1;
  const float omb2 = 1.f - s.beta2;
  const __m256 b1 = _mm256_set1_ps(s.beta1), b2 = _mm256_set1_ps(s.beta2);
  const __m256 c1 = _mm256_set1_ps(omb1), c2 = _mm256_set1_ps(omb2);
  const __m256 bc1 = _mm256_set1_ps(s.bias_correction1);
  const __m256 bc2 = _mm256_set1_ps(s.bias_correction2);
  const __m256 lr = _mm256_set1_ps(s.lr), eps = _mm256_set1_ps(s.eps);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 g = _mm256_loadu_ps(grad + i);
    const __m256 mi = _mm256_add_ps(_mm256_mul_ps(b1, _mm256_loadu_ps(m + i)), _mm256_mul_ps(c1, g));
    const __m256 vi = _mm256_add_ps(_mm256_mul_ps(b2, _mm256_loadu_ps(v + i)),
                                    _mm256_mul_ps(c2, _mm256_mul_ps(g, g)));
    _mm256_storeu_ps(m + i, mi);
    _mm256_storeu_ps(v + i, vi);
    const __m256 mhat = _mm256_div_ps(mi, bc1);
    const __m256 vhat = _mm256_div_ps(vi, bc2);
    const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), eps);
    const __m256 update = _mm256_div_ps(_mm256_mul_ps(lr, mhat), denom);
    _mm256_storeu_ps(param + i, _mm256_sub_ps(_mm256_loadu_ps(param + i), update));
  }
  if (i < n) detail::scalar_table().adam(s, grad + i, param + i, m + i, v + i, n - i);
}

}  // namespace

namespace detail {
const KernelTable* avx2_table() {
  static const KernelTable t{Backend::kAvx2, dot_avx2,   axpy_avx2,
                             add_avx2,       scale_avx2, adam_avx2};
  return &t;
}
}  // namespace detail

}  // namespace pvtrace::simd

#else

namespace pvtrace::simd::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace pvtrace::simd::detail

#endif
