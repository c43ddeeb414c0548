// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/simd/kernels.hpp"

#if defined(__aarch64__) || defined(__ARM_NEON)

#include <arm_neon.h>

namespace pvtrace::simd {
namespace {

// Two q-registers stand in for the eight reference lanes: lo = 0..3, hi = 4..7.
float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t lo = vdupq_n_f32(0.f);
  float32x4_t hi = vdupq_n_f32(0.f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    lo = vaddq_f32(lo, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    hi = vaddq_f32(hi, vmulq_f32(vld1q_f32(a + i + 4), vld1q_f32(b + i + 4)));
  }
  if (i < n) {
    float ta[8] = {0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f};
    float tb[8] = {0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f};
    for (std::size_t j = 0; i + j < n; ++j) {
      ta[j] = a[i + j];
      tb[j] = b[i + j];
    }
    lo = vaddq_f32(lo, vmulq_f32(vld1q_f32(ta), vld1q_f32(tb)));
    hi = vaddq_f32(hi, vmulq_f32(vld1q_f32(ta + 4), vld1q_f32(tb + 4)));
  }
  const float32x4_t s = vaddq_f32(lo, hi);
  const float32x2_t t = vadd_f32(vget_low_f32(s), vget_high_f32(s));
  return vget_lane_f32(t, 0) + vget_lane_f32(t, 1);
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vmulq_f32(va, vld1q_f32(x + i))));
  for (; i < n; ++i) {
    const float p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void add_neon(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] = y[i] + x[i];
}

void scale_neon(float alpha, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_n_f32(vld1q_f32(y + i), alpha));
  for (; i < n; ++i) y[i] = y[i] * alpha;
}

}  // namespace

namespace detail {
const KernelTable* neon_table() {
  // Adam stays on the scalar path; vsqrtq/vdivq exist only on AArch64.
  static const KernelTable t{Backend::kNeon, dot_neon, axpy_neon, add_neon, scale_neon,
                             scalar_table().adam};
  return &t;
}
}  // namespace detail

}  // namespace pvtrace::simd

#else

namespace pvtrace::simd::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace pvtrace::simd::detail

#endif
