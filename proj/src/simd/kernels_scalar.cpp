// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "pvtrace/simd/kernels.hpp"

namespace pvtrace::simd {
namespace {

constexpr std::size_t kLanes = 8;

// Lane j accumulates elements j, j+8, j+16, ...; lanes past the tail see
// 0*0. The final reduction mirrors a 256-bit register: fold the high half
// onto the low half, then pairs, then the last two.
float dot_scalar(const float* a, const float* b, std::size_t n) {
  float acc[kLanes] = {0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f, 0.f};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      const float p = a[i + j] * b[i + j];
      acc[j] = acc[j] + p;
    }
  }
  if (i < n) {
    for (std::size_t j = 0; j < kLanes; ++j) {
      const float p = (i + j < n) ? a[i + j] * b[i + j] : 0.f * 0.f;
      acc[j] = acc[j] + p;
    }
  }
  float s[4];
  for (std::size_t j = 0; j < 4; ++j) s[j] = acc[j] + acc[j + 4];
  const float t0 = s[0] + s[2];
  const float t1 = s[1] + s[3];
  return t0 + t1;
}

void axpy_scalar(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const float p = alpha * x[i];
    y[i] = y[i] + p;
  }
}

void add_scalar(const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + x[i];
}

void scale_scalar(float alpha, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] * alpha;
}

void adam_scalar(const AdamStep& s, const float* grad, float* param, float* m,
                 float* v, std::size_t n) {
  const float omb1 = 1.f - s.beta1;
  const float omb2 = 1.f - s.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const float g = grad[i];
    const float mi = s.beta1 * m[i] + omb1 * g;
    const float vi = s.beta2 * v[i] + omb2 * (g * g);
    m[i] = mi;
    v[i] = vi;
    const float mhat = mi / s.bias_correction1;
    const float vhat = vi / s.bias_correction2;
    const float denom = std::sqrt(vhat) + s.eps;
    const float update = (s.lr * mhat) / denom;
    param[i] = param[i] - update;
  }
}

}  // namespace

namespace detail {
const KernelTable& scalar_table() {
  static const KernelTable t{Backend::kScalar, dot_scalar,   axpy_scalar,
                             add_scalar,       scale_scalar, adam_scalar};
  return t;
}
}  // namespace detail

}  // namespace pvtrace::simd
