// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <string>

#include "pvtrace/simd/kernels.hpp"

namespace pvtrace::simd {
namespace {

bool cpu_has_avx2() {
#if defined(PVTRACE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("PVTRACE_KERNELS")) {
    const std::string want(env);
    for (Backend b : available_backends()) {
      if (backend_name(b) == want) return table(b);
    }
  }
  if (const KernelTable* t = table(Backend::kAvx2)) return t;
  if (const KernelTable* t = table(Backend::kNeon)) return t;
  return &detail::scalar_table();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

std::vector<Backend> available_backends() {
  std::vector<Backend> out{Backend::kScalar};
  if (detail::avx2_table() != nullptr && cpu_has_avx2()) out.push_back(Backend::kAvx2);
  if (detail::neon_table() != nullptr) out.push_back(Backend::kNeon);
  return out;
}

const KernelTable* table(Backend backend) {
  switch (backend) {
    case Backend::kScalar: return &detail::scalar_table();
    case Backend::kAvx2: return cpu_has_avx2() ? detail::avx2_table() : nullptr;
    case Backend::kNeon: return detail::neon_table();
  }
  return nullptr;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

bool force_backend(Backend backend) {
  const KernelTable* t = table(backend);
  if (t == nullptr) return false;
  active_slot().store(t, std::memory_order_relaxed);
  return true;
}

void matvec(const float* w, const float* x, float* y, std::size_t rows, std::size_t cols) {
  const auto dot_fn = active().dot;
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_fn(w + r * cols, x, cols);
}

void matvec_bias(const float* w, const float* bias, const float* x, float* y, std::size_t rows,
                 std::size_t cols) {
  const auto dot_fn = active().dot;
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_fn(w + r * cols, x, cols) + bias[r];
}

void matvec_transposed_acc(const float* w, const float* dy, float* dx, std::size_t rows,
                           std::size_t cols) {
  const auto axpy_fn = active().axpy;
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] != 0.f) axpy_fn(dy[r], w + r * cols, dx, cols);
  }
}

void outer_acc(const float* dy, const float* x, float* g, std::size_t rows, std::size_t cols) {
  const auto axpy_fn = active().axpy;
  for (std::size_t r = 0; r < rows; ++r) {
    if (dy[r] != 0.f) axpy_fn(dy[r], x, g + r * cols, cols);
  }
}

}  // namespace pvtrace::simd
