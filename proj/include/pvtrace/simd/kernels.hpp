// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense float32 kernels used by the language model inner loops.
//
// Every backend produces bit-identical results: reductions use eight
// independent lane accumulators (a virtual 256-bit register, zero padded at
// the tail) followed by a fixed pairwise tree, and no backend fuses
// multiply-add. The scalar backend is the reference; the vector backends
// are equivalence-tested against it.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace pvtrace::simd {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend backend);

struct AdamStep {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float bias_correction1;  // 1 - beta1^t
  float bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Backend backend;
  float (*dot)(const float* a, const float* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  // y += x
  void (*add)(const float* x, float* y, std::size_t n);
  // y *= alpha
  void (*scale)(float alpha, float* y, std::size_t n);
  void (*adam)(const AdamStep& step, const float* grad, float* param, float* m,
               float* v, std::size_t n);
};

// Backends compiled into this binary and supported by the running CPU.
std::vector<Backend> available_backends();

// nullptr when the backend is unavailable.
const KernelTable* table(Backend backend);

// Kernel table used by the library. Selected once from the CPU features;
// the PVTRACE_KERNELS environment variable ("scalar", "avx2", "neon")
// overrides the choice.
const KernelTable& active();

// Overrides the active backend. Returns false if it is unavailable.
bool force_backend(Backend backend);

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

// y[rows] = W[rows x cols] * x[cols]
void matvec(const float* w, const float* x, float* y, std::size_t rows,
            std::size_t cols);

// y[rows] = W * x + bias
void matvec_bias(const float* w, const float* bias, const float* x, float* y,
                 std::size_t rows, std::size_t cols);

// dx[cols] += W^T * dy[rows]
void matvec_transposed_acc(const float* w, const float* dy, float* dx,
                           std::size_t rows, std::size_t cols);

// G[rows x cols] += dy[rows] * x[cols]^T
void outer_acc(const float* dy, const float* x, float* g, std::size_t rows,
               std::size_t cols);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();
const KernelTable* neon_table();
}  // namespace detail

}  // namespace pvtrace::simd
