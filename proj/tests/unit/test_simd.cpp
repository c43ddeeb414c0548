// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0
//
// Every compiled backend must agree with the scalar kernels bit for bit.

#include <array>
#include <bit>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "pvtrace/simd/kernels.hpp"
#include "pvtrace/util/rng.hpp"

using namespace pvtrace;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
  return v;
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("scalar backend is always available") {
  auto backs = simd::available_backends();
  REQUIRE(!backs.empty());
  CHECK(backs.front() == simd::Backend::kScalar);
  CHECK(simd::table(simd::Backend::kScalar) != nullptr);
  MESSAGE("active backend: " << simd::backend_name(simd::active().backend));
}

TEST_CASE("vector kernels are bit-identical to scalar") {
  const auto& ref = simd::detail::scalar_table();
  for (auto backend : simd::available_backends()) {
    const auto* t = simd::table(backend);
    REQUIRE(t != nullptr);
    CAPTURE(simd::backend_name(backend));
    Rng rng(11);
    for (std::size_t n = 0; n <= 67; ++n) {
      CAPTURE(n);
      const auto a = random_vec(n, rng), b = random_vec(n, rng, 3.0);
      CHECK(std::bit_cast<std::uint32_t>(t->dot(a.data(), b.data(), n)) ==
            std::bit_cast<std::uint32_t>(ref.dot(a.data(), b.data(), n)));

      auto y1 = b, y2 = b;
      t->axpy(0.37f, a.data(), y1.data(), n);
      ref.axpy(0.37f, a.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));

      t->add(a.data(), y1.data(), n);
      ref.add(a.data(), y2.data(), n);
      CHECK(same_bits(y1, y2));

      t->scale(-1.25f, y1.data(), n);
      ref.scale(-1.25f, y2.data(), n);
      CHECK(same_bits(y1, y2));

      auto p1 = a, p2 = a, m1 = b, m2 = b;
      std::vector<float> v1(n, 0.5f), v2(n, 0.5f);
      const simd::AdamStep step{1e-2f, 0.9f, 0.999f, 1e-8f, 0.271f, 0.00299f};
      t->adam(step, y1.data(), p1.data(), m1.data(), v1.data(), n);
      ref.adam(step, y2.data(), p2.data(), m2.data(), v2.data(), n);
      CHECK(same_bits(p1, p2));
      CHECK(same_bits(m1, m2));
      CHECK(same_bits(v1, v2));
    }
  }
}

TEST_CASE("matvec helpers agree with a naive loop and across backends") {
  Rng rng(5);
  const std::size_t rows = 13, cols = 21;
  const auto w = random_vec(rows * cols, rng), x = random_vec(cols, rng), bias = random_vec(rows, rng);
  const auto dy = random_vec(rows, rng);

  std::vector<std::array<std::vector<float>, 4>> outs;
  for (auto backend : simd::available_backends()) {
    REQUIRE(simd::force_backend(backend));
    std::vector<float> y(rows), yb(rows), dx(cols, 0.f), g(rows * cols, 0.f);
    simd::matvec(w.data(), x.data(), y.data(), rows, cols);
    simd::matvec_bias(w.data(), bias.data(), x.data(), yb.data(), rows, cols);
    simd::matvec_transposed_acc(w.data(), dy.data(), dx.data(), rows, cols);
    simd::outer_acc(dy.data(), x.data(), g.data(), rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < cols; ++c) s += double(w[r * cols + c]) * x[c];
      CHECK(y[r] == doctest::Approx(s).epsilon(1e-5));
      CHECK(yb[r] == doctest::Approx(s + bias[r]).epsilon(1e-5));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0;
      for (std::size_t r = 0; r < rows; ++r) s += double(w[r * cols + c]) * dy[r];
      CHECK(dx[c] == doctest::Approx(s).epsilon(1e-5));
    }
    CHECK(g[5 * cols + 7] == doctest::Approx(double(dy[5]) * x[7]));
    outs.push_back({y, yb, dx, g});
  }
  for (const auto& o : outs)
    for (std::size_t k = 0; k < o.size(); ++k) CHECK(same_bits(o[k], outs.front()[k]));
  simd::force_backend(simd::available_backends().back());
}
