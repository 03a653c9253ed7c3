#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sshd/kernels.hpp"
#include "sshd/rng.hpp"

using namespace sshd;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(lo, hi));
  return v;
}

template <typename T>
bool bit_equal(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

// Odd lengths exercise the SIMD tail path.
const size_t kLens[] = {1, 3, 7, 8, 9, 16, 31, 64, 257, 1000};

template <typename T>
void check_elementwise_bit_equal() {
  const auto& s = kern::scalar_ops<T>();
  const auto& v = kern::avx2_ops<T>();
  Rng rng(42);
  for (size_t n : kLens) {
    auto a = random_vec<T>(rng, n);
    auto b = random_vec<T>(rng, n);
    auto base = random_vec<T>(rng, n);
    const T alpha = static_cast<T>(rng.uniform(-2.0, 2.0));

    auto y0 = base, y1 = base;
    s.axpy(n, alpha, a.data(), y0.data());
    v.axpy(n, alpha, a.data(), y1.data());
    CHECK(bit_equal(y0, y1));

    std::vector<T> o0(n), o1(n);
    s.scale(n, alpha, a.data(), o0.data());
    v.scale(n, alpha, a.data(), o1.data());
    CHECK(bit_equal(o0, o1));

    s.add(n, a.data(), b.data(), o0.data());
    v.add(n, a.data(), b.data(), o1.data());
    CHECK(bit_equal(o0, o1));

    s.mul(n, a.data(), b.data(), o0.data());
    v.mul(n, a.data(), b.data(), o1.data());
    CHECK(bit_equal(o0, o1));

    y0 = base; y1 = base;
    s.mul_acc(n, a.data(), b.data(), y0.data());
    v.mul_acc(n, a.data(), b.data(), y1.data());
    CHECK(bit_equal(y0, y1));

    s.relu(n, a.data(), o0.data());
    v.relu(n, a.data(), o1.data());
    CHECK(bit_equal(o0, o1));

    y0 = base; y1 = base;
    s.relu_bwd(n, a.data(), b.data(), y0.data());
    v.relu_bwd(n, a.data(), b.data(), y1.data());
    CHECK(bit_equal(y0, y1));
  }
}

}  // namespace

TEST_CASE("element-parallel kernels: AVX2 bit-identical to scalar reference") {
  if (!kern::cpu_has_avx2()) return;  // nothing to compare on this host
  check_elementwise_bit_equal<float>();
  check_elementwise_bit_equal<double>();
}

TEST_CASE("dot kernel: AVX2 matches scalar within reduction-order tolerance") {
  if (!kern::cpu_has_avx2()) return;
  const auto& sf = kern::scalar_ops<float>();
  const auto& vf = kern::avx2_ops<float>();
  const auto& sd = kern::scalar_ops<double>();
  const auto& vd = kern::avx2_ops<double>();
  Rng rng(7);
  for (size_t n : kLens) {
    auto af = random_vec<float>(rng, n);
    auto bf = random_vec<float>(rng, n);
    const double r0 = sf.dot(n, af.data(), bf.data());
    const double r1 = vf.dot(n, af.data(), bf.data());
    CHECK(std::abs(r0 - r1) <= 1e-6 * std::max(1.0, std::abs(r0)) * static_cast<double>(n));

    auto ad = random_vec<double>(rng, n);
    auto bd = random_vec<double>(rng, n);
    const double d0 = sd.dot(n, ad.data(), bd.data());
    const double d1 = vd.dot(n, ad.data(), bd.data());
    CHECK(std::abs(d0 - d1) <= 1e-13 * std::max(1.0, std::abs(d0)) * static_cast<double>(n));
  }
}

namespace {

template <typename T>
void check_conv3x3_kernels() {
  const auto& s = kern::scalar_ops<T>();
  const auto& v = kern::avx2_ops<T>();
  Rng rng(99);
  for (size_t h : {1, 2, 3, 7}) {
    for (size_t n : {1, 2, 5, 8, 9, 31, 64, 65}) {
      auto src = random_vec<T>(rng, h * n);
      auto dy = random_vec<T>(rng, h * n);
      auto w = random_vec<T>(rng, 9);
      auto base = random_vec<T>(rng, h * n);

      auto d0 = base, d1 = base;
      s.conv3x3_plane(h, n, src.data(), w.data(), d0.data());
      v.conv3x3_plane(h, n, src.data(), w.data(), d1.data());
      CHECK(bit_equal(d0, d1));  // element-parallel: exact

      std::vector<T> a0(9, T(0)), a1(9, T(0));
      s.conv3x3_plane_dw(h, n, src.data(), dy.data(), a0.data());
      v.conv3x3_plane_dw(h, n, src.data(), dy.data(), a1.data());
      for (int k = 0; k < 9; ++k) {
        const double tol = (std::is_same_v<T, float> ? 1e-5 : 1e-13) *
                           std::max(1.0, std::abs(static_cast<double>(a0[k]))) *
                           static_cast<double>(h * n);
        CHECK(std::abs(static_cast<double>(a0[k]) - static_cast<double>(a1[k])) <= tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("conv3x3 plane kernels: AVX2 vs scalar") {
  if (!kern::cpu_has_avx2()) return;
  check_conv3x3_kernels<float>();
  check_conv3x3_kernels<double>();
}

TEST_CASE("conv3x3_plane semantics: hand case with border clipping") {
  const auto& s = kern::scalar_ops<double>();
  // single row plane, n=3: only the horizontal stencil of the center row acts
  double src[3] = {1.0, 2.0, 3.0};
  double w[9] = {0, 0, 0, 10, 100, 1000, 0, 0, 0};
  double dst[3] = {0, 0, 0};
  s.conv3x3_plane(1, 3, src, w, dst);
  CHECK(dst[0] == 100 * 1.0 + 1000 * 2.0);             // no left neighbor
  CHECK(dst[1] == 10 * 1.0 + 100 * 2.0 + 1000 * 3.0);  // full stencil
  CHECK(dst[2] == 10 * 2.0 + 100 * 3.0);               // no right neighbor
}

TEST_CASE("relu semantics") {
  const auto& s = kern::scalar_ops<float>();
  float x[3] = {-1.0f, 0.0f, 2.0f};
  float y[3];
  s.relu(3, x, y);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);
}

TEST_CASE("isa dispatch respects availability") {
  const kern::Isa before = kern::active_isa();
  kern::set_isa(kern::Isa::scalar);
  CHECK(kern::active_isa() == kern::Isa::scalar);
  kern::set_isa(kern::Isa::avx2);
  if (kern::cpu_has_avx2())
    CHECK(kern::active_isa() == kern::Isa::avx2);
  else
    CHECK(kern::active_isa() == kern::Isa::scalar);
  kern::set_isa(before);
}
