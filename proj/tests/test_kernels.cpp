#include <doctest.h>

#include <random>
#include <vector>

#include "sits/kernels.hpp"

using namespace sits;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("scalar kernels match hand-computed values") {
  const double a[] = {1.0, 2.0, 3.0};
  const double b[] = {4.0, -5.0, 6.0};
  const auto& ops = kernels::scalar_ops();
  CHECK(ops.dot(a, b, 3) == doctest::Approx(12.0));
  CHECK(ops.sum(a, 3) == doctest::Approx(6.0));
  CHECK(ops.sumsqdiff(a, 2.0, 3) == doctest::Approx(2.0));
  CHECK(ops.sqdist(a, b, 3) == doctest::Approx(9.0 + 49.0 + 9.0));

  double y[] = {1.0, 1.0, 1.0};
  ops.axpy(2.0, a, y, 3);
  CHECK(y[0] == doctest::Approx(3.0));
  CHECK(y[1] == doctest::Approx(5.0));
  CHECK(y[2] == doctest::Approx(7.0));
}

TEST_CASE("argmax returns the first maximum") {
  const auto& ops = kernels::scalar_ops();
  const double x[] = {1.0, 5.0, 5.0, 2.0};
  CHECK(ops.argmax(x, 4) == 1);
  const double c[] = {3.0, 3.0, 3.0};
  CHECK(ops.argmax(c, 3) == 0);
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!kernels::avx2_supported()) return;
  const auto& sc = kernels::scalar_ops();
  const auto& vx = kernels::avx2_ops();
  // deliberately awkward lengths to cover the vector body and the tail
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 13u, 64u, 257u, 740u}) {
    auto a = random_vec(n, 1000 + n);
    auto b = random_vec(n, 2000 + n);
    CHECK(vx.dot(a.data(), b.data(), n) ==
          doctest::Approx(sc.dot(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(vx.sum(a.data(), n) == doctest::Approx(sc.sum(a.data(), n)).epsilon(1e-12));
    CHECK(vx.sumsqdiff(a.data(), 0.37, n) ==
          doctest::Approx(sc.sumsqdiff(a.data(), 0.37, n)).epsilon(1e-12));
    CHECK(vx.sqdist(a.data(), b.data(), n) ==
          doctest::Approx(sc.sqdist(a.data(), b.data(), n)).epsilon(1e-12));
    CHECK(vx.argmax(a.data(), n) == sc.argmax(a.data(), n));

    auto y1 = random_vec(n, 3000 + n);
    auto y2 = y1;
    sc.axpy(0.731, a.data(), y1.data(), n);
    vx.axpy(0.731, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-12));
  }
}

TEST_CASE("avx2 argmax keeps the first-tie rule") {
  if (!kernels::avx2_supported()) return;
  std::vector<double> x(40, 1.0);
  x[9] = 7.0;
  x[21] = 7.0;
  CHECK(kernels::avx2_ops().argmax(x.data(), x.size()) == 9);
}

TEST_CASE("dispatch picks a usable kernel set") {
  const auto& ops = kernels::ops();
  const double a[] = {1.0, 2.0};
  CHECK(ops.dot(a, a, 2) == doctest::Approx(5.0));
  if (kernels::avx2_supported())
    CHECK(std::string(ops.name) == "avx2");
  else
    CHECK(std::string(ops.name) == "scalar");
}
