#include <doctest.h>

#include <cmath>

#include "scanmat/normal_mapping.hpp"
#include "scanmat/random.hpp"

using namespace scanmat;

TEST_SUITE_BEGIN("normal_mapping");

TEST_CASE("decode center and corner") {
  Vec3 zenith = normal_decode(0, 0);
  CHECK(zenith.x == doctest::Approx(0));
  CHECK(zenith.y == doctest::Approx(0));
  CHECK(zenith.z == doctest::Approx(1));

  Vec3 corner = normal_decode(1, 1);
  CHECK(corner.x == doctest::Approx(std::sqrt(0.5)));
  CHECK(corner.y == doctest::Approx(std::sqrt(0.5)));
  CHECK(corner.z == doctest::Approx(0));
}

TEST_CASE("decode is unit norm over a 32x32 grid") {
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      double u = -1.0 + 2.0 * i / 31.0;
      double v = -1.0 + 2.0 * j / 31.0;
      Vec3 n = normal_decode(u, v);
      CHECK(std::abs(length(n) - 1.0) <= 1e-6);
      CHECK(n.z >= 0);
    }
}

TEST_CASE("decode rejects out-of-square inputs") {
  CHECK_THROWS_AS(normal_decode(1.01, 0), std::invalid_argument);
  CHECK_THROWS_AS(normal_decode(0, -1.5), std::invalid_argument);
}

TEST_CASE("encode maps zenith to center and disc edge to square edge") {
  auto [u0, v0] = normal_encode({0, 0, 1});
  CHECK(u0 == doctest::Approx(0));
  CHECK(v0 == doctest::Approx(0));

  auto [u1, v1] = normal_encode({1, 0, 0});
  CHECK(u1 == doctest::Approx(1));
  CHECK(v1 == doctest::Approx(0));
}

TEST_CASE("encode rejects invalid normals") {
  CHECK_THROWS_AS(normal_encode({0, 0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(normal_encode({0, 0, -1}), std::invalid_argument);
  CHECK_THROWS_AS(normal_encode({0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("random round trip decode(encode(n)) = n within 1e-6") {
  Rng rng(20240501);
  for (int trial = 0; trial < 2000; ++trial) {
    double u = rng.uniform(-0.999, 0.999);
    double v = rng.uniform(-0.999, 0.999);
    Vec3 n = normal_decode(u, v);
    auto [ue, ve] = normal_encode(n);
    Vec3 n2 = normal_decode(ue, ve);
    double ang = std::acos(std::clamp(dot(n, n2), -1.0, 1.0));
    CHECK(ang <= 1e-6);
  }
}

TEST_CASE("decode jacobian matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    double u = rng.uniform(-0.9, 0.9);
    double v = rng.uniform(-0.9, 0.9);
    NormalDecodeJacobian j = normal_decode_jacobian(u, v);
    const double h = 1e-6;
    Vec3 du = (normal_decode(u + h, v) - normal_decode(u - h, v)) / (2 * h);
    Vec3 dv = (normal_decode(u, v + h) - normal_decode(u, v - h)) / (2 * h);
    CHECK(length(j.dn_du - du) <= 1e-5);
    CHECK(length(j.dn_dv - dv) <= 1e-5);
  }
}

TEST_SUITE_END();
