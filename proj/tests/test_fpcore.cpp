#include <catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "tmc/fpcore.hpp"

using namespace tmc;

TEST_CASE("round_nearest examples") {
  CHECK(round_nearest(0.75, FloatFormat{1, 3}) == 0.75);
  CHECK(round_nearest(1.0 / 3.0, formats::bf16) == 0.333984375);
  CHECK(round_nearest(1.0 / 3.0, formats::bf16) == oracle::bf16_reference(1.0f / 3.0f));
  for (double x : {0.0, 1.0, -1.0, 0.5, 3.0, -2.5})
    CHECK(round_nearest(x, FloatFormat{3, 4}) == x);
}

TEST_CASE("normal_range") {
  auto r = normal_range(formats::bf16);
  CHECK(r.min_normal == std::ldexp(1.0, -126));
  auto s = normal_range(FloatFormat{1, 2});
  CHECK(s.min_normal == 1.0);
  CHECK(s.max_value == 3.0);
  for (int bm = 1; bm < 10; ++bm)
    for (int be = 2; be < 9; ++be) {
      auto q = normal_range(FloatFormat{bm, be});
      CHECK(q.max_value > q.min_normal);
    }
}

TEST_CASE("is_representable") {
  CHECK(is_representable(0.0, formats::fp16));
  CHECK(is_representable(1024.0, FloatFormat{1, 5}));
  CHECK_FALSE(is_representable(1.0 / 3.0, formats::bf16));
  CHECK_FALSE(is_representable(1e6, FloatFormat{1, 3}));
}

TEST_CASE("rounding agrees with grid search on small formats") {
  std::mt19937_64 rng(7);
  for (int bm = 1; bm <= 4; ++bm)
    for (int be = 2; be <= 5; ++be) {
      FloatFormat f{bm, be};
      auto g = oracle::grid(f);
      std::uniform_real_distribution<double> u(-1.2 * g.back(), 1.2 * g.back());
      for (int i = 0; i < 2000; ++i) {
        double x = u(rng);
        if (i % 3 == 0) x = std::ldexp(u(rng), -(1 << (be - 1)) - 2);  // subnormal area
        REQUIRE(round_nearest(x, f) == oracle::nearest(g, x));
      }
      // exact midpoints exercise the tie rule
      for (size_t i = 0; i + 1 < g.size(); ++i) {
        double mid = (g[i] + g[i + 1]) / 2;
        REQUIRE(round_nearest(mid, f) == oracle::nearest(g, mid));
        REQUIRE(round_nearest(-mid, f) == -oracle::nearest(g, mid));
      }
    }
}

TEST_CASE("fp32 and bf16 match hardware-style conversions") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 20000; ++i) {
    double x = u(rng) * std::pow(2.0, (int)(rng() % 40) - 20);
    REQUIRE(round_nearest(x, formats::fp32) == (double)(float)x);
    float xf = (float)x;
    REQUIRE(round_nearest(xf, formats::bf16) == oracle::bf16_reference(xf));
  }
}

TEST_CASE("saturation flag") {
  bool sat = false;
  CHECK(round_nearest(100.0, FloatFormat{1, 2}, &sat) == 3.0);
  CHECK(sat);
  CHECK(round_nearest(-100.0, FloatFormat{1, 2}, &sat) == -3.0);
  round_nearest(2.0, FloatFormat{1, 2}, &sat);
  CHECK_FALSE(sat);
}

TEST_CASE("precision presets") {
  CHECK(parse_precision("bf16").format() == FloatFormat{7, 8});
  CHECK(parse_precision("fp16").format() == FloatFormat{10, 5});
  CHECK(parse_precision("fp32").format() == FloatFormat{23, 8});
  CHECK(parse_precision("fp64").format() == FloatFormat{52, 11});
  CHECK(parse_precision("custom:3,4").format() == FloatFormat{3, 4});
  CHECK(parse_precision("exact").exact());
  CHECK(parse_precision("exact").round(1.0 / 3.0) == 1.0 / 3.0);
  CHECK_THROWS(parse_precision("custom:0,4"));
  CHECK_THROWS(parse_precision("custom:3"));
  CHECK_THROWS(parse_precision("fp8"));
  CHECK(to_string(parse_precision("custom:3,4")) == "custom:3,4");
}

TEST_CASE("rounding properties on random samples") {
  std::mt19937_64 rng(3);
  for (auto f : {formats::bf16, formats::fp16, FloatFormat{2, 4}, FloatFormat{4, 5}}) {
    auto nr = normal_range(f);
    std::uniform_real_distribution<double> lg(std::log2(nr.min_normal), std::log2(nr.max_value) - 0.01);
    for (int i = 0; i < 5000; ++i) {
      double x = std::exp2(lg(rng)) * (rng() % 2 ? 1 : -1);
      double y = std::exp2(lg(rng)) * (rng() % 2 ? 1 : -1);
      double rx = round_nearest(x, f), ry = round_nearest(y, f);
      REQUIRE(std::fabs(rx - x) <= std::ldexp(std::fabs(x), -f.mantissa_bits - 1));
      REQUIRE(round_nearest(-x, f) == -rx);
      if (x <= y) REQUIRE(rx <= ry);
      else REQUIRE(rx >= ry);
    }
  }
}
