#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ptrack/error.hpp"
#include "ptrack/grid.hpp"
#include "ptrack/rng.hpp"

using namespace ptrack;

namespace {

Grid2D map_2x2() { return Grid2D(1, 2, 2, {0.0, 1.0, 2.0, 3.0}); }

Grid2D random_grid(int c, int h, int w, CounterRng& rng) {
  Grid2D g(c, h, w);
  for (double& v : g.data()) v = rng.uniform(-1.0, 1.0);
  return g;
}

}  // namespace

TEST_CASE("grid rejects bad shapes") {
  CHECK_THROWS_AS(Grid2D(0, 2, 2), InvalidInput);
  CHECK_THROWS_AS(Grid2D(1, 2, 2, std::vector<double>(3)), InvalidInput);
  const Grid2D g(2, 3, 4, 1.5);
  CHECK(g.size() == 24);
  CHECK(g.at(1, 2, 3) == 1.5);
}

TEST_CASE("bilinear_sample on the 2x2 map") {
  const Grid2D m = map_2x2();
  CHECK(bilinear_sample(m, {0.5, 0.5})[0] == 1.5);
  CHECK(bilinear_sample(m, {0.0, 0.0})[0] == 0.0);
  CHECK(bilinear_sample(m, {1.0, 0.0})[0] == 1.0);
  // Clamped outside the domain.
  CHECK(bilinear_sample(m, {-3.0, 7.0})[0] == 2.0);
  CHECK_THROWS_AS(bilinear_sample(m, {std::nan(""), 0.0}), InvalidInput);
  CHECK_THROWS_AS(bilinear_sample(m, {std::numeric_limits<double>::infinity(), 0.0}), InvalidInput);
}

TEST_CASE("bilinear_sample at integer coordinates is direct indexing") {
  CounterRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Grid2D g = random_grid(3, 5, 7, rng);
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 7; ++x) {
        const auto v = bilinear_sample(g, {double(x), double(y)});
        for (int c = 0; c < 3; ++c) REQUIRE(v[c] == g.at(c, y, x));
      }
    }
  }
}

TEST_CASE("bilinear_sample_backward is the adjoint of sampling") {
  CounterRng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Grid2D g = random_grid(2, 4, 5, rng);
    const Point2D p{rng.uniform(0, 4), rng.uniform(0, 3)};
    const std::vector<double> up{rng.normal(), rng.normal()};
    Grid2D dg(2, 4, 5);
    bilinear_sample_backward(p, up, dg);
    const auto s = bilinear_sample(g, p);
    double lhs = up[0] * s[0] + up[1] * s[1];
    double rhs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) rhs += g.data()[i] * dg.data()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("argmax2d examples") {
  Grid2D m(1, 3, 3);
  m.at(0, 2, 1) = 5.0;
  CHECK(argmax2d(m) == Point2D{1, 2});
  CHECK(argmax2d(Grid2D(1, 3, 3, 0.7)) == Point2D{0, 0});
  Grid2D tie(1, 3, 3);
  tie.at(0, 0, 2) = 1.0;
  tie.at(0, 1, 0) = 1.0;
  CHECK(argmax2d(tie) == Point2D{2, 0});
  tie.at(0, 2, 2) = std::nan("");
  CHECK_THROWS_AS(argmax2d(tie), InvalidInput);
}

TEST_CASE("argmax2d is invariant under increasing transforms") {
  CounterRng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Grid2D g = random_grid(1, 6, 6, rng);
    Grid2D t = g;
    for (double& v : t.data()) v = std::exp(3.0 * v) + std::atan(v);
    CHECK(argmax2d(g) == argmax2d(t));
  }
}

TEST_CASE("soft_argmax2d examples") {
  // Centrally symmetric map.
  const Grid2D sym(1, 3, 3, {1, 2, 3, 4, 9, 4, 3, 2, 1});
  const Point2D c = soft_argmax2d(sym);
  CHECK(c.x == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(c.y == doctest::Approx(1.0).epsilon(1e-15));

  const Point2D u = soft_argmax2d(Grid2D(1, 4, 7, 0.3));
  CHECK(u.x == doctest::Approx(3.0));
  CHECK(u.y == doctest::Approx(1.5));

  // One entry +20: the off-peak mass is 24 * e^-20 ~ 5e-8 of a cell.
  Grid2D peak(1, 5, 5);
  peak.at(0, 1, 3) = 20.0;
  const Point2D p = soft_argmax2d(peak, 1.0);
  CHECK(std::abs(p.x - 3.0) < 1e-3);
  CHECK(std::abs(p.y - 1.0) < 1e-3);

  peak.at(0, 1, 3) = 1e4;
  const Point2D q = soft_argmax2d(peak, 1.0);
  CHECK(std::abs(q.x - 3.0) < 1e-6);
  CHECK(std::abs(q.y - 1.0) < 1e-6);

  CHECK_THROWS_AS(soft_argmax2d(peak, 0.0), InvalidInput);
  CHECK_THROWS_AS(soft_argmax2d(peak, -1.0), InvalidInput);
}

TEST_CASE("soft_argmax2d stays inside the grid") {
  CounterRng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    Grid2D g = random_grid(1, 4, 9, rng);
    for (double& v : g.data()) v *= 50.0;
    const Point2D p = soft_argmax2d(g, rng.uniform(0.01, 5.0));
    CHECK(p.x >= 0.0);
    CHECK(p.x <= 8.0);
    CHECK(p.y >= 0.0);
    CHECK(p.y <= 3.0);
  }
}

TEST_CASE("softmax2d examples and shift invariance") {
  const Grid2D u = softmax2d(Grid2D(1, 3, 4, -2.0));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 12.0));

  Grid2D big(1, 3, 3);
  big.at(0, 2, 0) = 1e4;
  CHECK(softmax2d(big).at(0, 2, 0) == doctest::Approx(1.0));

  CounterRng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    Grid2D g = random_grid(2, 5, 5, rng);
    const Grid2D s = softmax2d(g, 0.5);
    for (int c = 0; c < 2; ++c) {
      double sum = 0.0;
      for (double v : s.plane(c)) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    Grid2D shifted = g;
    for (double& v : shifted.data()) v += 123.25;
    const Grid2D s2 = softmax2d(shifted, 0.5);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s.data()[i] - s2.data()[i]) < 1e-12);
  }
}

TEST_CASE("resize_bilinear") {
  CounterRng rng(16);
  const Grid2D g = random_grid(2, 3, 5, rng);
  CHECK(resize_bilinear(g, 3, 5) == g);
  const Grid2D c = resize_bilinear(Grid2D(1, 2, 2, 0.25), 4, 4);
  for (double v : c.data()) CHECK(v == 0.25);

  // s = (d + 0.5) * 2 / 4 - 0.5 -> -0.25 (clamped to 0), 0.25, 0.75, 1.25 (clamped to 1).
  const Grid2D r = resize_bilinear(Grid2D(1, 1, 2, {0.0, 1.0}), 1, 4);
  CHECK(r.at(0, 0, 0) == 0.0);
  CHECK(r.at(0, 0, 1) == 0.25);
  CHECK(r.at(0, 0, 2) == 0.75);
  CHECK(r.at(0, 0, 3) == 1.0);

  CHECK_THROWS_AS(resize_bilinear(g, 0, 3), InvalidInput);
}
