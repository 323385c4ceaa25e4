#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ptrack/error.hpp"
#include "ptrack/metrics.hpp"
#include "ptrack/rng.hpp"
#include "ptrack/synth.hpp"
#include "ptrack/tracker.hpp"

using namespace ptrack;

namespace {

FeatureVideo random_video(int t, int d, int h, int w, CounterRng& rng) {
  FeatureVideo v;
  v.stride = 8;
  v.source_h = h * 8;
  v.source_w = w * 8;
  for (int i = 0; i < t; ++i) {
    Grid2D f(d, h, w);
    for (double& x : f.data()) x = rng.normal();
    v.frames.push_back(std::move(f));
  }
  return v;
}

// Four-corner formula written out independently of bilinear_taps.
std::vector<double> naive_sample(const Grid2D& g, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = x0 + 1 < g.width() ? x0 + 1 : x0;
  const int y1 = y0 + 1 < g.height() ? y0 + 1 : y0;
  const double ax = x - x0;
  const double ay = y - y0;
  std::vector<double> out(g.channels());
  for (int c = 0; c < g.channels(); ++c) {
    out[c] = g.at(c, y0, x0) * (1 - ax) * (1 - ay) + g.at(c, y0, x1) * ax * (1 - ay) +
             g.at(c, y1, x0) * (1 - ax) * ay + g.at(c, y1, x1) * ax * ay;
  }
  return out;
}

// Naive double loop over cells.
Grid2D naive_correlation(const Grid2D& f, const std::vector<double>& q) {
  Grid2D out(1, f.height(), f.width());
  double qq = 0.0;
  for (double v : q) qq += v * v;
  for (int y = 0; y < f.height(); ++y) {
    for (int x = 0; x < f.width(); ++x) {
      double dot = 0.0, ff = 0.0;
      for (int c = 0; c < f.channels(); ++c) {
        dot += q[c] * f.at(c, y, x);
        ff += f.at(c, y, x) * f.at(c, y, x);
      }
      out.at(0, y, x) = ff > 0 ? dot / (std::sqrt(qq) * std::sqrt(ff)) : 0.0;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("extract_query_feature") {
  CounterRng rng(1);
  const FeatureVideo v = random_video(3, 4, 5, 6, rng);
  const auto q = extract_query_feature(v, {2, {3.0, 1.0}});
  for (int c = 0; c < 4; ++c) CHECK(q[c] == v.frames[2].at(c, 1, 3));

  FeatureVideo two;
  two.frames.push_back(Grid2D(2, 1, 2, {1.0, 1.0, 4.0, 6.0}));
  CHECK(extract_query_feature(two, {0, {0.5, 0.0}})[1] == 5.0);
  CHECK(extract_query_feature(two, {0, {0.5, 0.0}})[0] == 1.0);

  for (int trial = 0; trial < 50; ++trial) {
    const Query qy{int(rng.below(3)), {rng.uniform(0, 5), rng.uniform(0, 4)}};
    const auto got = extract_query_feature(v, qy);
    const auto want = naive_sample(v.frames[qy.frame], qy.point.x, qy.point.y);
    for (int c = 0; c < 4; ++c) CHECK(got[c] == doctest::Approx(want[c]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(extract_query_feature(v, {3, {0, 0}}), InvalidInput);
  CHECK_THROWS_AS(extract_query_feature(v, {-1, {0, 0}}), InvalidInput);
}

TEST_CASE("correlation_map examples") {
  CounterRng rng(2);
  const FeatureVideo v = random_video(1, 8, 4, 4, rng);
  const Grid2D& f = v.frames[0];
  const auto q = bilinear_sample(f, {2, 3});
  CHECK(correlation_map(f, q).at(0, 3, 2) == 1.0);

  Grid2D axis(2, 2, 2);
  for (double& x : axis.plane(0)) x = 1.5;
  const std::vector<double> ortho{0.0, 2.0};
  const Grid2D zero = correlation_map(axis, ortho);
  for (double c : zero.data()) CHECK(c == 0.0);

  // Zero-norm cells map to 0; a zero query is rejected.
  Grid2D holes = f;
  for (int c = 0; c < 8; ++c) holes.at(c, 0, 0) = 0.0;
  CHECK(correlation_map(holes, q).at(0, 0, 0) == 0.0);
  CHECK_THROWS_AS(correlation_map(f, std::vector<double>(8, 0.0)), InvalidInput);
  CHECK_THROWS_AS(correlation_map(f, std::vector<double>(7, 1.0)), InvalidInput);
}

TEST_CASE("correlation_map scale invariance") {
  CounterRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureVideo v = random_video(1, 6, 5, 5, rng);
    std::vector<double> q(6);
    for (double& x : q) x = rng.normal();
    const Grid2D base = correlation_map(v.frames[0], q);
    std::vector<double> q4 = q, q3 = q;
    for (double& x : q4) x *= 4.0;
    for (double& x : q3) x *= 3.0;
    // Power-of-two scaling is exact in binary floating point.
    CHECK(correlation_map(v.frames[0], q4) == base);
    // Other factors round |q|^2 differently: a couple of ulps at most.
    const Grid2D three = correlation_map(v.frames[0], q3);
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(std::abs(three.data()[i] - base.data()[i]) <= 4.5e-16);
    }
  }
}

TEST_CASE("correlation values are bounded and match the naive loop") {
  CounterRng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const FeatureVideo v = random_video(3, 5, 4, 6, rng);
    const Query qy{int(rng.below(3)), {rng.uniform(0, 5), rng.uniform(0, 3)}};
    const auto vol = correlation_volume(v, qy);
    const auto q = extract_query_feature(v, qy);
    REQUIRE(vol.size() == 3);
    for (int t = 0; t < 3; ++t) {
      const Grid2D want = naive_correlation(v.frames[t], q);
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(vol[t].data()[i] >= -1.0);
        CHECK(vol[t].data()[i] <= 1.0);
        CHECK(vol[t].data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("correlation_volume examples") {
  CounterRng rng(5);
  FeatureVideo v = random_video(1, 4, 3, 3, rng);
  v.frames.push_back(v.frames[0]);
  v.frames.push_back(v.frames[0]);
  const auto vol = correlation_volume(v, {1, {2, 0}});
  CHECK(vol[1].at(0, 0, 2) == 1.0);
  CHECK(vol[0] == vol[1]);
  CHECK(vol[2] == vol[1]);
}

TEST_CASE("channel permutation leaves correlations unchanged") {
  CounterRng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureVideo v = random_video(2, 5, 4, 4, rng);
    std::vector<int> perm{3, 0, 4, 1, 2};
    FeatureVideo p = v;
    for (int t = 0; t < 2; ++t) {
      for (int c = 0; c < 5; ++c) {
        auto dst = p.frames[t].plane(c);
        const auto src = v.frames[t].plane(perm[c]);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
    const Query qy{0, {1.25, 2.5}};
    const auto a = correlation_volume(v, qy);
    const auto b = correlation_volume(p, qy);
    for (int t = 0; t < 2; ++t) {
      for (std::size_t i = 0; i < a[t].size(); ++i) {
        CHECK(a[t].data()[i] == doctest::Approx(b[t].data()[i]).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("correlation_map_backward matches central differences") {
  CounterRng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureVideo v = random_video(1, 4, 3, 4, rng);
    std::vector<double> q(4);
    for (double& x : q) x = rng.normal();
    Grid2D up(1, 3, 4);
    for (double& x : up.data()) x = rng.normal();
    auto objective = [&](const Grid2D& f, const std::vector<double>& qq) {
      const Grid2D c = correlation_map(f, qq);
      double s = 0.0;
      for (std::size_t i = 0; i < c.size(); ++i) s += c.data()[i] * up.data()[i];
      return s;
    };
    Grid2D df(4, 3, 4);
    std::vector<double> dq(4, 0.0);
    correlation_map_backward(v.frames[0], q, up, df, dq);
    const double h = 1e-6;
    for (std::size_t i = 0; i < df.size(); ++i) {
      Grid2D a = v.frames[0], b = v.frames[0];
      a.data()[i] += h;
      b.data()[i] -= h;
      CHECK(df.data()[i] == doctest::Approx((objective(a, q) - objective(b, q)) / (2 * h)).epsilon(1e-6));
    }
    for (int c = 0; c < 4; ++c) {
      auto a = q, b = q;
      a[c] += h;
      b[c] -= h;
      CHECK(dq[c] == doctest::Approx((objective(v.frames[0], a) - objective(v.frames[0], b)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("zero_shot_track examples") {
  CounterRng rng(8);
  const FeatureVideo single = random_video(1, 3, 4, 5, rng);
  const Trajectory t1 = zero_shot_track(single, {0, {3, 2}});
  CHECK(t1.points.size() == 1);
  CHECK(t1.points[0] == Point2D{3, 2});
  CHECK(t1.visible[0]);
  CHECK_FALSE(t1.occlusion_prob.has_value());

  FeatureVideo constant;
  for (int t = 0; t < 3; ++t) constant.frames.push_back(Grid2D(3, 4, 4, 0.5));
  const Trajectory tc = zero_shot_track(constant, {1, {2.5, 1.5}});
  for (const Point2D& p : tc.points) CHECK(p == Point2D{0, 0});
}

TEST_CASE("zero_shot_track recovers the noise-free synthetic tracks") {
  SyntheticConfig cfg;
  cfg.num_videos = 4;
  cfg.num_frames = 10;
  cfg.grid_h = 12;
  cfg.grid_w = 9;
  cfg.feature_dim = 16;
  for (int i = 0; i < cfg.num_videos; ++i) {
    const SyntheticVideo sv = synth_generate_video(cfg, i);
    for (const TrackAnnotation& tr : sv.annotation.tracks) {
      const Point2D q0 = source_to_grid(tr.points[0], sv.annotation.height, sv.annotation.width,
                                        cfg.grid_h, cfg.grid_w);
      const Trajectory traj = zero_shot_track(sv.features, {0, q0});
      for (int t = 0; t < cfg.num_frames; ++t) {
        const Point2D gt = source_to_grid(tr.points[t], sv.annotation.height, sv.annotation.width,
                                          cfg.grid_h, cfg.grid_w);
        CHECK(traj.points[t] == gt);
      }
    }
  }
}

TEST_CASE("zero_shot_track equals brute-force search and ignores query scale") {
  CounterRng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const FeatureVideo v = random_video(4, 6, 5, 5, rng);
    const Query qy{int(rng.below(4)), {rng.uniform(0, 4), rng.uniform(0, 4)}};
    const Trajectory traj = zero_shot_track(v, qy);
    const auto q = extract_query_feature(v, qy);
    auto q2 = q;
    for (double& x : q2) x *= 2.0;
    for (int t = 0; t < 4; ++t) {
      const Grid2D c = naive_correlation(v.frames[t], q);
      int best = 0;
      for (int i = 1; i < 25; ++i) {
        if (c.data()[i] > c.data()[best]) best = i;
      }
      CHECK(traj.points[t] == Point2D{double(best % 5), double(best / 5)});
      CHECK(argmax2d(correlation_map(v.frames[t], q2)) == traj.points[t]);
    }
  }
}

TEST_CASE("resize_video keeps the source resolution") {
  CounterRng rng(10);
  const FeatureVideo v = random_video(2, 3, 32, 32, rng);
  const FeatureVideo r = resize_video(v, 16, 16);
  CHECK(r.height() == 16);
  CHECK(r.stride == 16);
  CHECK(r.source_h == 256);
  CHECK(r.num_frames() == 2);
}
