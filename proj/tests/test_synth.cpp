#include "tlane/errors.hpp"
#include "tlane/synth.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace tlane;
using ad::Matrix;

namespace {

AnchorSet small_anchors() {
  AnchorLayout layout;
  layout.lateral_min = -6.0;
  layout.lateral_max = 6.0;
  layout.count = 9;
  layout.stations = {5.0, 15.0, 30.0, 50.0};
  return build_default_anchors(layout);
}

SceneConfig small_config(double sigma, int frames) {
  SceneConfig c;
  c.noise_sigma = sigma;
  c.frames = frames;
  c.window = 1;
  c.channels = 24;
  return c;
}

}  // namespace

TEST_CASE("zero noise features are the encoded truth") {
  auto a = small_anchors();
  auto cfg = small_config(0.0, 1);
  auto s = generate_scene(17, cfg, a);
  REQUIRE(s.frames.size() == 1);
  const auto& f = s.frames[0];
  auto truths = anchor_truths(a, f.lanes, f.assignment);
  auto enc = cfg.encoding(a);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(f.features.row(static_cast<Eigen::Index>(k)) == feature_encode(truths[k], enc));
  }
}

TEST_CASE("same seed gives the same scene") {
  auto a = small_anchors();
  auto cfg = small_config(0.25, 4);
  auto s1 = generate_scene(99, cfg, a);
  auto s2 = generate_scene(99, cfg, a);
  REQUIRE(s1.frames.size() == s2.frames.size());
  for (std::size_t t = 0; t < s1.frames.size(); ++t) {
    CHECK(s1.frames[t].features == s2.frames[t].features);
    CHECK(s1.frames[t].lanes == s2.frames[t].lanes);
  }
  auto s3 = generate_scene(100, cfg, a);
  CHECK_FALSE(s1.frames[0].features == s3.frames[0].features);
}

TEST_CASE("straight motion moves points back") {
  EgoMotion m{10.0 * 0.1, 0.0};
  auto p = transport_point(0.0, 10.0, m);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == doctest::Approx(9.0).epsilon(1e-15));
  Pose2D pose = advance(Pose2D{}, m);
  CHECK(pose.y == doctest::Approx(1.0));
  CHECK(pose.x == 0.0);
}

TEST_CASE("transported lanes agree with the next frame") {
  auto a = small_anchors();
  auto cfg = small_config(0.0, 5);
  cfg.yaw_rate_max = 0.3;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto s = generate_scene(seed, cfg, a);
    for (std::size_t t = 0; t + 1 < s.frames.size(); ++t) {
      const auto& next_pose = s.poses[t + 1];
      for (std::size_t l = 0; l < s.world.size(); ++l) {
        auto here = lanes_in_frame({s.world[l]}, s.poses[t], a);
        if (here.empty()) continue;
        auto moved = transport_lane(here[0], s.motion[t]);
        for (std::size_t j = 0; j < moved.size(); ++j) {
          auto p = sample_lane(s.world[l], next_pose, moved.stations[j]);
          CHECK(std::abs(p[0] - moved.x[j]) < 1e-9);
          CHECK(std::abs(p[1] - moved.z[j]) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("feature encoding layout and inverse") {
  auto a = small_anchors();
  auto enc = small_config(0.0, 1).encoding(a);
  auto bg = AnchorTruth::background(a.station_count());
  Matrix f = feature_encode(bg, enc);
  CHECK(f.cols() == enc.channels);
  for (int j = 0; j < 3 * enc.stations; ++j) CHECK(f(0, j) == 0.0);
  CHECK(f(0, 3 * enc.stations + kBackgroundClass) == 1.0);
  CHECK(f.rightCols(enc.channels - enc.used_channels()).isZero());

  AnchorTruth t;
  t.dx = {0.5, -1.0, 2.0, 0.25};
  t.dz = {0.0, 0.1, 0.2, 0.3};
  t.visibility = {1, 1, 0, 1};
  t.category = 3;
  CHECK(feature_encode(t, enc) == feature_encode(t, enc));
  auto back = feature_decode(feature_encode(t, enc), enc);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(back.dx[j] == doctest::Approx(t.dx[j]).epsilon(1e-15));
    CHECK(back.dz[j] == doctest::Approx(t.dz[j]).epsilon(1e-15));
    CHECK(back.visibility[j] == t.visibility[j]);
  }
  CHECK(back.category == 3);
}

TEST_CASE("a linear decoder fitted once recovers the truth") {
  auto a = small_anchors();
  auto enc = small_config(0.0, 1).encoding(a);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> cls(0, enc.classes - 1);
  const int n = 200;
  const int d = 3 * enc.stations + enc.classes;
  Matrix truth = Matrix::Zero(n, d), feat(n, enc.channels);
  for (int i = 0; i < n; ++i) {
    AnchorTruth t;
    for (int j = 0; j < enc.stations; ++j) {
      t.dx.push_back(u(rng));
      t.dz.push_back(0.1 * u(rng));
      t.visibility.push_back(u(rng) > 0 ? 1.0 : 0.0);
      truth(i, j) = t.dx.back();
      truth(i, enc.stations + j) = t.dz.back();
      truth(i, 2 * enc.stations + j) = t.visibility.back();
    }
    t.category = cls(rng);
    truth(i, 3 * enc.stations + t.category) = 1.0;
    feat.row(i) = feature_encode(t, enc);
  }
  Eigen::MatrixXd w = Eigen::MatrixXd(feat).colPivHouseholderQr().solve(Eigen::MatrixXd(truth));
  CHECK((Eigen::MatrixXd(feat) * w - Eigen::MatrixXd(truth)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("frame averaging divides noise variance by T") {
  auto a = small_anchors();
  const int T = 3;
  const double sigma = 0.5;
  auto cfg = small_config(sigma, T);
  auto clean = small_config(0.0, T);
  double sum = 0.0, sum_sq = 0.0, single_sq = 0.0;
  long n = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto noisy = generate_scene(seed, cfg, a);
    auto truth = generate_scene(seed, clean, a);
    for (Eigen::Index c = 0; c < cfg.channels; ++c) {
      double avg = 0.0;
      for (int t = 0; t < T; ++t) {
        const double e = noisy.frames[t].features(0, c) - truth.frames[t].features(0, c);
        avg += e / T;
        if (t == 0) single_sq += e * e;
      }
      sum += avg;
      sum_sq += avg * avg;
      ++n;
    }
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  const double single = single_sq / n;
  CHECK(single == doctest::Approx(sigma * sigma).epsilon(0.1));
  CHECK(var / single == doctest::Approx(1.0 / T).epsilon(0.1));
}

TEST_CASE("scene structure") {
  AnchorSet a = build_default_anchors(AnchorLayout{});
  SceneConfig cfg;
  auto s = generate_scene(5, cfg, a);
  CHECK(s.frames.size() == 5);
  CHECK(s.motion.size() == 4);
  CHECK(s.world.size() >= 2);
  CHECK(s.world.size() <= 4);
  for (const auto& m : s.motion) {
    CHECK(m.forward >= 0.8);
    CHECK(m.forward <= 1.5);
  }
  for (const auto& f : s.frames) {
    CHECK(f.features.rows() == 40);
    CHECK(f.features.cols() == 128);
    for (const auto& l : f.lanes) {
      CHECK_NOTHROW(l.validate());
      CHECK(l.category >= 1);
      CHECK(l.category <= 4);
    }
  }
}

TEST_CASE("dataset split uses independent streams") {
  auto a = small_anchors();
  auto cfg = small_config(0.1, 2);
  auto d = generate_dataset(7, 3, 2, cfg, a);
  CHECK(d.train.size() == 3);
  CHECK(d.eval.size() == 2);
  CHECK(d.train[0].seed != d.eval[0].seed);
  CHECK(mix_seed(7, 0) != mix_seed(7, 1));
  CHECK(mix_seed(7, 0) == mix_seed(7, 0));
}

TEST_CASE("invalid configurations") {
  auto a = small_anchors();
  auto cfg = small_config(0.0, 2);
  cfg.channels = 5;
  CHECK_THROWS_AS(generate_scene(1, cfg, a), ValidationError);
  cfg = small_config(0.0, 2);
  cfg.window = 3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = small_config(-1.0, 2);
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
