#include "oracle.hpp"

#include "tlane/errors.hpp"
#include "tlane/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace tlane;

namespace {

const std::vector<double> kStations{5, 10, 20, 30, 45, 60};

Lane3D lane(double offset, double slope = 0.0, int category = 1) {
  Lane3D l;
  l.stations = kStations;
  for (double y : kStations) {
    l.x.push_back(offset + slope * y);
    l.z.push_back(0.0);
  }
  l.visibility.assign(kStations.size(), 1.0);
  l.category = category;
  return l;
}

std::vector<Lane3D> random_lanes(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-4.0, 4.0), s(-0.03, 0.03);
  std::uniform_int_distribution<int> c(1, 3);
  std::vector<Lane3D> out;
  for (int i = 0; i < n; ++i) out.push_back(lane(u(rng), s(rng), c(rng)));
  return out;
}

}  // namespace

TEST_CASE("identical sets score perfectly") {
  std::vector<Lane3D> g{lane(-2.0, 0.0, 1), lane(1.5, 0.01, 2)};
  auto r = match_lanes(g, g);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);
  CHECK(r.accuracy == 1.0);
}

TEST_CASE("one of two found") {
  std::vector<Lane3D> g{lane(-2.0), lane(2.0)};
  std::vector<Lane3D> p{lane(-2.1)};
  auto r = match_lanes(p, g);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("empty sides") {
  std::vector<Lane3D> g{lane(0.0)};
  auto r = match_lanes({}, g);
  CHECK(r.f1 == 0.0);
  CHECK(r.false_negatives == 1);
  auto e = match_lanes({}, {});
  CHECK(e.f1 == 0.0);
  CHECK(e.precision == 0.0);
  CHECK(e.accuracy == 0.0);
}

TEST_CASE("category accuracy over matches") {
  std::vector<Lane3D> g{lane(-2.0, 0.0, 1), lane(2.0, 0.0, 2)};
  std::vector<Lane3D> p{lane(-2.0, 0.0, 1), lane(2.0, 0.0, 3)};
  auto r = match_lanes(p, g);
  CHECK(r.f1 == 1.0);
  CHECK(r.accuracy == 0.5);
}

TEST_CASE("coverage and visibility gate admissibility") {
  auto g = lane(0.0);
  auto far_tail = lane(0.0);
  for (std::size_t j = 3; j < far_tail.size(); ++j) far_tail.x[j] = 3.0;
  CHECK_FALSE(score_pair(far_tail, g, 1.5, 0.75).admissible);
  CHECK(score_pair(far_tail, g, 1.5, 0.5).admissible);

  auto hidden = lane(0.0);
  hidden.visibility.assign(hidden.size(), 0.0);
  CHECK_FALSE(score_pair(hidden, g, 1.5, 0.75).admissible);

  auto short_gt = lane(0.0);
  short_gt.visibility = {0, 0, 1, 1, 1, 1};
  auto s = score_pair(far_tail, short_gt, 1.5, 0.75);
  CHECK(s.visible == 4);
  CHECK(s.close == 1);
}

TEST_CASE("bad protocol constants") {
  CHECK_THROWS_AS(match_lanes({}, {}, 0.0, 0.5), ValidationError);
  CHECK_THROWS_AS(match_lanes({}, {}, 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS(match_lanes({}, {}, 1.0, 1.5), ValidationError);
}

TEST_CASE("swapping sides exchanges FP and FN") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto p = random_lanes(rng, trial % 5);
    auto g = random_lanes(rng, (trial / 5) % 5);
    auto a = match_lanes(p, g);
    auto b = match_lanes(g, p);
    CHECK(a.true_positives == b.true_positives);
    CHECK(a.false_positives == b.false_negatives);
    CHECK(a.false_negatives == b.false_positives);
    CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-15));
  }
}

TEST_CASE("permuting lanes keeps F1") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_lanes(rng, 4);
    auto g = random_lanes(rng, 3);
    auto a = match_lanes(p, g);
    std::shuffle(p.begin(), p.end(), rng);
    std::shuffle(g.begin(), g.end(), rng);
    CHECK(match_lanes(p, g).f1 == a.f1);
  }
}

TEST_CASE("matching agrees with exhaustive search") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_lanes(rng, n(rng));
    auto g = random_lanes(rng, n(rng));
    std::vector<std::vector<double>> cost(p.size(), std::vector<double>(g.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t j = 0; j < g.size(); ++j) cost[i][j] = oracle::shared_station_cost(p[i], g[j], 1.5, 0.75);
    }
    auto brute = oracle::brute_force_assignment(cost);
    auto r = match_lanes(p, g);
    CHECK(r.true_positives == brute.matched);
    double total = 0.0;
    for (const auto& m : r.matches) total += m.mean_distance;
    CHECK(total == doctest::Approx(brute.cost).epsilon(1e-12));
  }
}

TEST_CASE("report accumulation") {
  MatchReport a;
  a.true_positives = 3;
  a.false_positives = 1;
  a.category_hits = 3;
  MatchReport b;
  b.false_negatives = 2;
  a += b;
  CHECK(a.precision == 0.75);
  CHECK(a.recall == 0.6);
  CHECK(a.accuracy == 1.0);
}

TEST_CASE("jitter is zero for rigidly carried predictions") {
  std::vector<EgoMotion> motion{{1.0, 0.01}, {1.2, -0.02}};
  std::vector<std::vector<Lane3D>> frames(3);
  frames[0] = {lane(-1.8, 0.01), lane(1.8, 0.01)};
  for (int t = 0; t < 2; ++t) {
    for (const auto& l : frames[t]) frames[t + 1].push_back(transport_lane(l, motion[t]));
  }
  auto j = temporal_smoothness_detail(frames, motion);
  CHECK(j.jitter == 0.0);
  CHECK(j.samples > 0);
}

TEST_CASE("jitter is zero for perfect predictions of a static straight world") {
  std::vector<EgoMotion> motion{{5.0, 0.0}, {5.0, 0.0}};
  std::vector<std::vector<Lane3D>> frames(3, std::vector<Lane3D>{lane(-1.5), lane(2.0)});
  CHECK(temporal_smoothness(frames, motion) == 0.0);
}

TEST_CASE("alternating lateral perturbation") {
  std::vector<EgoMotion> motion{{0.0, 0.0}, {0.0, 0.0}};
  std::vector<std::vector<Lane3D>> frames{{lane(0.1)}, {lane(-0.1)}, {lane(0.1)}};
  CHECK(temporal_smoothness(frames, motion) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("jitter errors") {
  std::vector<std::vector<Lane3D>> one{{lane(0.0)}};
  CHECK_THROWS_AS(temporal_smoothness(one, {}), ValidationError);
  std::vector<std::vector<Lane3D>> apart{{lane(-5.0)}, {lane(5.0)}};
  CHECK_THROWS_AS(temporal_smoothness(apart, {{0.0, 0.0}}), ValidationError);
}
