#include "tlane/errors.hpp"
#include "tlane/lane.hpp"
#include "tlane/lane_io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

using namespace tlane;

namespace {

Lane3D make_lane(std::vector<double> y, std::vector<double> x) {
  Lane3D l;
  l.stations = std::move(y);
  l.x = std::move(x);
  l.z.assign(l.stations.size(), 0.0);
  l.visibility.assign(l.stations.size(), 1.0);
  l.category = 2;
  return l;
}

AnchorPrediction zero_prediction(std::size_t k, std::size_t s) {
  AnchorPrediction p;
  p.anchor = k;
  p.dx.assign(s, 0.0);
  p.dz.assign(s, 0.0);
  p.visibility_logits.assign(s, 0.0);
  p.class_logits = {0.1, 2.0, -1.0};
  return p;
}

}  // namespace

TEST_CASE("three anchors across [-1, 1]") {
  AnchorLayout layout;
  layout.lateral_min = -1.0;
  layout.lateral_max = 1.0;
  layout.count = 3;
  layout.stations = {5.0, 10.0};
  auto a = build_default_anchors(layout);
  REQUIRE(a.size() == 3);
  const double want[] = {-1.0, 0.0, 1.0};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(a.base_x(k)[j] == want[k]);
      CHECK(a.base_z(k)[j] == 0.0);
    }
  }
}

TEST_CASE("single anchor sits at the center") {
  AnchorLayout layout;
  layout.count = 1;
  auto a = build_default_anchors(layout);
  CHECK(a.lateral(0) == 0.0);
}

TEST_CASE("default layout spacing") {
  AnchorLayout layout;
  auto a = build_default_anchors(layout);
  CHECK(a.size() == 40);
  CHECK(a.station_count() == 20);
  CHECK(a.stations().front() == 3.0);
  CHECK(a.stations().back() == 103.0);
  for (std::size_t k = 1; k < a.size(); ++k) {
    CHECK(a.lateral(k) - a.lateral(k - 1) == doctest::Approx(20.0 / 39.0).epsilon(1e-12));
  }
}

TEST_CASE("invalid layouts") {
  AnchorLayout layout;
  layout.stations = {5.0, 5.0};
  CHECK_THROWS_AS(build_default_anchors(layout), ValidationError);
  layout.stations.clear();
  CHECK_THROWS_AS(build_default_anchors(layout), ValidationError);
  layout = AnchorLayout{};
  layout.count = 0;
  CHECK_THROWS_AS(build_default_anchors(layout), ValidationError);
}

TEST_CASE("decode with zero offsets reproduces the anchor") {
  auto a = build_default_anchors(AnchorLayout{});
  auto d = decode_anchor(a, zero_prediction(7, a.station_count()));
  for (std::size_t j = 0; j < a.station_count(); ++j) {
    CHECK(d.lane.x[j] == a.base_x(7)[j]);
    CHECK(d.lane.z[j] == 0.0);
    CHECK(d.lane.visibility[j] == 0.5);
    CHECK_FALSE(d.below_threshold[j]);
  }
  CHECK(d.lane.category == 1);
  CHECK(d.anchor == 7);
}

TEST_CASE("decode adds offsets and flags low visibility") {
  AnchorLayout layout;
  layout.lateral_min = 1.0;
  layout.lateral_max = 1.0;
  layout.count = 1;
  auto a = build_default_anchors(layout);
  auto p = zero_prediction(0, a.station_count());
  p.dx.assign(a.station_count(), 0.5);
  p.visibility_logits[3] = -4.0;
  auto d = decode_anchor(a, p, 0.5);
  for (std::size_t j = 0; j < a.station_count(); ++j) CHECK(d.lane.x[j] == 1.5);
  CHECK(d.below_threshold[3]);
  CHECK(d.lane.visibility[3] == doctest::Approx(1.0 / (1.0 + std::exp(4.0))));
  CHECK(d.lane.size() == a.station_count());
}

TEST_CASE("decode is affine in the offsets") {
  auto a = build_default_anchors(AnchorLayout{});
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  auto p1 = zero_prediction(12, a.station_count());
  auto p2 = p1;
  auto p12 = p1;
  for (std::size_t j = 0; j < a.station_count(); ++j) {
    p1.dx[j] = n(rng);
    p2.dx[j] = n(rng);
    p12.dx[j] = p1.dx[j] + p2.dx[j];
  }
  auto d1 = decode_anchor(a, p1);
  auto d12 = decode_anchor(a, p12);
  for (std::size_t j = 0; j < a.station_count(); ++j) {
    CHECK(d12.lane.x[j] == doctest::Approx(d1.lane.x[j] + p2.dx[j]).epsilon(1e-14));
  }
}

TEST_CASE("encode then decode round-trips") {
  auto a = build_default_anchors(AnchorLayout{});
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Lane3D lane;
  lane.stations.assign(a.stations().begin(), a.stations().end());
  for (std::size_t j = 0; j < lane.stations.size(); ++j) {
    lane.x.push_back(u(rng));
    lane.z.push_back(0.1 * u(rng));
  }
  lane.visibility.assign(lane.stations.size(), 1.0);
  auto pred = encode_offsets(a, 4, lane);
  pred.visibility_logits.assign(lane.size(), 30.0);
  pred.class_logits = {0.0, 1.0};
  auto d = decode_anchor(a, pred);
  for (std::size_t j = 0; j < lane.size(); ++j) {
    CHECK(std::abs(d.lane.x[j] - lane.x[j]) < 1e-14);
    CHECK(std::abs(d.lane.z[j] - lane.z[j]) < 1e-14);
  }
}

TEST_CASE("resample onto its own stations is the identity") {
  auto lane = make_lane({0.0, 4.0, 8.0}, {0.0, 1.0, 3.0});
  auto r = resample_lane(lane, lane.stations);
  CHECK(r == lane);
}

TEST_CASE("resample midpoints") {
  auto a = make_lane({0.0, 10.0}, {0.0, 2.0});
  std::vector<double> t{5.0};
  CHECK(resample_lane(a, t).x[0] == 1.0);

  auto b = make_lane({0.0, 4.0, 8.0}, {0.0, 1.0, 3.0});
  std::vector<double> t6{6.0};
  auto r = resample_lane(b, t6);
  CHECK(r.x[0] == 2.0);
  CHECK(r.category == 2);
}

TEST_CASE("resample is idempotent for repeated targets") {
  auto b = make_lane({0.0, 4.0, 8.0}, {0.0, 1.0, 3.0});
  std::vector<double> t{1.0, 2.5, 6.0, 7.0};
  auto once = resample_lane(b, t);
  auto twice = resample_lane(once, t);
  CHECK(once == twice);
}

TEST_CASE("extrapolation names the station") {
  auto b = make_lane({0.0, 4.0, 8.0}, {0.0, 1.0, 3.0});
  std::vector<double> t{2.0, 9.5};
  try {
    resample_lane(b, t);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("9.5") != std::string::npos);
  }
}

TEST_CASE("lane validation") {
  auto l = make_lane({0.0, 1.0}, {0.0, 0.0});
  CHECK_NOTHROW(l.validate());
  l.visibility[1] = 1.5;
  CHECK_THROWS_AS(l.validate(), ValidationError);
  l = make_lane({1.0, 0.0}, {0.0, 0.0});
  CHECK_THROWS_AS(l.validate(), ValidationError);
}

TEST_CASE("lane files round-trip") {
  std::vector<Lane3D> lanes{make_lane({0.0, 4.0, 8.0}, {0.1, 1.0 / 3.0, 3.0}), make_lane({2.0, 3.0}, {-1.0, -1.25})};
  lanes[1].visibility = {0.0, 0.75};
  lanes[1].category = 4;
  CHECK(lanes_from_string(lanes_to_string(lanes)) == lanes);

  auto path = std::filesystem::temp_directory_path() / "tlane_test_lanes.json";
  write_lane_file(path, lanes);
  CHECK(read_lane_file(path) == lanes);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(lanes_from_string("{}"), ValidationError);
  CHECK_THROWS_AS(lanes_from_string("[{\"stations\":[0,1],\"x\":[0],\"z\":[0,0],\"visibility\":[1,1],\"category\":1}]"),
                  ValidationError);
}
