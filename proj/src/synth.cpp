#include "tlane/synth.hpp"

#include "tlane/errors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace tlane {

Pose2D advance(const Pose2D& pose, const EgoMotion& motion) {
  Pose2D next;
  next.x = pose.x - motion.forward * std::sin(pose.heading);
  next.y = pose.y + motion.forward * std::cos(pose.heading);
  next.heading = pose.heading + motion.yaw;
  return next;
}

std::array<double, 2> transport_point(double x, double y, const EgoMotion& motion) {
  const double c = std::cos(motion.yaw);
  const double s = std::sin(motion.yaw);
  const double yy = y - motion.forward;
  return {c * x + s * yy, -s * x + c * yy};
}

Lane3D transport_lane(const Lane3D& lane, const EgoMotion& motion) {
  Lane3D out;
  out.category = lane.category;
  out.z = lane.z;
  out.visibility = lane.visibility;
  out.x.reserve(lane.size());
  out.stations.reserve(lane.size());
  for (std::size_t j = 0; j < lane.size(); ++j) {
    const auto p = transport_point(lane.x[j], lane.stations[j], motion);
    if (!out.stations.empty() && !(p[1] > out.stations.back())) {
      throw ValidationError("transport_lane: transported stations are not increasing");
    }
    out.x.push_back(p[0]);
    out.stations.push_back(p[1]);
  }
  return out;
}

std::array<double, 3> sample_lane(const WorldLane& lane, const Pose2D& pose, double y) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  auto world_y = [&](double x) { return pose.y + x * s + y * c; };
  auto residual = [&](double x) { return pose.x + x * c - y * s - lane.lateral(world_y(x)); };
  double x = lane.lateral(pose.y + y * c) - pose.x;
  for (int it = 0; it < 60; ++it) {
    const double g = residual(x);
    const double dg = c - lane.slope(world_y(x)) * s;
    if (dg == 0.0) throw NumericalError("sample_lane: degenerate lane orientation");
    const double step = g / dg;
    x -= step;
    if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
  }
  const double wy = world_y(x);
  return {x, lane.height(wy), wy};
}

// --- Features -------------------------------------------------------------------

void FeatureEncoding::validate() const {
  if (stations < 1 || classes < 2) throw ValidationError("feature encoding: invalid stations/classes");
  if (channels < used_channels()) {
    throw ValidationError("scene.channels: " + std::to_string(channels) + " < required " +
                          std::to_string(used_channels()) + " (3 * stations + classes)");
  }
  if (!(lateral_scale > 0.0) || !(height_scale > 0.0)) {
    throw ValidationError("feature encoding: scales must be positive");
  }
}

AnchorTruth AnchorTruth::background(std::size_t stations) {
  AnchorTruth t;
  t.dx.assign(stations, 0.0);
  t.dz.assign(stations, 0.0);
  t.visibility.assign(stations, 0.0);
  t.category = kBackgroundClass;
  return t;
}

ad::Matrix feature_encode(const AnchorTruth& truth, const FeatureEncoding& enc) {
  enc.validate();
  const auto s = static_cast<std::size_t>(enc.stations);
  if (truth.dx.size() != s || truth.dz.size() != s || truth.visibility.size() != s) {
    throw ValidationError("feature_encode: truth does not match station count");
  }
  if (truth.category < 0 || truth.category >= enc.classes) throw ValidationError("feature_encode: bad class");
  ad::Matrix f = ad::Matrix::Zero(1, enc.channels);
  for (std::size_t j = 0; j < s; ++j) {
    const auto jj = static_cast<ad::Index>(j);
    f(0, jj) = truth.dx[j] / enc.lateral_scale;
    f(0, enc.stations + jj) = truth.dz[j] / enc.height_scale;
    f(0, 2 * enc.stations + jj) = truth.visibility[j];
  }
  f(0, 3 * enc.stations + truth.category) = 1.0;
  return f;
}

AnchorTruth feature_decode(const ad::Matrix& feature, const FeatureEncoding& enc) {
  enc.validate();
  if (feature.rows() != 1 || feature.cols() != enc.channels) throw ValidationError("feature_decode: bad shape");
  AnchorTruth t;
  const auto s = static_cast<std::size_t>(enc.stations);
  t.dx.resize(s);
  t.dz.resize(s);
  t.visibility.resize(s);
  for (std::size_t j = 0; j < s; ++j) {
    const auto jj = static_cast<ad::Index>(j);
    t.dx[j] = feature(0, jj) * enc.lateral_scale;
    t.dz[j] = feature(0, enc.stations + jj) * enc.height_scale;
    t.visibility[j] = feature(0, 2 * enc.stations + jj);
  }
  ad::Index best = 0;
  for (ad::Index c = 1; c < enc.classes; ++c) {
    if (feature(0, 3 * enc.stations + c) > feature(0, 3 * enc.stations + best)) best = c;
  }
  t.category = static_cast<int>(best);
  return t;
}

// --- Scenes ---------------------------------------------------------------------

FeatureEncoding SceneConfig::encoding(const AnchorSet& anchors) const {
  FeatureEncoding e;
  e.stations = static_cast<int>(anchors.station_count());
  e.classes = classes();
  e.channels = channels;
  e.lateral_scale = lateral_scale;
  e.height_scale = height_scale;
  return e;
}

void SceneConfig::validate() const {
  auto range = [](double lo, double hi, const char* field) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
      throw ValidationError(std::string("scene.") + field + ": invalid range");
    }
  };
  if (lanes_min < 0 || lanes_max < lanes_min) throw ValidationError("scene.lanes: invalid range");
  if (categories < 1) throw ValidationError("scene.categories: must be >= 1");
  range(lane_width_min, lane_width_max, "lane_width");
  if (!(lane_width_min > 0.0)) throw ValidationError("scene.lane_width: must be positive");
  range(lateral_min, lateral_max, "lateral");
  range(visible_from_min, visible_from_max, "visible_from");
  range(visible_to_min, visible_to_max, "visible_to");
  range(speed_min, speed_max, "speed");
  if (heading_max < 0.0 || curvature_max < 0.0 || height_max < 0.0 || grade_max < 0.0 || yaw_rate_max < 0.0) {
    throw ValidationError("scene: magnitude limits must be >= 0");
  }
  if (!(noise_sigma >= 0.0)) throw ValidationError("scene.noise_sigma: must be >= 0");
  if (!(frame_interval > 0.0)) throw ValidationError("scene.frame_interval: must be > 0");
  if (window < 1) throw ValidationError("scene.window: must be >= 1");
  if (frames < window) throw ValidationError("scene.frames: must be >= window");
  if (channels < 1) throw ValidationError("scene.channels: must be >= 1");
  if (!(positive_threshold > 0.0)) throw ValidationError("scene.positive_threshold: must be > 0");
}

std::vector<Lane3D> lanes_in_frame(const std::vector<WorldLane>& world, const Pose2D& pose,
                                   const AnchorSet& anchors) {
  std::vector<Lane3D> lanes;
  const auto st = anchors.stations();
  for (const WorldLane& wl : world) {
    Lane3D lane;
    lane.category = wl.category;
    lane.stations.assign(st.begin(), st.end());
    bool any_visible = false;
    for (double y : st) {
      const auto p = sample_lane(wl, pose, y);
      lane.x.push_back(p[0]);
      lane.z.push_back(p[1]);
      const bool vis = p[2] >= wl.visible_from && p[2] <= wl.visible_to;
      lane.visibility.push_back(vis ? 1.0 : 0.0);
      any_visible = any_visible || vis;
    }
    if (any_visible) lanes.push_back(std::move(lane));
  }
  return lanes;
}

std::vector<AnchorTruth> anchor_truths(const AnchorSet& anchors, const std::vector<Lane3D>& lanes,
                                       const TargetAssignment& assignment) {
  std::vector<AnchorTruth> truths(anchors.size(), AnchorTruth::background(anchors.station_count()));
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (assignment.role[k] != AnchorRole::kPositive) continue;
    const Lane3D& lane = lanes.at(static_cast<std::size_t>(assignment.lane_of_anchor[k]));
    const Lane3D on_stations =
        lane.stations.size() == anchors.station_count() &&
                std::equal(lane.stations.begin(), lane.stations.end(), anchors.stations().begin())
            ? lane
            : resample_lane(lane, anchors.stations());
    const AnchorPrediction off = encode_offsets(anchors, k, on_stations);
    truths[k].dx = off.dx;
    truths[k].dz = off.dz;
    truths[k].visibility = on_stations.visibility;
    truths[k].category = lane.category;
  }
  return truths;
}

SceneSequence generate_scene(std::uint64_t seed, const SceneConfig& config, const AnchorSet& anchors) {
  config.validate();
  const FeatureEncoding enc = config.encoding(anchors);
  enc.validate();

  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto symmetric = [&](double m) { return m == 0.0 ? 0.0 : uniform(-m, m); };

  SceneSequence scene;
  scene.seed = seed;
  const int n_lanes = std::uniform_int_distribution<int>(config.lanes_min, config.lanes_max)(rng);
  const double width = uniform(config.lane_width_min, config.lane_width_max);
  const double c1 = symmetric(config.heading_max);
  const double c2 = symmetric(config.curvature_max);
  const double h0 = symmetric(config.height_max);
  const double h1 = symmetric(config.grade_max);
  const double span = (n_lanes > 0 ? n_lanes - 1 : 0) * width;
  const double left_hi = config.lateral_max - span;
  const double left = left_hi >= config.lateral_min ? uniform(config.lateral_min, left_hi)
                                                     : 0.5 * (config.lateral_min + config.lateral_max) - 0.5 * span;
  for (int i = 0; i < n_lanes; ++i) {
    WorldLane wl;
    wl.c0 = left + i * width;
    wl.c1 = c1;
    wl.c2 = c2;
    wl.h0 = h0;
    wl.h1 = h1;
    wl.category = std::uniform_int_distribution<int>(1, config.categories)(rng);
    wl.visible_from = uniform(config.visible_from_min, config.visible_from_max);
    wl.visible_to = uniform(config.visible_to_min, config.visible_to_max);
    scene.world.push_back(wl);
  }

  scene.poses.push_back(Pose2D{});
  for (int t = 1; t < config.frames; ++t) {
    EgoMotion m;
    m.forward = uniform(config.speed_min, config.speed_max) * config.frame_interval;
    m.yaw = symmetric(config.yaw_rate_max) * config.frame_interval;
    scene.motion.push_back(m);
    scene.poses.push_back(advance(scene.poses.back(), m));
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  const auto k_count = static_cast<ad::Index>(anchors.size());
  for (int t = 0; t < config.frames; ++t) {
    SceneFrame frame;
    frame.lanes = lanes_in_frame(scene.world, scene.poses[static_cast<std::size_t>(t)], anchors);
    frame.assignment = assign_targets(anchors, frame.lanes, config.positive_threshold);
    const auto truths = anchor_truths(anchors, frame.lanes, frame.assignment);
    frame.features = ad::Matrix(k_count, config.channels);
    for (ad::Index k = 0; k < k_count; ++k) {
      frame.features.row(k) = feature_encode(truths[static_cast<std::size_t>(k)], enc);
    }
    if (config.noise_sigma > 0.0) {
      for (ad::Index k = 0; k < k_count; ++k) {
        for (ad::Index c = 0; c < config.channels; ++c) frame.features(k, c) += config.noise_sigma * noise(rng);
      }
    }
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Dataset generate_dataset(std::uint64_t seed, int train_scenes, int eval_scenes, const SceneConfig& config,
                         const AnchorSet& anchors) {
  if (train_scenes < 0 || eval_scenes < 0) throw ValidationError("dataset: scene counts must be >= 0");
  Dataset d;
  for (int i = 0; i < train_scenes; ++i) {
    d.train.push_back(generate_scene(mix_seed(seed, static_cast<std::uint64_t>(i)), config, anchors));
  }
  for (int i = 0; i < eval_scenes; ++i) {
    d.eval.push_back(generate_scene(mix_seed(seed, 1'000'000ULL + static_cast<std::uint64_t>(i)), config, anchors));
  }
  return d;
}

}  // namespace tlane
