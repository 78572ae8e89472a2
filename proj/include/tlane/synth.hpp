#pragma once

// Seeded synthetic driving clips. World lanes are x(Y) = c0 + c1*Y + c2*Y^2,
// z(Y) = h0 + h1*Y in the ego frame of the first frame; each frame re-expresses
// them in its own ego frame and carries noisy per-anchor features.

#include "tlane/ad.hpp"
#include "tlane/heads.hpp"
#include "tlane/lane.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace tlane {

struct EgoMotion {
  double forward = 0.0;  // meters travelled along the current heading
  double yaw = 0.0;      // heading change in radians, applied after the move
};

struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

Pose2D advance(const Pose2D& pose, const EgoMotion& motion);
/// Point (x, y) in frame t expressed in frame t+1 after `motion`.
std::array<double, 2> transport_point(double x, double y, const EgoMotion& motion);
/// Rigidly moves a lane from frame t into frame t+1. Stations become the
/// transported y coordinates; throws if they stop increasing.
Lane3D transport_lane(const Lane3D& lane, const EgoMotion& motion);

struct WorldLane {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0;
  double h0 = 0.0, h1 = 0.0;
  double visible_from = 0.0, visible_to = 0.0;  // world Y span
  int category = 1;

  double lateral(double world_y) const { return c0 + (c1 + c2 * world_y) * world_y; }
  double slope(double world_y) const { return c1 + 2.0 * c2 * world_y; }
  double height(double world_y) const { return h0 + h1 * world_y; }
};

/// Lane point at ego-frame station y for a vehicle at `pose`: returns
/// {x, z, world_y}. Solved by Newton iteration to machine precision.
std::array<double, 3> sample_lane(const WorldLane& lane, const Pose2D& pose, double y);

/// Layout: [dx_j / lateral_scale | dz_j / height_scale | v_j | one-hot class]
/// followed by zeros up to `channels`.
struct FeatureEncoding {
  int stations = 20;
  int classes = 5;
  int channels = 128;
  double lateral_scale = 12.0;
  double height_scale = 1.0;

  int used_channels() const { return 3 * stations + classes; }
  void validate() const;
};

struct AnchorTruth {
  std::vector<double> dx;
  std::vector<double> dz;
  std::vector<double> visibility;
  int category = kBackgroundClass;

  static AnchorTruth background(std::size_t stations);
};

ad::Matrix feature_encode(const AnchorTruth& truth, const FeatureEncoding& enc);
/// Exact inverse of feature_encode on its used channels.
AnchorTruth feature_decode(const ad::Matrix& feature, const FeatureEncoding& enc);

struct SceneConfig {
  int lanes_min = 2;
  int lanes_max = 4;
  int categories = 4;
  double lane_width_min = 3.0;
  double lane_width_max = 4.0;
  double lateral_min = -6.0;
  double lateral_max = 6.0;
  double heading_max = 0.03;      // |c1|
  double curvature_max = 4e-4;    // |c2|, 1/m
  double height_max = 0.3;        // |h0|, m
  double grade_max = 0.015;       // |h1|
  double visible_from_min = 0.0;
  double visible_from_max = 20.0;
  double visible_to_min = 60.0;
  double visible_to_max = 120.0;
  double noise_sigma = 0.25;
  double speed_min = 8.0;         // m/s
  double speed_max = 15.0;
  double frame_interval = 0.1;    // s
  double yaw_rate_max = 0.05;     // rad/s
  int window = 3;                 // T
  int frames = 5;                 // frames per clip, >= window
  int channels = 128;             // C
  double lateral_scale = 12.0;
  double height_scale = 1.0;
  double positive_threshold = kDefaultPositiveThreshold;

  int classes() const { return categories + 1; }
  FeatureEncoding encoding(const AnchorSet& anchors) const;
  void validate() const;
};

struct SceneFrame {
  std::vector<Lane3D> lanes;  // ground truth in this frame's ego frame
  TargetAssignment assignment;
  ad::Matrix features;        // K x C
};

struct SceneSequence {
  std::uint64_t seed = 0;
  std::vector<WorldLane> world;
  std::vector<Pose2D> poses;       // per frame
  std::vector<EgoMotion> motion;   // frames - 1 entries, motion[t] takes frame t to t+1
  std::vector<SceneFrame> frames;
};

SceneSequence generate_scene(std::uint64_t seed, const SceneConfig& config, const AnchorSet& anchors);

/// Ground-truth lanes for a vehicle pose, sampled on the anchor stations.
std::vector<Lane3D> lanes_in_frame(const std::vector<WorldLane>& world, const Pose2D& pose,
                                   const AnchorSet& anchors);

/// Per-anchor truth implied by an assignment: positives carry their lane's
/// offsets, visibility and category; everything else is background.
std::vector<AnchorTruth> anchor_truths(const AnchorSet& anchors, const std::vector<Lane3D>& lanes,
                                       const TargetAssignment& assignment);

/// Deterministic stream splitting for scene seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

struct Dataset {
  std::vector<SceneSequence> train;
  std::vector<SceneSequence> eval;
};

Dataset generate_dataset(std::uint64_t seed, int train_scenes, int eval_scenes, const SceneConfig& config,
                         const AnchorSet& anchors);

}  // namespace tlane
