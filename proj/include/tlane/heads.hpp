#pragma once

// Per-anchor detection heads and anchor-to-ground-truth target assignment.

#include "tlane/ad.hpp"
#include "tlane/lane.hpp"

#include <random>
#include <vector>

namespace tlane {

/// Class index 0 is background; lane categories use 1..categories.
inline constexpr int kBackgroundClass = 0;

/// Optional shared relu hidden layer (C -> C), then three affine heads:
/// offsets [dx_0..dx_{S-1}, dz_0..dz_{S-1}], visibility logits (S) and
/// class logits.
struct HeadParameters {
  bool hidden_layer = true;
  ad::Matrix w_hidden, b_hidden;
  ad::Matrix w_offset, b_offset;
  ad::Matrix w_visibility, b_visibility;
  ad::Matrix w_class, b_class;

  ad::Index channels() const { return w_offset.rows(); }
  ad::Index stations() const { return w_visibility.cols(); }
  ad::Index classes() const { return w_class.cols(); }

  static HeadParameters zeros(ad::Index channels, ad::Index stations, ad::Index classes, bool hidden_layer);
  static HeadParameters random(ad::Index channels, ad::Index stations, ad::Index classes, bool hidden_layer,
                               std::mt19937_64& rng);
  void validate() const;
};

struct HeadVars {
  bool hidden_layer = true;
  ad::Var w_hidden, b_hidden;
  ad::Var w_offset, b_offset;
  ad::Var w_visibility, b_visibility;
  ad::Var w_class, b_class;

  static HeadVars leaves(ad::Tape& tape, const HeadParameters& p);
  static HeadVars constants(ad::Tape& tape, const HeadParameters& p);
};

/// Raw head outputs for K anchors; no activations applied.
struct HeadOutputs {
  ad::Var offsets;             // K x 2S
  ad::Var visibility_logits;   // K x S
  ad::Var class_logits;        // K x classes
};

HeadOutputs forward(const ad::Var& features, const HeadVars& heads);

std::vector<AnchorPrediction> forward(const ad::Matrix& features, const HeadParameters& params,
                                      const AnchorSet& anchors);

std::vector<AnchorPrediction> to_predictions(const HeadOutputs& out);

// --- Target assignment --------------------------------------------------------

enum class AnchorRole { kBackground, kPositive, kIgnore };

struct TargetAssignment {
  std::vector<AnchorRole> role;      // per anchor
  std::vector<int> lane_of_anchor;   // per anchor, -1 unless positive
  std::vector<int> anchor_of_lane;   // per lane, -1 if unassigned
  double total_cost = 0.0;

  std::vector<std::size_t> positives() const;
};

inline constexpr double kDefaultPositiveThreshold = 1.0;

/// Mean |x_lane(y) - x_anchor(y)| over the anchor stations covered by the
/// lane where it is visible (all covered stations if none is visible).
/// Returns kForbidden when the lane covers no anchor station.
double mean_lateral_distance(const AnchorSet& anchors, std::size_t k, const Lane3D& lane);

/// Each lane goes to one anchor by global minimum-cost matching on mean
/// lateral distance. Unchosen anchors within `positive_threshold` of some lane
/// are ignored; the rest are background.
TargetAssignment assign_targets(const AnchorSet& anchors, const std::vector<Lane3D>& lanes,
                                double positive_threshold = kDefaultPositiveThreshold);

}  // namespace tlane
