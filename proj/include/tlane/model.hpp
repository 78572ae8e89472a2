#pragma once

// The trainable model: optional LSTM fusion, detection heads, and the
// per-task log-variances, plus the per-clip loss that ties them together.

#include "tlane/ad.hpp"
#include "tlane/heads.hpp"
#include "tlane/lane.hpp"
#include "tlane/losses.hpp"
#include "tlane/synth.hpp"
#include "tlane/temporal_fusion.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tlane {

struct AblationFlags {
  bool balanced_l1 = true;
  bool chamfer = true;
  bool uncertainty = true;
  bool lstm_fusion = true;

  bool operator==(const AblationFlags&) const = default;
};

/// Predicted lanes closer than this (mean lateral distance, meters) to a
/// more confident prediction are dropped as duplicates.
inline constexpr double kDefaultNmsDistance = 1.0;

struct ModelConfig {
  bool hidden_layer = true;
  int lstm_hidden = 0;  // 0 means "same as channels"
  double visibility_threshold = kDefaultVisibilityThreshold;
  double positive_threshold = kDefaultPositiveThreshold;
  double nms_distance = kDefaultNmsDistance;
};

struct ModelParameters {
  HeadParameters heads;
  LstmParameters lstm;
  ad::Matrix log_variance;  // 1 x kTaskCount

  static ModelParameters init(ad::Index channels, ad::Index stations, ad::Index classes, const ModelConfig& cfg,
                              std::uint64_t seed);

  /// Every learnable array in checkpoint order. Pointers stay valid while
  /// this object lives.
  std::vector<std::pair<std::string, ad::Matrix*>> arrays();
  std::vector<std::pair<std::string, const ad::Matrix*>> arrays() const;
  void validate() const;
};

struct ModelVars {
  HeadVars heads;
  LstmVars lstm;
  ad::Var log_variance;

  /// Same order as ModelParameters::arrays().
  std::vector<ad::Var> ordered() const;
};

/// Leaves for everything that receives gradients under `flags`; the rest are constants.
ModelVars place_on_tape(ad::Tape& tape, const ModelParameters& p, const AblationFlags& flags);

struct LossSettings {
  LossConfig loss;
  AblationFlags flags;
  double escop_weight = 1.0;
  double positive_threshold = kDefaultPositiveThreshold;
  bool temporal_consistency = false;
  double temporal_consistency_weight = 1.0;
};

struct LossBreakdown {
  std::array<double, kTaskCount> task{};  // after the ESCOP weight
  std::array<bool, kTaskCount> active{};
  double consistency = 0.0;
  double total = 0.0;
};

struct ClipLoss {
  ad::Var total;
  LossBreakdown parts;
};

/// Window of `window` frames ending at frame `end` (inclusive).
ad::Var clip_features(ad::Tape& tape, const SceneSequence& scene, int end, int window, const ModelVars& vars,
                      bool use_lstm);

/// Supervised loss for the window ending at `end`, against that frame's
/// ground truth.
ClipLoss clip_loss(ad::Tape& tape, const ModelVars& vars, const SceneSequence& scene, int end, int window,
                   const AnchorSet& anchors, const LossSettings& settings);

/// Greedy suppression in order of decreasing confidence. Distance is the
/// mean |x| gap over stations where both lanes are visible (all stations if
/// none are). Returns kept indices in confidence order.
std::vector<std::size_t> suppress_duplicates(const std::vector<Lane3D>& lanes, const std::vector<double>& confidence,
                                             double distance);

/// Lanes predicted for the window ending at `end`: every anchor whose
/// arg-max class is not background, after duplicate suppression.
/// nms_distance <= 0 keeps every such anchor.
std::vector<Lane3D> predict_lanes(const ModelParameters& params, const SceneSequence& scene, int end, int window,
                                  const AnchorSet& anchors, bool use_lstm, double visibility_threshold,
                                  double nms_distance = kDefaultNmsDistance);

/// Same, from already fused K x C features.
std::vector<Lane3D> lanes_from_features(const ad::Matrix& features, const HeadParameters& heads,
                                        const AnchorSet& anchors, double visibility_threshold,
                                        double nms_distance = kDefaultNmsDistance);

}  // namespace tlane
