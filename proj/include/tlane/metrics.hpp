#pragma once

// Lane matching F1 / category accuracy and the frame-to-frame jitter of
// ego-aligned predictions.

#include "tlane/lane.hpp"
#include "tlane/synth.hpp"

#include <cstddef>
#include <vector>

namespace tlane {

inline constexpr double kDefaultMatchThreshold = 1.5;
inline constexpr double kDefaultCoverage = 0.75;

struct LaneMatch {
  int pred = -1;
  int gt = -1;
  double mean_distance = 0.0;  // meters
};

struct MatchReport {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int category_hits = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::vector<LaneMatch> matches;

  /// Recomputes the ratios from the counts; every 0/0 ratio is 0.
  void finalize();
  /// Sums counts (match lists are not merged) and recomputes the ratios.
  MatchReport& operator+=(const MatchReport& other);
};

struct PairScore {
  bool admissible = false;
  double mean_distance = 0.0;
  int close = 0;
  int visible = 0;
};

/// Compares one prediction with one ground truth on the ground truth's
/// visible stations that the prediction covers. A station is close when the
/// prediction is visible there and the 3D distance is <= threshold.
PairScore score_pair(const Lane3D& pred, const Lane3D& gt, double threshold, double coverage);

MatchReport match_lanes(const std::vector<Lane3D>& preds, const std::vector<Lane3D>& gts,
                        double threshold = kDefaultMatchThreshold, double coverage = kDefaultCoverage);

struct JitterResult {
  double jitter = 0.0;  // meters
  double total = 0.0;   // sum of |dx| samples
  std::size_t samples = 0;
};

/// `frames[t]` are the lanes predicted in frame t; `motion[t]` moves frame t
/// to frame t+1. Throws if fewer than two frames or if no lane is matched
/// across any consecutive pair.
JitterResult temporal_smoothness_detail(const std::vector<std::vector<Lane3D>>& frames,
                                        const std::vector<EgoMotion>& motion,
                                        double threshold = kDefaultMatchThreshold,
                                        double coverage = kDefaultCoverage);
double temporal_smoothness(const std::vector<std::vector<Lane3D>>& frames, const std::vector<EgoMotion>& motion,
                           double threshold = kDefaultMatchThreshold, double coverage = kDefaultCoverage);

}  // namespace tlane
