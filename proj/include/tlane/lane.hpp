#pragma once

// Lane representation and the straight anchor family in the ego frame:
// y forward (longitudinal stations), x lateral, z up, all in meters.

#include <cstddef>
#include <span>
#include <vector>

namespace tlane {

struct Lane3D {
  std::vector<double> stations;  // strictly increasing y
  std::vector<double> x;
  std::vector<double> z;
  std::vector<double> visibility;  // in [0, 1]
  int category = 0;

  std::size_t size() const { return stations.size(); }
  /// Throws ValidationError if the invariants do not hold.
  void validate() const;
};

bool operator==(const Lane3D& a, const Lane3D& b);

struct AnchorLayout {
  double lateral_min = -10.0;
  double lateral_max = 10.0;
  int count = 40;
  std::vector<double> stations = default_stations();

  static std::vector<double> default_stations();
};

/// `n` evenly spaced values from first to last inclusive.
std::vector<double> evenly_spaced(double first, double last, int n);

class AnchorSet {
 public:
  AnchorSet(std::vector<double> stations, std::vector<std::vector<double>> base_x,
            std::vector<std::vector<double>> base_z);

  std::size_t size() const { return base_x_.size(); }
  std::size_t station_count() const { return stations_.size(); }
  std::span<const double> stations() const { return stations_; }
  std::span<const double> base_x(std::size_t k) const;
  std::span<const double> base_z(std::size_t k) const;
  /// Mean base lateral position of anchor k.
  double lateral(std::size_t k) const;

 private:
  std::vector<double> stations_;
  std::vector<std::vector<double>> base_x_;
  std::vector<std::vector<double>> base_z_;
};

AnchorSet build_default_anchors(const AnchorLayout& layout);

struct AnchorPrediction {
  std::size_t anchor = 0;
  std::vector<double> dx;
  std::vector<double> dz;
  std::vector<double> visibility_logits;
  std::vector<double> class_logits;
};

struct DecodedLane {
  Lane3D lane;
  std::size_t anchor = 0;
  /// Stations whose visibility fell below the decode threshold. They stay in
  /// the lane; consumers decide whether to use them.
  std::vector<bool> below_threshold;
};

inline constexpr double kDefaultVisibilityThreshold = 0.5;

DecodedLane decode_anchor(const AnchorSet& anchors, const AnchorPrediction& pred,
                          double visibility_threshold = kDefaultVisibilityThreshold);

/// Offsets (x - x^a, z - z^a) of a lane sampled on the anchor stations.
AnchorPrediction encode_offsets(const AnchorSet& anchors, std::size_t k, const Lane3D& lane);

/// Piecewise-linear resampling of x, z and visibility. No extrapolation.
Lane3D resample_lane(const Lane3D& lane, std::span<const double> targets);

/// Linear interpolation of `values` given at increasing `knots`, evaluated at y.
double interpolate(std::span<const double> knots, std::span<const double> values, double y);

}  // namespace tlane
