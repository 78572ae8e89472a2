#include "tlane/lane.hpp"

#include "tlane/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tlane {

namespace {

void require_increasing(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
    if (i > 0 && !(values[i] > values[i - 1])) {
      throw ValidationError(std::string(what) + ": must be strictly increasing (index " +
                            std::to_string(i) + ")");
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void Lane3D::validate() const {
  require_increasing(stations, "stations");
  if (x.size() != stations.size() || z.size() != stations.size() ||
      visibility.size() != stations.size()) {
    throw ValidationError("lane: stations, x, z and visibility must have equal lengths");
  }
  for (std::size_t j = 0; j < stations.size(); ++j) {
    if (!std::isfinite(x[j]) || !std::isfinite(z[j])) throw ValidationError("lane: non-finite geometry");
    if (!(visibility[j] >= 0.0 && visibility[j] <= 1.0)) {
      throw ValidationError("lane: visibility outside [0, 1] at index " + std::to_string(j));
    }
  }
}

bool operator==(const Lane3D& a, const Lane3D& b) {
  return a.category == b.category && a.stations == b.stations && a.x == b.x && a.z == b.z &&
         a.visibility == b.visibility;
}

std::vector<double> AnchorLayout::default_stations() { return evenly_spaced(3.0, 103.0, 20); }

std::vector<double> evenly_spaced(double first, double last, int n) {
  if (n < 1) throw ValidationError("evenly_spaced: count must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(n));
  if (n == 1) {
    out[0] = 0.5 * (first + last);
    return out;
  }
  const double step = (last - first) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = first + step * i;
  out.back() = last;
  return out;
}

AnchorSet::AnchorSet(std::vector<double> stations, std::vector<std::vector<double>> base_x,
                     std::vector<std::vector<double>> base_z)
    : stations_(std::move(stations)), base_x_(std::move(base_x)), base_z_(std::move(base_z)) {
  if (stations_.empty()) throw ValidationError("anchors: station list is empty");
  require_increasing(stations_, "anchors.stations");
  if (base_x_.empty()) throw ValidationError("anchors: count must be >= 1");
  if (base_x_.size() != base_z_.size()) throw ValidationError("anchors: base_x/base_z count mismatch");
  for (std::size_t k = 0; k < base_x_.size(); ++k) {
    if (base_x_[k].size() != stations_.size() || base_z_[k].size() != stations_.size()) {
      throw ValidationError("anchors: anchor " + std::to_string(k) + " does not match station count");
    }
    for (std::size_t j = 0; j < stations_.size(); ++j) {
      if (!std::isfinite(base_x_[k][j]) || !std::isfinite(base_z_[k][j])) {
        throw ValidationError("anchors: non-finite base geometry");
      }
    }
  }
}

std::span<const double> AnchorSet::base_x(std::size_t k) const {
  if (k >= base_x_.size()) throw std::out_of_range("anchor index " + std::to_string(k) + " out of range");
  return base_x_[k];
}

std::span<const double> AnchorSet::base_z(std::size_t k) const {
  if (k >= base_z_.size()) throw std::out_of_range("anchor index " + std::to_string(k) + " out of range");
  return base_z_[k];
}

double AnchorSet::lateral(std::size_t k) const {
  const auto xs = base_x(k);
  double s = 0.0;
  for (double v : xs) s += v;
  return s / static_cast<double>(xs.size());
}

AnchorSet build_default_anchors(const AnchorLayout& layout) {
  if (layout.count < 1) throw ValidationError("anchor_layout.count: must be >= 1");
  if (!(layout.lateral_max >= layout.lateral_min)) {
    throw ValidationError("anchor_layout.lateral_span: max must be >= min");
  }
  if (layout.stations.empty()) throw ValidationError("anchor_layout.stations: empty");
  require_increasing(layout.stations, "anchor_layout.stations");
  const auto laterals = evenly_spaced(layout.lateral_min, layout.lateral_max, layout.count);
  const std::size_t s = layout.stations.size();
  std::vector<std::vector<double>> bx;
  std::vector<std::vector<double>> bz;
  for (double lat : laterals) {
    bx.emplace_back(s, lat);
    bz.emplace_back(s, 0.0);
  }
  return AnchorSet(layout.stations, std::move(bx), std::move(bz));
}

DecodedLane decode_anchor(const AnchorSet& anchors, const AnchorPrediction& pred, double visibility_threshold) {
  if (pred.anchor >= anchors.size()) {
    throw std::out_of_range("decode_anchor: anchor index " + std::to_string(pred.anchor) + " out of range");
  }
  if (!(visibility_threshold >= 0.0 && visibility_threshold <= 1.0)) {
    throw ValidationError("decode_anchor: visibility threshold outside [0, 1]");
  }
  const std::size_t s = anchors.station_count();
  if (pred.dx.size() != s || pred.dz.size() != s || pred.visibility_logits.size() != s) {
    throw ValidationError("decode_anchor: prediction does not match anchor station count");
  }
  if (pred.class_logits.empty()) throw ValidationError("decode_anchor: no class logits");

  const auto bx = anchors.base_x(pred.anchor);
  const auto bz = anchors.base_z(pred.anchor);
  DecodedLane out;
  out.anchor = pred.anchor;
  Lane3D& lane = out.lane;
  lane.stations.assign(anchors.stations().begin(), anchors.stations().end());
  lane.x.resize(s);
  lane.z.resize(s);
  lane.visibility.resize(s);
  out.below_threshold.resize(s);
  for (std::size_t j = 0; j < s; ++j) {
    lane.x[j] = bx[j] + pred.dx[j];
    lane.z[j] = bz[j] + pred.dz[j];
    lane.visibility[j] = sigmoid(pred.visibility_logits[j]);
    out.below_threshold[j] = lane.visibility[j] < visibility_threshold;
  }
  lane.category = static_cast<int>(std::max_element(pred.class_logits.begin(), pred.class_logits.end()) -
                                   pred.class_logits.begin());
  return out;
}

AnchorPrediction encode_offsets(const AnchorSet& anchors, std::size_t k, const Lane3D& lane) {
  const auto bx = anchors.base_x(k);
  const auto bz = anchors.base_z(k);
  if (lane.size() != anchors.station_count()) {
    throw ValidationError("encode_offsets: lane is not sampled on the anchor stations");
  }
  AnchorPrediction p;
  p.anchor = k;
  p.dx.resize(lane.size());
  p.dz.resize(lane.size());
  for (std::size_t j = 0; j < lane.size(); ++j) {
    p.dx[j] = lane.x[j] - bx[j];
    p.dz[j] = lane.z[j] - bz[j];
  }
  return p;
}

double interpolate(std::span<const double> knots, std::span<const double> values, double y) {
  if (knots.size() < 2 || knots.size() != values.size()) {
    throw ValidationError("interpolate: need >= 2 knots with matching values");
  }
  if (y < knots.front() || y > knots.back()) {
    std::ostringstream msg;
    msg << "interpolate: station " << y << " outside [" << knots.front() << ", " << knots.back() << "]";
    throw ValidationError(msg.str());
  }
  auto it = std::upper_bound(knots.begin(), knots.end(), y);
  std::size_t hi = static_cast<std::size_t>(it - knots.begin());
  if (hi == knots.size()) hi = knots.size() - 1;
  const std::size_t lo = hi - 1;
  const double t = (y - knots[lo]) / (knots[hi] - knots[lo]);
  if (t == 0.0) return values[lo];
  if (t == 1.0) return values[hi];
  return values[lo] + t * (values[hi] - values[lo]);
}

Lane3D resample_lane(const Lane3D& lane, std::span<const double> targets) {
  if (lane.size() < 2) throw ValidationError("resample_lane: lane needs at least 2 stations");
  Lane3D out;
  out.category = lane.category;
  out.stations.assign(targets.begin(), targets.end());
  out.x.reserve(targets.size());
  out.z.reserve(targets.size());
  out.visibility.reserve(targets.size());
  for (double y : targets) {
    if (y < lane.stations.front() || y > lane.stations.back()) {
      std::ostringstream msg;
      msg << "resample_lane: target station " << y << " requires extrapolation beyond ["
          << lane.stations.front() << ", " << lane.stations.back() << "]";
      throw ValidationError(msg.str());
    }
    out.x.push_back(interpolate(lane.stations, lane.x, y));
    out.z.push_back(interpolate(lane.stations, lane.z, y));
    out.visibility.push_back(interpolate(lane.stations, lane.visibility, y));
  }
  return out;
}

}  // namespace tlane
