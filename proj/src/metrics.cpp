#include "tlane/metrics.hpp"

#include "tlane/assignment.hpp"
#include "tlane/errors.hpp"

#include <cmath>

namespace tlane {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

bool covers(const Lane3D& lane, double y) {
  return lane.size() > 0 && y >= lane.stations.front() && y <= lane.stations.back();
}

struct Sample {
  double x, z, v;
};

Sample sample_at(const Lane3D& lane, double y) {
  if (lane.size() == 1) return {lane.x[0], lane.z[0], lane.visibility[0]};
  return {interpolate(lane.stations, lane.x, y), interpolate(lane.stations, lane.z, y),
          interpolate(lane.stations, lane.visibility, y)};
}

}  // namespace

void MatchReport::finalize() {
  precision = ratio(true_positives, true_positives + false_positives);
  recall = ratio(true_positives, true_positives + false_negatives);
  f1 = ratio(2.0 * precision * recall, precision + recall);
  accuracy = ratio(category_hits, true_positives);
}

MatchReport& MatchReport::operator+=(const MatchReport& other) {
  true_positives += other.true_positives;
  false_positives += other.false_positives;
  false_negatives += other.false_negatives;
  category_hits += other.category_hits;
  finalize();
  return *this;
}

PairScore score_pair(const Lane3D& pred, const Lane3D& gt, double threshold, double coverage) {
  PairScore s;
  double dist_sum = 0.0;
  int covered = 0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (gt.visibility[j] < kDefaultVisibilityThreshold) continue;
    ++s.visible;
    const double y = gt.stations[j];
    if (!covers(pred, y)) continue;
    const Sample p = sample_at(pred, y);
    const double d = std::hypot(p.x - gt.x[j], p.z - gt.z[j]);
    dist_sum += d;
    ++covered;
    if (p.v >= kDefaultVisibilityThreshold && d <= threshold) ++s.close;
  }
  s.mean_distance = covered > 0 ? dist_sum / covered : 0.0;
  s.admissible = s.visible > 0 && covered > 0 &&
                 static_cast<double>(s.close) >= coverage * static_cast<double>(s.visible);
  return s;
}

MatchReport match_lanes(const std::vector<Lane3D>& preds, const std::vector<Lane3D>& gts, double threshold,
                        double coverage) {
  if (!(threshold > 0.0)) throw ValidationError("match_lanes: threshold must be > 0");
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ValidationError("match_lanes: coverage must be in (0, 1]");
  MatchReport r;
  std::vector<std::vector<double>> cost(preds.size(), std::vector<double>(gts.size(), kForbidden));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const PairScore s = score_pair(preds[i], gts[j], threshold, coverage);
      if (s.admissible) cost[i][j] = s.mean_distance;
    }
  }
  const Assignment a = min_cost_assignment(cost);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int j = a.row_to_col[i];
    if (j < 0) continue;
    r.matches.push_back({static_cast<int>(i), j, cost[i][static_cast<std::size_t>(j)]});
    if (preds[i].category == gts[static_cast<std::size_t>(j)].category) ++r.category_hits;
  }
  r.true_positives = a.matched;
  r.false_positives = static_cast<int>(preds.size()) - a.matched;
  r.false_negatives = static_cast<int>(gts.size()) - a.matched;
  r.finalize();
  return r;
}

JitterResult temporal_smoothness_detail(const std::vector<std::vector<Lane3D>>& frames,
                                        const std::vector<EgoMotion>& motion, double threshold,
                                        double coverage) {
  if (frames.size() < 2) throw ValidationError("temporal_smoothness: need at least two frames");
  if (motion.size() + 1 < frames.size()) throw ValidationError("temporal_smoothness: missing ego motion");
  JitterResult out;
  bool any_match = false;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    std::vector<Lane3D> carried;
    carried.reserve(frames[t].size());
    for (const Lane3D& l : frames[t]) carried.push_back(transport_lane(l, motion[t]));
    const std::vector<Lane3D>& next = frames[t + 1];
    const MatchReport m = match_lanes(next, carried, threshold, coverage);
    for (const LaneMatch& lm : m.matches) {
      any_match = true;
      const Lane3D& cur = next[static_cast<std::size_t>(lm.pred)];
      const Lane3D& prev = carried[static_cast<std::size_t>(lm.gt)];
      for (std::size_t j = 0; j < cur.size(); ++j) {
        const double y = cur.stations[j];
        if (!covers(prev, y)) continue;
        const Sample p = sample_at(prev, y);
        if (cur.visibility[j] < kDefaultVisibilityThreshold || p.v < kDefaultVisibilityThreshold) continue;
        out.total += std::abs(cur.x[j] - p.x);
        ++out.samples;
      }
    }
  }
  if (!any_match) throw ValidationError("temporal_smoothness: no lane matched across frames");
  out.jitter = out.samples > 0 ? out.total / static_cast<double>(out.samples) : 0.0;
  return out;
}

double temporal_smoothness(const std::vector<std::vector<Lane3D>>& frames, const std::vector<EgoMotion>& motion,
                           double threshold, double coverage) {
  return temporal_smoothness_detail(frames, motion, threshold, coverage).jitter;
}

}  // namespace tlane
