#include "tlane/heads.hpp"

#include "tlane/assignment.hpp"
#include "tlane/errors.hpp"

#include <cmath>

namespace tlane {

namespace {

void fill_uniform(ad::Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (ad::Index i = 0; i < m.rows(); ++i) {
    for (ad::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
  }
}

void check_shape(const ad::Matrix& m, ad::Index rows, ad::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ValidationError(std::string("heads: ") + name + " has shape " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  }
  if (!m.allFinite()) throw ValidationError(std::string("heads: ") + name + " is not finite");
}

}  // namespace

HeadParameters HeadParameters::zeros(ad::Index channels, ad::Index stations, ad::Index classes,
                                     bool hidden_layer) {
  if (channels < 1 || stations < 1 || classes < 2) throw ValidationError("heads: invalid dimensions");
  HeadParameters p;
  p.hidden_layer = hidden_layer;
  if (hidden_layer) {
    p.w_hidden = ad::Matrix::Zero(channels, channels);
    p.b_hidden = ad::Matrix::Zero(1, channels);
  }
  p.w_offset = ad::Matrix::Zero(channels, 2 * stations);
  p.b_offset = ad::Matrix::Zero(1, 2 * stations);
  p.w_visibility = ad::Matrix::Zero(channels, stations);
  p.b_visibility = ad::Matrix::Zero(1, stations);
  p.w_class = ad::Matrix::Zero(channels, classes);
  p.b_class = ad::Matrix::Zero(1, classes);
  return p;
}

HeadParameters HeadParameters::random(ad::Index channels, ad::Index stations, ad::Index classes,
                                      bool hidden_layer, std::mt19937_64& rng) {
  HeadParameters p = zeros(channels, stations, classes, hidden_layer);
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  if (hidden_layer) fill_uniform(p.w_hidden, std::sqrt(3.0) * bound, rng);
  fill_uniform(p.w_offset, bound, rng);
  fill_uniform(p.w_visibility, bound, rng);
  fill_uniform(p.w_class, bound, rng);
  return p;
}

void HeadParameters::validate() const {
  const ad::Index c = channels();
  const ad::Index s = stations();
  const ad::Index k = classes();
  if (c < 1 || s < 1 || k < 2) throw ValidationError("heads: invalid dimensions");
  if (hidden_layer) {
    check_shape(w_hidden, c, c, "w_hidden");
    check_shape(b_hidden, 1, c, "b_hidden");
  }
  check_shape(w_offset, c, 2 * s, "w_offset");
  check_shape(b_offset, 1, 2 * s, "b_offset");
  check_shape(w_visibility, c, s, "w_visibility");
  check_shape(b_visibility, 1, s, "b_visibility");
  check_shape(w_class, c, k, "w_class");
  check_shape(b_class, 1, k, "b_class");
}

namespace {

template <typename Make>
HeadVars place(const HeadParameters& p, Make make) {
  HeadVars v;
  v.hidden_layer = p.hidden_layer;
  if (p.hidden_layer) {
    v.w_hidden = make(p.w_hidden);
    v.b_hidden = make(p.b_hidden);
  }
  v.w_offset = make(p.w_offset);
  v.b_offset = make(p.b_offset);
  v.w_visibility = make(p.w_visibility);
  v.b_visibility = make(p.b_visibility);
  v.w_class = make(p.w_class);
  v.b_class = make(p.b_class);
  return v;
}

}  // namespace

HeadVars HeadVars::leaves(ad::Tape& tape, const HeadParameters& p) {
  return place(p, [&](const ad::Matrix& m) { return tape.leaf(m); });
}

HeadVars HeadVars::constants(ad::Tape& tape, const HeadParameters& p) {
  return place(p, [&](const ad::Matrix& m) { return tape.constant(m); });
}

HeadOutputs forward(const ad::Var& features, const HeadVars& h) {
  if (features.cols() != h.w_offset.rows()) {
    throw ValidationError("heads: feature width " + std::to_string(features.cols()) + " does not match " +
                          std::to_string(h.w_offset.rows()));
  }
  ad::Var trunk = features;
  if (h.hidden_layer) trunk = ad::relu(ad::add_row(ad::matmul(features, h.w_hidden), h.b_hidden));
  return {ad::add_row(ad::matmul(trunk, h.w_offset), h.b_offset),
          ad::add_row(ad::matmul(trunk, h.w_visibility), h.b_visibility),
          ad::add_row(ad::matmul(trunk, h.w_class), h.b_class)};
}

std::vector<AnchorPrediction> to_predictions(const HeadOutputs& out) {
  const ad::Matrix& off = out.offsets.value();
  const ad::Matrix& vis = out.visibility_logits.value();
  const ad::Matrix& cls = out.class_logits.value();
  const ad::Index s = vis.cols();
  std::vector<AnchorPrediction> preds(static_cast<std::size_t>(off.rows()));
  for (ad::Index k = 0; k < off.rows(); ++k) {
    AnchorPrediction& p = preds[static_cast<std::size_t>(k)];
    p.anchor = static_cast<std::size_t>(k);
    p.dx.assign(off.row(k).data(), off.row(k).data() + s);
    p.dz.assign(off.row(k).data() + s, off.row(k).data() + 2 * s);
    p.visibility_logits.assign(vis.row(k).data(), vis.row(k).data() + s);
    p.class_logits.assign(cls.row(k).data(), cls.row(k).data() + cls.cols());
  }
  return preds;
}

std::vector<AnchorPrediction> forward(const ad::Matrix& features, const HeadParameters& params,
                                      const AnchorSet& anchors) {
  params.validate();
  if (static_cast<std::size_t>(features.rows()) != anchors.size()) {
    throw ValidationError("heads: " + std::to_string(features.rows()) + " feature rows for " +
                          std::to_string(anchors.size()) + " anchors");
  }
  if (static_cast<std::size_t>(params.stations()) != anchors.station_count()) {
    throw ValidationError("heads: station count does not match anchors");
  }
  ad::Tape tape;
  const HeadVars v = HeadVars::constants(tape, params);
  return to_predictions(forward(tape.constant(features), v));
}

// --- Target assignment --------------------------------------------------------

std::vector<std::size_t> TargetAssignment::positives() const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < role.size(); ++k) {
    if (role[k] == AnchorRole::kPositive) out.push_back(k);
  }
  return out;
}

double mean_lateral_distance(const AnchorSet& anchors, std::size_t k, const Lane3D& lane) {
  if (lane.size() < 1) return kForbidden;
  const auto st = anchors.stations();
  const auto bx = anchors.base_x(k);
  double visible_sum = 0.0;
  int visible_n = 0;
  double all_sum = 0.0;
  int all_n = 0;
  for (std::size_t j = 0; j < st.size(); ++j) {
    const double y = st[j];
    if (y < lane.stations.front() || y > lane.stations.back()) continue;
    double x;
    double v;
    if (lane.size() == 1) {
      x = lane.x[0];
      v = lane.visibility[0];
    } else {
      x = interpolate(lane.stations, lane.x, y);
      v = interpolate(lane.stations, lane.visibility, y);
    }
    const double d = std::abs(x - bx[j]);
    all_sum += d;
    ++all_n;
    if (v >= 0.5) {
      visible_sum += d;
      ++visible_n;
    }
  }
  if (visible_n > 0) return visible_sum / visible_n;
  if (all_n > 0) return all_sum / all_n;
  return kForbidden;
}

TargetAssignment assign_targets(const AnchorSet& anchors, const std::vector<Lane3D>& lanes,
                                double positive_threshold) {
  if (!(positive_threshold > 0.0)) throw ValidationError("assign_targets: positive threshold must be > 0");
  const std::size_t k_count = anchors.size();
  TargetAssignment out;
  out.role.assign(k_count, AnchorRole::kBackground);
  out.lane_of_anchor.assign(k_count, -1);
  out.anchor_of_lane.assign(lanes.size(), -1);
  if (lanes.empty()) return out;

  std::vector<std::vector<double>> cost(lanes.size(), std::vector<double>(k_count));
  for (std::size_t l = 0; l < lanes.size(); ++l) {
    for (std::size_t k = 0; k < k_count; ++k) cost[l][k] = mean_lateral_distance(anchors, k, lanes[l]);
  }
  const Assignment a = min_cost_assignment(cost);
  out.total_cost = a.total_cost;
  for (std::size_t l = 0; l < lanes.size(); ++l) {
    const int k = a.row_to_col[l];
    if (k < 0) continue;
    out.anchor_of_lane[l] = k;
    out.lane_of_anchor[static_cast<std::size_t>(k)] = static_cast<int>(l);
    out.role[static_cast<std::size_t>(k)] = AnchorRole::kPositive;
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    if (out.role[k] == AnchorRole::kPositive) continue;
    for (std::size_t l = 0; l < lanes.size(); ++l) {
      if (cost[l][k] <= positive_threshold) {
        out.role[k] = AnchorRole::kIgnore;
        break;
      }
    }
  }
  return out;
}

}  // namespace tlane
