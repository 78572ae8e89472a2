#include "tlane/model.hpp"

#include "tlane/errors.hpp"

#include <algorithm>
#include <cmath>

namespace tlane {

ModelParameters ModelParameters::init(ad::Index channels, ad::Index stations, ad::Index classes,
                                      const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xC0FFEEULL));
  ModelParameters p;
  p.heads = HeadParameters::random(channels, stations, classes, cfg.hidden_layer, rng);
  const ad::Index hidden = cfg.lstm_hidden > 0 ? cfg.lstm_hidden : channels;
  p.lstm = LstmParameters::random(channels, hidden, rng);
  p.log_variance = ad::Matrix::Zero(1, static_cast<ad::Index>(kTaskCount));
  return p;
}

std::vector<std::pair<std::string, ad::Matrix*>> ModelParameters::arrays() {
  std::vector<std::pair<std::string, ad::Matrix*>> out;
  if (heads.hidden_layer) {
    out.emplace_back("heads.w_hidden", &heads.w_hidden);
    out.emplace_back("heads.b_hidden", &heads.b_hidden);
  }
  out.emplace_back("heads.w_offset", &heads.w_offset);
  out.emplace_back("heads.b_offset", &heads.b_offset);
  out.emplace_back("heads.w_visibility", &heads.w_visibility);
  out.emplace_back("heads.b_visibility", &heads.b_visibility);
  out.emplace_back("heads.w_class", &heads.w_class);
  out.emplace_back("heads.b_class", &heads.b_class);
  out.emplace_back("lstm.w_ih", &lstm.w_ih);
  out.emplace_back("lstm.w_hh", &lstm.w_hh);
  out.emplace_back("lstm.bias", &lstm.bias);
  out.emplace_back("lstm.w_proj", &lstm.w_proj);
  out.emplace_back("lstm.b_proj", &lstm.b_proj);
  out.emplace_back("uncertainty.log_variance", &log_variance);
  return out;
}

std::vector<std::pair<std::string, const ad::Matrix*>> ModelParameters::arrays() const {
  std::vector<std::pair<std::string, const ad::Matrix*>> out;
  for (auto& [name, m] : const_cast<ModelParameters*>(this)->arrays()) out.emplace_back(name, m);
  return out;
}

void ModelParameters::validate() const {
  heads.validate();
  lstm.validate();
  if (lstm.input_size() != heads.channels()) throw ValidationError("model: LSTM width does not match heads");
  if (log_variance.rows() != 1 || log_variance.cols() != static_cast<ad::Index>(kTaskCount) ||
      !log_variance.allFinite()) {
    throw ValidationError("model: log-variance must be a finite 1 x 4 array");
  }
}

std::vector<ad::Var> ModelVars::ordered() const {
  std::vector<ad::Var> out;
  if (heads.hidden_layer) {
    out.push_back(heads.w_hidden);
    out.push_back(heads.b_hidden);
  }
  for (const ad::Var* v : {&heads.w_offset, &heads.b_offset, &heads.w_visibility, &heads.b_visibility,
                           &heads.w_class, &heads.b_class, &lstm.w_ih, &lstm.w_hh, &lstm.bias, &lstm.w_proj,
                           &lstm.b_proj, &log_variance}) {
    out.push_back(*v);
  }
  return out;
}

ModelVars place_on_tape(ad::Tape& tape, const ModelParameters& p, const AblationFlags& flags) {
  ModelVars v;
  v.heads = HeadVars::leaves(tape, p.heads);
  v.lstm = flags.lstm_fusion ? LstmVars::leaves(tape, p.lstm) : LstmVars::constants(tape, p.lstm);
  v.log_variance = flags.uncertainty ? tape.leaf(p.log_variance) : tape.constant(p.log_variance);
  return v;
}

ad::Var clip_features(ad::Tape& tape, const SceneSequence& scene, int end, int window, const ModelVars& vars,
                      bool use_lstm) {
  if (window < 1) throw ValidationError("clip: window must be >= 1");
  if (end < window - 1 || end >= static_cast<int>(scene.frames.size())) {
    throw ValidationError("clip: window ending at frame " + std::to_string(end) + " is out of range");
  }
  if (!use_lstm) return tape.constant(scene.frames[static_cast<std::size_t>(end)].features);
  std::vector<ad::Var> frames;
  for (int t = end - window + 1; t <= end; ++t) {
    frames.push_back(tape.constant(scene.frames[static_cast<std::size_t>(t)].features));
  }
  return fuse_frames(frames, vars.lstm);
}

namespace {

const Lane3D& on_anchor_stations(const Lane3D& lane, const AnchorSet& anchors, Lane3D& storage) {
  const auto st = anchors.stations();
  if (lane.stations.size() == st.size() && std::equal(st.begin(), st.end(), lane.stations.begin())) return lane;
  storage = resample_lane(lane, st);
  return storage;
}

std::vector<ad::Index> to_index(const std::vector<std::size_t>& v) {
  return std::vector<ad::Index>(v.begin(), v.end());
}

// Linear interpolation weights taking values on `knots` to the points `ys`
// (all inside the knot range).
ad::Matrix interpolation_weights(std::span<const double> knots, const std::vector<double>& ys) {
  ad::Matrix w = ad::Matrix::Zero(static_cast<ad::Index>(ys.size()), static_cast<ad::Index>(knots.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto ii = static_cast<ad::Index>(i);
    if (knots.size() == 1) {
      w(ii, 0) = 1.0;
      continue;
    }
    auto hi = static_cast<std::size_t>(std::upper_bound(knots.begin(), knots.end(), ys[i]) - knots.begin());
    hi = std::clamp<std::size_t>(hi, 1, knots.size() - 1);
    const std::size_t lo = hi - 1;
    const double t = (ys[i] - knots[lo]) / (knots[hi] - knots[lo]);
    w(ii, static_cast<ad::Index>(lo)) = 1.0 - t;
    w(ii, static_cast<ad::Index>(hi)) = t;
  }
  return w;
}

// Chamfer between one positive anchor's prediction and its lane, both
// resampled to the same equidistant stations over the lane's visible span.
ad::Var curve_term(ad::Tape& tape, const ad::Var& offsets_row, std::size_t anchor, const Lane3D& lane,
                   const AnchorSet& anchors) {
  const auto st = anchors.stations();
  const auto s = static_cast<ad::Index>(st.size());
  double lo = 0.0;
  double hi = 0.0;
  bool found = false;
  for (std::size_t j = 0; j < lane.size(); ++j) {
    if (lane.visibility[j] < kChamferVisibleThreshold) continue;
    if (!found) lo = lane.stations[j];
    hi = lane.stations[j];
    found = true;
  }
  if (!found) return tape.scalar(0.0);

  const std::vector<double> eq = lo == hi ? std::vector<double>{lo} : evenly_spaced(lo, hi, static_cast<int>(st.size()));
  const ad::Matrix w = interpolation_weights(st, eq);
  const auto bx = anchors.base_x(anchor);
  const auto bz = anchors.base_z(anchor);
  const Eigen::Map<const Eigen::VectorXd> lx(lane.x.data(), s);
  const Eigen::Map<const Eigen::VectorXd> lz(lane.z.data(), s);
  const Eigen::Map<const Eigen::VectorXd> ax(bx.data(), s);
  const Eigen::Map<const Eigen::VectorXd> az(bz.data(), s);
  const auto n = static_cast<ad::Index>(eq.size());
  ad::Matrix q(n, 3);
  ad::Matrix base_x(n, 1);
  ad::Matrix base_z(n, 1);
  ad::Matrix ys(n, 1);
  q.col(0) = w * lx;
  q.col(2) = w * lz;
  base_x.col(0) = w * ax;
  base_z.col(0) = w * az;
  for (ad::Index i = 0; i < n; ++i) ys(i, 0) = eq[static_cast<std::size_t>(i)];
  q.col(1) = ys.col(0);

  const ad::Var wv = tape.constant(w);
  const ad::Var px = ad::matmul(wv, ad::transpose(ad::slice_cols(offsets_row, 0, s))) + tape.constant(base_x);
  const ad::Var pz = ad::matmul(wv, ad::transpose(ad::slice_cols(offsets_row, s, s))) + tape.constant(base_z);
  const ad::Var parts[] = {px, tape.constant(ys), pz};
  return chamfer(ad::concat_cols(parts), tape.constant(q));
}

// Squared lateral disagreement between the current prediction of an anchor
// and the previous window's prediction carried into the current frame.
// Interpolation weights are taken from the previous values and held fixed.
void consistency_terms(ad::Tape& tape, const ad::Var& cur_row, const ad::Var& prev_row, std::size_t anchor,
                       const Lane3D& lane, const EgoMotion& motion, const AnchorSet& anchors,
                       std::vector<ad::Var>& out) {
  const auto st = anchors.stations();
  const std::size_t s = st.size();
  const auto bx = anchors.base_x(anchor);
  const ad::Matrix& pv = prev_row.value();
  std::vector<double> ty(s);
  for (std::size_t j = 0; j < s; ++j) ty[j] = transport_point(bx[j] + pv(0, static_cast<ad::Index>(j)), st[j], motion)[1];
  for (std::size_t j = 1; j < s; ++j) {
    if (!(ty[j] > ty[j - 1])) return;
  }
  const double c = std::cos(motion.yaw);
  const double sn = std::sin(motion.yaw);
  std::vector<ad::Index> rows;
  std::vector<std::array<double, 2>> weights;
  std::vector<std::size_t> lo_idx;
  std::vector<double> offset;
  for (std::size_t m = 0; m < s; ++m) {
    if (lane.visibility[m] < kDefaultVisibilityThreshold) continue;
    const double y = st[m];
    if (y < ty.front() || y > ty.back()) continue;
    std::size_t hi = static_cast<std::size_t>(std::upper_bound(ty.begin(), ty.end(), y) - ty.begin());
    if (hi >= s) hi = s - 1;
    const std::size_t lo = hi - 1;
    const double t = (y - ty[lo]) / (ty[hi] - ty[lo]);
    rows.push_back(static_cast<ad::Index>(m));
    weights.push_back({1.0 - t, t});
    lo_idx.push_back(lo);
    const double base = (1.0 - t) * bx[lo] + t * bx[hi];
    const double along = (1.0 - t) * (st[lo] - motion.forward) + t * (st[hi] - motion.forward);
    offset.push_back(c * base + sn * along);
  }
  if (rows.empty()) return;
  const auto n = static_cast<ad::Index>(rows.size());
  ad::Matrix a = ad::Matrix::Zero(n, static_cast<ad::Index>(s));
  ad::Matrix off(n, 1);
  ad::Matrix cur_base(n, 1);
  for (ad::Index i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    a(i, static_cast<ad::Index>(lo_idx[ui])) = c * weights[ui][0];
    a(i, static_cast<ad::Index>(lo_idx[ui] + 1)) = c * weights[ui][1];
    off(i, 0) = offset[ui];
    cur_base(i, 0) = bx[static_cast<std::size_t>(rows[ui])];
  }
  const auto si = static_cast<ad::Index>(s);
  const ad::Var prev_dx = ad::transpose(ad::slice_cols(prev_row, 0, si));
  const ad::Var carried = ad::matmul(tape.constant(a), prev_dx) + tape.constant(off);
  const ad::Var cur_x = ad::select_rows(ad::transpose(ad::slice_cols(cur_row, 0, si)), rows) + tape.constant(cur_base);
  out.push_back(ad::square(cur_x - carried));
}

}  // namespace

ClipLoss clip_loss(ad::Tape& tape, const ModelVars& vars, const SceneSequence& scene, int end, int window,
                   const AnchorSet& anchors, const LossSettings& settings) {
  const AblationFlags& flags = settings.flags;
  const ad::Var features = clip_features(tape, scene, end, window, vars, flags.lstm_fusion);
  const HeadOutputs out = forward(features, vars.heads);
  if (static_cast<std::size_t>(out.offsets.rows()) != anchors.size()) {
    throw ValidationError("clip_loss: feature rows do not match anchor count");
  }

  const SceneFrame& frame = scene.frames[static_cast<std::size_t>(end)];
  const TargetAssignment assignment = assign_targets(anchors, frame.lanes, settings.positive_threshold);
  const std::vector<std::size_t> positives = assignment.positives();
  const auto s = static_cast<ad::Index>(anchors.station_count());

  std::array<ad::Var, kTaskCount> task;
  ClipLoss result;
  result.parts.active = {true, flags.chamfer, true, true};
  for (auto& t : task) t = tape.scalar(0.0);

  std::vector<Lane3D> pos_lanes;
  if (!positives.empty()) {
    const auto idx = to_index(positives);
    const auto p = static_cast<ad::Index>(positives.size());
    ad::Matrix target(p, 2 * s);
    ad::Matrix mask(p, 2 * s);
    ad::Matrix vis_target(p, s);
    for (ad::Index i = 0; i < p; ++i) {
      const std::size_t k = positives[static_cast<std::size_t>(i)];
      Lane3D storage;
      const Lane3D& lane = on_anchor_stations(
          frame.lanes[static_cast<std::size_t>(assignment.lane_of_anchor[k])], anchors, storage);
      pos_lanes.push_back(lane);
      const auto bx = anchors.base_x(k);
      const auto bz = anchors.base_z(k);
      for (ad::Index j = 0; j < s; ++j) {
        const auto uj = static_cast<std::size_t>(j);
        target(i, j) = lane.x[uj] - bx[uj];
        target(i, s + j) = lane.z[uj] - bz[uj];
        mask(i, j) = lane.visibility[uj];
        mask(i, s + j) = lane.visibility[uj];
        vis_target(i, j) = lane.visibility[uj] >= kDefaultVisibilityThreshold ? 1.0 : 0.0;
      }
    }
    const ad::Var pred_off = ad::select_rows(out.offsets, idx);
    if (mask.sum() > 0.0) {
      const ad::Var tgt = tape.constant(target);
      task[0] = flags.balanced_l1 ? balanced_l1_vector(pred_off, tgt, mask, settings.loss.balanced_l1)
                                  : l1_vector(pred_off, tgt, mask);
    }
    task[3] = dice(ad::sigmoid(ad::select_rows(out.visibility_logits, idx)), vis_target, settings.loss.dice);

    if (flags.chamfer) {
      std::vector<ad::Var> terms;
      for (ad::Index i = 0; i < p; ++i) {
        terms.push_back(curve_term(tape, ad::slice_rows(pred_off, i, 1), positives[static_cast<std::size_t>(i)],
                                   pos_lanes[static_cast<std::size_t>(i)], anchors));
      }
      task[1] = ad::mean(ad::concat_cols(terms)) * settings.escop_weight;
    }
  }

  std::vector<ad::Index> cls_rows;
  std::vector<ad::Index> cls_targets;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    if (assignment.role[k] == AnchorRole::kIgnore) continue;
    cls_rows.push_back(static_cast<ad::Index>(k));
    cls_targets.push_back(assignment.role[k] == AnchorRole::kPositive
                              ? frame.lanes[static_cast<std::size_t>(assignment.lane_of_anchor[k])].category
                              : kBackgroundClass);
  }
  if (!cls_rows.empty()) {
    const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, positives.size()));
    task[2] = ad::sum(focal(ad::select_rows(out.class_logits, cls_rows), cls_targets, settings.loss.focal)) * norm;
  }

  std::vector<ad::Var> active_losses;
  std::vector<ad::Var> active_s;
  for (std::size_t i = 0; i < kTaskCount; ++i) {
    result.parts.task[i] = task[i].scalar();
    if (!result.parts.active[i]) continue;
    active_losses.push_back(task[i]);
    active_s.push_back(ad::slice_cols(vars.log_variance, static_cast<ad::Index>(i), 1));
  }
  ad::Var total = flags.uncertainty ? combine_uncertainty(active_losses, ad::concat_cols(active_s))
                                    : ad::sum(ad::concat_cols(active_losses));

  if (settings.temporal_consistency && !positives.empty() && end - window >= 0 && settings.escop_weight > 0.0) {
    const ad::Var prev_features = clip_features(tape, scene, end - 1, window, vars, flags.lstm_fusion);
    const HeadOutputs prev = forward(prev_features, vars.heads);
    std::vector<ad::Var> sq;
    for (std::size_t i = 0; i < positives.size(); ++i) {
      const auto k = static_cast<ad::Index>(positives[i]);
      consistency_terms(tape, ad::slice_rows(out.offsets, k, 1), ad::slice_rows(prev.offsets, k, 1), positives[i],
                        pos_lanes[i], scene.motion[static_cast<std::size_t>(end - 1)], anchors, sq);
    }
    if (!sq.empty()) {
      const ad::Var penalty = ad::mean(ad::concat_rows(sq)) * (settings.escop_weight * settings.temporal_consistency_weight);
      result.parts.consistency = penalty.scalar();
      total = total + penalty;
    }
  }

  result.total = total;
  result.parts.total = total.scalar();
  return result;
}

std::vector<std::size_t> suppress_duplicates(const std::vector<Lane3D>& lanes, const std::vector<double>& confidence,
                                             double distance) {
  if (lanes.size() != confidence.size()) throw ValidationError("suppress_duplicates: size mismatch");
  std::vector<std::size_t> order(lanes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidence[a] > confidence[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool duplicate = false;
    for (std::size_t k : kept) {
      const Lane3D& a = lanes[i];
      const Lane3D& b = lanes[k];
      const std::size_t n = std::min(a.size(), b.size());
      double both = 0.0;
      double all = 0.0;
      std::size_t n_both = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double d = std::abs(a.x[j] - b.x[j]);
        all += d;
        if (a.visibility[j] >= kDefaultVisibilityThreshold && b.visibility[j] >= kDefaultVisibilityThreshold) {
          both += d;
          ++n_both;
        }
      }
      const double mean = n_both > 0 ? both / static_cast<double>(n_both) : all / static_cast<double>(std::max<std::size_t>(n, 1));
      if (mean < distance) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(i);
  }
  return kept;
}

std::vector<Lane3D> lanes_from_features(const ad::Matrix& features, const HeadParameters& heads,
                                        const AnchorSet& anchors, double visibility_threshold, double nms_distance) {
  std::vector<Lane3D> lanes;
  std::vector<double> confidence;
  for (const AnchorPrediction& p : forward(features, heads, anchors)) {
    const DecodedLane d = decode_anchor(anchors, p, visibility_threshold);
    if (d.lane.category == kBackgroundClass) continue;
    const auto& logits = p.class_logits;
    const double top = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - top);
    confidence.push_back(1.0 - std::exp(logits[kBackgroundClass] - top) / z);
    lanes.push_back(d.lane);
  }
  if (nms_distance <= 0.0) return lanes;
  std::vector<Lane3D> kept;
  for (std::size_t i : suppress_duplicates(lanes, confidence, nms_distance)) kept.push_back(lanes[i]);
  return kept;
}

std::vector<Lane3D> predict_lanes(const ModelParameters& params, const SceneSequence& scene, int end, int window,
                                  const AnchorSet& anchors, bool use_lstm, double visibility_threshold,
                                  double nms_distance) {
  ad::Tape tape;
  ModelVars vars;
  vars.heads = HeadVars::constants(tape, params.heads);
  vars.lstm = LstmVars::constants(tape, params.lstm);
  vars.log_variance = tape.constant(params.log_variance);
  const ad::Matrix features = clip_features(tape, scene, end, window, vars, use_lstm).value();
  return lanes_from_features(features, params.heads, anchors, visibility_threshold, nms_distance);
}

}  // namespace tlane
