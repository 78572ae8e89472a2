#include "tlane/losses.hpp"

#include "tlane/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tlane {

BalancedL1Config::BalancedL1Config(double alpha, double beta, double gamma)
    : alpha_(alpha), beta_(beta), gamma_(gamma), b_(std::expm1(gamma / alpha)) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0)) {
    throw ValidationError("balanced_l1: alpha, beta and gamma must be positive");
  }
  if (!std::isfinite(b_) || !(b_ > 0.0)) throw ValidationError("balanced_l1: derived b is not finite");
}

void LossConfig::validate() const {
  if (!(focal.gamma >= 0.0)) throw ValidationError("focal.gamma must be >= 0");
  if (!(focal.alpha > 0.0)) throw ValidationError("focal.alpha must be > 0");
  if (!(dice.epsilon > 0.0)) throw ValidationError("dice.epsilon must be > 0");
}

// --- Balanced L1 ------------------------------------------------------------

double balanced_l1_inner(double delta, const BalancedL1Config& c) {
  const double a = c.alpha();
  const double b = c.b();
  return (a / b) * (b * delta + 1.0) * std::log1p(b * delta / c.beta()) - a * delta;
}

double balanced_l1_outer(double delta, const BalancedL1Config& c) {
  return c.gamma() * delta + c.gamma() / c.b() - c.alpha() * c.beta();
}

double balanced_l1(double delta, const BalancedL1Config& c) {
  if (delta < 0.0) throw ValidationError("balanced_l1: delta must be non-negative");
  return delta < c.beta() ? balanced_l1_inner(delta, c) : balanced_l1_outer(delta, c);
}

double balanced_l1_derivative(double delta, const BalancedL1Config& c) {
  if (delta >= c.beta()) return c.gamma();
  const double a = c.alpha();
  const double b = c.b();
  const double u = b * delta / c.beta();
  return a * std::log1p(u) + (a / b) * (b * delta + 1.0) * (b / c.beta()) / (u + 1.0) - a;
}

ad::Var balanced_l1(const ad::Var& delta, const BalancedL1Config& cfg) {
  if ((delta.value().array() < 0.0).any()) throw ValidationError("balanced_l1: delta must be non-negative");
  return ad::map(
      delta, [cfg](double d) { return balanced_l1(d, cfg); },
      [cfg](double d) { return balanced_l1_derivative(d, cfg); });
}

namespace {

void check_mask(const ad::Matrix& mask, ad::Index rows, ad::Index cols) {
  if (mask.rows() != rows || mask.cols() != cols) throw ValidationError("mask shape mismatch");
  if ((mask.array() < 0.0).any()) throw ValidationError("mask weights must be >= 0");
  if (!(mask.sum() > 0.0)) throw ValidationError("mask weights must have a positive sum");
}

}  // namespace

ad::Var balanced_l1_vector(const ad::Var& pred, const ad::Var& target, const ad::Matrix& mask,
                           const BalancedL1Config& cfg) {
  check_mask(mask, pred.rows(), pred.cols());
  ad::Tape& t = pred.tape();
  const ad::Var err = ad::abs(pred - target);
  const ad::Var w = t.constant(mask);
  return ad::sum(balanced_l1(err, cfg) * w) * (1.0 / mask.sum());
}

double balanced_l1_vector(std::span<const double> pred, std::span<const double> target,
                          std::span<const double> mask, const BalancedL1Config& cfg) {
  if (pred.size() != target.size() || pred.size() != mask.size()) {
    throw ValidationError("balanced_l1_vector: length mismatch");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask[i] < 0.0) throw ValidationError("mask weights must be >= 0");
    num += mask[i] * balanced_l1(std::abs(pred[i] - target[i]), cfg);
    den += mask[i];
  }
  if (!(den > 0.0)) throw ValidationError("mask weights must have a positive sum");
  return num / den;
}

ad::Var l1_vector(const ad::Var& pred, const ad::Var& target, const ad::Matrix& mask) {
  check_mask(mask, pred.rows(), pred.cols());
  const ad::Var w = pred.tape().constant(mask);
  return ad::sum(ad::abs(pred - target) * w) * (1.0 / mask.sum());
}

// --- Chamfer ----------------------------------------------------------------

namespace {

double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

double directed(const PointSet& from, const PointSet& to) {
  double total = 0.0;
  for (const Point3& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Point3& q : to) best = std::min(best, sq_dist(p, q));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const PointSet& p, const PointSet& q) {
  if (p.empty() || q.empty()) throw ValidationError("chamfer: point sets must be non-empty");
  return directed(p, q) + directed(q, p);
}

ad::Var chamfer(const ad::Var& p, const ad::Var& q) {
  if (p.rows() == 0 || q.rows() == 0) throw ValidationError("chamfer: point sets must be non-empty");
  const ad::Var d = ad::pairwise_sq_dist(p, q);
  return ad::mean(ad::row_min(d)) + ad::mean(ad::col_min(d));
}

PointSet visible_points(const Lane3D& lane, double threshold) {
  PointSet pts;
  for (std::size_t j = 0; j < lane.size(); ++j) {
    if (lane.visibility[j] >= threshold) pts.push_back({lane.x[j], lane.stations[j], lane.z[j]});
  }
  return pts;
}

std::vector<std::size_t> stations_in_span(std::span<const double> pred_stations, double lo, double hi) {
  std::vector<std::size_t> idx;
  for (std::size_t j = 0; j < pred_stations.size(); ++j) {
    if (pred_stations[j] >= lo && pred_stations[j] <= hi) idx.push_back(j);
  }
  if (idx.empty() && !pred_stations.empty()) {
    const double mid = 0.5 * (lo + hi);
    std::size_t best = 0;
    for (std::size_t j = 1; j < pred_stations.size(); ++j) {
      if (std::abs(pred_stations[j] - mid) < std::abs(pred_stations[best] - mid)) best = j;
    }
    idx.push_back(best);
  }
  return idx;
}

double chamfer_curve(const Lane3D& pred, const Lane3D& gt) {
  if (pred.size() == 0) throw ValidationError("chamfer_curve: prediction has no stations");
  const PointSet q = visible_points(gt);
  if (q.empty()) throw ValidationError("chamfer_curve: ground truth has no visible points");
  const auto idx = stations_in_span(pred.stations, q.front()[1], q.back()[1]);
  PointSet p;
  for (std::size_t j : idx) p.push_back({pred.x[j], pred.stations[j], pred.z[j]});
  return chamfer(p, q);
}

// --- Focal ------------------------------------------------------------------

double focal(std::span<const double> logits, int target, const FocalConfig& cfg) {
  if (logits.size() < 2) throw ValidationError("focal: need at least 2 categories");
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw ValidationError("focal: target index " + std::to_string(target) + " out of range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - m);
  const double log_pt = logits[static_cast<std::size_t>(target)] - m - std::log(s);
  const double pt = std::exp(log_pt);
  const double modulator = cfg.gamma == 0.0 ? 1.0 : std::pow(std::max(0.0, 1.0 - pt), cfg.gamma);
  return -cfg.alpha * modulator * log_pt;
}

ad::Var focal(const ad::Var& logits, std::span<const ad::Index> targets, const FocalConfig& cfg) {
  if (logits.cols() < 2) throw ValidationError("focal: need at least 2 categories");
  for (ad::Index t : targets) {
    if (t < 0 || t >= logits.cols()) throw ValidationError("focal: target index out of range");
  }
  const ad::Var log_pt = ad::pick(ad::log_softmax_rows(logits), targets);
  if (cfg.gamma == 0.0) return log_pt * (-cfg.alpha);
  const double g = cfg.gamma;
  const ad::Var one_minus = 1.0 - ad::exp(log_pt);
  const ad::Var modulator = ad::map(
      one_minus, [g](double u) { return u <= 0.0 ? 0.0 : std::pow(u, g); },
      [g](double u) { return u <= 0.0 ? 0.0 : g * std::pow(u, g - 1.0); });
  return (modulator * log_pt) * (-cfg.alpha);
}

// --- Dice -------------------------------------------------------------------

double dice(std::span<const double> probs, std::span<const double> target, const DiceConfig& cfg) {
  if (probs.size() != target.size()) throw ValidationError("dice: length mismatch");
  if (!(cfg.epsilon > 0.0)) throw ValidationError("dice: epsilon must be > 0");
  double inter = 0.0;
  double sp = 0.0;
  double sg = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    inter += probs[i] * target[i];
    sp += probs[i];
    sg += target[i];
  }
  return 1.0 - (2.0 * inter + cfg.epsilon) / (sp + sg + cfg.epsilon);
}

ad::Var dice(const ad::Var& probs, const ad::Matrix& target, const DiceConfig& cfg) {
  if (probs.rows() != target.rows() || probs.cols() != target.cols()) {
    throw ValidationError("dice: length mismatch");
  }
  if (!(cfg.epsilon > 0.0)) throw ValidationError("dice: epsilon must be > 0");
  ad::Tape& t = probs.tape();
  const ad::Var g = t.constant(target);
  const ad::Var numer = ad::sum(probs * g) * 2.0 + cfg.epsilon;
  const ad::Var denom = ad::sum(probs) + (target.sum() + cfg.epsilon);
  return 1.0 - numer / denom;
}

// --- Uncertainty weighting ---------------------------------------------------

const std::array<std::string, kTaskCount>& task_names() {
  static const std::array<std::string, kTaskCount> names = {"regression", "curve", "classification",
                                                            "visibility"};
  return names;
}

const char* task_name(Task t) { return task_names()[static_cast<std::size_t>(t)].c_str(); }

UncertaintyState UncertaintyState::initial() {
  UncertaintyState s;
  s.tasks.assign(task_names().begin(), task_names().end());
  s.log_variance.assign(kTaskCount, 0.0);
  return s;
}

void UncertaintyState::validate() const {
  if (tasks.size() != log_variance.size()) throw ValidationError("uncertainty: one s_i per task");
  for (double s : log_variance) {
    if (!std::isfinite(s)) throw ValidationError("uncertainty: non-finite log-variance");
  }
}

namespace {

void check_keys(const std::map<std::string, double>& losses, const UncertaintyState& state) {
  state.validate();
  if (losses.size() != state.tasks.size()) throw ValidationError("combine_uncertainty: task key mismatch");
  for (const auto& name : state.tasks) {
    if (!losses.contains(name)) throw ValidationError("combine_uncertainty: missing task '" + name + "'");
  }
}

}  // namespace

double combine_uncertainty(const std::map<std::string, double>& losses, const UncertaintyState& state) {
  check_keys(losses, state);
  double total = 0.0;
  for (std::size_t i = 0; i < state.tasks.size(); ++i) {
    const double s = state.log_variance[i];
    total += std::exp(-s) * losses.at(state.tasks[i]) + s;
  }
  return total;
}

std::vector<double> combine_uncertainty_grad_s(const std::map<std::string, double>& losses,
                                               const UncertaintyState& state) {
  check_keys(losses, state);
  std::vector<double> g(state.tasks.size());
  for (std::size_t i = 0; i < state.tasks.size(); ++i) {
    g[i] = 1.0 - std::exp(-state.log_variance[i]) * losses.at(state.tasks[i]);
  }
  return g;
}

ad::Var combine_uncertainty(std::span<const ad::Var> losses, const ad::Var& log_variance) {
  if (log_variance.rows() != 1 || log_variance.cols() != static_cast<ad::Index>(losses.size())) {
    throw ValidationError("combine_uncertainty: one log-variance per task loss");
  }
  const ad::Var l = ad::concat_cols(losses);
  return ad::sum(ad::exp(-log_variance) * l + log_variance);
}

}  // namespace tlane
