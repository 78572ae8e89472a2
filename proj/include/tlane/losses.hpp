#pragma once

// Multi-task loss suite: Balanced L1 regression, Chamfer curve distance,
// focal classification, soft Dice on visibility, and the learned
// log-variance (uncertainty) combination of the task losses.
//
// Every loss has a plain double form and a differentiable ad::Var form that
// share the same formula.

#include "tlane/ad.hpp"
#include "tlane/lane.hpp"

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace tlane {

/// Two-branch Balanced L1 parameters. `b` is derived from alpha and gamma so
/// that alpha * ln(b + 1) == gamma, which makes value and slope continuous at
/// delta == beta (for beta == 1).
class BalancedL1Config {
 public:
  BalancedL1Config() : BalancedL1Config(0.5, 1.0, 1.5) {}
  BalancedL1Config(double alpha, double beta, double gamma);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  double b() const { return b_; }

 private:
  double alpha_;
  double beta_;
  double gamma_;
  double b_;
};

struct FocalConfig {
  double gamma = 2.0;
  double alpha = 0.25;
};

struct DiceConfig {
  double epsilon = 1.0;
};

struct LossConfig {
  BalancedL1Config balanced_l1;
  FocalConfig focal;
  DiceConfig dice;

  void validate() const;
};

// --- Balanced L1 ------------------------------------------------------------

double balanced_l1(double delta, const BalancedL1Config& cfg);
double balanced_l1_derivative(double delta, const BalancedL1Config& cfg);
/// Left-branch formula evaluated at any delta, for branch-agreement checks.
double balanced_l1_inner(double delta, const BalancedL1Config& cfg);
/// Right-branch formula evaluated at any delta.
double balanced_l1_outer(double delta, const BalancedL1Config& cfg);

/// Elementwise on non-negative entries.
ad::Var balanced_l1(const ad::Var& delta, const BalancedL1Config& cfg);

/// sum(mask * balanced_l1(|pred - target|)) / sum(mask). Shapes must agree.
ad::Var balanced_l1_vector(const ad::Var& pred, const ad::Var& target, const ad::Matrix& mask,
                           const BalancedL1Config& cfg);
double balanced_l1_vector(std::span<const double> pred, std::span<const double> target,
                          std::span<const double> mask, const BalancedL1Config& cfg);
/// Plain L1 with the same masking, used when Balanced L1 is switched off.
ad::Var l1_vector(const ad::Var& pred, const ad::Var& target, const ad::Matrix& mask);

// --- Chamfer ----------------------------------------------------------------

using Point3 = std::array<double, 3>;
using PointSet = std::vector<Point3>;

double chamfer(const PointSet& p, const PointSet& q);
/// Rows of p and q are points. Gradients follow the argmin pairs.
ad::Var chamfer(const ad::Var& p, const ad::Var& q);

inline constexpr double kChamferVisibleThreshold = 0.5;

/// Chamfer between the 3D point clouds (x, y, z) of two lanes. The ground
/// truth keeps only stations with visibility >= 0.5; the prediction keeps
/// its stations inside the visible ground-truth span.
double chamfer_curve(const Lane3D& pred, const Lane3D& gt);
/// Indices of `pred_stations` inside [lo, hi]; the nearest single station if none is.
std::vector<std::size_t> stations_in_span(std::span<const double> pred_stations, double lo, double hi);
PointSet visible_points(const Lane3D& lane, double threshold = kChamferVisibleThreshold);

// --- Focal ------------------------------------------------------------------

double focal(std::span<const double> logits, int target, const FocalConfig& cfg);
/// Per-row focal loss (n x 1) for logits (n x classes).
ad::Var focal(const ad::Var& logits, std::span<const ad::Index> targets, const FocalConfig& cfg);

// --- Dice -------------------------------------------------------------------

double dice(std::span<const double> probs, std::span<const double> target, const DiceConfig& cfg);
ad::Var dice(const ad::Var& probs, const ad::Matrix& target, const DiceConfig& cfg);

// --- Uncertainty weighting ---------------------------------------------------

enum class Task { kRegression = 0, kCurve = 1, kClassification = 2, kVisibility = 3 };
inline constexpr std::size_t kTaskCount = 4;
const char* task_name(Task t);
const std::array<std::string, kTaskCount>& task_names();

/// Learnable log-variances s_i, one per task.
struct UncertaintyState {
  std::vector<std::string> tasks;
  std::vector<double> log_variance;

  /// All four tasks with s_i = 0.
  static UncertaintyState initial();
  void validate() const;
};

/// sum_i exp(-s_i) * L_i + s_i.
double combine_uncertainty(const std::map<std::string, double>& losses, const UncertaintyState& state);
/// d/ds_i of the combined loss: 1 - exp(-s_i) * L_i.
std::vector<double> combine_uncertainty_grad_s(const std::map<std::string, double>& losses,
                                               const UncertaintyState& state);
/// `losses` are 1x1 vars, `log_variance` is 1 x n.
ad::Var combine_uncertainty(std::span<const ad::Var> losses, const ad::Var& log_variance);

}  // namespace tlane
