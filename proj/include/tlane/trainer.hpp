#pragma once

// Optimization loop, the curve-loss ramp, evaluation over held-out scenes
// and the five-row ablation ladder.

#include "tlane/metrics.hpp"
#include "tlane/model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace tlane {

enum class Optimizer { kGradientDescent, kAdam };

const char* optimizer_name(Optimizer o);
Optimizer optimizer_from_name(const std::string& name);

struct EscopSchedule {
  int ramp_start = 10;
  int ramp_end = 50;
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 4;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 2024;
  EscopSchedule escop;
  AblationFlags flags;
  bool temporal_consistency = false;
  double temporal_consistency_weight = 0.1;
  /// Each epoch every scene contributes one window whose end frame is drawn
  /// from the seeded stream; otherwise always the last frame.
  bool random_window = true;

  void validate() const;
};

/// 0 before ramp_start, 1 from ramp_end on, linear in between.
double escop_weight(int epoch, const EscopSchedule& schedule);
double escop_weight(int epoch, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double escop = 0.0;
  LossBreakdown mean;                    // averaged over every clip of the epoch
  std::array<double, kTaskCount> log_variance{};
};

struct TrainContext {
  const AnchorSet* anchors = nullptr;
  LossConfig loss;
  int window = 3;
  double positive_threshold = kDefaultPositiveThreshold;
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochRecord> history;
  int epochs = 0;
  int steps = 0;
};

using EpochObserver = std::function<void(const EpochRecord&, const ModelParameters&)>;

/// One training example: the window of a scene ending at frame `end`.
struct Clip {
  const SceneSequence* scene = nullptr;
  int end = 0;
};

/// Mean loss and parameter gradients over `clips`. Gradients follow arrays()
/// order; arrays that receive no gradient under the flags come back empty.
struct BatchGradient {
  double loss = 0.0;
  LossBreakdown parts;
  std::vector<ad::Matrix> grads;
};
BatchGradient batch_gradient(const ModelParameters& params, const std::vector<Clip>& clips,
                             const TrainContext& ctx, const AblationFlags& flags, double escop,
                             bool temporal_consistency = false, double consistency_weight = 0.0);

/// Deterministic for a given (config, scenes, initial). Throws NumericalError
/// as soon as a loss or gradient is not finite.
TrainResult train(const TrainConfig& config, const std::vector<SceneSequence>& scenes, const TrainContext& ctx,
                  ModelParameters initial, const EpochObserver& observer = {});

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochRecord& r);

// --- Evaluation ----------------------------------------------------------------

struct EvalSettings {
  int window = 3;
  bool use_lstm = true;
  double visibility_threshold = kDefaultVisibilityThreshold;
  double nms_distance = kDefaultNmsDistance;
  double threshold = kDefaultMatchThreshold;
  double coverage = kDefaultCoverage;
};

struct SceneEvaluation {
  std::string id;
  MatchReport report;
  double jitter = 0.0;
  std::size_t jitter_samples = 0;
};

struct EvalSummary {
  MatchReport total;
  double jitter = 0.0;  // pooled over every matched station of every scene
  std::size_t jitter_samples = 0;
  std::vector<SceneEvaluation> scenes;
};

/// Scores every window of every scene (all frames from window-1 on) and the
/// frame-to-frame jitter of those predictions.
EvalSummary evaluate_predictions(const std::vector<std::vector<std::vector<Lane3D>>>& predictions,
                                 const std::vector<SceneSequence>& scenes, const std::vector<std::string>& ids,
                                 const EvalSettings& settings);
EvalSummary evaluate_model(const ModelParameters& params, const std::vector<SceneSequence>& scenes,
                           const AnchorSet& anchors, const EvalSettings& settings);

std::string scene_id(std::size_t index);

// --- Ablation ------------------------------------------------------------------

struct AblationRow {
  std::string name;
  AblationFlags flags;
  EvalSummary eval;
  TrainResult training;
};

/// Baseline, +Balanced L1, +Chamfer, +Uncertainty, +LSTM fusion.
std::vector<std::pair<std::string, AblationFlags>> ablation_ladder();

struct AblationSetup {
  TrainConfig train;
  TrainContext context;
  ModelConfig model;
  int channels = 128;
  int classes = 5;
  EvalSettings eval;
};

using RowObserver = std::function<void(const AblationRow&)>;

std::vector<AblationRow> run_ablation(const AblationSetup& setup, const Dataset& data,
                                      const std::vector<std::pair<std::string, AblationFlags>>& ladder,
                                      const RowObserver& observer = {});

}  // namespace tlane
