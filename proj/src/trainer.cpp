#include "tlane/trainer.hpp"

#include "tlane/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace tlane {

const char* optimizer_name(Optimizer o) { return o == Optimizer::kAdam ? "adam" : "sgd"; }

Optimizer optimizer_from_name(const std::string& name) {
  if (name == "adam") return Optimizer::kAdam;
  if (name == "sgd") return Optimizer::kGradientDescent;
  throw ValidationError("train.optimizer: expected \"adam\" or \"sgd\", got \"" + name + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("train.epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train.learning_rate must be finite and >= 0");
  }
  if (escop.ramp_start < 0 || escop.ramp_start > escop.ramp_end) {
    throw ValidationError("train.escop: need 0 <= ramp_start <= ramp_end");
  }
  if (escop.ramp_end > epochs) throw ValidationError("train.escop.ramp_end must be <= train.epochs");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ValidationError("train.adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ValidationError("train.adam_beta2 must be in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ValidationError("train.adam_epsilon must be > 0");
  if (!(temporal_consistency_weight >= 0.0)) throw ValidationError("train.temporal_consistency_weight must be >= 0");
}

double escop_weight(int epoch, const EscopSchedule& s) {
  if (epoch < s.ramp_start) return 0.0;
  if (epoch >= s.ramp_end) return 1.0;
  return static_cast<double>(epoch - s.ramp_start) / static_cast<double>(s.ramp_end - s.ramp_start);
}

double escop_weight(int epoch, const TrainConfig& config) { return escop_weight(epoch, config.escop); }

BatchGradient batch_gradient(const ModelParameters& params, const std::vector<Clip>& clips,
                             const TrainContext& ctx, const AblationFlags& flags, double escop,
                             bool temporal_consistency, double consistency_weight) {
  if (clips.empty()) throw ValidationError("batch_gradient: empty batch");
  LossSettings settings;
  settings.loss = ctx.loss;
  settings.flags = flags;
  settings.escop_weight = escop;
  settings.positive_threshold = ctx.positive_threshold;
  settings.temporal_consistency = temporal_consistency;
  settings.temporal_consistency_weight = consistency_weight;

  const auto shapes = params.arrays();
  BatchGradient out;
  out.grads.resize(shapes.size());
  const double inv = 1.0 / static_cast<double>(clips.size());
  for (const Clip& clip : clips) {
    const SceneSequence* scene = clip.scene;
    ad::Tape tape;
    const ModelVars vars = place_on_tape(tape, params, flags);
    const ClipLoss loss = clip_loss(tape, vars, *scene, clip.end, ctx.window, *ctx.anchors, settings);
    if (!std::isfinite(loss.parts.total)) {
      throw NumericalError("training diverged: non-finite loss on scene seed " + std::to_string(scene->seed));
    }
    tape.backward(loss.total);
    const std::vector<ad::Var> ordered = vars.ordered();
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      if (!tape.needs_grad(ordered[i])) continue;
      const ad::Matrix& g = ordered[i].grad();
      if (!g.allFinite()) {
        throw NumericalError("training diverged: non-finite gradient for " + shapes[i].first + " on scene seed " +
                             std::to_string(scene->seed));
      }
      if (out.grads[i].size() == 0) out.grads[i] = ad::Matrix::Zero(g.rows(), g.cols());
      out.grads[i] += g * inv;
    }
    out.loss += loss.parts.total * inv;
    for (std::size_t t = 0; t < kTaskCount; ++t) out.parts.task[t] += loss.parts.task[t] * inv;
    out.parts.active = loss.parts.active;
    out.parts.consistency += loss.parts.consistency * inv;
  }
  out.parts.total = out.loss;
  return out;
}

TrainResult train(const TrainConfig& config, const std::vector<SceneSequence>& scenes, const TrainContext& ctx,
                  ModelParameters initial, const EpochObserver& observer) {
  config.validate();
  if (scenes.empty()) throw ValidationError("train: dataset is empty");
  if (ctx.anchors == nullptr) throw ValidationError("train: no anchors");
  initial.validate();

  TrainResult result;
  result.params = std::move(initial);
  auto arrays = result.params.arrays();
  std::vector<ad::Matrix> m1(arrays.size());
  std::vector<ad::Matrix> m2(arrays.size());
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    m1[i] = ad::Matrix::Zero(arrays[i].second->rows(), arrays[i].second->cols());
    m2[i] = m1[i];
  }

  std::vector<std::size_t> order(scenes.size());
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> ends(scenes.size());
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      const int last = static_cast<int>(scenes[i].frames.size()) - 1;
      const int first = ctx.window - 1;
      ends[i] = last;
      if (config.random_window && last > first) {
        ends[i] = first + static_cast<int>(rng() % static_cast<std::uint64_t>(last - first + 1));
      }
    }

    const double escop = escop_weight(epoch, config);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.escop = escop;
    std::size_t clips = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<Clip> batch;
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = start; i < stop; ++i) batch.push_back({&scenes[order[i]], ends[order[i]]});
      const BatchGradient bg = batch_gradient(result.params, batch, ctx, config.flags, escop,
                                              config.temporal_consistency, config.temporal_consistency_weight);
      const double w = static_cast<double>(batch.size());
      rec.mean.total += bg.loss * w;
      rec.mean.consistency += bg.parts.consistency * w;
      for (std::size_t t = 0; t < kTaskCount; ++t) rec.mean.task[t] += bg.parts.task[t] * w;
      rec.mean.active = bg.parts.active;
      clips += batch.size();

      ++step;
      const double lr = config.learning_rate;
      for (std::size_t i = 0; i < arrays.size(); ++i) {
        const ad::Matrix& g = bg.grads[i];
        if (g.size() == 0) continue;
        ad::Matrix& p = *arrays[i].second;
        if (config.optimizer == Optimizer::kGradientDescent) {
          p -= lr * g;
          continue;
        }
        m1[i] = config.adam_beta1 * m1[i] + (1.0 - config.adam_beta1) * g;
        m2[i] = config.adam_beta2 * m2[i] + (1.0 - config.adam_beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(config.adam_beta1, step);
        const double c2 = 1.0 - std::pow(config.adam_beta2, step);
        p.array() -= lr * (m1[i].array() / c1) / ((m2[i].array() / c2).sqrt() + config.adam_epsilon);
      }
    }
    const double inv = 1.0 / static_cast<double>(clips);
    rec.mean.total *= inv;
    rec.mean.consistency *= inv;
    for (double& t : rec.mean.task) t *= inv;
    for (std::size_t t = 0; t < kTaskCount; ++t) rec.log_variance[t] = result.params.log_variance(0, static_cast<ad::Index>(t));
    result.history.push_back(rec);
    if (observer) observer(rec, result.params);
  }
  result.epochs = config.epochs;
  result.steps = step;
  return result;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string epoch_csv_header() {
  std::string h = "epoch,escop,total";
  for (const auto& n : task_names()) h += "," + n;
  h += ",consistency";
  for (const auto& n : task_names()) h += ",s_" + n;
  return h;
}

std::string epoch_csv_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch) + "," + num(r.escop) + "," + num(r.mean.total);
  for (double t : r.mean.task) row += "," + num(t);
  row += "," + num(r.mean.consistency);
  for (double s : r.log_variance) row += "," + num(s);
  return row;
}

// --- Evaluation ----------------------------------------------------------------

std::string scene_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", index);
  return buf;
}

EvalSummary evaluate_predictions(const std::vector<std::vector<std::vector<Lane3D>>>& predictions,
                                 const std::vector<SceneSequence>& scenes, const std::vector<std::string>& ids,
                                 const EvalSettings& settings) {
  if (predictions.size() != scenes.size() || ids.size() != scenes.size()) {
    throw ValidationError("evaluate: predictions, scenes and ids differ in count");
  }
  EvalSummary out;
  double jitter_total = 0.0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const SceneSequence& scene = scenes[s];
    const auto& per_frame = predictions[s];
    const int first = settings.window - 1;
    const int frames = static_cast<int>(scene.frames.size());
    if (first < 0 || first >= frames) throw ValidationError("evaluate: window longer than scene");
    if (static_cast<int>(per_frame.size()) != frames - first) {
      throw ValidationError("evaluate: " + ids[s] + " has " + std::to_string(per_frame.size()) +
                            " predicted frames, expected " + std::to_string(frames - first));
    }
    SceneEvaluation se;
    se.id = ids[s];
    for (int end = first; end < frames; ++end) {
      se.report += match_lanes(per_frame[static_cast<std::size_t>(end - first)],
                               scene.frames[static_cast<std::size_t>(end)].lanes, settings.threshold,
                               settings.coverage);
    }
    se.jitter = std::numeric_limits<double>::quiet_NaN();
    if (per_frame.size() >= 2) {
      const std::vector<EgoMotion> motion(scene.motion.begin() + first, scene.motion.end());
      try {
        const JitterResult j = temporal_smoothness_detail(per_frame, motion, settings.threshold, settings.coverage);
        se.jitter = j.jitter;
        se.jitter_samples = j.samples;
        jitter_total += j.total;
        out.jitter_samples += j.samples;
      } catch (const ValidationError&) {
        // nothing matched across frames in this scene
      }
    }
    out.total += se.report;
    out.scenes.push_back(std::move(se));
  }
  out.total.finalize();
  out.jitter = out.jitter_samples > 0 ? jitter_total / static_cast<double>(out.jitter_samples)
                                      : std::numeric_limits<double>::quiet_NaN();
  return out;
}

EvalSummary evaluate_model(const ModelParameters& params, const std::vector<SceneSequence>& scenes,
                           const AnchorSet& anchors, const EvalSettings& settings) {
  std::vector<std::vector<std::vector<Lane3D>>> predictions;
  std::vector<std::string> ids;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    std::vector<std::vector<Lane3D>> per_frame;
    for (int end = settings.window - 1; end < static_cast<int>(scenes[s].frames.size()); ++end) {
      per_frame.push_back(predict_lanes(params, scenes[s], end, settings.window, anchors, settings.use_lstm,
                                        settings.visibility_threshold, settings.nms_distance));
    }
    predictions.push_back(std::move(per_frame));
    ids.push_back(scene_id(s));
  }
  return evaluate_predictions(predictions, scenes, ids, settings);
}

// --- Ablation ------------------------------------------------------------------

std::vector<std::pair<std::string, AblationFlags>> ablation_ladder() {
  AblationFlags f{false, false, false, false};
  std::vector<std::pair<std::string, AblationFlags>> rows;
  rows.emplace_back("baseline", f);
  f.balanced_l1 = true;
  rows.emplace_back("+balanced_l1", f);
  f.chamfer = true;
  rows.emplace_back("+chamfer", f);
  f.uncertainty = true;
  rows.emplace_back("+uncertainty", f);
  f.lstm_fusion = true;
  rows.emplace_back("+lstm_fusion", f);
  return rows;
}

std::vector<AblationRow> run_ablation(const AblationSetup& setup, const Dataset& data,
                                      const std::vector<std::pair<std::string, AblationFlags>>& ladder,
                                      const RowObserver& observer) {
  if (data.train.empty() || data.eval.empty()) throw ValidationError("ablate: need both train and eval scenes");
  std::vector<AblationRow> rows;
  const AnchorSet& anchors = *setup.context.anchors;
  for (const auto& [name, flags] : ladder) {
    TrainConfig cfg = setup.train;
    cfg.flags = flags;
    ModelParameters init =
        ModelParameters::init(setup.channels, static_cast<ad::Index>(anchors.station_count()), setup.classes,
                              setup.model, setup.train.seed);
    AblationRow row;
    row.name = name;
    row.flags = flags;
    row.training = train(cfg, data.train, setup.context, std::move(init));
    EvalSettings es = setup.eval;
    es.use_lstm = flags.lstm_fusion;
    row.eval = evaluate_model(row.training.params, data.eval, anchors, es);
    if (observer) observer(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tlane
