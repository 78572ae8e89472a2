// tlane: generate / train / eval / gradcheck / ablate.
//
// Exit codes: 0 success, 1 invalid input or configuration, 2 runtime or
// numerical failure.

#include "tlane/checkpoint.hpp"
#include "tlane/errors.hpp"
#include "tlane/gradcheck_suite.hpp"
#include "tlane/lane_io.hpp"
#include "tlane/report.hpp"
#include "tlane/run_config.hpp"
#include "tlane/scene_io.hpp"
#include "tlane/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace tlane;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> threshold;
  std::optional<double> coverage;
  std::optional<int> epochs;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON); defaults when omitted");
  cmd->add_option("--seed", o.seed, "Override the run seed");
  cmd->add_option("--out", o.out, "Override the output directory");
  cmd->add_option("--threshold", o.threshold, "Override the match distance threshold (m)");
  cmd->add_option("--coverage", o.coverage, "Override the match coverage fraction");
  cmd->add_option("--epochs", o.epochs, "Override train.epochs");
}

RunConfiguration resolve(const Overrides& o) {
  RunConfiguration cfg = o.config.empty() ? RunConfiguration{} : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.train.seed = cfg.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.threshold) cfg.threshold = *o.threshold;
  if (o.coverage) cfg.coverage = *o.coverage;
  if (o.epochs) {
    cfg.train.epochs = *o.epochs;
    cfg.train.escop.ramp_end = std::min(cfg.train.escop.ramp_end, cfg.train.epochs);
    cfg.train.escop.ramp_start = std::min(cfg.train.escop.ramp_start, cfg.train.escop.ramp_end);
  }
  cfg.validate();
  return cfg;
}

void log_line(const std::string& what) {
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::localtime(&now));
  std::cerr << "[" << stamp << "] " << what << "\n";
}

void print_totals(const EvalSummary& s) {
  std::cout << "TP " << s.total.true_positives << "  FP " << s.total.false_positives << "  FN "
            << s.total.false_negatives << "\n"
            << "precision " << fixed6(s.total.precision) << "  recall " << fixed6(s.total.recall) << "  F1 "
            << fixed6(s.total.f1) << "  Acc " << fixed6(s.total.accuracy) << "  jitter " << fixed6(s.jitter) << "\n";
}

void write_eval(const fs::path& dir, const EvalSummary& s, const EvalSettings& es, const std::string& hash) {
  write_text_file(dir / "report.json", eval_report_json(s, es, hash).dump(2) + "\n");
  write_text_file(dir / "report.csv", "# config_hash=" + hash + "\n" + eval_report_csv(s));
}

std::vector<SceneSequence> read_scenes(const fs::path& dir, std::vector<std::string>& ids) {
  ids = list_scene_ids(dir);
  if (ids.empty()) throw ValidationError("no scenes in " + dir.string());
  std::vector<SceneSequence> scenes;
  for (const std::string& id : ids) scenes.push_back(read_scene(dir, id));
  return scenes;
}

int cmd_generate(const Overrides& o) {
  const RunConfiguration cfg = resolve(o);
  const std::string hash = config_hash(cfg);
  const AnchorSet anchors = build_default_anchors(cfg.anchor_layout);
  const Dataset data = generate_dataset(cfg.seed, cfg.train_scenes, cfg.eval_scenes, cfg.scene, anchors);
  const fs::path root = fs::path(cfg.output_dir) / "scenes";
  for (std::size_t i = 0; i < data.train.size(); ++i) write_scene(root / "train", scene_id(i), data.train[i], hash);
  for (std::size_t i = 0; i < data.eval.size(); ++i) write_scene(root / "eval", scene_id(i), data.eval[i], hash);
  write_text_file(fs::path(cfg.output_dir) / "config.json", run_config_to_string(cfg));
  std::cout << "generated " << data.train.size() << " train + " << data.eval.size() << " eval scenes in "
            << root.string() << "\n"
            << "config_hash " << hash << "\n";
  return 0;
}

int cmd_train(const Overrides& o) {
  const RunConfiguration cfg = resolve(o);
  const std::string hash = config_hash(cfg);
  const AnchorSet anchors = build_default_anchors(cfg.anchor_layout);
  const Dataset data = generate_dataset(cfg.seed, cfg.train_scenes, cfg.eval_scenes, cfg.scene, anchors);
  const fs::path dir = fs::path(cfg.output_dir) / "train";

  std::string csv = "# config_hash=" + hash + "\n" + epoch_csv_header() + "\n";
  const ModelParameters init = ModelParameters::init(cfg.scene.channels, static_cast<ad::Index>(anchors.station_count()),
                                                     cfg.scene.classes(), cfg.model, cfg.seed);
  const TrainResult result = train(cfg.train_config(), data.train, cfg.train_context(anchors), init,
                                   [&](const EpochRecord& r, const ModelParameters&) {
                                     csv += epoch_csv_row(r) + "\n";
                                     if (r.epoch % 10 == 0) {
                                       std::cerr << "epoch " << r.epoch << " loss " << fixed6(r.mean.total) << "\n";
                                     }
                                   });
  write_text_file(dir / "metrics.csv", csv);

  const EvalSettings es = cfg.eval_settings(cfg.train.flags.lstm_fusion);
  const EvalSummary summary = evaluate_model(result.params, data.eval, anchors, es);
  write_eval(dir, summary, es, hash);

  Checkpoint ckpt;
  ckpt.params = result.params;
  ckpt.epoch = result.epochs;
  ckpt.config_hash = hash;
  ckpt.metrics = {{"final_loss", result.history.empty() ? 0.0 : result.history.back().mean.total},
                  {"f1", summary.total.f1},
                  {"accuracy", summary.total.accuracy},
                  {"lstm_fusion", cfg.train.flags.lstm_fusion}};
  save_checkpoint(dir / "checkpoint.bin", ckpt);
  write_text_file(fs::path(cfg.output_dir) / "config.json", run_config_to_string(cfg));

  std::cout << "trained " << result.epochs << " epochs (" << result.steps << " steps), checkpoint "
            << (dir / "checkpoint.bin").string() << "\n";
  print_totals(summary);
  std::cout << "config_hash " << hash << "\n";
  log_line("train finished");
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string scenes;
  std::string predictions;
};

int cmd_eval(const Overrides& o, const EvalArgs& a, const CLI::App& sub) {
  const RunConfiguration cfg = resolve(o);
  const std::string hash = config_hash(cfg);
  const fs::path dir = fs::path(cfg.output_dir) / "eval";

  if (!a.predictions.empty()) {
    if (a.scenes.empty()) throw ValidationError("eval --predictions needs --scenes with the ground truth");
    std::vector<std::string> ids;
    const std::vector<SceneSequence> scenes = read_scenes(a.scenes, ids);
    EvalSettings es = cfg.eval_settings(false);
    std::vector<std::vector<std::vector<Lane3D>>> preds;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      std::vector<std::vector<Lane3D>> per_frame;
      for (int t = es.window - 1; t < static_cast<int>(scenes[s].frames.size()); ++t) {
        per_frame.push_back(read_lane_file(lane_file_path(a.predictions, ids[s], t)));
      }
      preds.push_back(std::move(per_frame));
    }
    const EvalSummary summary = evaluate_predictions(preds, scenes, ids, es);
    write_eval(dir, summary, es, hash);
    print_totals(summary);
    std::cout << "config_hash " << hash << "\n";
    return 0;
  }

  if (a.checkpoint.empty() || !fs::exists(a.checkpoint)) {
    std::cerr << (a.checkpoint.empty() ? std::string("error: --checkpoint is required")
                                       : "error: checkpoint not found: " + a.checkpoint)
              << "\n\n"
              << sub.help();
    return 1;
  }
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const bool use_lstm = ckpt.metrics.value("lstm_fusion", cfg.train.flags.lstm_fusion);
  const AnchorSet anchors = build_default_anchors(cfg.anchor_layout);
  std::vector<SceneSequence> scenes;
  std::vector<std::string> ids;
  if (!a.scenes.empty()) {
    scenes = read_scenes(a.scenes, ids);
  } else {
    scenes = generate_dataset(cfg.seed, 0, cfg.eval_scenes, cfg.scene, anchors).eval;
    for (std::size_t i = 0; i < scenes.size(); ++i) ids.push_back(scene_id(i));
  }
  for (const SceneSequence& s : scenes) {
    for (const SceneFrame& f : s.frames) {
      if (f.features.rows() != static_cast<ad::Index>(anchors.size()) || f.features.cols() != ckpt.params.heads.channels()) {
        throw ValidationError("eval: scene features do not match the anchors/checkpoint shape");
      }
    }
  }
  const EvalSettings es = cfg.eval_settings(use_lstm);
  std::vector<std::vector<std::vector<Lane3D>>> preds;
  for (const SceneSequence& s : scenes) {
    std::vector<std::vector<Lane3D>> per_frame;
    for (int end = es.window - 1; end < static_cast<int>(s.frames.size()); ++end) {
      per_frame.push_back(predict_lanes(ckpt.params, s, end, es.window, anchors, es.use_lstm,
                                        es.visibility_threshold, es.nms_distance));
    }
    preds.push_back(std::move(per_frame));
  }
  const EvalSummary summary = evaluate_predictions(preds, scenes, ids, es);
  write_eval(dir, summary, es, hash);
  print_totals(summary);
  std::cout << "checkpoint config_hash " << ckpt.config_hash << "\n"
            << "config_hash " << hash << "\n";
  return 0;
}

int cmd_gradcheck(const Overrides& o, int cases, const std::string& corrupt) {
  SuiteOptions opts;
  if (o.seed) opts.seed = *o.seed;
  opts.cases = cases;
  opts.model_cases = cases;
  if (!corrupt.empty()) {
    const auto names = gradcheck_entry_names();
    if (std::find(names.begin(), names.end(), corrupt) == names.end()) {
      throw ValidationError("--corrupt-gradient: unknown operation " + corrupt);
    }
  }
  opts.corrupt = corrupt;
  const SuiteReport report = run_gradcheck_suite(opts);
  std::cout << format_report(report);
  return report.passed ? 0 : 1;
}

int cmd_ablate(const Overrides& o) {
  const RunConfiguration cfg = resolve(o);
  const std::string hash = config_hash(cfg);
  const AnchorSet anchors = build_default_anchors(cfg.anchor_layout);
  const Dataset data = generate_dataset(cfg.seed, cfg.train_scenes, cfg.eval_scenes, cfg.scene, anchors);
  const auto rows = run_ablation(cfg.ablation_setup(anchors), data, ablation_ladder(), [](const AblationRow& r) {
    std::cerr << "row " << r.name << " F1 " << fixed6(r.eval.total.f1) << " jitter " << fixed6(r.eval.jitter) << "\n";
  });
  const fs::path dir = fs::path(cfg.output_dir) / "ablation";
  write_text_file(dir / "ablation.json", ablation_json(rows, hash).dump(2) + "\n");
  write_text_file(dir / "ablation.csv", ablation_csv(rows, hash));
  write_text_file(fs::path(cfg.output_dir) / "config.json", run_config_to_string(cfg));
  std::cout << "# config_hash " << hash << "\n"
            << "# each row adds one component to the row above\n"
            << ablation_table(rows);
  log_line("ablation finished");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal anchor-based 3D lane detection on synthetic scenes"};
  app.name("tlane");
  app.require_subcommand(1);

  Overrides gen_o, train_o, eval_o, grad_o, abl_o;
  EvalArgs eval_a;
  int cases = 100;
  std::string corrupt;

  auto* gen = app.add_subcommand("generate", "Write train/eval scenes (lane files + feature sidecars)");
  add_common(gen, gen_o);
  auto* tr = app.add_subcommand("train", "Train on the configured dataset, write checkpoint and metrics");
  add_common(tr, train_o);
  auto* ev = app.add_subcommand("eval", "Score a checkpoint, or a directory of predicted lane files");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_a.checkpoint, "Checkpoint written by train");
  ev->add_option("--scenes", eval_a.scenes, "Scene directory written by generate (e.g. out/scenes/eval)");
  ev->add_option("--predictions", eval_a.predictions, "Directory of predicted lane files named like the scenes");
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gc->add_option("--seed", grad_o.seed, "Suite seed");
  gc->add_option("--cases", cases, "Seeded inputs per check")->check(CLI::PositiveNumber);
  gc->add_option("--corrupt-gradient", corrupt)->group("");
  auto* ab = app.add_subcommand("ablate", "Run the five-row component ablation");
  add_common(ab, abl_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_generate(gen_o);
    if (tr->parsed()) return cmd_train(train_o);
    if (ev->parsed()) return cmd_eval(eval_o, eval_a, *ev);
    if (gc->parsed()) return cmd_gradcheck(grad_o, cases, corrupt);
    if (ab->parsed()) return cmd_ablate(abl_o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
