#include "tlane/report.hpp"

#include <cmath>
#include <cstdio>

namespace tlane {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const char* kNesting =
    "# rows nest: each row adds one component to the row above "
    "(baseline = plain L1, unit task weights, no Chamfer, last-frame features)";

}  // namespace

std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

json match_report_json(const MatchReport& r) {
  return {{"tp", r.true_positives},   {"fp", r.false_positives}, {"fn", r.false_negatives},
          {"precision", r.precision}, {"recall", r.recall},       {"f1", r.f1},
          {"accuracy", r.accuracy}};
}

json eval_report_json(const EvalSummary& s, const EvalSettings& settings, const std::string& config_hash) {
  json scenes = json::array();
  for (const SceneEvaluation& e : s.scenes) {
    json row = match_report_json(e.report);
    row["scene"] = e.id;
    row["jitter"] = number_or_null(e.jitter);
    row["jitter_samples"] = e.jitter_samples;
    scenes.push_back(row);
  }
  return {{"config_hash", config_hash},
          {"threshold", settings.threshold},
          {"coverage", settings.coverage},
          {"window", settings.window},
          {"lstm_fusion", settings.use_lstm},
          {"total", match_report_json(s.total)},
          {"jitter", number_or_null(s.jitter)},
          {"jitter_samples", s.jitter_samples},
          {"scenes", scenes}};
}

std::string eval_report_csv(const EvalSummary& s) {
  std::string out = "scene-id,TP,FP,FN,precision,recall,F1,Acc,jitter\n";
  auto row = [&out](const std::string& id, const MatchReport& r, double jitter) {
    out += id + "," + std::to_string(r.true_positives) + "," + std::to_string(r.false_positives) + "," +
           std::to_string(r.false_negatives) + "," + fixed6(r.precision) + "," + fixed6(r.recall) + "," + fixed6(r.f1) +
           "," + fixed6(r.accuracy) + "," + fixed6(jitter) + "\n";
  };
  for (const SceneEvaluation& e : s.scenes) row(e.id, e.report, e.jitter);
  row("all", s.total, s.jitter);
  return out;
}

json ablation_json(const std::vector<AblationRow>& rows, const std::string& config_hash) {
  json out = json::array();
  for (const AblationRow& r : rows) {
    out.push_back({{"configuration", r.name},
                   {"flags",
                    {{"balanced_l1", r.flags.balanced_l1},
                     {"chamfer", r.flags.chamfer},
                     {"uncertainty", r.flags.uncertainty},
                     {"lstm_fusion", r.flags.lstm_fusion}}},
                   {"f1", r.eval.total.f1},
                   {"accuracy", r.eval.total.accuracy},
                   {"precision", r.eval.total.precision},
                   {"recall", r.eval.total.recall},
                   {"jitter", number_or_null(r.eval.jitter)},
                   {"final_loss", r.training.history.empty() ? json(nullptr) : json(r.training.history.back().mean.total)}});
  }
  return {{"config_hash", config_hash}, {"nesting", std::string(kNesting).substr(2)}, {"rows", out}};
}

std::string ablation_csv(const std::vector<AblationRow>& rows, const std::string& config_hash) {
  std::string out = "# config_hash=" + config_hash + "\n" + kNesting + "\n";
  out += "configuration,balanced_l1,chamfer,uncertainty,lstm_fusion,F1,Acc,precision,recall,jitter\n";
  auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  for (const AblationRow& r : rows) {
    out += r.name + "," + b(r.flags.balanced_l1) + "," + b(r.flags.chamfer) + "," + b(r.flags.uncertainty) + "," +
           b(r.flags.lstm_fusion) + "," + fixed6(r.eval.total.f1) + "," + fixed6(r.eval.total.accuracy) + "," +
           fixed6(r.eval.total.precision) + "," + fixed6(r.eval.total.recall) + "," + fixed6(r.eval.jitter) + "\n";
  }
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %10s\n", "configuration", "F1", "Acc", "jitter(m)");
  out += line;
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %8.4f %8.4f %10.4f\n", r.name.c_str(), r.eval.total.f1,
                  r.eval.total.accuracy, r.eval.jitter);
    out += line;
  }
  return out;
}

}  // namespace tlane
