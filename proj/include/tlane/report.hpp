#pragma once

// Metric documents: a JSON report and a flat CSV table with columns
// scene-id,TP,FP,FN,precision,recall,F1,Acc,jitter.

#include "tlane/trainer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace tlane {

nlohmann::json match_report_json(const MatchReport& r);
nlohmann::json eval_report_json(const EvalSummary& s, const EvalSettings& settings, const std::string& config_hash);
/// One row per scene followed by an "all" row with the pooled counts.
std::string eval_report_csv(const EvalSummary& s);

nlohmann::json ablation_json(const std::vector<AblationRow>& rows, const std::string& config_hash);
/// Header comments, then configuration,balanced_l1,chamfer,uncertainty,
/// lstm_fusion,F1,Acc,precision,recall,jitter.
std::string ablation_csv(const std::vector<AblationRow>& rows, const std::string& config_hash);
/// Fixed-width text rendering for the terminal.
std::string ablation_table(const std::vector<AblationRow>& rows);

/// Fixed six-decimal rendering used by every table; "nan" for NaN.
std::string fixed6(double v);

}  // namespace tlane
