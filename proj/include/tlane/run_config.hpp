#pragma once

// The run-configuration document. Together with `seed` it fixes every
// output of a run.

#include "tlane/lane.hpp"
#include "tlane/losses.hpp"
#include "tlane/model.hpp"
#include "tlane/synth.hpp"
#include "tlane/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace tlane {

struct RunConfiguration {
  std::uint64_t seed = 2024;
  int train_scenes = 64;
  int eval_scenes = 32;
  SceneConfig scene;
  AnchorLayout anchor_layout;
  LossConfig loss;
  TrainConfig train;  // train.seed is ignored in favour of `seed`
  ModelConfig model;
  double threshold = kDefaultMatchThreshold;
  double coverage = kDefaultCoverage;
  std::string output_dir = "out";

  /// Throws ValidationError naming the offending field.
  void validate() const;

  TrainConfig train_config() const;
  TrainContext train_context(const AnchorSet& anchors) const;
  EvalSettings eval_settings(bool use_lstm) const;
  AblationSetup ablation_setup(const AnchorSet& anchors) const;
};

nlohmann::json to_json(const RunConfiguration& cfg);
/// Missing fields keep their defaults; unknown fields and wrong types are
/// rejected with the dotted field name in the message.
RunConfiguration run_config_from_json(const nlohmann::json& j);

std::string run_config_to_string(const RunConfiguration& cfg);
RunConfiguration run_config_from_string(const std::string& text);
RunConfiguration load_run_config(const std::filesystem::path& path);

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
std::string config_hash(const RunConfiguration& cfg);
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace tlane
