#pragma once

// Checkpoint files. The first line is a one-line JSON header:
//   {"format":"tlane-checkpoint/1","config_hash":...,"epoch":...,
//    "arrays":[{"name":...,"rows":...,"cols":...},...],"metrics":{...}}
// followed by every array of the header in order, row-major, as raw
// little-endian IEEE-754 float64.

#include "tlane/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace tlane {

inline constexpr const char* kCheckpointFormat = "tlane-checkpoint/1";

struct Checkpoint {
  ModelParameters params;
  int epoch = 0;
  std::string config_hash;
  nlohmann::json metrics = nlohmann::json::object();
};

std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tlane
