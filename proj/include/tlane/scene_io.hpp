#pragma once

// On-disk scenes: one lane file per frame, `<id>_f<t>.lanes.json`, plus a
// sidecar `<id>.features.json` holding the seed, the ego motion and the
// K x C feature matrix of every frame.

#include "tlane/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace tlane {

std::filesystem::path lane_file_path(const std::filesystem::path& dir, const std::string& id, int frame);
std::filesystem::path feature_file_path(const std::filesystem::path& dir, const std::string& id);

void write_scene(const std::filesystem::path& dir, const std::string& id, const SceneSequence& scene,
                 const std::string& config_hash);
/// Lanes, ego motion and features. Assignments are left empty.
SceneSequence read_scene(const std::filesystem::path& dir, const std::string& id);
/// Scene ids with a sidecar in `dir`, sorted.
std::vector<std::string> list_scene_ids(const std::filesystem::path& dir);

}  // namespace tlane
