#pragma once

// Lane files: a JSON array of lane objects with fields
// "stations", "x", "z", "visibility" (equal-length arrays) and "category".

#include "tlane/lane.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tlane {

nlohmann::json lane_to_json(const Lane3D& lane);
Lane3D lane_from_json(const nlohmann::json& j);

std::string lanes_to_string(const std::vector<Lane3D>& lanes);
std::vector<Lane3D> lanes_from_string(const std::string& text);

void write_lane_file(const std::filesystem::path& path, const std::vector<Lane3D>& lanes);
std::vector<Lane3D> read_lane_file(const std::filesystem::path& path);

/// Whole-file helpers shared by the document writers.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace tlane
