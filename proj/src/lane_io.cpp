#include "tlane/lane_io.hpp"

#include "tlane/errors.hpp"

#include <fstream>
#include <sstream>

namespace tlane {

nlohmann::json lane_to_json(const Lane3D& lane) {
  return nlohmann::json{{"stations", lane.stations},
                        {"x", lane.x},
                        {"z", lane.z},
                        {"visibility", lane.visibility},
                        {"category", lane.category}};
}

Lane3D lane_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("lane: expected an object");
  Lane3D lane;
  try {
    lane.stations = j.at("stations").get<std::vector<double>>();
    lane.x = j.at("x").get<std::vector<double>>();
    lane.z = j.at("z").get<std::vector<double>>();
    lane.visibility = j.at("visibility").get<std::vector<double>>();
    lane.category = j.at("category").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("lane: ") + e.what());
  }
  lane.validate();
  return lane;
}

std::string lanes_to_string(const std::vector<Lane3D>& lanes) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Lane3D& l : lanes) arr.push_back(lane_to_json(l));
  return arr.dump(2) + "\n";
}

std::vector<Lane3D> lanes_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("lane file: ") + e.what());
  }
  if (!j.is_array()) throw ValidationError("lane file: top level must be an array of lanes");
  std::vector<Lane3D> lanes;
  lanes.reserve(j.size());
  for (const auto& item : j) lanes.push_back(lane_from_json(item));
  return lanes;
}

void write_lane_file(const std::filesystem::path& path, const std::vector<Lane3D>& lanes) {
  write_text_file(path, lanes_to_string(lanes));
}

std::vector<Lane3D> read_lane_file(const std::filesystem::path& path) {
  return lanes_from_string(read_text_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace tlane
