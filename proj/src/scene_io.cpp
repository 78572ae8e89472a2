#include "tlane/scene_io.hpp"

#include "tlane/errors.hpp"
#include "tlane/lane_io.hpp"

#include <algorithm>

namespace tlane {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kSidecarSuffix = ".features.json";

}  // namespace

fs::path lane_file_path(const fs::path& dir, const std::string& id, int frame) {
  return dir / (id + "_f" + std::to_string(frame) + ".lanes.json");
}

fs::path feature_file_path(const fs::path& dir, const std::string& id) { return dir / (id + kSidecarSuffix); }

void write_scene(const fs::path& dir, const std::string& id, const SceneSequence& scene, const std::string& config_hash) {
  json motion = json::array();
  for (const EgoMotion& m : scene.motion) motion.push_back({{"forward", m.forward}, {"yaw", m.yaw}});
  json frames = json::array();
  for (std::size_t t = 0; t < scene.frames.size(); ++t) {
    const ad::Matrix& f = scene.frames[t].features;
    json rows = json::array();
    for (ad::Index k = 0; k < f.rows(); ++k) rows.push_back(std::vector<double>(f.row(k).begin(), f.row(k).end()));
    frames.push_back(std::move(rows));
    write_lane_file(lane_file_path(dir, id, static_cast<int>(t)), scene.frames[t].lanes);
  }
  json doc = {{"config_hash", config_hash},
              {"seed", scene.seed},
              {"frames", scene.frames.size()},
              {"ego_motion", motion},
              {"features", frames}};
  write_text_file(feature_file_path(dir, id), doc.dump() + "\n");
}

SceneSequence read_scene(const fs::path& dir, const std::string& id) {
  const fs::path sidecar = feature_file_path(dir, id);
  if (!fs::exists(sidecar)) throw ValidationError("scene sidecar not found: " + sidecar.string());
  SceneSequence scene;
  try {
    const json doc = json::parse(read_text_file(sidecar));
    scene.seed = doc.at("seed").get<std::uint64_t>();
    const auto frames = doc.at("frames").get<std::size_t>();
    for (const json& m : doc.at("ego_motion")) {
      scene.motion.push_back(EgoMotion{m.at("forward").get<double>(), m.at("yaw").get<double>()});
    }
    const json& feats = doc.at("features");
    if (feats.size() != frames || scene.motion.size() + 1 != frames) {
      throw ValidationError(sidecar.string() + ": frame count does not match features/ego_motion");
    }
    for (std::size_t t = 0; t < frames; ++t) {
      SceneFrame frame;
      const json& rows = feats[t];
      const auto k = static_cast<ad::Index>(rows.size());
      const auto c = k > 0 ? static_cast<ad::Index>(rows[0].size()) : 0;
      frame.features = ad::Matrix(k, c);
      for (ad::Index i = 0; i < k; ++i) {
        const auto row = rows[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (static_cast<ad::Index>(row.size()) != c) throw ValidationError(sidecar.string() + ": ragged feature rows");
        for (ad::Index j = 0; j < c; ++j) frame.features(i, j) = row[static_cast<std::size_t>(j)];
      }
      frame.lanes = read_lane_file(lane_file_path(dir, id, static_cast<int>(t)));
      scene.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw ValidationError(sidecar.string() + ": " + e.what());
  }
  return scene;
}

std::vector<std::string> list_scene_ids(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > kSidecarSuffix.size() && name.ends_with(kSidecarSuffix)) {
      ids.push_back(name.substr(0, name.size() - kSidecarSuffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace tlane
