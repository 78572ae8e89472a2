#include "tlane/checkpoint.hpp"

#include "tlane/errors.hpp"
#include "tlane/lane_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

namespace tlane {

using nlohmann::json;

namespace {

void put_f64(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  const auto arrays = ckpt.params.arrays();
  json header;
  header["format"] = kCheckpointFormat;
  header["config_hash"] = ckpt.config_hash;
  header["epoch"] = ckpt.epoch;
  header["arrays"] = json::array();
  for (const auto& [name, m] : arrays) header["arrays"].push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["metrics"] = ckpt.metrics;
  std::string out = header.dump() + "\n";
  for (const auto& [name, m] : arrays) {
    for (ad::Index i = 0; i < m->size(); ++i) put_f64(out, m->data()[i]);
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos) throw ValidationError("checkpoint: missing header line");
  json header;
  try {
    header = json::parse(bytes.substr(0, nl));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (!header.is_object() || header.value("format", "") != kCheckpointFormat) {
    throw ValidationError("checkpoint: unknown format");
  }
  Checkpoint ckpt;
  try {
    ckpt.config_hash = header.at("config_hash").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.metrics = header.value("metrics", json::object());
    const json& list = header.at("arrays");
    ckpt.params.heads.hidden_layer = false;
    for (const json& a : list) {
      if (a.at("name").get<std::string>() == "heads.w_hidden") ckpt.params.heads.hidden_layer = true;
    }
    auto arrays = ckpt.params.arrays();
    if (list.size() != arrays.size()) throw ValidationError("checkpoint: unexpected array count");
    std::size_t at = nl + 1;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      const json& a = list[i];
      if (a.at("name").get<std::string>() != arrays[i].first) {
        throw ValidationError("checkpoint: expected array " + arrays[i].first + ", found " +
                              a.at("name").get<std::string>());
      }
      const auto rows = a.at("rows").get<ad::Index>();
      const auto cols = a.at("cols").get<ad::Index>();
      if (rows < 0 || cols < 0) throw ValidationError("checkpoint: negative shape for " + arrays[i].first);
      const auto count = static_cast<std::size_t>(rows * cols);
      if (bytes.size() < at + 8 * count) throw ValidationError("checkpoint: truncated data in " + arrays[i].first);
      ad::Matrix& m = *arrays[i].second;
      m.resize(rows, cols);
      for (std::size_t k = 0; k < count; ++k) m.data()[k] = get_f64(bytes, at + 8 * k);
      at += 8 * count;
    }
    if (at != bytes.size()) throw ValidationError("checkpoint: trailing bytes after the last array");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
  }
  ckpt.params.validate();
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_text_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("checkpoint not found: " + path.string());
  return checkpoint_from_bytes(read_text_file(path));
}

}  // namespace tlane
