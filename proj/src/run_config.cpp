#include "tlane/run_config.hpp"

#include "tlane/errors.hpp"
#include "tlane/lane_io.hpp"

#include <cstdio>
#include <limits>
#include <set>

namespace tlane {

using nlohmann::json;

namespace {

// Reads fields of one JSON object and remembers which keys were used so
// leftovers can be reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  void read(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ValidationError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void read(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ValidationError(field(key) + ": expected an integer");
      const auto x = v->get<std::int64_t>();
      if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
        throw ValidationError(field(key) + ": out of range");
      }
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ValidationError(field(key) + ": out of range");
      }
      out = static_cast<int>(x);
    }
  }

  void read(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ValidationError(field(key) + ": expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ValidationError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void read(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ValidationError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void read(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ValidationError(field(key) + ": expected an array of numbers");
      std::vector<double> tmp;
      for (const json& e : *v) {
        if (!e.is_number()) throw ValidationError(field(key) + ": expected an array of numbers");
        tmp.push_back(e.get<double>());
      }
      out = std::move(tmp);
    }
  }

  /// Nested object, or an empty one when absent.
  Section child(const char* key) {
    const json* v = find(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, field(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError(field(it.key().c_str()) + ": unknown field");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json scene_json(const SceneConfig& s) {
  return {{"lanes_min", s.lanes_min},
          {"lanes_max", s.lanes_max},
          {"categories", s.categories},
          {"lane_width_min", s.lane_width_min},
          {"lane_width_max", s.lane_width_max},
          {"lateral_min", s.lateral_min},
          {"lateral_max", s.lateral_max},
          {"heading_max", s.heading_max},
          {"curvature_max", s.curvature_max},
          {"height_max", s.height_max},
          {"grade_max", s.grade_max},
          {"visible_from_min", s.visible_from_min},
          {"visible_from_max", s.visible_from_max},
          {"visible_to_min", s.visible_to_min},
          {"visible_to_max", s.visible_to_max},
          {"noise_sigma", s.noise_sigma},
          {"speed_min", s.speed_min},
          {"speed_max", s.speed_max},
          {"frame_interval", s.frame_interval},
          {"yaw_rate_max", s.yaw_rate_max},
          {"window", s.window},
          {"frames", s.frames},
          {"channels", s.channels},
          {"lateral_scale", s.lateral_scale},
          {"height_scale", s.height_scale},
          {"positive_threshold", s.positive_threshold}};
}

void read_scene(Section sec, SceneConfig& s) {
  sec.read("lanes_min", s.lanes_min);
  sec.read("lanes_max", s.lanes_max);
  sec.read("categories", s.categories);
  sec.read("lane_width_min", s.lane_width_min);
  sec.read("lane_width_max", s.lane_width_max);
  sec.read("lateral_min", s.lateral_min);
  sec.read("lateral_max", s.lateral_max);
  sec.read("heading_max", s.heading_max);
  sec.read("curvature_max", s.curvature_max);
  sec.read("height_max", s.height_max);
  sec.read("grade_max", s.grade_max);
  sec.read("visible_from_min", s.visible_from_min);
  sec.read("visible_from_max", s.visible_from_max);
  sec.read("visible_to_min", s.visible_to_min);
  sec.read("visible_to_max", s.visible_to_max);
  sec.read("noise_sigma", s.noise_sigma);
  sec.read("speed_min", s.speed_min);
  sec.read("speed_max", s.speed_max);
  sec.read("frame_interval", s.frame_interval);
  sec.read("yaw_rate_max", s.yaw_rate_max);
  sec.read("window", s.window);
  sec.read("frames", s.frames);
  sec.read("channels", s.channels);
  sec.read("lateral_scale", s.lateral_scale);
  sec.read("height_scale", s.height_scale);
  sec.read("positive_threshold", s.positive_threshold);
  sec.finish();
}

json flags_json(const AblationFlags& f) {
  return {{"balanced_l1", f.balanced_l1},
          {"chamfer", f.chamfer},
          {"uncertainty", f.uncertainty},
          {"lstm_fusion", f.lstm_fusion}};
}

}  // namespace

void RunConfiguration::validate() const {
  if (train_scenes < 1) throw ValidationError("dataset.train_scenes: must be >= 1");
  if (eval_scenes < 1) throw ValidationError("dataset.eval_scenes: must be >= 1");
  scene.validate();
  const AnchorSet anchors = build_default_anchors(anchor_layout);
  scene.encoding(anchors).validate();
  loss.validate();
  train.validate();
  if (model.lstm_hidden < 0) throw ValidationError("model.lstm_hidden: must be >= 0");
  if (!(model.visibility_threshold >= 0.0 && model.visibility_threshold <= 1.0)) {
    throw ValidationError("model.visibility_threshold: must be in [0, 1]");
  }
  if (!(model.positive_threshold > 0.0)) throw ValidationError("model.positive_threshold: must be > 0");
  if (!(model.nms_distance >= 0.0)) throw ValidationError("model.nms_distance: must be >= 0");
  if (!(threshold > 0.0)) throw ValidationError("eval.threshold: must be > 0");
  if (!(coverage > 0.0 && coverage <= 1.0)) throw ValidationError("eval.coverage: must be in (0, 1]");
  if (output_dir.empty()) throw ValidationError("output_dir: must not be empty");
}

TrainConfig RunConfiguration::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

TrainContext RunConfiguration::train_context(const AnchorSet& anchors) const {
  TrainContext c;
  c.anchors = &anchors;
  c.loss = loss;
  c.window = scene.window;
  c.positive_threshold = model.positive_threshold;
  return c;
}

EvalSettings RunConfiguration::eval_settings(bool use_lstm) const {
  EvalSettings e;
  e.window = scene.window;
  e.use_lstm = use_lstm;
  e.visibility_threshold = model.visibility_threshold;
  e.nms_distance = model.nms_distance;
  e.threshold = threshold;
  e.coverage = coverage;
  return e;
}

AblationSetup RunConfiguration::ablation_setup(const AnchorSet& anchors) const {
  AblationSetup a;
  a.train = train_config();
  a.context = train_context(anchors);
  a.model = model;
  a.channels = scene.channels;
  a.classes = scene.classes();
  a.eval = eval_settings(true);
  return a;
}

json to_json(const RunConfiguration& c) {
  json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"train_scenes", c.train_scenes}, {"eval_scenes", c.eval_scenes}};
  j["scene"] = scene_json(c.scene);
  j["anchor_layout"] = {{"lateral_min", c.anchor_layout.lateral_min},
                        {"lateral_max", c.anchor_layout.lateral_max},
                        {"count", c.anchor_layout.count},
                        {"stations", c.anchor_layout.stations}};
  j["loss"] = {{"balanced_l1",
                {{"alpha", c.loss.balanced_l1.alpha()},
                 {"beta", c.loss.balanced_l1.beta()},
                 {"gamma", c.loss.balanced_l1.gamma()}}},
               {"focal", {{"gamma", c.loss.focal.gamma}, {"alpha", c.loss.focal.alpha}}},
               {"dice", {{"epsilon", c.loss.dice.epsilon}}}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"optimizer", optimizer_name(t.optimizer)},
                {"adam_beta1", t.adam_beta1},
                {"adam_beta2", t.adam_beta2},
                {"adam_epsilon", t.adam_epsilon},
                {"escop", {{"ramp_start", t.escop.ramp_start}, {"ramp_end", t.escop.ramp_end}}},
                {"flags", flags_json(t.flags)},
                {"temporal_consistency", t.temporal_consistency},
                {"temporal_consistency_weight", t.temporal_consistency_weight},
                {"random_window", t.random_window}};
  j["model"] = {{"hidden_layer", c.model.hidden_layer},
                {"lstm_hidden", c.model.lstm_hidden},
                {"visibility_threshold", c.model.visibility_threshold},
                {"positive_threshold", c.model.positive_threshold},
                {"nms_distance", c.model.nms_distance}};
  j["eval"] = {{"threshold", c.threshold}, {"coverage", c.coverage}};
  j["output_dir"] = c.output_dir;
  return j;
}

RunConfiguration run_config_from_json(const json& j) {
  RunConfiguration c;
  Section root(j, "");
  root.read("seed", c.seed);
  {
    Section d = root.child("dataset");
    d.read("train_scenes", c.train_scenes);
    d.read("eval_scenes", c.eval_scenes);
    d.finish();
  }
  read_scene(root.child("scene"), c.scene);
  {
    Section a = root.child("anchor_layout");
    a.read("lateral_min", c.anchor_layout.lateral_min);
    a.read("lateral_max", c.anchor_layout.lateral_max);
    a.read("count", c.anchor_layout.count);
    a.read("stations", c.anchor_layout.stations);
    a.finish();
  }
  {
    Section l = root.child("loss");
    Section b = l.child("balanced_l1");
    double alpha = c.loss.balanced_l1.alpha();
    double beta = c.loss.balanced_l1.beta();
    double gamma = c.loss.balanced_l1.gamma();
    b.read("alpha", alpha);
    b.read("beta", beta);
    b.read("gamma", gamma);
    b.finish();
    try {
      c.loss.balanced_l1 = BalancedL1Config(alpha, beta, gamma);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("loss.balanced_l1: ") + e.what());
    }
    Section f = l.child("focal");
    f.read("gamma", c.loss.focal.gamma);
    f.read("alpha", c.loss.focal.alpha);
    f.finish();
    Section d = l.child("dice");
    d.read("epsilon", c.loss.dice.epsilon);
    d.finish();
    l.finish();
  }
  {
    TrainConfig& t = c.train;
    Section s = root.child("train");
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("learning_rate", t.learning_rate);
    std::string opt = optimizer_name(t.optimizer);
    s.read("optimizer", opt);
    t.optimizer = optimizer_from_name(opt);
    s.read("adam_beta1", t.adam_beta1);
    s.read("adam_beta2", t.adam_beta2);
    s.read("adam_epsilon", t.adam_epsilon);
    Section e = s.child("escop");
    e.read("ramp_start", t.escop.ramp_start);
    e.read("ramp_end", t.escop.ramp_end);
    e.finish();
    Section f = s.child("flags");
    f.read("balanced_l1", t.flags.balanced_l1);
    f.read("chamfer", t.flags.chamfer);
    f.read("uncertainty", t.flags.uncertainty);
    f.read("lstm_fusion", t.flags.lstm_fusion);
    f.finish();
    s.read("temporal_consistency", t.temporal_consistency);
    s.read("temporal_consistency_weight", t.temporal_consistency_weight);
    s.read("random_window", t.random_window);
    s.finish();
  }
  {
    Section m = root.child("model");
    m.read("hidden_layer", c.model.hidden_layer);
    m.read("lstm_hidden", c.model.lstm_hidden);
    m.read("visibility_threshold", c.model.visibility_threshold);
    m.read("positive_threshold", c.model.positive_threshold);
    m.read("nms_distance", c.model.nms_distance);
    m.finish();
  }
  {
    Section e = root.child("eval");
    e.read("threshold", c.threshold);
    e.read("coverage", c.coverage);
    e.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();
  c.train.seed = c.seed;
  return c;
}

std::string run_config_to_string(const RunConfiguration& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfiguration run_config_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

RunConfiguration load_run_config(const std::filesystem::path& path) {
  return run_config_from_string(read_text_file(path));
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const RunConfiguration& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(cfg).dump())));
  return buf;
}

}  // namespace tlane
