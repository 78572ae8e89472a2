#include "tlane/checkpoint.hpp"
#include "tlane/errors.hpp"
#include "tlane/report.hpp"
#include "tlane/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace tlane;
using ad::Matrix;
using ad::Var;

namespace {

struct Fixture {
  AnchorSet anchors = [] {
    AnchorLayout layout;
    layout.lateral_min = -6.0;
    layout.lateral_max = 6.0;
    layout.count = 9;
    layout.stations = {5.0, 15.0, 30.0, 50.0};
    return build_default_anchors(layout);
  }();
  SceneConfig scene = [] {
    SceneConfig c;
    c.channels = 24;
    c.window = 2;
    c.frames = 3;
    c.lanes_min = 2;
    c.lanes_max = 3;
    return c;
  }();
  ModelConfig model;
  TrainContext ctx;
  Dataset data;

  Fixture() {
    ctx.anchors = &anchors;
    ctx.window = scene.window;
    data = generate_dataset(31, 4, 2, scene, anchors);
  }

  ModelParameters init(std::uint64_t seed = 5) const {
    return ModelParameters::init(scene.channels, static_cast<ad::Index>(anchors.station_count()), scene.classes(),
                                 model, seed);
  }

  TrainConfig train_config(int epochs) const {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 2;
    t.learning_rate = 1e-2;
    t.escop = {0, std::min(2, epochs)};
    return t;
  }
};

bool same_params(const ModelParameters& a, const ModelParameters& b) {
  auto x = a.arrays();
  auto y = b.arrays();
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].first != y[i].first || !(*x[i].second == *y[i].second)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("escop ramp") {
  EscopSchedule s{10, 20};
  CHECK(escop_weight(0, s) == 0.0);
  CHECK(escop_weight(9, s) == 0.0);
  CHECK(escop_weight(15, s) == 0.5);
  CHECK(escop_weight(20, s) == 1.0);
  CHECK(escop_weight(500, s) == 1.0);
  double prev = 0.0;
  for (int e = 0; e < 40; ++e) {
    CHECK(escop_weight(e, s) >= prev);
    prev = escop_weight(e, s);
  }
  CHECK(escop_weight(3, EscopSchedule{3, 3}) == 1.0);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.escop = {30, 20};
  CHECK_THROWS_AS(t.validate(), ValidationError);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ValidationError);
  CHECK(optimizer_from_name("sgd") == Optimizer::kGradientDescent);
  CHECK(std::string(optimizer_name(Optimizer::kAdam)) == "adam");
  CHECK_THROWS_AS(optimizer_from_name("rmsprop"), ValidationError);
}

TEST_CASE("zero learning rate leaves parameters alone") {
  Fixture fx;
  auto cfg = fx.train_config(3);
  cfg.learning_rate = 0.0;
  auto p0 = fx.init();
  auto r = train(cfg, fx.data.train, fx.ctx, p0);
  CHECK(same_params(r.params, p0));
  CHECK(r.steps == 6);
  CHECK(r.history.size() == 3);
  cfg.optimizer = Optimizer::kGradientDescent;
  CHECK(same_params(train(cfg, fx.data.train, fx.ctx, p0).params, p0));
}

TEST_CASE("a small gradient step lowers the loss") {
  Fixture fx;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto p = fx.init(seed);
    std::vector<Clip> clips{{&fx.data.train[0], 2}, {&fx.data.train[1], 1}};
    auto bg = batch_gradient(p, clips, fx.ctx, AblationFlags{}, 1.0, true, 0.1);
    double norm2 = 0.0;
    for (const auto& g : bg.grads) norm2 += g.squaredNorm();
    REQUIRE(norm2 > 0.0);
    auto arrays = p.arrays();
    const double eta = 1e-4 / std::sqrt(norm2);
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      if (bg.grads[i].size() > 0) *arrays[i].second -= eta * bg.grads[i];
    }
    auto after = batch_gradient(p, clips, fx.ctx, AblationFlags{}, 1.0, true, 0.1);
    CHECK(after.loss < bg.loss);
  }
}

TEST_CASE("batch gradient matches central differences on sampled entries") {
  Fixture fx;
  auto p = fx.init(9);
  std::vector<Clip> clips{{&fx.data.train[2], 2}};
  auto bg = batch_gradient(p, clips, fx.ctx, AblationFlags{}, 0.7, true, 0.1);
  std::mt19937_64 rng(4);
  auto arrays = p.arrays();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    Matrix& m = *arrays[i].second;
    REQUIRE(bg.grads[i].size() == m.size());
    for (int n = 0; n < 3; ++n) {
      const auto idx = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.size()));
      const double keep = m.data()[idx];
      const double h = 1e-6;
      m.data()[idx] = keep + h;
      const double up = batch_gradient(p, clips, fx.ctx, AblationFlags{}, 0.7, true, 0.1).loss;
      m.data()[idx] = keep - h;
      const double down = batch_gradient(p, clips, fx.ctx, AblationFlags{}, 0.7, true, 0.1).loss;
      m.data()[idx] = keep;
      const double numeric = (up - down) / (2 * h);
      const double analytic = bg.grads[i].data()[idx];
      CAPTURE(arrays[i].first);
      CHECK(std::abs(numeric - analytic) / std::max({1.0, std::abs(numeric), std::abs(analytic)}) < 1e-4);
    }
  }
}

TEST_CASE("flags decide which arrays learn") {
  Fixture fx;
  auto p = fx.init();
  std::vector<Clip> clips{{&fx.data.train[0], 2}};
  AblationFlags base{false, false, false, false};
  auto bg = batch_gradient(p, clips, fx.ctx, base, 1.0);
  auto arrays = p.arrays();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    const bool frozen = arrays[i].first.rfind("lstm.", 0) == 0 || arrays[i].first.rfind("uncertainty.", 0) == 0;
    CAPTURE(arrays[i].first);
    CHECK((bg.grads[i].size() == 0) == frozen);
  }
  CHECK_FALSE(bg.parts.active[static_cast<int>(Task::kCurve)]);
  CHECK(bg.parts.active[static_cast<int>(Task::kRegression)]);
}

TEST_CASE("log variances settle at the log of frozen losses") {
  const std::vector<double> L{0.3, 2.0, 8.0, 1.0};
  Matrix s = Matrix::Zero(1, 4);
  for (int step = 0; step < 5000; ++step) {
    ad::Tape tape;
    Var sv = tape.leaf(s);
    std::vector<Var> losses;
    for (double l : L) losses.push_back(tape.scalar(l));
    tape.backward(combine_uncertainty(losses, sv));
    s -= 0.05 * sv.grad();
  }
  for (int i = 0; i < 4; ++i) CHECK(s(0, i) == doctest::Approx(std::log(L[i])).epsilon(1e-6));
}

TEST_CASE("training is deterministic") {
  Fixture fx;
  auto cfg = fx.train_config(3);
  auto a = train(cfg, fx.data.train, fx.ctx, fx.init());
  auto b = train(cfg, fx.data.train, fx.ctx, fx.init());
  CHECK(same_params(a.params, b.params));
  for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(epoch_csv_row(a.history[e]) == epoch_csv_row(b.history[e]));
  cfg.seed = 77;
  auto c = train(cfg, fx.data.train, fx.ctx, fx.init());
  CHECK_FALSE(same_params(a.params, c.params));
}

TEST_CASE("training lowers the loss") {
  Fixture fx;
  auto cfg = fx.train_config(30);
  auto r = train(cfg, fx.data.train, fx.ctx, fx.init());
  CHECK(r.history.back().mean.total < r.history[2].mean.total);
}

TEST_CASE("non-finite parameters are rejected") {
  Fixture fx;
  auto p = fx.init();
  p.heads.w_offset(0, 0) = std::nan("");
  CHECK_THROWS_AS(train(fx.train_config(1), fx.data.train, fx.ctx, p), ValidationError);
}

TEST_CASE("checkpoint reload is bitwise") {
  Fixture fx;
  auto r = train(fx.train_config(2), fx.data.train, fx.ctx, fx.init());
  Checkpoint ck{r.params, 2, "0123456789abcdef", {{"f1", 0.5}}};
  const std::string bytes = checkpoint_to_bytes(ck);
  auto path = std::filesystem::temp_directory_path() / "tlane_test_checkpoint.bin";
  save_checkpoint(path, ck);
  auto back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(same_params(back.params, r.params));
  CHECK(back.epoch == 2);
  CHECK(back.config_hash == ck.config_hash);
  CHECK(back.metrics == ck.metrics);
  CHECK(checkpoint_to_bytes(back) == bytes);

  const auto& scene = fx.data.eval[0];
  auto before = predict_lanes(r.params, scene, 2, 2, fx.anchors, true, 0.5);
  auto after = predict_lanes(back.params, scene, 2, 2, fx.anchors, true, 0.5);
  CHECK(before == after);

  CHECK_THROWS_AS(checkpoint_from_bytes(bytes + "x"), ValidationError);
  CHECK_THROWS_AS(checkpoint_from_bytes(bytes.substr(0, bytes.size() - 8)), ValidationError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), ValidationError);
}

TEST_CASE("duplicate suppression keeps the most confident") {
  auto mk = [](double x) {
    Lane3D l;
    l.stations = {5, 10};
    l.x = {x, x};
    l.z = {0, 0};
    l.visibility = {1, 1};
    return l;
  };
  std::vector<Lane3D> lanes{mk(0.0), mk(0.4), mk(3.0)};
  auto kept = suppress_duplicates(lanes, {0.6, 0.9, 0.5}, 1.0);
  CHECK(kept == std::vector<std::size_t>{1, 2});
  CHECK(suppress_duplicates(lanes, {0.6, 0.9, 0.5}, 0.0).size() == 3);
}

TEST_CASE("ground truth predictions score perfectly") {
  Fixture fx;
  std::vector<std::vector<std::vector<Lane3D>>> preds;
  std::vector<std::string> ids;
  for (std::size_t s = 0; s < fx.data.eval.size(); ++s) {
    std::vector<std::vector<Lane3D>> per_frame;
    for (std::size_t t = 1; t < fx.data.eval[s].frames.size(); ++t) per_frame.push_back(fx.data.eval[s].frames[t].lanes);
    preds.push_back(per_frame);
    ids.push_back(scene_id(s));
  }
  EvalSettings es;
  es.window = 2;
  auto sum = evaluate_predictions(preds, fx.data.eval, ids, es);
  CHECK(sum.total.f1 == 1.0);
  CHECK(sum.total.accuracy == 1.0);
  CHECK(sum.jitter < 0.05);
  CHECK(sum.scenes.size() == 2);
  CHECK(scene_id(3) == "scene_0003");
  CHECK(eval_report_csv(sum).rfind("scene-id,TP,FP,FN,precision,recall,F1,Acc,jitter\n", 0) == 0);
}

TEST_CASE("ladder shape") {
  auto l = ablation_ladder();
  REQUIRE(l.size() == 5);
  CHECK(l[0].second == AblationFlags{false, false, false, false});
  CHECK(l[4].second == AblationFlags{true, true, true, true});
  for (std::size_t i = 1; i < l.size(); ++i) {
    const auto& a = l[i - 1].second;
    const auto& b = l[i].second;
    CHECK(((!a.balanced_l1 || b.balanced_l1) && (!a.chamfer || b.chamfer) && (!a.uncertainty || b.uncertainty) &&
           (!a.lstm_fusion || b.lstm_fusion)));
  }
}

TEST_CASE("identical flags give identical rows") {
  Fixture fx;
  AblationSetup setup;
  setup.train = fx.train_config(2);
  setup.context = fx.ctx;
  setup.model = fx.model;
  setup.channels = fx.scene.channels;
  setup.classes = fx.scene.classes();
  setup.eval.window = 2;
  AblationFlags f{true, false, true, false};
  auto rows = run_ablation(setup, fx.data, {{"a", f}, {"b", f}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].eval.total.f1 == rows[1].eval.total.f1);
  CHECK(rows[0].eval.total.accuracy == rows[1].eval.total.accuracy);
  CHECK(fixed6(rows[0].eval.jitter) == fixed6(rows[1].eval.jitter));
  CHECK(same_params(rows[0].training.params, rows[1].training.params));
  auto csv = ablation_csv(rows, "h");
  CHECK(csv.find("# config_hash=h") != std::string::npos);
}

TEST_CASE("epoch table") {
  CHECK(epoch_csv_header().rfind("epoch,escop,total,", 0) == 0);
  EpochRecord r;
  r.epoch = 4;
  r.escop = 0.25;
  CHECK(epoch_csv_row(r).rfind("4,0.25,0,", 0) == 0);
  CHECK(fixed6(std::nan("")) == "nan");
  CHECK(fixed6(0.5) == "0.500000");
}
