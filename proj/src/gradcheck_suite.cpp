#include "tlane/gradcheck_suite.hpp"

#include "tlane/gradcheck.hpp"
#include "tlane/losses.hpp"
#include "tlane/model.hpp"
#include "tlane/temporal_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

namespace tlane {

using ad::Matrix;
using ad::NamedInput;
using ad::Tape;
using ad::Var;

namespace {

using Rng = std::mt19937_64;

Matrix normal(Rng& rng, ad::Index r, ad::Index c, double sd) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(r, c);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

Matrix uniform(Rng& rng, ad::Index r, ad::Index c, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

double uniform1(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Case {
  ad::Program program;
  std::vector<NamedInput> inputs;
};

using CaseFactory = std::function<Case(Rng&)>;

// --- Case builders ----------------------------------------------------------------

Case balanced_l1_case(Rng& rng) {
  const BalancedL1Config cfg(uniform1(rng, 0.3, 1.0), uniform1(rng, 0.5, 2.0), uniform1(rng, 1.0, 2.0));
  Matrix p;
  Matrix t;
  for (;;) {
    p = normal(rng, 1, 8, 1.5);
    t = normal(rng, 1, 8, 1.5);
    const Matrix d = (p - t).cwiseAbs();
    if (d.minCoeff() > 1e-3 && (d.array() - cfg.beta()).abs().minCoeff() > 1e-3) break;
  }
  const Matrix mask = uniform(rng, 1, 8, 0.1, 1.0);
  Case c;
  c.program = [cfg, mask](Tape&, std::span<const Var> in) { return balanced_l1_vector(in[0], in[1], mask, cfg); };
  c.inputs = {{"pred", p}, {"target", t}};
  return c;
}

bool argmin_gaps_ok(const Matrix& p, const Matrix& q, double gap) {
  Matrix d(p.rows(), q.rows());
  for (ad::Index i = 0; i < p.rows(); ++i) {
    for (ad::Index j = 0; j < q.rows(); ++j) d(i, j) = (p.row(i) - q.row(j)).squaredNorm();
  }
  auto ok = [gap](std::vector<double> v) {
    if (v.size() < 2) return true;
    std::sort(v.begin(), v.end());
    return v[1] - v[0] > gap;
  };
  for (ad::Index i = 0; i < d.rows(); ++i) {
    if (!ok(std::vector<double>(d.row(i).begin(), d.row(i).end()))) return false;
  }
  for (ad::Index j = 0; j < d.cols(); ++j) {
    if (!ok(std::vector<double>(d.col(j).begin(), d.col(j).end()))) return false;
  }
  return true;
}

Case chamfer_case(Rng& rng) {
  const auto n = static_cast<ad::Index>(std::uniform_int_distribution<int>(2, 6)(rng));
  const auto m = static_cast<ad::Index>(std::uniform_int_distribution<int>(2, 6)(rng));
  Matrix p;
  Matrix q;
  do {
    p = normal(rng, n, 3, 1.0);
    q = normal(rng, m, 3, 1.0);
  } while (!argmin_gaps_ok(p, q, 1e-3));
  Case c;
  c.program = [](Tape&, std::span<const Var> in) { return chamfer(in[0], in[1]); };
  c.inputs = {{"p", p}, {"q", q}};
  return c;
}

Case focal_case(Rng& rng) {
  FocalConfig cfg;
  cfg.gamma = uniform1(rng, 0.0, 3.0);
  cfg.alpha = uniform1(rng, 0.1, 1.0);
  const Matrix logits = normal(rng, 6, 5, 2.0);
  std::vector<ad::Index> targets(6);
  for (auto& t : targets) t = std::uniform_int_distribution<int>(0, 4)(rng);
  Case c;
  c.program = [cfg, targets](Tape&, std::span<const Var> in) { return ad::sum(focal(in[0], targets, cfg)); };
  c.inputs = {{"logits", logits}};
  return c;
}

Case dice_case(Rng& rng) {
  DiceConfig cfg;
  cfg.epsilon = uniform1(rng, 0.1, 2.0);
  const Matrix logits = normal(rng, 4, 6, 2.0);
  Matrix target(4, 6);
  for (ad::Index i = 0; i < target.size(); ++i) target.data()[i] = (rng() & 1) ? 1.0 : 0.0;
  Case c;
  c.program = [cfg, target](Tape&, std::span<const Var> in) { return dice(ad::sigmoid(in[0]), target, cfg); };
  c.inputs = {{"logits", logits}};
  return c;
}

Case uncertainty_case(Rng& rng) {
  Case c;
  for (std::size_t i = 0; i < kTaskCount; ++i) {
    c.inputs.push_back({std::string("L_") + task_names()[i], uniform(rng, 1, 1, 0.1, 10.0)});
  }
  c.inputs.push_back({"s", normal(rng, 1, static_cast<ad::Index>(kTaskCount), 1.0)});
  c.program = [](Tape&, std::span<const Var> in) {
    return combine_uncertainty(in.subspan(0, kTaskCount), in[kTaskCount]);
  };
  return c;
}

CaseFactory lstm_factory(int frames) {
  return [frames](Rng& rng) {
    const ad::Index k = 2, ch = 4, h = 3;
    LstmParameters p;
    std::vector<Matrix> xs;
    Matrix weights;
    for (;;) {
      p.w_ih = uniform(rng, ch, 4 * h, -0.8, 0.8);
      p.w_hh = uniform(rng, h, 4 * h, -0.8, 0.8);
      p.bias = uniform(rng, 1, 4 * h, -0.5, 0.5);
      p.w_proj = uniform(rng, h, ch, -0.8, 0.8);
      p.b_proj = uniform(rng, 1, ch, -0.3, 0.3);
      xs.clear();
      for (int t = 0; t < frames; ++t) xs.push_back(normal(rng, k, ch, 1.0));
      Matrix hs = Matrix::Zero(k, h);
      Matrix cs = Matrix::Zero(k, h);
      for (const Matrix& x : xs) {
        LstmState s = lstm_step(x, hs, cs, p);
        hs = s.h;
        cs = s.c;
      }
      const Matrix pre = (hs * p.w_proj).rowwise() + p.b_proj.row(0);
      if (pre.cwiseAbs().minCoeff() > 1e-3) break;
    }
    weights = normal(rng, k, ch, 1.0);
    Case c;
    for (int t = 0; t < frames; ++t) c.inputs.push_back({"x_" + std::to_string(t), xs[static_cast<std::size_t>(t)]});
    c.inputs.push_back({"w_ih", p.w_ih});
    c.inputs.push_back({"w_hh", p.w_hh});
    c.inputs.push_back({"bias", p.bias});
    c.inputs.push_back({"w_proj", p.w_proj});
    c.inputs.push_back({"b_proj", p.b_proj});
    const auto tf = static_cast<std::size_t>(frames);
    c.program = [tf, weights](Tape& tape, std::span<const Var> in) {
      LstmVars v;
      v.w_ih = in[tf];
      v.w_hh = in[tf + 1];
      v.bias = in[tf + 2];
      v.w_proj = in[tf + 3];
      v.b_proj = in[tf + 4];
      return ad::sum(fuse_frames(in.subspan(0, tf), v) * tape.constant(weights));
    };
    return c;
  };
}

// Tiny but complete model: every loss, uncertainty weights, LSTM fusion and
// the consistency penalty on one generated clip.
Case model_case(Rng& rng) {
  AnchorLayout layout;
  layout.lateral_min = -3.0;
  layout.lateral_max = 3.0;
  layout.count = 5;
  layout.stations = {5.0, 20.0, 40.0, 70.0};
  const AnchorSet anchors = build_default_anchors(layout);
  SceneConfig sc;
  sc.lanes_min = 1;
  sc.lanes_max = 2;
  sc.categories = 2;
  sc.lane_width_min = 2.5;
  sc.lane_width_max = 3.0;
  sc.lateral_min = -2.0;
  sc.lateral_max = 2.0;
  sc.window = 2;
  sc.frames = 3;
  sc.channels = 16;
  sc.noise_sigma = 0.3;
  sc.lateral_scale = 4.0;
  const SceneSequence scene = generate_scene(rng(), sc, anchors);

  ModelConfig mc;
  mc.lstm_hidden = 3;
  ModelParameters params = ModelParameters::init(sc.channels, 4, sc.classes(), mc, rng());
  params.log_variance = normal(rng, 1, static_cast<ad::Index>(kTaskCount), 0.5);

  LossSettings settings;
  settings.escop_weight = uniform1(rng, 0.2, 1.0);
  settings.temporal_consistency = true;
  settings.temporal_consistency_weight = 0.5;
  settings.positive_threshold = sc.positive_threshold;

  Case c;
  for (const auto& [name, m] : params.arrays()) c.inputs.push_back({name, *m});
  const bool hidden = params.heads.hidden_layer;
  c.program = [scene, anchors, settings, hidden](Tape& tape, std::span<const Var> in) {
    ModelVars v;
    std::size_t i = 0;
    v.heads.hidden_layer = hidden;
    if (hidden) {
      v.heads.w_hidden = in[i++];
      v.heads.b_hidden = in[i++];
    }
    for (Var* slot : {&v.heads.w_offset, &v.heads.b_offset, &v.heads.w_visibility, &v.heads.b_visibility,
                      &v.heads.w_class, &v.heads.b_class, &v.lstm.w_ih, &v.lstm.w_hh, &v.lstm.bias, &v.lstm.w_proj,
                      &v.lstm.b_proj, &v.log_variance}) {
      *slot = in[i++];
    }
    return clip_loss(tape, v, scene, 2, 2, anchors, settings).total;
  };
  return c;
}

struct EntrySpec {
  std::string name;
  CaseFactory factory;
  bool model = false;
};

std::vector<EntrySpec> entries() {
  return {{"balanced_l1", balanced_l1_case},
          {"chamfer", chamfer_case},
          {"focal", focal_case},
          {"dice", dice_case},
          {"uncertainty", uncertainty_case},
          {"lstm_t1", lstm_factory(1)},
          {"lstm_t2", lstm_factory(2)},
          {"lstm_t3", lstm_factory(3)},
          {"model_end_to_end", model_case, true}};
}

}  // namespace

std::vector<std::string> gradcheck_entry_names() {
  std::vector<std::string> out;
  for (const auto& e : entries()) out.push_back(e.name);
  return out;
}

SuiteReport run_gradcheck_suite(const SuiteOptions& options) {
  SuiteReport report;
  report.threshold = options.threshold;
  const auto specs = entries();
  for (std::size_t e = 0; e < specs.size(); ++e) {
    const EntrySpec& spec = specs[e];
    SuiteEntry entry;
    entry.name = spec.name;
    entry.cases = spec.model ? options.model_cases : options.cases;
    // The assembled model has many relu units; a smaller step keeps
    // perturbations from straddling their kinks.
    const double step = spec.model ? options.step * 0.1 : options.step;
    for (int k = 0; k < entry.cases; ++k) {
      Rng rng(mix_seed(options.seed, (static_cast<std::uint64_t>(e) << 32) + static_cast<std::uint64_t>(k)));
      const Case c = spec.factory(rng);
      ad::GradCheckReport r;
      if (options.corrupt == spec.name) {
        std::vector<Matrix> values;
        for (const auto& in : c.inputs) values.push_back(in.value);
        ad::Evaluation ev = ad::evaluate_with_gradients(c.program, std::span<const Matrix>(values));
        for (Matrix& g : ev.gradients) g = (g * 1.01).array() + 1e-2;
        r = ad::compare_gradients(c.program, c.inputs, ev.gradients, step);
      } else {
        r = ad::finite_difference_check(c.program, c.inputs, step);
      }
      if (k == 0 || r.max_relative_error > entry.max_relative_error) {
        entry.max_relative_error = r.max_relative_error;
        entry.worst_parameter = r.worst_parameter;
        entry.worst_case = k;
      }
    }
    entry.passed = entry.max_relative_error < options.threshold;
    report.passed = report.passed && entry.passed;
    if (report.entries.empty() || entry.max_relative_error > report.worst_error) {
      report.worst_error = entry.max_relative_error;
      report.worst_entry = entry.name;
    }
    report.entries.push_back(entry);
  }
  return report;
}

std::string format_report(const SuiteReport& report) {
  std::string out;
  char line[256];
  for (const SuiteEntry& e : report.entries) {
    std::snprintf(line, sizeof line, "%-18s cases=%-4d max_rel_err=%.3e worst_input=%s (case %d)  %s\n",
                  e.name.c_str(), e.cases, e.max_relative_error, e.worst_parameter.c_str(), e.worst_case,
                  e.passed ? "PASS" : "FAIL");
    out += line;
  }
  for (const SuiteEntry& e : report.entries) {
    if (!e.passed) out += "failing operation: " + e.name + "\n";
  }
  std::snprintf(line, sizeof line, "worst offender: %s max_rel_err=%.3e (threshold %.1e)\n", report.worst_entry.c_str(),
                report.worst_error, report.threshold);
  out += line;
  out += report.passed ? "gradcheck: PASS\n" : "gradcheck: FAIL\n";
  return out;
}

}  // namespace tlane
