#include "oracle.hpp"

#include "tlane/errors.hpp"
#include "tlane/gradcheck.hpp"
#include "tlane/losses.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>

using namespace tlane;
using ad::Matrix;
using ad::Program;
using ad::Tape;
using ad::Var;

namespace {

// Direct substitution, independent of the library's branch helpers.
double bl1_reference(double d) {
  const double alpha = 0.5, beta = 1.0, gamma = 1.5;
  const double b = std::exp(3.0) - 1.0;
  if (d < beta) return alpha / b * (b * d + 1.0) * std::log(b * d / beta + 1.0) - alpha * d;
  return gamma * d + gamma / b - alpha * beta;
}

double chamfer_reference(const PointSet& p, const PointSet& q) {
  auto one_way = [](const PointSet& a, const PointSet& b) {
    double total = 0.0;
    for (const auto& x : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : b) {
        double d = 0.0;
        for (int i = 0; i < 3; ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
        best = std::min(best, d);
      }
      total += best;
    }
    return total / static_cast<double>(a.size());
  };
  return one_way(p, q) + one_way(q, p);
}

Lane3D straight(double x, std::vector<double> stations) {
  Lane3D l;
  l.stations = stations;
  l.x.assign(stations.size(), x);
  l.z.assign(stations.size(), 0.0);
  l.visibility.assign(stations.size(), 1.0);
  return l;
}

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("balanced L1 derived b") {
  BalancedL1Config cfg;
  CHECK(cfg.b() == doctest::Approx(std::exp(3.0) - 1.0).epsilon(1e-14));
  CHECK(cfg.alpha() * std::log(cfg.b() + 1.0) == doctest::Approx(cfg.gamma()).epsilon(1e-14));
}

TEST_CASE("balanced L1 values") {
  BalancedL1Config cfg;
  CHECK(balanced_l1(0.0, cfg) == 0.0);
  CHECK(balanced_l1(1.0, cfg) == doctest::Approx(1.07860).epsilon(1e-5));
  CHECK(balanced_l1(2.0, cfg) == doctest::Approx(2.57860).epsilon(1e-5));
  for (double d : {0.0, 0.01, 0.3, 0.99, 1.0, 1.7, 5.0}) {
    CHECK(balanced_l1(d, cfg) == doctest::Approx(bl1_reference(d)).epsilon(1e-13));
  }
  CHECK_THROWS_AS(balanced_l1(-0.1, cfg), ValidationError);
}

TEST_CASE("balanced L1 is non-negative and monotone") {
  BalancedL1Config cfg;
  double prev = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double v = balanced_l1(i * 1e-3, cfg);
    CHECK(v >= 0.0);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("balanced L1 vector") {
  BalancedL1Config cfg;
  std::vector<double> p{0.0, 1.0}, t{0.0, 0.0}, m{1.0, 1.0};
  CHECK(balanced_l1_vector(p, p, m, cfg) == 0.0);
  CHECK(balanced_l1_vector(p, t, m, cfg) == doctest::Approx(0.53930).epsilon(1e-5));
  std::vector<double> one_p{1.0}, one_t{0.0}, one_m{1.0};
  CHECK(balanced_l1_vector(one_p, one_t, one_m, cfg) == doctest::Approx(1.07860).epsilon(1e-5));
  std::vector<double> zero_m{0.0, 0.0};
  CHECK_THROWS_AS(balanced_l1_vector(p, t, zero_m, cfg), ValidationError);

  Tape tape;
  Var vp = tape.leaf(row({0.0, 1.0, 3.0}));
  Var vt = tape.constant(row({0.0, 0.0, 0.0}));
  Var v = balanced_l1_vector(vp, vt, row({1.0, 1.0, 0.0}), cfg);
  CHECK(v.scalar() == doctest::Approx(0.5 * bl1_reference(1.0)).epsilon(1e-13));
}

TEST_CASE("balanced L1 gradient away from the branch point") {
  BalancedL1Config cfg;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double d = u(rng);
    if (std::abs(d - 1.0) < 1e-3) continue;
    const double h = 1e-6;
    const double numeric = (bl1_reference(d + h) - bl1_reference(d - h)) / (2 * h);
    CHECK(balanced_l1_derivative(d, cfg) == doctest::Approx(numeric).epsilon(1e-7));
  }
}

TEST_CASE("chamfer examples") {
  CHECK(chamfer({{0, 0, 0}}, {{3, 4, 0}}) == 50.0);
  CHECK(chamfer({{0, 0, 0}, {1, 0, 0}}, {{0, 0, 0}}) == 0.5);
  PointSet p{{1, 2, 3}, {4, 5, 6}};
  CHECK(chamfer(p, p) == 0.0);
  CHECK_THROWS_AS(chamfer(PointSet{}, p), ValidationError);
}

TEST_CASE("chamfer matches brute force") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    PointSet p(1 + trial % 5), q(1 + trial % 7);
    for (auto& x : p) x = {u(rng), u(rng), u(rng)};
    for (auto& x : q) x = {u(rng), u(rng), u(rng)};
    CHECK(chamfer(p, q) == doctest::Approx(chamfer_reference(p, q)).epsilon(1e-13));
  }
}

TEST_CASE("chamfer gradients") {
  std::mt19937_64 rng(23);
  Program f = [](Tape&, std::span<const Var> in) { return chamfer(in[0], in[1]); };
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Matrix> x{oracle::random_matrix(rng, 4, 3, -3, 3), oracle::random_matrix(rng, 5, 3, -3, 3)};
    auto e = ad::evaluate_with_gradients(f, x);
    worst = std::max(worst, oracle::worst_relative(e.gradients, oracle::central_differences(f, x)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("chamfer on lanes") {
  std::vector<double> st{5, 10, 15, 20};
  auto gt = straight(1.0, st);
  CHECK(chamfer_curve(gt, gt) == 0.0);
  CHECK(chamfer_curve(straight(1.1, st), gt) == doctest::Approx(0.02).epsilon(1e-12));
  auto hidden = gt;
  hidden.visibility.assign(st.size(), 0.0);
  CHECK_THROWS_AS(chamfer_curve(gt, hidden), ValidationError);
}

TEST_CASE("chamfer on lanes ignores invisible ground truth") {
  std::vector<double> st{5, 10, 15, 20};
  auto gt = straight(0.0, st);
  gt.visibility = {1.0, 1.0, 0.2, 0.0};
  gt.x[3] = 50.0;
  auto pred = straight(0.0, st);
  CHECK(visible_points(gt).size() == 2);
  CHECK(chamfer_curve(pred, gt) == 0.0);
}

TEST_CASE("focal examples") {
  std::vector<double> even{0.3, 0.3};
  CHECK(focal(even, 1, FocalConfig{0.0, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  std::vector<double> sure{60.0, 0.0};
  CHECK(focal(sure, 0, FocalConfig{}) == doctest::Approx(0.0));
  // p_t = 0.9 with two classes
  std::vector<double> l{std::log(9.0), 0.0};
  CHECK(focal(l, 0, FocalConfig{}) == doctest::Approx(0.25 * 0.01 * -std::log(0.9)).epsilon(1e-12));
  CHECK(focal(l, 0, FocalConfig{}) == doctest::Approx(2.634e-4).epsilon(1e-3));
  std::vector<double> one{1.0};
  CHECK_THROWS_AS(focal(one, 0, FocalConfig{}), ValidationError);
  CHECK_THROWS_AS(focal(l, 2, FocalConfig{}), ValidationError);
}

TEST_CASE("focal tape form agrees with the scalar form") {
  std::mt19937_64 rng(24);
  Matrix logits = oracle::random_matrix(rng, 4, 5, -3, 3);
  std::vector<ad::Index> targets{0, 4, 2, 1};
  Tape tape;
  Var v = focal(tape.constant(logits), targets, FocalConfig{});
  for (int i = 0; i < 4; ++i) {
    std::vector<double> r(logits.row(i).data(), logits.row(i).data() + 5);
    CHECK(v.value()(i, 0) == doctest::Approx(focal(r, static_cast<int>(targets[i]), FocalConfig{})).epsilon(1e-13));
  }

  Program f = [&](Tape&, std::span<const Var> in) { return sum(focal(in[0], targets, FocalConfig{})); };
  std::vector<Matrix> x{logits};
  auto e = ad::evaluate_with_gradients(f, x);
  CHECK(oracle::worst_relative(e.gradients, oracle::central_differences(f, x)) < 1e-7);
}

TEST_CASE("dice examples") {
  DiceConfig cfg;
  std::vector<double> a{1, 0}, z{0, 0}, ones{1, 1};
  CHECK(dice(a, a, cfg) == 0.0);
  CHECK(dice(z, z, cfg) == 0.0);
  CHECK(dice(ones, a, cfg) == 0.25);
  std::vector<double> three{1, 0, 1};
  CHECK_THROWS_AS(dice(three, a, cfg), ValidationError);
}

TEST_CASE("dice range and gradient") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix g(1, 6);
  g << 1, 0, 1, 1, 0, 0;
  Program f = [&](Tape&, std::span<const Var> in) { return dice(in[0], g, DiceConfig{}); };
  for (int trial = 0; trial < 50; ++trial) {
    Matrix p = oracle::random_matrix(rng, 1, 6, 0.0, 1.0);
    std::vector<Matrix> x{p};
    const double v = ad::evaluate(f, x);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    auto e = ad::evaluate_with_gradients(f, x);
    CHECK(oracle::worst_relative(e.gradients, oracle::central_differences(f, x)) < 1e-8);
  }
}

TEST_CASE("uncertainty combination") {
  auto state = UncertaintyState::initial();
  CHECK(state.log_variance == std::vector<double>(4, 0.0));
  std::map<std::string, double> losses;
  for (const auto& n : task_names()) losses[n] = 1.5;
  CHECK(combine_uncertainty(losses, state) == doctest::Approx(6.0));

  UncertaintyState two{{"a", "b"}, {std::log(2.0), std::log(8.0)}};
  std::map<std::string, double> l2{{"a", 2.0}, {"b", 8.0}};
  CHECK(combine_uncertainty(l2, two) == doctest::Approx(2.0 + std::log(16.0)).epsilon(1e-14));
  auto g = combine_uncertainty_grad_s(l2, two);
  CHECK(std::abs(g[0]) < 1e-15);
  CHECK(std::abs(g[1]) < 1e-15);

  UncertaintyState zero{{"a"}, {0.0}};
  CHECK(combine_uncertainty_grad_s({{"a", 2.0}}, zero)[0] == -1.0);
  CHECK_THROWS_AS(combine_uncertainty({{"b", 2.0}}, zero), ValidationError);
}

TEST_CASE("uncertainty tape form") {
  Program f = [](Tape& t, std::span<const Var> in) {
    std::vector<Var> l{square(slice_cols(in[0], 0, 1)), slice_cols(in[0], 1, 1) + 3.0};
    (void)t;
    return combine_uncertainty(l, in[1]);
  };
  std::vector<Matrix> x{row({1.3, 0.4}), row({0.2, -0.7})};
  auto e = ad::evaluate_with_gradients(f, x);
  CHECK(e.output == doctest::Approx(std::exp(-0.2) * 1.69 + 0.2 + std::exp(0.7) * 3.4 - 0.7).epsilon(1e-14));
  CHECK(oracle::worst_relative(e.gradients, oracle::central_differences(f, x)) < 1e-8);
}

TEST_CASE("losses are pure") {
  PointSet p{{0, 1, 2}, {1, 1, 1}}, q{{2, 2, 2}};
  CHECK(chamfer(p, q) == chamfer(p, q));
  std::vector<double> l{0.2, -0.4, 1.0};
  CHECK(focal(l, 2, FocalConfig{}) == focal(l, 2, FocalConfig{}));
}

TEST_CASE("loss config validation") {
  CHECK_THROWS_AS(BalancedL1Config(0.0, 1.0, 1.5), ValidationError);
  LossConfig cfg;
  cfg.dice.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
