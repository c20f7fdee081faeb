// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <random>

#include "mor/drrnn.hpp"

using namespace mor;

namespace {

std::shared_ptr<FomSystem> scalar_decay() {
  auto sys = std::make_shared<FomSystem>();
  sys->n = 1;
  sys->linear_op = Mat::Constant(1, 1, -1.0);
  return sys;
}

std::shared_ptr<FomSystem> zero_dynamics(int n) {
  auto sys = std::make_shared<FomSystem>();
  sys->n = n;
  sys->linear_op = Mat::Zero(n, n);
  return sys;
}

DrRnnModel make_model(int K, std::shared_ptr<FomSystem> sys, double dt) {
  DrRnnModel m;
  m.layers = K;
  m.n = sys->n;
  m.transform = Mat::Identity(sys->n, sys->n);
  m.gain = Vec::Zero(sys->n);
  m.eta = Vec::Constant(std::max(0, K - 1), 0.1);
  m.system = std::move(sys);
  m.dt = dt;
  return m;
}

}  // namespace

TEST_CASE("drrnn_layer_update: zero residual leaves the candidate unchanged") {
  DrRnnModel m = make_model(1, zero_dynamics(2), 0.1);
  m.gain = Vec::Constant(2, 0.7);
  Vec y = Vec::Random(2);
  auto [y_next, G] = drrnn_layer_update(m, y, y, 1, 0.0);
  CHECK((y_next - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("drrnn_layer_update: deep-layer step scale arithmetic") {
  // residual 2 -> |r|^2 = 4, G = 0.1*4 + 0.9*0 = 0.4, scale = 0.2/sqrt(0.4+eps)
  DrRnnModel m = make_model(2, zero_dynamics(1), 0.1);
  m.eta(0) = 0.2;
  Vec y_prev = Vec::Zero(1);
  Vec y_cand = Vec::Constant(1, 2.0);  // r = y_cand - y_prev = 2
  auto [y_next, G] = drrnn_layer_update(m, y_cand, y_prev, 2, 0.0);
  CHECK(G == doctest::Approx(0.4).epsilon(1e-14));
  const double scale = 0.2 / std::sqrt(0.4 + 1e-8);
  CHECK(scale == doctest::Approx(0.316228).epsilon(1e-5));
  CHECK(y_next(0) == doctest::Approx(2.0 - scale * 2.0).epsilon(1e-12));
}

TEST_CASE("drrnn_layer_update: hand-rolled two-layer scalar update") {
  DrRnnModel m = make_model(2, scalar_decay(), 0.1);
  m.gain = Vec::Constant(1, 0.3);
  m.eta(0) = 0.25;
  const double y0 = 1.0;
  // layer 1: candidate = y0, r = -dt*(-y0)... r = c - y0 - dt*(-c)
  double c = y0;
  double r = c - y0 + 0.1 * c;
  double y1 = c - 0.3 * std::tanh(r);
  double G1 = 0.1 * r * r;
  // layer 2 from candidate y1; G carries the decayed layer-1 contribution
  double r2 = y1 - y0 + 0.1 * y1;
  double G2 = 0.1 * r2 * r2 + 0.9 * G1;
  double y2 = y1 - 0.25 / std::sqrt(G2 + 1e-8) * r2;
  Vec out = drrnn_forward_step(m, Vec::Constant(1, y0));
  CHECK(out(0) == doctest::Approx(y2).epsilon(1e-14));
}

TEST_CASE("drrnn_forward_step: fixed point of the dynamics is preserved") {
  auto sys = zero_dynamics(3);
  sys->forcing = Vec::Zero(3);
  DrRnnModel m = make_model(1, sys, 0.1);
  m.gain = Vec::Constant(3, 1.3);
  Vec y = Vec::Random(3);  // any state is a fixed point of dy/dt = 0
  CHECK((drrnn_forward_step(m, y) - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("drrnn_forward_step: many untrained layers approach the implicit step") {
  // The deep-layer recursion settles into a limit cycle of amplitude ~eta/2
  // around the residual root, so a small uniform eta is needed for a tight
  // approach to the exact implicit solution.
  DrRnnModel m = make_model(64, scalar_decay(), 0.1);
  m.eta = Vec::Constant(63, 0.01);
  Vec y = drrnn_forward_step(m, Vec::Constant(1, 1.0));
  auto [exact, stats] =
      newton_step_solve(*m.system, Vec::Constant(1, 1.0), 0.1, NewtonConfig{});
  CHECK(std::abs(y(0) - exact(0)) < 1e-6);
  CHECK(exact(0) == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
}

TEST_CASE("drrnn_forward_step: deterministic") {
  std::mt19937_64 rng(9);
  TrainingConfig cfg;
  DrRnnModel m = initialize_model(3, scalar_decay(), 0.1, cfg, rng);
  Vec y = Vec::Constant(1, 0.8);
  Vec a = drrnn_forward_step(m, y);
  Vec b = drrnn_forward_step(m, y);
  CHECK(a(0) == b(0));  // bitwise
}

TEST_CASE("drrnn_rollout: zero steps returns only the initial state") {
  DrRnnModel m = make_model(2, scalar_decay(), 0.1);
  Trajectory t = drrnn_rollout(m, Vec::Constant(1, 2.0), 0);
  CHECK(t.columns() == 1);
  CHECK(t.states(0, 0) == 2.0);
}

TEST_CASE("count_parameters: identity-transform layer counts") {
  auto sys = zero_dynamics(3);
  CHECK(count_parameters(make_model(1, sys, 0.1)) == 3);
  CHECK(count_parameters(make_model(2, sys, 0.1)) == 4);
  CHECK(count_parameters(make_model(4, sys, 0.1)) == 6);
}

TEST_CASE("count_parameters: a trainable transform adds n^2") {
  DrRnnModel m = make_model(1, zero_dynamics(3), 0.1);
  m.trainable_transform = true;
  CHECK(count_parameters(m) == 12);
}

TEST_CASE("mse_loss: perfect prediction") {
  std::vector<Mat> target{Mat::Random(2, 5)};
  CHECK(mse_loss(target, target) == 0.0);
}

TEST_CASE("mse_loss: single scalar error") {
  Mat t(1, 2), p(1, 2);
  t << 1.0, 1.0;
  p << 1.0, 1.5;  // initial column ignored, error 0.5 at t=1
  CHECK(mse_loss({p}, {t}) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("mse_loss: averages per-sample sums") {
  Mat t1(1, 3), p1(1, 3), t2(1, 3), p2(1, 3);
  t1 << 0, 0, 0;
  p1 << 0, 0.4, 0.2;  // 0.16 + 0.04 = 0.2
  t2 << 0, 0, 0;
  p2 << 0, 0.6, 0.2;  // 0.36 + 0.04 = 0.4
  CHECK(mse_loss({p1, p2}, {t1, t2}) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("bptt_gradients: zero-length sequences give zero gradients") {
  DrRnnModel m = make_model(2, scalar_decay(), 0.1);
  m.gain = Vec::Constant(1, 0.2);
  std::vector<Mat> batch{Mat::Constant(1, 1, 0.5)};  // initial state only
  DrRnnGradients g = bptt_gradients(m, batch);
  CHECK(g.gain.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.eta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bptt_gradients: scalar one-step chain rule in closed form") {
  DrRnnModel m = make_model(1, scalar_decay(), 0.1);
  const double w = 0.3, y0 = 0.9, target = 0.7;
  m.gain = Vec::Constant(1, w);
  Mat seq(1, 2);
  seq << y0, target;
  // forward: r = c - y0 + dt*c with candidate c = y0 -> r = dt*y0
  double r = 0.1 * y0;
  double y1 = y0 - w * std::tanh(r);
  double dLdw = 2.0 * (y1 - target) * (-std::tanh(r));
  DrRnnGradients g = bptt_gradients(m, {seq});
  CHECK(g.gain(0) == doctest::Approx(dLdw).epsilon(1e-12));
}

TEST_CASE("bptt_gradients: central finite differences over randomized models") {
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uniform_int_distribution<int> nd(1, 3), Kd(1, 4), Td(1, 5);
  double worst = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    int n = nd(rng), K = Kd(rng), T = Td(rng);
    bool train_u = inst % 2;
    auto sys = std::make_shared<FomSystem>();
    sys->n = n;
    sys->linear_op = Mat::NullaryExpr(n, n, [&] { return 0.3 * u(rng); });
    sys->nonlinear_fn = [](const Vec& y) { return Vec(0.2 * y.array().square()); };
    sys->nonlinear_jacobian = [](const Vec& y) {
      return Mat((0.4 * y.array()).matrix().asDiagonal());
    };
    sys->forcing = Vec::NullaryExpr(n, [&] { return 0.2 * u(rng); });

    DrRnnModel m;
    m.layers = K;
    m.n = n;
    m.trainable_transform = train_u;
    m.transform = Mat::NullaryExpr(n, n, [&] { return 0.3 * u(rng); });
    m.gain = Vec::NullaryExpr(n, [&] { return 0.3 * u(rng); });
    m.eta = Vec::NullaryExpr(K - 1, [&] { return 0.1 + 0.1 * std::abs(u(rng)); });
    m.system = sys;
    m.dt = 0.08;

    std::vector<Mat> batch;
    for (int l = 0; l < 2; ++l)
      batch.push_back(Mat::NullaryExpr(n, T + 1, [&] { return 0.7 * u(rng); }));

    DrRnnGradients g = bptt_gradients(m, batch);
    auto loss = [&](DrRnnModel& mm) {
      std::vector<Mat> pred;
      for (auto& s : batch) pred.push_back(drrnn_rollout(mm, s.col(0), T).states);
      return mse_loss(pred, batch);
    };
    auto fd = [&](double* p) {
      double bak = *p;
      double h = 1e-6 * std::max(1.0, std::abs(bak));
      *p = bak + h;
      double lp = loss(m);
      *p = bak - h;
      double lm = loss(m);
      *p = bak;
      return (lp - lm) / (2 * h);
    };
    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({1e-8, std::abs(b), 1.0});
    };
    for (int i = 0; i < n; ++i) worst = std::max(worst, rel(g.gain(i), fd(&m.gain(i))));
    for (int k = 0; k < K - 1; ++k) worst = std::max(worst, rel(g.eta(k), fd(&m.eta(k))));
    if (train_u)
      for (int i = 0; i < n * n; ++i)
        worst = std::max(worst,
                         rel(g.transform(i / n, i % n), fd(&m.transform(i / n, i % n))));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("rmsprop_update: zero gradient keeps the parameters") {
  Vec params = Vec::Random(4);
  Vec before = params;
  RmspropState state;
  state.accum = Vec::Zero(4);
  rmsprop_update(params, Vec::Zero(4), state);
  CHECK((params - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rmsprop_update: single-step arithmetic") {
  Vec params = Vec::Constant(1, 1.0);
  RmspropState state;
  state.accum = Vec::Zero(1);
  state.learning_rate = 0.001;
  state.decay = 0.9;
  rmsprop_update(params, Vec::Constant(1, 1.0), state);
  CHECK(state.accum(0) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(params(0) == doctest::Approx(1.0 - 0.001 / std::sqrt(0.1 + 1e-8)).epsilon(1e-12));
  CHECK(params(0) == doctest::Approx(0.9968377).epsilon(1e-6));
}

TEST_CASE("rmsprop_update: repeated gradients converge to the normalized step") {
  Vec params = Vec::Constant(1, 5.0);
  RmspropState state;
  state.accum = Vec::Zero(1);
  state.learning_rate = 0.001;
  const double g = 0.37;
  double last = params(0);
  double step = 0.0;
  for (int it = 0; it < 1000; ++it) {
    rmsprop_update(params, Vec::Constant(1, g), state);
    step = last - params(0);
    last = params(0);
  }
  const double limit = 0.001 * g / std::sqrt(g * g + 1e-8);
  CHECK(std::abs(step - limit) < 1e-9);
}

TEST_CASE("train: zero iterations returns the initialized model") {
  std::mt19937_64 rng(4);
  TrainingConfig cfg;
  cfg.iterations = 0;
  DrRnnModel m = initialize_model(2, scalar_decay(), 0.1, cfg, rng);
  Vec gain0 = m.gain;
  Vec eta0 = m.eta;
  Dataset d;
  d.dt = 0.1;
  d.sequences.push_back(Mat::Random(1, 11));
  train(m, d, cfg);
  CHECK((m.gain - gain0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.eta - eta0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train: loss history is finite at every epoch") {
  std::mt19937_64 rng(42);
  TrainingConfig cfg;
  cfg.seed = 42;
  cfg.iterations = 5;
  cfg.batch_size = 4;
  auto sys = scalar_decay();
  DrRnnModel m = initialize_model(2, sys, 0.1, cfg, rng);
  Dataset d;
  d.dt = 0.1;
  std::mt19937_64 data_rng(1);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (int l = 0; l < 12; ++l) {
    Trajectory t = integrate_implicit_euler(*sys, Vec::Constant(1, u(data_rng)),
                                            TimeGrid(0.1, 10), NewtonConfig{});
    d.sequences.push_back(t.states);
  }
  LossHistory h = train(m, d, cfg);
  REQUIRE(h.train_mse.size() == 5);
  for (double v : h.train_mse) CHECK(std::isfinite(v));
}

TEST_CASE("rnn_forward_step: zero weights give zero hidden state and output") {
  StandardRnnModel m;
  m.transition = Mat::Zero(3, 3);
  m.input = Mat::Zero(2, 3);
  m.output = Mat::Zero(3, 1);
  auto [h, y] = rnn_forward_step(m, Vec::Random(3), Vec::Random(1));
  CHECK(h.cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rnn_forward_step: scalar hand computation") {
  StandardRnnModel m;
  m.transition = Mat::Constant(1, 1, 0.5);
  m.input = Mat(2, 1);
  m.input << 0.3, 0.1;  // weight and bias rows
  m.output = Mat::Constant(1, 1, 2.0);
  const double h0 = 0.4, a = 0.7;
  double h1 = std::tanh(0.5 * h0 + 0.3 * a + 0.1);
  auto [h, y] = rnn_forward_step(m, Vec::Constant(1, h0), Vec::Constant(1, a));
  CHECK(h(0) == doctest::Approx(h1).epsilon(1e-14));
  CHECK(y(0) == doctest::Approx(2.0 * h1).epsilon(1e-14));
}

TEST_CASE("initialize_model: fixed seed reproduces the draws") {
  TrainingConfig cfg;
  std::mt19937_64 a(77), b(77);
  DrRnnModel ma = initialize_model(4, scalar_decay(), 0.1, cfg, a);
  DrRnnModel mb = initialize_model(4, scalar_decay(), 0.1, cfg, b);
  CHECK((ma.gain - mb.gain).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ma.eta - mb.eta).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("initialize_model: gain draws have the configured spread") {
  TrainingConfig cfg;
  std::mt19937_64 rng(2024);
  auto sys = zero_dynamics(1);
  double sum = 0.0, sum2 = 0.0;
  const int N = 100000;
  for (int i = 0; i < N; ++i) {
    DrRnnModel m = initialize_model(1, sys, 0.1, cfg, rng);
    sum += m.gain(0);
    sum2 += m.gain(0) * m.gain(0);
  }
  double mean = sum / N;
  double std_dev = std::sqrt(sum2 / N - mean * mean);
  CHECK(std::abs(std_dev - 0.1) < 0.002);
}

TEST_CASE("initialize_model: step-size draws stay inside their support") {
  TrainingConfig cfg;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    DrRnnModel m = initialize_model(4, scalar_decay(), 0.1, cfg, rng);
    for (int k = 0; k < 3; ++k) {
      CHECK(m.eta(k) >= 0.1);
      CHECK(m.eta(k) <= 0.4);
    }
  }
}

TEST_CASE("initialize_model: trainable transform draws inside [0.1, 0.5]") {
  TrainingConfig cfg;
  cfg.trainable_transform = true;
  std::mt19937_64 rng(6);
  DrRnnModel m = initialize_model(2, zero_dynamics(3), 0.1, cfg, rng);
  CHECK(m.trainable_transform);
  CHECK(m.transform.minCoeff() >= 0.1);
  CHECK(m.transform.maxCoeff() <= 0.5);
}
