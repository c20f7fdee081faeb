// SPDX-License-Identifier: Apache-2.0
#include "mor/drrnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mor {

namespace {

void check_model(const DrRnnModel& model) {
  if (!model.system) throw ContractError("DrRnnModel: no residual binding");
  if (model.layers < 1) throw ContractError("DrRnnModel: layers must be >= 1");
  if (model.eta.size() != model.layers - 1)
    throw ContractError("DrRnnModel: eta length must be layers-1");
  if (model.dt <= 0.0) throw ContractError("DrRnnModel: dt must be positive");
  if (model.eps <= 0.0) throw ContractError("DrRnnModel: eps must be positive");
}

// intermediates of one forward time step, kept for the backward pass
struct StepTape {
  std::vector<Vec> y;  // y^(0)..y^(K)
  std::vector<Vec> r;  // r^(1)..r^(K)
  std::vector<double> G;
};

StepTape forward_step_tape(const DrRnnModel& model, const Vec& y_t) {
  StepTape tape;
  tape.y.reserve(model.layers + 1);
  tape.y.push_back(y_t);
  double G = 0.0;
  for (int k = 1; k <= model.layers; ++k) {
    Vec r = assemble_residual(*model.system, tape.y.back(), y_t, model.dt);
    G = model.gamma * r.squaredNorm() + model.zeta * G;
    Vec y_next;
    if (k == 1) {
      Vec z = model.transform * r;
      y_next = tape.y.back() - model.gain.cwiseProduct(z.array().tanh().matrix());
    } else {
      double step = model.eta(k - 2) / std::sqrt(G + model.eps);
      y_next = tape.y.back() - step * r;
    }
    tape.r.push_back(std::move(r));
    tape.G.push_back(G);
    tape.y.push_back(std::move(y_next));
  }
  return tape;
}

// Backward through one time step. g_out is dL/dy^(K); returns dL/dy_t
// (the candidate chain plus the explicit y_prev term in every residual).
Vec backward_step(const DrRnnModel& model, const StepTape& tape, const Vec& g_out,
                  DrRnnGradients& grads) {
  const Mat& A = model.system->linear_op;
  const auto& JF = model.system->nonlinear_jacobian;
  const double dt = model.dt;
  const Eigen::Index n = model.n;

  Vec gbar = g_out;               // adjoint of y^(k) while walking down
  Vec yprev_bar = Vec::Zero(n);
  double G_adj = 0.0;             // adjoint of G_k at the layer being processed

  for (int k = model.layers; k >= 1; --k) {
    const Vec& r = tape.r[k - 1];
    const double G = tape.G[k - 1];
    G_adj *= model.zeta;  // G_{k} feeds G_{k+1}
    Vec rbar;
    if (k >= 2) {
      double inv_sq = 1.0 / std::sqrt(G + model.eps);
      double step = model.eta(k - 2) * inv_sq;
      grads.eta(k - 2) += -gbar.dot(r) * inv_sq;
      G_adj += gbar.dot(r) * model.eta(k - 2) * 0.5 * std::pow(G + model.eps, -1.5);
      rbar = -step * gbar + 2.0 * model.gamma * G_adj * r;
    } else {
      Vec z = model.transform * r;
      Vec h = z.array().tanh();
      grads.gain += -gbar.cwiseProduct(h);
      Vec q = -gbar.cwiseProduct(model.gain)
                   .cwiseProduct((1.0 - h.array().square()).matrix());
      if (model.trainable_transform) grads.transform += q * r.transpose();
      rbar = model.transform.transpose() * q + 2.0 * model.gamma * G_adj * r;
    }
    // r_k = y^(k-1) - y_t - dt (A y^(k-1) + F(y^(k-1)) + b)
    Mat Jr = Mat::Identity(n, n) - dt * A;
    if (JF) Jr -= dt * JF(tape.y[k - 1]);
    gbar = gbar + Jr.transpose() * rbar;  // identity path + residual path
    yprev_bar -= rbar;
  }
  return gbar + yprev_bar;
}

double sequence_sse(const Mat& pred, const Mat& target) {
  return (pred.rightCols(pred.cols() - 1) - target.rightCols(target.cols() - 1))
      .squaredNorm();
}

}  // namespace

std::pair<Vec, double> drrnn_layer_update(const DrRnnModel& model, const Vec& y_candidate,
                                          const Vec& y_prev, int k, double G_prev) {
  check_model(model);
  if (k < 1 || k > model.layers) throw ContractError("drrnn_layer_update: bad layer index");
  if (G_prev < 0.0) throw ContractError("drrnn_layer_update: G_prev must be >= 0");
  Vec r = assemble_residual(*model.system, y_candidate, y_prev, model.dt);
  double G = model.gamma * r.squaredNorm() + model.zeta * G_prev;
  if (k == 1) {
    Vec z = model.transform * r;
    return {y_candidate - model.gain.cwiseProduct(z.array().tanh().matrix()), G};
  }
  double step = model.eta(k - 2) / std::sqrt(G + model.eps);
  return {y_candidate - step * r, G};
}

Vec drrnn_forward_step(const DrRnnModel& model, const Vec& y_t) {
  check_model(model);
  return forward_step_tape(model, y_t).y.back();
}

Trajectory drrnn_rollout(const DrRnnModel& model, const Vec& y0, int steps) {
  check_model(model);
  if (steps < 0) throw ContractError("drrnn_rollout: steps must be >= 0");
  Trajectory traj;
  traj.grid = TimeGrid(model.dt, steps);
  traj.states.resize(model.n, steps + 1);
  traj.states.col(0) = y0;
  for (int t = 0; t < steps; ++t) {
    Vec y = drrnn_forward_step(model, traj.states.col(t));
    if (!y.allFinite()) {
      std::ostringstream os;
      os << "drrnn_rollout: non-finite state at step " << t + 1;
      throw NumericalError(os.str());
    }
    traj.states.col(t + 1) = y;
  }
  return traj;
}

int count_parameters(const DrRnnModel& model) {
  int d = static_cast<int>(model.n) + (model.layers - 1);
  if (model.trainable_transform) d += static_cast<int>(model.n * model.n);
  return d;
}

double mse_loss(const std::vector<Mat>& pred, const std::vector<Mat>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw ContractError("mse_loss: shape mismatch");
  double total = 0.0;
  for (std::size_t l = 0; l < pred.size(); ++l) {
    if (pred[l].rows() != target[l].rows() || pred[l].cols() != target[l].cols())
      throw ContractError("mse_loss: shape mismatch");
    total += sequence_sse(pred[l], target[l]);
  }
  return total / static_cast<double>(pred.size());
}

namespace {

void accumulate_sequence_gradient(const DrRnnModel& model, const Mat& target,
                                  double weight, DrRnnGradients& grads) {
  const int T = static_cast<int>(target.cols()) - 1;
  std::vector<StepTape> tapes;
  tapes.reserve(T);
  Vec y = target.col(0);
  std::vector<Vec> preds(T);
  for (int t = 0; t < T; ++t) {
    tapes.push_back(forward_step_tape(model, y));
    y = tapes.back().y.back();
    if (!y.allFinite()) {
      std::ostringstream os;
      os << "bptt_gradients: non-finite rollout state at step " << t + 1;
      throw NumericalError(os.str());
    }
    preds[t] = y;
  }
  Vec adj = Vec::Zero(model.n);
  for (int t = T - 1; t >= 0; --t) {
    Vec g = weight * (preds[t] - target.col(t + 1)) + adj;
    adj = backward_step(model, tapes[t], g, grads);
  }
}

DrRnnGradients zero_gradients(const DrRnnModel& model) {
  DrRnnGradients grads;
  grads.gain = Vec::Zero(model.n);
  grads.eta = Vec::Zero(model.layers - 1);
  if (model.trainable_transform) grads.transform = Mat::Zero(model.n, model.n);
  return grads;
}

}  // namespace

DrRnnGradients bptt_gradients(const DrRnnModel& model, const std::vector<Mat>& batch) {
  check_model(model);
  if (batch.empty()) throw ContractError("bptt_gradients: empty batch");
  DrRnnGradients grads = zero_gradients(model);
  const double weight = 2.0 / static_cast<double>(batch.size());
  for (const Mat& target : batch)
    accumulate_sequence_gradient(model, target, weight, grads);
  return grads;
}

DrRnnGradients bptt_gradients(const DrRnnModel& model, const Dataset& data,
                              const std::vector<int>& indices) {
  check_model(model);
  if (indices.empty()) throw ContractError("bptt_gradients: empty batch");
  DrRnnGradients grads = zero_gradients(model);
  const double weight = 2.0 / static_cast<double>(indices.size());
  DrRnnModel bound = model;
  for (int i : indices) {
    if (!data.systems.empty()) bound.system = data.systems[i];
    accumulate_sequence_gradient(bound, data.sequences[i], weight, grads);
  }
  return grads;
}

void rmsprop_update(Vec& params, const Vec& grads, RmspropState& state) {
  if (params.size() != grads.size())
    throw ContractError("rmsprop_update: shape mismatch");
  if (state.accum.size() != params.size()) state.accum = Vec::Zero(params.size());
  state.accum = (1.0 - state.decay) * grads.array().square().matrix() +
                state.decay * state.accum;
  params -= (state.learning_rate * grads.array() /
             (state.accum.array() + state.eps).sqrt())
                .matrix();
}

namespace {

Vec pack_params(const DrRnnModel& m) {
  Eigen::Index extra = m.trainable_transform ? m.n * m.n : 0;
  Vec p(m.n + m.eta.size() + extra);
  p.head(m.n) = m.gain;
  p.segment(m.n, m.eta.size()) = m.eta;
  if (extra > 0) p.tail(extra) = Eigen::Map<const Vec>(m.transform.data(), extra);
  return p;
}

void unpack_params(DrRnnModel& m, const Vec& p) {
  m.gain = p.head(m.n);
  m.eta = p.segment(m.n, m.eta.size());
  if (m.trainable_transform)
    m.transform = Eigen::Map<const Mat>(p.tail(m.n * m.n).data(), m.n, m.n);
}

Vec pack_grads(const DrRnnModel& m, const DrRnnGradients& g) {
  Eigen::Index extra = m.trainable_transform ? m.n * m.n : 0;
  Vec p(m.n + m.eta.size() + extra);
  p.head(m.n) = g.gain;
  p.segment(m.n, m.eta.size()) = g.eta;
  if (extra > 0) p.tail(extra) = Eigen::Map<const Vec>(g.transform.data(), extra);
  return p;
}

}  // namespace

double drrnn_dataset_mse(const DrRnnModel& model, const Dataset& data) {
  double total = 0.0;
  DrRnnModel bound = model;
  for (int i = 0; i < data.length(); ++i) {
    if (!data.systems.empty()) bound.system = data.systems[i];
    const Mat& target = data.sequences[i];
    Trajectory t = drrnn_rollout(bound, target.col(0),
                                 static_cast<int>(target.cols()) - 1);
    total += sequence_sse(t.states, target);
  }
  return total / static_cast<double>(data.length());
}

LossHistory train(DrRnnModel& model, const Dataset& data, const TrainingConfig& cfg,
                  const Dataset* test_data) {
  check_model(model);
  if (data.length() == 0) throw ContractError("train: empty dataset");
  if (cfg.batch_size < 1) throw ContractError("train: batch_size must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  RmspropState state;
  state.learning_rate = cfg.learning_rate;
  Vec params = pack_params(model);

  LossHistory history;
  std::vector<int> order(data.length());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.iterations; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < data.length(); start += cfg.batch_size) {
      int end = std::min(start + cfg.batch_size, data.length());
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      DrRnnGradients grads = bptt_gradients(model, data, idx);
      Vec g = pack_grads(model, grads);
      rmsprop_update(params, g, state);
      unpack_params(model, params);
    }
    double train_mse = drrnn_dataset_mse(model, data);
    if (!std::isfinite(train_mse)) {
      std::ostringstream os;
      os << "train: non-finite loss at epoch " << epoch;
      throw NumericalError(os.str());
    }
    history.train_mse.push_back(train_mse);
    if (test_data) history.test_mse.push_back(drrnn_dataset_mse(model, *test_data));
    state.learning_rate *= cfg.lr_decay;
  }
  return history;
}

std::pair<Vec, Vec> rnn_forward_step(const StandardRnnModel& model, const Vec& h_t,
                                     const Vec& a_next) {
  Vec abar(a_next.size() + 1);
  abar << a_next, 1.0;
  if (h_t.size() != model.transition.rows() || abar.size() != model.input.rows())
    throw ContractError("rnn_forward_step: shape mismatch");
  Vec h = (model.transition.transpose() * h_t + model.input.transpose() * abar)
              .array()
              .tanh();
  Vec y = model.output.transpose() * h;
  return {std::move(h), std::move(y)};
}

std::vector<Mat> rnn_rollout(const StandardRnnModel& model, const Dataset& data) {
  std::vector<Mat> out;
  out.reserve(data.sequences.size());
  for (std::size_t l = 0; l < data.sequences.size(); ++l) {
    const Mat& target = data.sequences[l];
    const Mat& inputs = data.inputs[l];
    const int T = static_cast<int>(target.cols()) - 1;
    Mat pred(target.rows(), T + 1);
    pred.col(0) = target.col(0);
    Vec h = Vec::Zero(model.hidden_dim());
    for (int t = 0; t < T; ++t) {
      auto [h2, y] = rnn_forward_step(model, h, inputs.col(t));
      h = h2;
      pred.col(t + 1) = y;
    }
    out.push_back(std::move(pred));
  }
  return out;
}

namespace {

struct RnnGrads {
  Mat transition, input, output;
};

// gradient of the batch-mean mse through the full hidden-state recursion
RnnGrads rnn_bptt(const StandardRnnModel& model, const Dataset& data,
                  const std::vector<int>& idx) {
  RnnGrads g{Mat::Zero(model.transition.rows(), model.transition.cols()),
             Mat::Zero(model.input.rows(), model.input.cols()),
             Mat::Zero(model.output.rows(), model.output.cols())};
  const double weight = 2.0 / static_cast<double>(idx.size());
  for (int l : idx) {
    const Mat& target = data.sequences[l];
    const Mat& inputs = data.inputs[l];
    const int T = static_cast<int>(target.cols()) - 1;
    std::vector<Vec> hs(T + 1), abars(T), preds(T);
    hs[0] = Vec::Zero(model.hidden_dim());
    for (int t = 0; t < T; ++t) {
      Vec abar(inputs.rows() + 1);
      abar << inputs.col(t), 1.0;
      abars[t] = abar;
      hs[t + 1] = (model.transition.transpose() * hs[t] +
                   model.input.transpose() * abar)
                      .array()
                      .tanh();
      preds[t] = model.output.transpose() * hs[t + 1];
    }
    Vec hbar = Vec::Zero(model.hidden_dim());
    for (int t = T - 1; t >= 0; --t) {
      Vec pbar = weight * (preds[t] - target.col(t + 1));
      g.output += hs[t + 1] * pbar.transpose();
      hbar += model.output * pbar;
      Vec zbar = hbar.cwiseProduct(
          (1.0 - hs[t + 1].array().square()).matrix());
      g.transition += hs[t] * zbar.transpose();
      g.input += abars[t] * zbar.transpose();
      hbar = model.transition * zbar;
    }
  }
  return g;
}

double rnn_mse(const StandardRnnModel& model, const Dataset& data) {
  auto preds = rnn_rollout(model, data);
  double total = 0.0;
  for (std::size_t l = 0; l < preds.size(); ++l)
    total += sequence_sse(preds[l], data.sequences[l]);
  return total / static_cast<double>(preds.size());
}

}  // namespace

LossHistory train_rnn(StandardRnnModel& model, const Dataset& data,
                      const TrainingConfig& cfg, const Dataset* test_data) {
  if (data.length() == 0 || data.inputs.size() != data.sequences.size())
    throw ContractError("train_rnn: dataset must carry per-sequence inputs");
  std::mt19937_64 rng(cfg.seed);
  RmspropState state;
  state.learning_rate = cfg.learning_rate;

  auto pack = [&]() {
    Vec p(model.transition.size() + model.input.size() + model.output.size());
    Eigen::Index off = 0;
    p.segment(off, model.transition.size()) =
        Eigen::Map<const Vec>(model.transition.data(), model.transition.size());
    off += model.transition.size();
    p.segment(off, model.input.size()) =
        Eigen::Map<const Vec>(model.input.data(), model.input.size());
    off += model.input.size();
    p.segment(off, model.output.size()) =
        Eigen::Map<const Vec>(model.output.data(), model.output.size());
    return p;
  };
  auto unpack = [&](const Vec& p) {
    Eigen::Index off = 0;
    model.transition = Eigen::Map<const Mat>(p.data() + off, model.transition.rows(),
                                             model.transition.cols());
    off += model.transition.size();
    model.input =
        Eigen::Map<const Mat>(p.data() + off, model.input.rows(), model.input.cols());
    off += model.input.size();
    model.output =
        Eigen::Map<const Mat>(p.data() + off, model.output.rows(), model.output.cols());
  };

  Vec params = pack();
  LossHistory history;
  std::vector<int> order(data.length());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.iterations; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < data.length(); start += cfg.batch_size) {
      int end = std::min(start + cfg.batch_size, data.length());
      std::vector<int> idx(order.begin() + start, order.begin() + end);
      RnnGrads grads = rnn_bptt(model, data, idx);
      Vec g(params.size());
      Eigen::Index off = 0;
      g.segment(off, grads.transition.size()) =
          Eigen::Map<const Vec>(grads.transition.data(), grads.transition.size());
      off += grads.transition.size();
      g.segment(off, grads.input.size()) =
          Eigen::Map<const Vec>(grads.input.data(), grads.input.size());
      off += grads.input.size();
      g.segment(off, grads.output.size()) =
          Eigen::Map<const Vec>(grads.output.data(), grads.output.size());
      rmsprop_update(params, g, state);
      unpack(params);
    }
    history.train_mse.push_back(rnn_mse(model, data));
    if (test_data) history.test_mse.push_back(rnn_mse(model, *test_data));
  }
  return history;
}

DrRnnModel initialize_model(int layers, std::shared_ptr<const FomSystem> system, double dt,
                            const TrainingConfig& cfg, std::mt19937_64& rng) {
  if (!system) throw ContractError("initialize_model: null system");
  DrRnnModel m;
  m.layers = layers;
  m.n = system->n;
  m.system = std::move(system);
  m.dt = dt;
  std::normal_distribution<double> gauss(0.0, cfg.gain_sigma);
  std::uniform_real_distribution<double> eta_dist(cfg.eta_lo, cfg.eta_hi);
  m.gain = Vec::NullaryExpr(m.n, [&](Eigen::Index) { return gauss(rng); });
  m.eta = Vec::NullaryExpr(layers - 1, [&](Eigen::Index) { return eta_dist(rng); });
  m.trainable_transform = cfg.trainable_transform;
  if (cfg.trainable_transform) {
    std::uniform_real_distribution<double> u(cfg.transform_lo, cfg.transform_hi);
    m.transform = Mat::NullaryExpr(m.n, m.n, [&](Eigen::Index, Eigen::Index) {
      return u(rng);
    });
  } else {
    m.transform = Mat::Identity(m.n, m.n);
  }
  return m;
}

StandardRnnModel initialize_rnn(Eigen::Index hidden, Eigen::Index input_dim,
                                Eigen::Index output_dim, const TrainingConfig& cfg,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, cfg.gain_sigma);
  auto draw = [&](Eigen::Index, Eigen::Index) { return gauss(rng); };
  StandardRnnModel m;
  m.transition = Mat::NullaryExpr(hidden, hidden, draw);
  m.input = Mat::NullaryExpr(input_dim + 1, hidden, draw);
  m.output = Mat::NullaryExpr(hidden, output_dim, draw);
  return m;
}

}  // namespace mor
