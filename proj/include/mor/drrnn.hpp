// SPDX-License-Identifier: Apache-2.0
#ifndef MOR_DRRNN_HPP
#define MOR_DRRNN_HPP

#include <memory>
#include <random>
#include <vector>

#include "mor/dynsys.hpp"

namespace mor {

// Residual time-stepper: K stacked layers drive the implicit-Euler residual
// of a bound system toward zero. Layer 1 applies a learned gated correction
// w o tanh(U r); deeper layers step along r scaled by eta_k/sqrt(G_k+eps)
// where G_k is an exponentially decaying squared residual norm.
struct DrRnnModel {
  int layers = 1;               // K
  Eigen::Index n = 0;
  bool trainable_transform = false;
  Mat transform;                // U, identity when not trained
  Vec gain;                     // w, elementwise gain on layer 1
  Vec eta;                      // eta_2..eta_K, length K-1
  double zeta = 0.9;
  double gamma = 0.1;
  double eps = 1e-8;

  std::shared_ptr<const FomSystem> system;  // residual binding
  double dt = 0.0;
};

struct StandardRnnModel {
  Mat transition;  // U, m x m
  Mat input;       // V, (input_dim+1) x m, bias folded
  Mat output;      // W, m x output_dim
  Eigen::Index hidden_dim() const { return transition.rows(); }
};

struct RmspropState {
  Vec accum;            // G, per-parameter squared-gradient accumulator
  double learning_rate = 0.001;
  double decay = 0.9;   // gamma
  double eps = 1e-8;
};

struct TrainingConfig {
  int batch_size = 15;
  int iterations = 15;  // epochs
  std::uint64_t seed = 0;
  double learning_rate = 0.001;
  // Per-epoch geometric anneal of the rmsprop learning rate. The fixed
  // epoch budget needs a coarse-then-fine step size to settle near the
  // loss floor; 1.0 keeps the rate constant.
  double lr_decay = 1.0;
  double gain_sigma = 0.1;
  double eta_lo = 0.1;
  double eta_hi = 0.4;
  bool trainable_transform = false;
  double transform_lo = 0.1;
  double transform_hi = 0.5;
};

// Training sequences: states is n x (T+1) with the initial condition in
// column 0; inputs (baseline RNN only) is input_dim x T. For parametric
// problems each sequence may carry its own residual binding; when systems
// is empty the model's own binding is used for every sequence.
struct Dataset {
  std::vector<Mat> sequences;
  std::vector<Mat> inputs;
  std::vector<std::shared_ptr<const FomSystem>> systems;
  double dt = 0.0;

  int length() const { return static_cast<int>(sequences.size()); }
};

struct DrRnnGradients {
  Vec gain;
  Vec eta;
  Mat transform;  // empty unless trainable
};

struct LossHistory {
  std::vector<double> train_mse;
  std::vector<double> test_mse;
};

std::pair<Vec, double> drrnn_layer_update(const DrRnnModel& model, const Vec& y_candidate,
                                          const Vec& y_prev, int k, double G_prev);

Vec drrnn_forward_step(const DrRnnModel& model, const Vec& y_t);

Trajectory drrnn_rollout(const DrRnnModel& model, const Vec& y0, int steps);

int count_parameters(const DrRnnModel& model);

double mse_loss(const std::vector<Mat>& pred, const std::vector<Mat>& target);

// Exact reverse-mode gradient of the mse loss over the batch, through all
// rollout steps and layers, including the G_k chain (the step-size
// denominator depends on the candidate state).
DrRnnGradients bptt_gradients(const DrRnnModel& model, const std::vector<Mat>& batch);

// Batch gradient with per-sequence residual bindings taken from the dataset.
DrRnnGradients bptt_gradients(const DrRnnModel& model, const Dataset& data,
                              const std::vector<int>& indices);

// Mean per-sequence rollout loss over a dataset (per-sequence bindings apply).
double drrnn_dataset_mse(const DrRnnModel& model, const Dataset& data);

void rmsprop_update(Vec& params, const Vec& grads, RmspropState& state);

LossHistory train(DrRnnModel& model, const Dataset& data, const TrainingConfig& cfg,
                  const Dataset* test_data = nullptr);

std::pair<Vec, Vec> rnn_forward_step(const StandardRnnModel& model, const Vec& h_t,
                                     const Vec& a_next);

std::vector<Mat> rnn_rollout(const StandardRnnModel& model, const Dataset& data);

LossHistory train_rnn(StandardRnnModel& model, const Dataset& data,
                      const TrainingConfig& cfg, const Dataset* test_data = nullptr);

DrRnnModel initialize_model(int layers, std::shared_ptr<const FomSystem> system, double dt,
                            const TrainingConfig& cfg, std::mt19937_64& rng);

StandardRnnModel initialize_rnn(Eigen::Index hidden, Eigen::Index input_dim,
                                Eigen::Index output_dim, const TrainingConfig& cfg,
                                std::mt19937_64& rng);

}  // namespace mor

#endif
