#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wproj/dataset.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"
#include "wproj/tensor.hpp"

namespace wproj {

enum class Optimizer { kSgd, kAdam };

std::string_view optimizer_name(Optimizer opt);
Optimizer parse_optimizer(std::string_view name);

/// Multiplier applied once the given number of training steps has completed.
struct Milestone {
  std::uint64_t iteration = 0;
  double multiplier = 1.0;
  bool operator==(const Milestone&) const = default;
};

/// Per-layer weight clipping: c_k = global_factor * init_std_k, or +inf when
/// disabled. Schedule milestones rescale every c_k in place.
struct ClipPolicy {
  bool enabled = true;
  double global_factor = 0.5;
  std::vector<Milestone> schedule;

  void validate() const;
  std::vector<double> initial_bounds(const Network& net) const;
  bool operator==(const ClipPolicy&) const = default;
};

struct TrainConfig {
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 0.003;
  std::vector<Milestone> lr_schedule;
  std::size_t batch_size = 50;
  std::size_t epochs = 10;
  ProjectionSpec projection;
  ClipPolicy clip;
  std::uint64_t seed = 1;
  bool deterministic = true;
  /// Evaluate every `eval_every` epochs (and after the last one); 0 = last only.
  std::size_t eval_every = 2;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Learning rate in effect for the step that starts after `completed_steps`.
double learning_rate_at(const TrainConfig& cfg, std::uint64_t completed_steps);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;
  bool operator==(const AdamState&) const = default;
};

/// Bias-corrected ADAM. Moments are created on the first call; returns the
/// additive update for each gradient tensor.
std::vector<Tensor> adam_update(AdamState& state, std::span<const Tensor> grads, double lr,
                                const AdamParams& params = {});

/// Plain SGD (no momentum): -lr * g.
std::vector<Tensor> sgd_update(std::span<const Tensor> grads, double lr);

/// Elementwise max(min(w, bound), -bound). bound may be +inf.
Tensor clip_weights(const Tensor& w, double bound);

/// Proximal operator of the indicator of {x : ||x||_inf <= radius}.
Tensor prox_linf_ball(const Tensor& v, double radius);

struct TrainState {
  Network net;
  AdamState adam;
  std::vector<double> clip_bounds;  // per parametric layer
  std::uint64_t step = 0;           // completed training steps
  std::uint64_t epoch = 0;          // completed epochs
  bool operator==(const TrainState&) const = default;
};

/// Computes clip bounds and clips the initial weights into range.
TrainState init_train_state(Network net, const TrainConfig& cfg);

/// Network parameters and their gradients in the optimizer's canonical order:
/// weights, biases, BatchNorm gammas, BatchNorm betas.
std::vector<Tensor*> parameter_list(Network& net);
std::vector<const Tensor*> gradient_list(const Gradients& grads);

/// One projected-weights step: project W, forward and backward with the
/// projected weights, apply the update to the stored weights, clip, and fold
/// the batch statistics into the BatchNorm running averages. Returns the loss.
double train_step(TrainState& state, const Tensor& batch, const Tensor& targets,
                  const TrainConfig& cfg);

struct HistoryRecord {
  std::uint64_t epoch = 0;
  std::uint64_t iteration = 0;
  double loss = 0.0;
  std::vector<double> errors;  // one per evaluation spec
  bool operator==(const HistoryRecord&) const = default;
};

struct TrainHistory {
  std::vector<std::string> spec_names;
  std::vector<HistoryRecord> records;

  /// Columns: epoch, iteration, loss, then one error column per spec name.
  std::string to_csv() const;
  bool operator==(const TrainHistory&) const = default;
};

using EpochCallback = std::function<void(const TrainState&, const TrainHistory&)>;

/// Continues training from `state` until `cfg.epochs` epochs are complete.
/// Each epoch shuffles the training set with a stream keyed by the epoch.
void run_epochs(TrainState& state, const TrainConfig& cfg, const Dataset& train_data,
                const Dataset& test_data, std::span<const ProjectionSpec> eval_specs,
                TrainHistory& history, const EpochCallback& on_epoch = {});

struct TrainResult {
  TrainState state;
  TrainHistory history;
};

TrainResult train(const TrainConfig& cfg, Network initial, const Dataset& train_data,
                  const Dataset& test_data, std::span<const ProjectionSpec> eval_specs);

}  // namespace wproj
