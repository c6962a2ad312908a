#include "wproj/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "wproj/error.hpp"
#include "wproj/harness.hpp"
#include "wproj/report.hpp"
#include "wproj/rng.hpp"

namespace wproj {
namespace {

void validate_schedule(const std::vector<Milestone>& schedule, std::string_view what) {
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i].multiplier > 0.0) || !std::isfinite(schedule[i].multiplier)) {
      throw ConfigError(std::string(what) + " multipliers must be positive");
    }
    if (i > 0 && schedule[i].iteration <= schedule[i - 1].iteration) {
      throw ConfigError(std::string(what) + " milestones must be strictly increasing");
    }
  }
}

}  // namespace

std::string_view optimizer_name(Optimizer opt) { return opt == Optimizer::kSgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::kSgd;
  if (name == "adam") return Optimizer::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

void ClipPolicy::validate() const {
  if (!(global_factor > 0.0) || !std::isfinite(global_factor)) {
    throw ConfigError("clip factor must be positive");
  }
  validate_schedule(schedule, "clip schedule");
}

std::vector<double> ClipPolicy::initial_bounds(const Network& net) const {
  std::vector<double> bounds;
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    const double init_std = net.weight_layer(k).init_std;
    if (!(init_std > 0.0)) {
      throw ConfigError("layer " + std::to_string(k) + " has no recorded init std");
    }
    bounds.push_back(enabled ? global_factor * init_std
                             : std::numeric_limits<double>::infinity());
  }
  return bounds;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  validate_schedule(lr_schedule, "learning-rate schedule");
  clip.validate();
  projection.validate();
}

double learning_rate_at(const TrainConfig& cfg, std::uint64_t completed_steps) {
  double lr = cfg.learning_rate;
  for (const Milestone& m : cfg.lr_schedule) {
    if (m.iteration <= completed_steps) lr *= m.multiplier;
  }
  return lr;
}

std::vector<Tensor> adam_update(AdamState& state, std::span<const Tensor> grads, double lr,
                                const AdamParams& params) {
  if (state.m.empty() && state.v.empty()) {
    for (const Tensor& g : grads) {
      state.m.emplace_back(g.shape());
      state.v.emplace_back(g.shape());
    }
  }
  if (state.m.size() != grads.size() || state.v.size() != grads.size()) {
    throw UsageError("ADAM state does not match the gradient list");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(params.beta1, t);
  const double correction2 = 1.0 - std::pow(params.beta2, t);
  std::vector<Tensor> deltas;
  deltas.reserve(grads.size());
  for (std::size_t p = 0; p < grads.size(); ++p) {
    const Tensor& g = grads[p];
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    if (m.shape() != g.shape() || v.shape() != g.shape()) {
      throw UsageError("ADAM moment shape does not match gradient " + std::to_string(p));
    }
    Tensor delta(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * g[i];
      v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      delta[i] = -lr * m_hat / (std::sqrt(v_hat) + params.epsilon);
    }
    deltas.push_back(std::move(delta));
  }
  return deltas;
}

std::vector<Tensor> sgd_update(std::span<const Tensor> grads, double lr) {
  std::vector<Tensor> deltas;
  deltas.reserve(grads.size());
  for (const Tensor& g : grads) {
    Tensor delta(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) delta[i] = -lr * g[i];
    deltas.push_back(std::move(delta));
  }
  return deltas;
}

Tensor clip_weights(const Tensor& w, double bound) {
  Tensor out = w;
  for (double& v : out.values()) v = std::max(std::min(v, bound), -bound);
  return out;
}

Tensor prox_linf_ball(const Tensor& v, double radius) {
  if (!(radius > 0.0)) throw InputError("prox radius must be positive");
  // The objective separates per coordinate into a parabola centred at v_i
  // restricted to [-radius, radius]; its minimizer is the nearest feasible point.
  Tensor x(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > radius) {
      x[i] = radius;
    } else if (v[i] < -radius) {
      x[i] = -radius;
    } else {
      x[i] = v[i];
    }
  }
  return x;
}

std::vector<Tensor*> parameter_list(Network& net) {
  std::vector<Tensor*> out;
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) out.push_back(&net.weight_layer(k).weight);
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) out.push_back(&net.weight_layer(k).bias);
  for (std::size_t j : net.bn_layers()) out.push_back(&net.layers()[j].bn.gamma);
  for (std::size_t j : net.bn_layers()) out.push_back(&net.layers()[j].bn.beta);
  return out;
}

std::vector<const Tensor*> gradient_list(const Gradients& grads) {
  std::vector<const Tensor*> out;
  for (const auto* group : {&grads.weight, &grads.bias, &grads.gamma, &grads.beta}) {
    for (const Tensor& t : *group) out.push_back(&t);
  }
  return out;
}

TrainState init_train_state(Network net, const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.clip_bounds = cfg.clip.initial_bounds(net);
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    Layer& layer = net.weight_layer(k);
    layer.weight = clip_weights(layer.weight, state.clip_bounds[k]);
  }
  state.net = std::move(net);
  return state;
}

double train_step(TrainState& state, const Tensor& batch, const Tensor& targets,
                  const TrainConfig& cfg) {
  Network& net = state.net;
  if (state.clip_bounds.size() != net.weight_layers().size()) {
    throw UsageError("train state has no clip bounds; call init_train_state first");
  }

  const WeightSet projected = project_weights(net, cfg.projection, cfg.seed, state.step);
  const ForwardCache cache = forward(net, projected, batch, Mode::kTrain);
  const LossResult loss = square_hinge_loss(cache.logits(), targets);
  const Gradients grads = backward(net, cache, loss.grad);

  // Straight-through: gradients taken at the projected weights update W.
  std::vector<Tensor> grad_values;
  for (const Tensor* g : gradient_list(grads)) grad_values.push_back(*g);
  const double lr = learning_rate_at(cfg, state.step);
  const std::vector<Tensor> deltas = cfg.optimizer == Optimizer::kAdam
                                         ? adam_update(state.adam, grad_values, lr)
                                         : sgd_update(grad_values, lr);
  const std::vector<Tensor*> params = parameter_list(net);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = *params[p];
    for (std::size_t i = 0; i < param.size(); ++i) param[i] += deltas[p][i];
  }

  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    Layer& layer = net.weight_layer(k);
    layer.weight = clip_weights(layer.weight, state.clip_bounds[k]);
  }
  apply_batch_stats(net, cache);

  ++state.step;
  for (const Milestone& m : cfg.clip.schedule) {
    if (m.iteration == state.step) {
      for (double& c : state.clip_bounds) c *= m.multiplier;
    }
  }
  return loss.loss;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,iteration,loss";
  for (const auto& name : spec_names) os << ',' << name;
  os << '\n';
  for (const HistoryRecord& r : records) {
    os << r.epoch << ',' << r.iteration << ',' << format_double(r.loss);
    for (double e : r.errors) os << ',' << format_double(e);
    os << '\n';
  }
  return os.str();
}

void run_epochs(TrainState& state, const TrainConfig& cfg, const Dataset& train_data,
                const Dataset& test_data, std::span<const ProjectionSpec> eval_specs,
                TrainHistory& history, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_data.size() == 0) throw InputError("training set is empty");
  if (history.spec_names.empty()) {
    for (const ProjectionSpec& s : eval_specs) history.spec_names.push_back(s.to_string());
  }
  const std::size_t n = train_data.size();
  const std::size_t classes = state.net.num_classes();
  while (state.epoch < cfg.epochs) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_stream(cfg.seed, StreamPurpose::kShuffle, state.epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor batch = gather_rows(train_data.images, idx);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (std::size_t i : idx) labels.push_back(train_data.labels[i]);
      loss_sum += train_step(state, batch, one_vs_rest_targets(labels, classes), cfg);
      ++batches;
    }
    ++state.epoch;

    const bool last = state.epoch == cfg.epochs;
    const bool due = cfg.eval_every > 0 && state.epoch % cfg.eval_every == 0;
    if (due || last) {
      HistoryRecord record{state.epoch, state.step, loss_sum / static_cast<double>(batches), {}};
      for (std::size_t i = 0; i < eval_specs.size(); ++i) {
        record.errors.push_back(evaluate(state.net, eval_specs[i], test_data, train_data,
                                         evaluation_seed(cfg.seed, i)));
      }
      history.records.push_back(std::move(record));
    }
    if (on_epoch) on_epoch(state, history);
  }
}

TrainResult train(const TrainConfig& cfg, Network initial, const Dataset& train_data,
                  const Dataset& test_data, std::span<const ProjectionSpec> eval_specs) {
  TrainResult result{init_train_state(std::move(initial), cfg), {}};
  for (const ProjectionSpec& s : eval_specs) result.history.spec_names.push_back(s.to_string());
  run_epochs(result.state, cfg, train_data, test_data, eval_specs, result.history);
  return result;
}

}  // namespace wproj
