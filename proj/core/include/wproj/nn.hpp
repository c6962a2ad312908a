#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wproj/tensor.hpp"

namespace wproj {

struct Conv2D {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool operator==(const Conv2D&) const = default;
};

struct Dense {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  bool operator==(const Dense&) const = default;
};

struct ReLU {
  bool operator==(const ReLU&) const = default;
};

struct BatchNorm {
  std::size_t channels = 1;
  double epsilon = 1e-5;
  double momentum = 0.9;
  bool operator==(const BatchNorm&) const = default;
};

struct Flatten {
  bool operator==(const Flatten&) const = default;
};

using LayerSpec = std::variant<Conv2D, Dense, ReLU, BatchNorm, Flatten>;

bool is_parametric(const LayerSpec& spec);
std::string layer_kind_name(const LayerSpec& spec);

/// (fan_in, fan_out) of a Conv2D or Dense layer.
std::pair<std::size_t, std::size_t> layer_fans(const LayerSpec& spec);

/// Weight tensor shape: (out, in, kh, kw) for Conv2D, (out, in) for Dense.
Tensor::Shape weight_shape(const LayerSpec& spec);

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  bool operator==(const BatchNormState&) const = default;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;          // Conv2D, Dense
  Tensor bias;            // Conv2D, Dense
  double init_std = 0.0;  // Conv2D, Dense
  BatchNormState bn;      // BatchNorm
  bool operator==(const Layer&) const = default;
};

/// One tensor per parametric layer, in network order.
using WeightSet = std::vector<Tensor>;

enum class Mode { kTrain, kInfer };

/// Ordered layer stack over NCHW inputs. Parameters are zero after
/// construction; see make_network() for an initialized instance.
class Network {
 public:
  Network() = default;
  Network(Tensor::Shape input_shape, std::vector<LayerSpec> specs);

  const Tensor::Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<LayerSpec> specs() const;

  /// Indices into layers() of the Conv2D/Dense layers.
  const std::vector<std::size_t>& weight_layers() const noexcept { return weight_layers_; }
  /// Indices into layers() of the BatchNorm layers.
  const std::vector<std::size_t>& bn_layers() const noexcept { return bn_layers_; }

  Layer& weight_layer(std::size_t k) { return layers_.at(weight_layers_.at(k)); }
  const Layer& weight_layer(std::size_t k) const { return layers_.at(weight_layers_.at(k)); }

  WeightSet weights() const;
  void set_weights(const WeightSet& weights);

  /// Per-sample output shape of each layer.
  const std::vector<Tensor::Shape>& output_shapes() const noexcept { return output_shapes_; }

  /// Hash of the layer structure; ties a ForwardCache to compatible networks.
  std::uint64_t signature() const noexcept { return signature_; }

  bool operator==(const Network& other) const {
    return input_shape_ == other.input_shape_ && layers_ == other.layers_;
  }

 private:
  Tensor::Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<std::size_t> weight_layers_;
  std::vector<std::size_t> bn_layers_;
  std::vector<Tensor::Shape> output_shapes_;
  std::size_t num_classes_ = 0;
  std::uint64_t signature_ = 0;
};

/// Batch statistics captured by a train-mode BatchNorm forward.
struct BatchNormBatch {
  Tensor normalized;  // x_hat, same shape as the layer input
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
};

struct ForwardCache {
  Mode mode = Mode::kInfer;
  std::uint64_t signature = 0;
  WeightSet weights;
  /// activations[0] is the input batch; activations[i + 1] is the output of layer i.
  std::vector<Tensor> activations;
  /// Indexed by layer; empty for non-BatchNorm layers.
  std::vector<BatchNormBatch> bn;

  const Tensor& logits() const { return activations.back(); }
};

struct Gradients {
  std::vector<Tensor> weight;  // per parametric layer
  std::vector<Tensor> bias;    // per parametric layer
  std::vector<Tensor> gamma;   // per BatchNorm layer
  std::vector<Tensor> beta;    // per BatchNorm layer
};

/// Runs the network on `batch` (N x C x H x W) with `weights` in place of the
/// stored ones. Train mode normalizes with batch statistics and records them in
/// the cache; running statistics are updated separately by apply_batch_stats().
ForwardCache forward(const Network& net, const WeightSet& weights, const Tensor& batch, Mode mode);

/// Logits only, infer mode, processed in chunks of `chunk` samples.
Tensor infer(const Network& net, const WeightSet& weights, const Tensor& batch,
             std::size_t chunk = 256);

Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& loss_grad);

/// Exponential moving update of running statistics from a train-mode cache.
void apply_batch_stats(Network& net, const ForwardCache& cache);

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

/// Mean over batch and classes of max(0, 1 - t*o)^2 with t in {-1, +1}.
LossResult square_hinge_loss(const Tensor& logits, const Tensor& targets);

/// N x classes matrix of +1 at the label and -1 elsewhere.
Tensor one_vs_rest_targets(std::span<const int> labels, std::size_t classes);

/// Replaces every BatchNorm running mean/variance with the exact population
/// moments of its input over `data`, propagated under `weights`. Layers are
/// processed in order so each one sees the already-recomputed upstream stats.
void recompute_bn_stats(Network& net, const WeightSet& weights, const Tensor& data,
                        std::size_t chunk = 256);

}  // namespace wproj
