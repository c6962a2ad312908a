#include "wproj/nn.hpp"

#include <algorithm>
#include <cmath>

#include "wproj/error.hpp"

namespace wproj {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  // FNV-1a over the 8 bytes of v.
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffU;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  if (in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

// Channel count and spatial size of a (N, C[, H, W]) tensor.
struct ChannelLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t spatial;
};

ChannelLayout channel_layout(const Tensor& x) {
  const std::size_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  return {x.dim(0), x.dim(1), spatial};
}

Tensor conv_forward(const Conv2D& c, const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t n_batch = x.dim(0), in_h = x.dim(2), in_w = x.dim(3);
  const std::size_t out_h = conv_out_extent(in_h, c.kernel_h, c.stride, c.padding);
  const std::size_t out_w = conv_out_extent(in_w, c.kernel_w, c.stride, c.padding);
  Tensor y({n_batch, c.out_channels, out_h, out_w});
  const long pad = static_cast<long>(c.padding);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < c.out_channels; ++o) {
      double* yo = y.data() + ((n * c.out_channels + o) * out_h) * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          double sum = b[o];
          for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
            const double* xc = x.data() + ((n * c.in_channels + ci) * in_h) * in_w;
            const double* wc = w.data() + ((o * c.in_channels + ci) * c.kernel_h) * c.kernel_w;
            for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
              const long iy = static_cast<long>(oy * c.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(in_h)) continue;
              for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
                const long ix = static_cast<long>(ox * c.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(in_w)) continue;
                sum += wc[ky * c.kernel_w + kx] * xc[iy * static_cast<long>(in_w) + ix];
              }
            }
          }
          yo[oy * out_w + ox] = sum;
        }
      }
    }
  }
  return y;
}

void conv_backward(const Conv2D& c, const Tensor& x, const Tensor& w, const Tensor& dy,
                   Tensor& dw, Tensor& db, Tensor* dx) {
  const std::size_t n_batch = x.dim(0), in_h = x.dim(2), in_w = x.dim(3);
  const std::size_t out_h = dy.dim(2), out_w = dy.dim(3);
  const long pad = static_cast<long>(c.padding);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t o = 0; o < c.out_channels; ++o) {
      const double* dyo = dy.data() + ((n * c.out_channels + o) * out_h) * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const double g = dyo[oy * out_w + ox];
          db[o] += g;
          if (g == 0.0) continue;
          for (std::size_t ci = 0; ci < c.in_channels; ++ci) {
            const std::size_t x_off = ((n * c.in_channels + ci) * in_h) * in_w;
            const std::size_t w_off = ((o * c.in_channels + ci) * c.kernel_h) * c.kernel_w;
            for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
              const long iy = static_cast<long>(oy * c.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<long>(in_h)) continue;
              for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
                const long ix = static_cast<long>(ox * c.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<long>(in_w)) continue;
                const std::size_t xi = x_off + static_cast<std::size_t>(iy) * in_w +
                                       static_cast<std::size_t>(ix);
                const std::size_t wi = w_off + ky * c.kernel_w + kx;
                dw[wi] += g * x[xi];
                if (dx) (*dx)[xi] += g * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

Tensor dense_forward(const Dense& d, const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t n_batch = x.dim(0);
  Tensor y({n_batch, d.out_features});
  for (std::size_t n = 0; n < n_batch; ++n) {
    const double* xn = x.data() + n * d.in_features;
    for (std::size_t o = 0; o < d.out_features; ++o) {
      const double* wo = w.data() + o * d.in_features;
      double sum = b[o];
      for (std::size_t i = 0; i < d.in_features; ++i) sum += wo[i] * xn[i];
      y[n * d.out_features + o] = sum;
    }
  }
  return y;
}

void dense_backward(const Dense& d, const Tensor& x, const Tensor& w, const Tensor& dy,
                    Tensor& dw, Tensor& db, Tensor* dx) {
  const std::size_t n_batch = x.dim(0);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const double* xn = x.data() + n * d.in_features;
    for (std::size_t o = 0; o < d.out_features; ++o) {
      const double g = dy[n * d.out_features + o];
      db[o] += g;
      double* dwo = dw.data() + o * d.in_features;
      const double* wo = w.data() + o * d.in_features;
      for (std::size_t i = 0; i < d.in_features; ++i) {
        dwo[i] += g * xn[i];
        if (dx) (*dx)[n * d.in_features + i] += g * wo[i];
      }
    }
  }
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

// Train mode: normalize with the batch's own biased moments.
Tensor bn_forward_train(const BatchNorm& spec, const BatchNormState& state, const Tensor& x,
                        BatchNormBatch& out) {
  const auto [n_batch, channels, spatial] = channel_layout(x);
  const double count = static_cast<double>(n_batch * spatial);
  out.mean.assign(channels, 0.0);
  out.var.assign(channels, 0.0);
  out.inv_std.assign(channels, 0.0);
  out.normalized = Tensor(x.shape());
  Tensor y(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const double* xc = x.data() + (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) sum += xc[s];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const double* xc = x.data() + (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) sq += (xc[s] - mean) * (xc[s] - mean);
    }
    const double var = sq / count;
    const double inv_std = 1.0 / std::sqrt(var + spec.epsilon);
    out.mean[c] = mean;
    out.var[c] = var;
    out.inv_std[c] = inv_std;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const double xh = (x[off + s] - mean) * inv_std;
        out.normalized[off + s] = xh;
        y[off + s] = state.gamma[c] * xh + state.beta[c];
      }
    }
  }
  return y;
}

Tensor bn_forward_infer(const BatchNorm& spec, const BatchNormState& state, const Tensor& x) {
  const auto [n_batch, channels, spatial] = channel_layout(x);
  Tensor y(x.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const double inv_std = 1.0 / std::sqrt(state.running_var[c] + spec.epsilon);
    const double scale = state.gamma[c] * inv_std;
    const double shift = state.beta[c] - state.running_mean[c] * scale;
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) y[off + s] = x[off + s] * scale + shift;
    }
  }
  return y;
}

void bn_backward(const BatchNorm& spec, const BatchNormState& state, const Tensor& x,
                 const BatchNormBatch* batch, const Tensor& dy, Tensor& dgamma, Tensor& dbeta,
                 Tensor& dx) {
  const auto [n_batch, channels, spatial] = channel_layout(x);
  const double count = static_cast<double>(n_batch * spatial);
  for (std::size_t c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    const double inv_std = batch ? batch->inv_std[c]
                                 : 1.0 / std::sqrt(state.running_var[c] + spec.epsilon);
    const double mean = batch ? batch->mean[c] : state.running_mean[c];
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const double xh = batch ? batch->normalized[off + s] : (x[off + s] - mean) * inv_std;
        sum_dy += dy[off + s];
        sum_dy_xh += dy[off + s] * xh;
      }
    }
    dgamma[c] = sum_dy_xh;
    dbeta[c] = sum_dy;
    const double g = state.gamma[c];
    for (std::size_t n = 0; n < n_batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        if (batch) {
          const double xh = batch->normalized[off + s];
          dx[off + s] =
              g * inv_std * (dy[off + s] - sum_dy / count - xh * sum_dy_xh / count);
        } else {
          dx[off + s] = g * inv_std * dy[off + s];
        }
      }
    }
  }
}

void check_batch(const Network& net, const Tensor& batch) {
  if (batch.rank() != 4 || batch.dim(0) == 0 || batch.dim(1) != net.input_shape().at(0) ||
      batch.dim(2) != net.input_shape().at(1) || batch.dim(3) != net.input_shape().at(2)) {
    throw ConfigError("batch shape " + shape_string(batch.shape()) +
                      " does not match network input (N)" + shape_string(net.input_shape()));
  }
}

void check_weights(const Network& net, const WeightSet& weights) {
  if (weights.size() != net.weight_layers().size()) {
    throw ConfigError("expected " + std::to_string(net.weight_layers().size()) +
                      " weight tensors, got " + std::to_string(weights.size()));
  }
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k].shape() != net.weight_layer(k).weight.shape()) {
      throw ConfigError("effective weight " + std::to_string(k) + " has shape " +
                        shape_string(weights[k].shape()) + ", expected " +
                        shape_string(net.weight_layer(k).weight.shape()));
    }
  }
}

// Forward through layers [begin, end). `weight_index` is the parametric index of
// the first parametric layer at or after `begin`.
Tensor run_layers(const Network& net, const WeightSet& weights, Tensor x, std::size_t begin,
                  std::size_t end, std::size_t weight_index, Mode mode,
                  std::vector<Tensor>* activations, std::vector<BatchNormBatch>* bn_batches) {
  const auto& layers = net.layers();
  for (std::size_t i = begin; i < end; ++i) {
    const Layer& layer = layers[i];
    Tensor y = std::visit(
        Overloaded{
            [&](const Conv2D& c) { return conv_forward(c, x, weights[weight_index++], layer.bias); },
            [&](const Dense& d) { return dense_forward(d, x, weights[weight_index++], layer.bias); },
            [&](const ReLU&) { return relu_forward(x); },
            [&](const BatchNorm& b) {
              if (mode == Mode::kTrain) return bn_forward_train(b, layer.bn, x, (*bn_batches)[i]);
              return bn_forward_infer(b, layer.bn, x);
            },
            [&](const Flatten&) { return x.reshaped({x.dim(0), x.size() / x.dim(0)}); },
        },
        layer.spec);
    if (!y.all_finite()) {
      throw NumericError("non-finite activation at layer " + std::to_string(i) + " (" +
                             layer_kind_name(layer.spec) + ")",
                         static_cast<long>(i));
    }
    if (activations) activations->push_back(y);
    x = std::move(y);
  }
  return x;
}

}  // namespace

bool is_parametric(const LayerSpec& spec) {
  return std::holds_alternative<Conv2D>(spec) || std::holds_alternative<Dense>(spec);
}

std::string layer_kind_name(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const Conv2D&) { return std::string("conv"); },
                        [](const Dense&) { return std::string("fc"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const BatchNorm&) { return std::string("bn"); },
                        [](const Flatten&) { return std::string("flatten"); },
                    },
                    spec);
}

std::pair<std::size_t, std::size_t> layer_fans(const LayerSpec& spec) {
  if (const auto* c = std::get_if<Conv2D>(&spec)) {
    const std::size_t area = c->kernel_h * c->kernel_w;
    return {area * c->in_channels, area * c->out_channels};
  }
  if (const auto* d = std::get_if<Dense>(&spec)) return {d->in_features, d->out_features};
  throw ConfigError(layer_kind_name(spec) + " layer has no weights");
}

Tensor::Shape weight_shape(const LayerSpec& spec) {
  if (const auto* c = std::get_if<Conv2D>(&spec)) {
    return {c->out_channels, c->in_channels, c->kernel_h, c->kernel_w};
  }
  if (const auto* d = std::get_if<Dense>(&spec)) return {d->out_features, d->in_features};
  throw ConfigError(layer_kind_name(spec) + " layer has no weights");
}

Network::Network(Tensor::Shape input_shape, std::vector<LayerSpec> specs)
    : input_shape_(std::move(input_shape)) {
  if (input_shape_.size() != 3 || shape_product(input_shape_) == 0) {
    throw ConfigError("network input must be a non-empty C x H x W shape, got " +
                      shape_string(input_shape_));
  }
  if (specs.empty()) throw ConfigError("network has no layers");

  std::uint64_t sig = 0xcbf29ce484222325ULL;
  for (std::size_t d : input_shape_) sig = hash_combine(sig, d);

  Tensor::Shape shape = input_shape_;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& spec = specs[i];
    const std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(spec) + "): ";
    Layer layer{spec, {}, {}, 0.0, {}};
    sig = hash_combine(sig, spec.index());
    std::visit(
        Overloaded{
            [&](const Conv2D& c) {
              if (shape.size() != 3 || shape[0] != c.in_channels) {
                throw ConfigError(where + "expects " + std::to_string(c.in_channels) +
                                  " input channels, got " + shape_string(shape));
              }
              if (c.stride == 0 || c.kernel_h == 0 || c.kernel_w == 0 || c.out_channels == 0) {
                throw ConfigError(where + "kernel, stride and channel counts must be positive");
              }
              const std::size_t oh = conv_out_extent(shape[1], c.kernel_h, c.stride, c.padding);
              const std::size_t ow = conv_out_extent(shape[2], c.kernel_w, c.stride, c.padding);
              if (oh == 0 || ow == 0) throw ConfigError(where + "kernel larger than padded input");
              for (std::size_t v : {c.kernel_h, c.kernel_w, c.in_channels, c.out_channels,
                                    c.stride, c.padding}) {
                sig = hash_combine(sig, v);
              }
              shape = {c.out_channels, oh, ow};
            },
            [&](const Dense& d) {
              if (shape.size() != 1 || shape[0] != d.in_features) {
                throw ConfigError(where + "expects " + std::to_string(d.in_features) +
                                  " flat features, got " + shape_string(shape));
              }
              if (d.out_features == 0) throw ConfigError(where + "out_features must be positive");
              sig = hash_combine(hash_combine(sig, d.in_features), d.out_features);
              shape = {d.out_features};
            },
            [&](const ReLU&) {},
            [&](const BatchNorm& b) {
              if (shape[0] != b.channels) {
                throw ConfigError(where + "expects " + std::to_string(b.channels) +
                                  " channels, got " + shape_string(shape));
              }
              if (!(b.epsilon > 0.0)) throw ConfigError(where + "epsilon must be positive");
              sig = hash_combine(sig, b.channels);
              layer.bn = {Tensor({b.channels}, 1.0), Tensor({b.channels}, 0.0),
                          Tensor({b.channels}, 0.0), Tensor({b.channels}, 1.0)};
            },
            [&](const Flatten&) { shape = {shape_product(shape)}; },
        },
        spec);
    if (is_parametric(spec)) {
      layer.weight = Tensor(weight_shape(spec));
      layer.bias = Tensor({weight_shape(spec)[0]});
      weight_layers_.push_back(i);
    }
    if (std::holds_alternative<BatchNorm>(spec)) bn_layers_.push_back(i);
    output_shapes_.push_back(shape);
    layers_.push_back(std::move(layer));
  }
  if (shape.size() != 1) {
    throw ConfigError("network output must be flat (class scores), got " + shape_string(shape));
  }
  if (weight_layers_.empty()) throw ConfigError("network has no Conv2D or Dense layer");
  num_classes_ = shape[0];
  signature_ = sig;
}

std::vector<LayerSpec> Network::specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers_.size());
  for (const Layer& l : layers_) out.push_back(l.spec);
  return out;
}

WeightSet Network::weights() const {
  WeightSet out;
  out.reserve(weight_layers_.size());
  for (std::size_t i : weight_layers_) out.push_back(layers_[i].weight);
  return out;
}

void Network::set_weights(const WeightSet& weights) {
  check_weights(*this, weights);
  for (std::size_t k = 0; k < weights.size(); ++k) layers_[weight_layers_[k]].weight = weights[k];
}

ForwardCache forward(const Network& net, const WeightSet& weights, const Tensor& batch,
                     Mode mode) {
  check_batch(net, batch);
  check_weights(net, weights);
  ForwardCache cache;
  cache.mode = mode;
  cache.signature = net.signature();
  cache.weights = weights;
  cache.activations.reserve(net.layers().size() + 1);
  cache.activations.push_back(batch);
  cache.bn.resize(net.layers().size());
  run_layers(net, weights, batch, 0, net.layers().size(), 0, mode, &cache.activations, &cache.bn);
  return cache;
}

Tensor infer(const Network& net, const WeightSet& weights, const Tensor& batch,
             std::size_t chunk) {
  check_batch(net, batch);
  check_weights(net, weights);
  const std::size_t n = batch.dim(0);
  chunk = std::max<std::size_t>(chunk, 1);
  Tensor out({n, net.num_classes()});
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    Tensor logits = run_layers(net, weights, slice_rows(batch, begin, end), 0,
                               net.layers().size(), 0, Mode::kInfer, nullptr, nullptr);
    std::copy(logits.values().begin(), logits.values().end(),
              out.data() + begin * net.num_classes());
  }
  return out;
}

Gradients backward(const Network& net, const ForwardCache& cache, const Tensor& loss_grad) {
  const auto& layers = net.layers();
  if (cache.signature != net.signature() || cache.activations.size() != layers.size() + 1 ||
      cache.bn.size() != layers.size() || cache.weights.size() != net.weight_layers().size()) {
    throw UsageError("forward cache does not belong to this network");
  }
  if (loss_grad.shape() != cache.logits().shape()) {
    throw UsageError("loss gradient shape " + shape_string(loss_grad.shape()) +
                     " does not match logits " + shape_string(cache.logits().shape()));
  }

  Gradients grads;
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    grads.weight.emplace_back(net.weight_layer(k).weight.shape());
    grads.bias.emplace_back(net.weight_layer(k).bias.shape());
  }
  for (std::size_t j : net.bn_layers()) {
    grads.gamma.emplace_back(layers[j].bn.gamma.shape());
    grads.beta.emplace_back(layers[j].bn.beta.shape());
  }

  std::size_t weight_index = net.weight_layers().size();
  std::size_t bn_index = net.bn_layers().size();
  Tensor dy = loss_grad;
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    const Layer& layer = layers[ii];
    const Tensor& x = cache.activations[ii];
    const bool need_dx = ii > 0;
    Tensor dx(x.shape());
    std::visit(Overloaded{
                   [&](const Conv2D& c) {
                     --weight_index;
                     conv_backward(c, x, cache.weights[weight_index], dy,
                                   grads.weight[weight_index], grads.bias[weight_index],
                                   need_dx ? &dx : nullptr);
                   },
                   [&](const Dense& d) {
                     --weight_index;
                     dense_backward(d, x, cache.weights[weight_index], dy,
                                    grads.weight[weight_index], grads.bias[weight_index],
                                    need_dx ? &dx : nullptr);
                   },
                   [&](const ReLU&) {
                     for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
                   },
                   [&](const BatchNorm& b) {
                     --bn_index;
                     const BatchNormBatch* batch =
                         cache.mode == Mode::kTrain ? &cache.bn[ii] : nullptr;
                     if (batch && batch->mean.size() != b.channels) {
                       throw UsageError("forward cache is missing batch statistics");
                     }
                     bn_backward(b, layer.bn, x, batch, dy, grads.gamma[bn_index],
                                 grads.beta[bn_index], dx);
                   },
                   [&](const Flatten&) { dx = dy.reshaped(x.shape()); },
               },
               layer.spec);
    if (need_dx) {
      if (!dx.all_finite()) {
        throw NumericError("non-finite gradient at layer " + std::to_string(ii),
                           static_cast<long>(ii));
      }
      dy = std::move(dx);
    }
  }
  return grads;
}

void apply_batch_stats(Network& net, const ForwardCache& cache) {
  if (cache.mode != Mode::kTrain || cache.signature != net.signature()) {
    throw UsageError("batch statistics require a train-mode cache from this network");
  }
  for (std::size_t j : net.bn_layers()) {
    Layer& layer = net.layers()[j];
    const double momentum = std::get<BatchNorm>(layer.spec).momentum;
    const BatchNormBatch& batch = cache.bn[j];
    for (std::size_t c = 0; c < batch.mean.size(); ++c) {
      layer.bn.running_mean[c] = momentum * layer.bn.running_mean[c] + (1.0 - momentum) * batch.mean[c];
      layer.bn.running_var[c] = momentum * layer.bn.running_var[c] + (1.0 - momentum) * batch.var[c];
    }
  }
}

LossResult square_hinge_loss(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape() || logits.rank() != 2) {
    throw InputError("logits " + shape_string(logits.shape()) + " and targets " +
                     shape_string(targets.shape()) + " must be matching N x classes tensors");
  }
  LossResult out{0.0, Tensor(logits.shape())};
  const double scale = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double t = targets[i];
    if (t != 1.0 && t != -1.0) throw InputError("hinge targets must be -1 or +1");
    const double margin = 1.0 - t * logits[i];
    if (margin > 0.0) {
      out.loss += margin * margin;
      out.grad[i] = -2.0 * t * margin * scale;
    }
  }
  out.loss *= scale;
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

Tensor one_vs_rest_targets(std::span<const int> labels, std::size_t classes) {
  Tensor t({labels.size(), classes}, -1.0);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] < 0 || static_cast<std::size_t>(labels[n]) >= classes) {
      throw InputError("label " + std::to_string(labels[n]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    t[n * classes + static_cast<std::size_t>(labels[n])] = 1.0;
  }
  return t;
}

void recompute_bn_stats(Network& net, const WeightSet& weights, const Tensor& data,
                        std::size_t chunk) {
  if (data.rank() == 0 || data.dim(0) == 0) throw InputError("BN recompute needs training data");
  check_batch(net, data);
  check_weights(net, weights);
  chunk = std::max<std::size_t>(chunk, 1);
  const std::size_t n_total = data.dim(0);

  for (std::size_t j : net.bn_layers()) {
    const std::size_t channels = std::get<BatchNorm>(net.layers()[j].spec).channels;
    // Per-chunk two-pass moments, merged exactly (Chan et al. pairwise update).
    std::vector<double> mean(channels, 0.0), m2(channels, 0.0);
    double count = 0.0;
    for (std::size_t begin = 0; begin < n_total; begin += chunk) {
      const std::size_t end = std::min(n_total, begin + chunk);
      const Tensor x = run_layers(net, weights, slice_rows(data, begin, end), 0, j, 0,
                                  Mode::kInfer, nullptr, nullptr);
      const auto [n_batch, ch, spatial] = channel_layout(x);
      const double n_b = static_cast<double>(n_batch * spatial);
      for (std::size_t c = 0; c < ch; ++c) {
        double sum = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* xc = x.data() + (n * ch + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) sum += xc[s];
        }
        const double mean_b = sum / n_b;
        double m2_b = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* xc = x.data() + (n * ch + c) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) m2_b += (xc[s] - mean_b) * (xc[s] - mean_b);
        }
        const double total = count + n_b;
        const double delta = mean_b - mean[c];
        mean[c] += delta * n_b / total;
        m2[c] += m2_b + delta * delta * count * n_b / total;
      }
      count += n_b;
    }
    BatchNormState& state = net.layers()[j].bn;
    for (std::size_t c = 0; c < channels; ++c) {
      state.running_mean[c] = mean[c];
      state.running_var[c] = m2[c] / count;
    }
  }
}

}  // namespace wproj
