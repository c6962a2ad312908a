#include "wproj/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wproj/error.hpp"
#include "wproj/report.hpp"

namespace wproj {
namespace {

enum class LayerTag : std::uint8_t { kConv = 0, kDense = 1, kReLU = 2, kBatchNorm = 3, kFlatten = 4 };

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void size(std::size_t v) {
    if (v > 0xffffffffULL) throw FormatError("value too large for checkpoint field");
    u32(static_cast<std::uint32_t>(v));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f32s(const Tensor& t) {
    for (double v : t.values()) f32(v);
  }
  void f64s(const Tensor& t) {
    for (double v : t.values()) f64(v);
  }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  void f32s(Tensor& t) {
    for (double& v : t.values()) v = f32();
  }
  void f64s(Tensor& t) {
    for (double& v : t.values()) v = f64();
  }
  std::string str(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (n > remaining()) {
      throw FormatError("checkpoint truncated at byte " + std::to_string(pos_) + " (needs " +
                        std::to_string(n) + " more)");
    }
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void write_spec(Writer& w, const LayerSpec& spec) {
  if (const auto* c = std::get_if<Conv2D>(&spec)) {
    w.u8(static_cast<std::uint8_t>(LayerTag::kConv));
    for (std::size_t v : {c->kernel_h, c->kernel_w, c->in_channels, c->out_channels, c->stride,
                          c->padding}) {
      w.size(v);
    }
  } else if (const auto* d = std::get_if<Dense>(&spec)) {
    w.u8(static_cast<std::uint8_t>(LayerTag::kDense));
    w.size(d->in_features);
    w.size(d->out_features);
  } else if (std::holds_alternative<ReLU>(spec)) {
    w.u8(static_cast<std::uint8_t>(LayerTag::kReLU));
  } else if (const auto* b = std::get_if<BatchNorm>(&spec)) {
    w.u8(static_cast<std::uint8_t>(LayerTag::kBatchNorm));
    w.size(b->channels);
    w.f64(b->epsilon);
    w.f64(b->momentum);
  } else {
    w.u8(static_cast<std::uint8_t>(LayerTag::kFlatten));
  }
}

LayerSpec read_spec(Reader& r) {
  const std::uint8_t tag = r.u8();
  switch (static_cast<LayerTag>(tag)) {
    case LayerTag::kConv: {
      Conv2D c;
      c.kernel_h = r.u32();
      c.kernel_w = r.u32();
      c.in_channels = r.u32();
      c.out_channels = r.u32();
      c.stride = r.u32();
      c.padding = r.u32();
      return c;
    }
    case LayerTag::kDense: {
      Dense d;
      d.in_features = r.u32();
      d.out_features = r.u32();
      return d;
    }
    case LayerTag::kReLU:
      return ReLU{};
    case LayerTag::kBatchNorm: {
      BatchNorm b;
      b.channels = r.u32();
      b.epsilon = r.f64();
      b.momentum = r.f64();
      return b;
    }
    case LayerTag::kFlatten:
      return Flatten{};
  }
  throw FormatError("unknown layer tag " + std::to_string(tag) + " at byte " +
                    std::to_string(r.offset() - 1));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  const Network& net = ckpt.state.net;
  Writer w;
  w.raw(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.u32(kCheckpointVersion);
  w.u32(ckpt.has_training_state ? 1U : 0U);
  w.u64(ckpt.seed);
  for (std::size_t d : net.input_shape()) w.size(d);
  w.size(net.layers().size());
  for (const Layer& layer : net.layers()) write_spec(w, layer.spec);
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    const Layer& layer = net.weight_layer(k);
    w.f64(layer.init_std);
    w.f32s(layer.weight);
    w.f32s(layer.bias);
  }
  for (std::size_t j : net.bn_layers()) {
    const BatchNormState& bn = net.layers()[j].bn;
    for (const Tensor* t : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) w.f32s(*t);
  }
  w.size(ckpt.config_text.size());
  w.raw(ckpt.config_text);

  if (ckpt.has_training_state) {
    const TrainState& s = ckpt.state;
    if (s.clip_bounds.size() != net.weight_layers().size()) {
      throw UsageError("training state has no clip bounds for every layer");
    }
    w.u64(s.step);
    w.u64(s.epoch);
    w.u64(s.adam.t);
    for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
      w.f64(s.clip_bounds[k]);
      w.f64s(net.weight_layer(k).weight);
      w.f64s(net.weight_layer(k).bias);
    }
    for (std::size_t j : net.bn_layers()) {
      const BatchNormState& bn = net.layers()[j].bn;
      for (const Tensor* t : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) w.f64s(*t);
    }
    w.size(s.adam.m.size());
    for (std::size_t p = 0; p < s.adam.m.size(); ++p) {
      w.size(s.adam.m[p].size());
      w.f64s(s.adam.m[p]);
      w.f64s(s.adam.v[p]);
    }
  }
  const std::uint64_t sum = checksum(w.bytes());
  w.u64(sum);
  return std::move(w.bytes());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) + 8 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    const std::size_t n = std::min(bytes.size(), sizeof(kCheckpointMagic));
    throw FormatError("bad checkpoint magic: expected 'WPRJCKPT', found '" +
                      std::string(reinterpret_cast<const char*>(bytes.data()), n) + "'");
  }
  Reader r(bytes.first(bytes.size() - 8));
  r.str(sizeof(kCheckpointMagic));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version: expected " +
                      std::to_string(kCheckpointVersion) + ", found " + std::to_string(version));
  }
  Reader tail(bytes.last(8));
  const std::uint64_t stored_sum = tail.u64();
  const std::uint64_t actual_sum = checksum(bytes.first(bytes.size() - 8));
  if (stored_sum != actual_sum) {
    throw FormatError("checkpoint checksum mismatch: expected " + hex64(stored_sum) +
                      ", found " + hex64(actual_sum));
  }

  Checkpoint ckpt;
  const std::uint32_t flags = r.u32();
  if (flags > 1) throw FormatError("unknown checkpoint flags " + std::to_string(flags));
  ckpt.has_training_state = (flags & 1U) != 0;
  ckpt.seed = r.u64();
  Tensor::Shape input{r.u32(), r.u32(), r.u32()};
  const std::uint32_t layer_count = r.u32();
  if (layer_count > r.remaining()) throw FormatError("implausible layer count");
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < layer_count; ++i) specs.push_back(read_spec(r));

  Network net;
  try {
    net = Network(input, specs);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint architecture is invalid: ") + e.what());
  }
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    Layer& layer = net.weight_layer(k);
    layer.init_std = r.f64();
    if (layer.weight.size() * 4 > r.remaining()) throw FormatError("checkpoint truncated");
    r.f32s(layer.weight);
    r.f32s(layer.bias);
  }
  for (std::size_t j : net.bn_layers()) {
    BatchNormState& bn = net.layers()[j].bn;
    for (Tensor* t : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) r.f32s(*t);
  }
  const std::uint32_t config_len = r.u32();
  ckpt.config_text = r.str(config_len);

  if (ckpt.has_training_state) {
    TrainState& s = ckpt.state;
    s.step = r.u64();
    s.epoch = r.u64();
    s.adam.t = r.u64();
    for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
      s.clip_bounds.push_back(r.f64());
      r.f64s(net.weight_layer(k).weight);
      r.f64s(net.weight_layer(k).bias);
    }
    for (std::size_t j : net.bn_layers()) {
      BatchNormState& bn = net.layers()[j].bn;
      for (Tensor* t : {&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var}) r.f64s(*t);
    }
    const std::uint32_t moments = r.u32();
    std::vector<Tensor> grads_shape_source;
    std::vector<Tensor*> params = parameter_list(net);
    if (moments != 0 && moments != params.size()) {
      throw FormatError("checkpoint has " + std::to_string(moments) + " moment tensors, expected " +
                        std::to_string(params.size()));
    }
    for (std::uint32_t p = 0; p < moments; ++p) {
      const std::uint32_t size = r.u32();
      if (size != params[p]->size()) {
        throw FormatError("moment tensor " + std::to_string(p) + " has " + std::to_string(size) +
                          " values, expected " + std::to_string(params[p]->size()));
      }
      Tensor m(params[p]->shape()), v(params[p]->shape());
      r.f64s(m);
      r.f64s(v);
      s.adam.m.push_back(std::move(m));
      s.adam.v.push_back(std::move(v));
    }
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  ckpt.state.net = std::move(net);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  return decode_checkpoint(bytes);
}

}  // namespace wproj
