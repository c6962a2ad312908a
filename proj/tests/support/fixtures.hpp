#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "wproj/config.hpp"
#include "wproj/dataset.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"
#include "wproj/tensor.hpp"

namespace fixture {

inline wproj::Tensor random_tensor(wproj::Tensor::Shape shape, std::uint64_t seed, double lo = -1.0,
                                   double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  wproj::Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

/// Two convolutions and one dense layer over 4x8x8 inputs, with BatchNorm.
inline constexpr const char* kSmallLayers =
    "conv:3-3-4-5:s1:p1, bn, relu, conv:3-3-5-6:s2:p1, bn, relu, flatten, fc:96-3, bn";

inline constexpr const char* kToyLayers =
    "conv:3-3-1-8:s1:p1, bn, relu, conv:3-3-8-16:s2:p1, bn, relu, flatten, fc:256-4, bn";

inline wproj::Network small_net(std::uint64_t seed) {
  const wproj::Tensor::Shape input{4, 8, 8};
  return wproj::make_network(input, wproj::parse_layer_list(kSmallLayers, input), seed);
}

inline wproj::Network toy_net(std::uint64_t seed) {
  const wproj::Tensor::Shape input{1, 8, 8};
  return wproj::make_network(input, wproj::parse_layer_list(kToyLayers, input), seed);
}

inline wproj::Dataset toy_data(std::uint64_t split, std::size_t n, std::uint64_t seed = 1) {
  wproj::SyntheticOptions o;
  o.n = n;
  o.seed = seed;
  o.split = split;
  return wproj::synthetic_dataset(o);
}

/// Fresh scratch directory under the system temp dir.
std::string temp_dir(const std::string& name);

}  // namespace fixture
