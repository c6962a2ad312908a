#pragma once

// Independent reference implementations used to check the library. They favour
// obviousness over speed and share no code with the implementations under test.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "wproj/dataset.hpp"
#include "wproj/nn.hpp"
#include "wproj/tensor.hpp"

namespace oracle {

using wproj::Tensor;

/// Direct-summation convolution of x (N,C,H,W) with w (O,C,KH,KW) plus bias.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad);

/// y = x w^T + b for x (N, in), w (out, in).
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

/// Central difference of f with respect to every element of `param`
/// (perturbed in place and restored).
Tensor central_difference(const std::function<double()>& f, Tensor& param, double h);

/// Percentile by explicit rank interpolation on a copy of the values.
double percentile(std::vector<double> values, double q);

/// argmin of f over `steps` evenly spaced points in [lo, hi].
double grid_argmin(const std::function<double(double)>& f, double lo, double hi,
                   std::size_t steps);

/// Accuracy of a nearest-class-mean classifier fit on `train`, scored on `test`.
double nearest_centroid_accuracy(const wproj::Dataset& train, const wproj::Dataset& test);

/// Per-image (x - mean) / max(std, eps), mean and variance from two passes.
std::vector<double> gcn_two_pass(std::span<const double> image, double eps);

/// Plain ADAM (bias corrected) applied in place; one call per step.
struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
};

/// Mean of max(0, 1 - t o)^2 over every entry, computed directly.
double square_hinge(const Tensor& logits, const Tensor& targets);

}  // namespace oracle
