#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wproj/dataset.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"

namespace wproj {

/// 0.5 * log2(1 + q_w / q_n). q_n == 0 gives +inf.
double effective_bits(double q_w, double q_n);

struct LayerBits {
  std::string layer;
  std::size_t count = 0;
  double q_w = 0.0;
  double q_n = 0.0;
  double bits = 0.0;
};

struct BitsReport {
  std::string distortion;
  std::vector<LayerBits> layers;
  /// Weight-count-weighted mean of the per-layer bits.
  double weighted_bits = 0.0;
  /// Bits from second moments pooled over every weight of the network.
  double pooled_q_w = 0.0;
  double pooled_q_n = 0.0;
  double pooled_bits = 0.0;

  std::string to_json() const;
};

/// Second moment of the noise a distortion adds to a layer with weight second
/// moment q_w and normalization alpha. AddNorm: (alpha * sigma)^2. MultUnif:
/// q_w * E[(U - 1)^2] with U ~ U(gamma, 1/gamma).
double noise_second_moment(const ProjectionSpec& noise, double q_w, double alpha);

/// Q_w is measured as the mean of w^2 per layer; Q_n follows from the spec.
BitsReport bits_report(const Network& net, const ProjectionSpec& noise);

/// "conv1", "conv2", ..., "fc1", ... in network order.
std::vector<std::string> weight_layer_names(const Network& net);

/// Per layer mean |w - project(w)|. Only deterministic specs are accepted.
std::vector<double> weight_gap(const Network& net, const ProjectionSpec& spec);

/// Pearson correlation; nullopt if either input has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

/// Per parametric layer: correlation between the activity at the end of that
/// layer's block (after its BatchNorm/ReLU, if any) under the stored weights and
/// under project(W, spec). Both passes run in infer mode. When `bn_data` is
/// given, each weight set first gets BatchNorm statistics recomputed on it.
std::vector<std::optional<double>> activation_correlation(const Network& net,
                                                          const ProjectionSpec& spec,
                                                          const Tensor& batch, std::uint64_t seed,
                                                          const Dataset* bn_data = nullptr);

struct Histogram {
  std::vector<double> edges;  // bins + 1 values
  std::vector<std::size_t> counts;

  /// Columns bin_left, bin_right, count.
  std::string to_csv() const;
};

/// Equal-width bins over [min, max]; the last bin includes max. A constant
/// input puts every value in the first bin.
Histogram weight_histogram(std::span<const double> values, std::size_t bins);

struct LayerDiagnostics {
  std::string layer;
  double weight_gap = 0.0;
  std::optional<double> correlation;
  Histogram histogram;
};

std::string diagnostics_to_json(const std::vector<LayerDiagnostics>& layers,
                                const std::string& spec_name, std::uint64_t seed,
                                const std::string& config_hash);

}  // namespace wproj
