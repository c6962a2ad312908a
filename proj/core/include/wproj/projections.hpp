#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wproj/nn.hpp"
#include "wproj/rng.hpp"
#include "wproj/tensor.hpp"

namespace wproj {

enum class ProjectionKind {
  kNone,
  kSign,
  kRound,
  kPower,
  kStoch,
  kStochM,
  kStochM3,
  kAddNorm,
  kMultUnif,
};

/// Where a projection is meant to be used: during training, as a test-time
/// distortion, or both. Mismatched use is reported as a warning only.
enum class ProjectionUse { kTrain, kTest, kBoth };

std::string_view kind_name(ProjectionKind kind);
ProjectionKind parse_kind(std::string_view name);
ProjectionUse projection_use(ProjectionKind kind);
bool usable_for_training(ProjectionKind kind);
bool usable_for_testing(ProjectionKind kind);

/// A projection (or distortion) and its parameter. Only the parameter relevant
/// to `kind` is read: beta for Power, gamma for StochM/StochM3/MultUnif, sigma
/// for AddNorm.
struct ProjectionSpec {
  ProjectionKind kind = ProjectionKind::kNone;
  double beta = 1.0;
  double gamma = 1.0;
  double sigma = 0.0;
  /// Power only: draw beta ~ U[0, 2] once per minibatch (or per evaluation).
  bool sample_beta = false;

  bool is_stochastic() const noexcept;

  /// Throws InputError for out-of-range parameters.
  void validate() const;

  /// Canonical text form, e.g. "sign", "power:beta=0.5", "power:sample",
  /// "stochm:gamma=0.5", "addnorm:sigma=0.3". Parses back with parse_projection.
  std::string to_string() const;

  bool operator==(const ProjectionSpec&) const = default;
};

ProjectionSpec parse_projection(std::string_view text);

/// Copy of `spec` whose parameter is replaced by `value` (beta, gamma or sigma
/// depending on the kind). Used by parameter sweeps.
ProjectionSpec with_parameter(ProjectionSpec spec, double value);

/// max_i |w_i|; 0 for empty or all-zero input.
double layer_alpha(std::span<const double> w);
inline double layer_alpha(const Tensor& w) { return layer_alpha(w.values()); }

/// Applies `spec` elementwise with alpha = layer_alpha(w). A layer with alpha == 0
/// maps to all zeros for every alpha-normalized kind. For Power with
/// sample_beta set, beta is drawn from `rng` before projecting.
Tensor project(const Tensor& w, const ProjectionSpec& spec, Rng& rng);

/// Three-state StochM: values strictly between the 25th and 75th percentile of
/// the layer (value order, linear interpolation) are zeroed with probability
/// 0.5; everything else follows the StochM rule.
Tensor stochm3(const Tensor& w, double gamma, Rng& rng);

/// Percentile of already sorted values with linear interpolation between ranks.
double sorted_percentile(std::span<const double> sorted, double q);

/// Closed-form E[project(w)] for Stoch (= w) and StochM (= (w^2/alpha)(gamma + 1/gamma)/2).
double expected_projection(double w, double alpha, const ProjectionSpec& spec);

struct GlorotInit {
  Tensor weight;
  double init_std = 0.0;
};

/// Normal draws with std sqrt(2 / (fan_in + fan_out)).
GlorotInit glorot_init(const LayerSpec& spec, Rng& rng);

/// Builds a network and initializes every parametric layer from its own
/// stream of `seed`. Biases start at zero; BatchNorm at gamma 1, beta 0.
Network make_network(Tensor::Shape input_shape, std::vector<LayerSpec> specs,
                     std::uint64_t seed);

/// Projects every layer of `net`. Layer k draws from the stream keyed by
/// (seed, step, k); a sampled Power beta is drawn once and shared by all layers.
WeightSet project_weights(const Network& net, const ProjectionSpec& spec, std::uint64_t seed,
                          std::uint64_t step);

}  // namespace wproj
