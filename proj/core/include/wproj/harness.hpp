#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wproj/dataset.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"

namespace wproj {

struct EvalOptions {
  /// Re-estimate BatchNorm statistics on the training split under the
  /// distorted weights before measuring. Disable only for diagnostics.
  bool recompute_bn = true;
  std::size_t chunk = 256;
};

/// Fraction of misclassified samples (argmax of logits, ties to the lower class).
double classification_error(const Network& net, const WeightSet& weights, const Dataset& data,
                            std::size_t chunk = 256);

/// Seed used for the i-th evaluation spec of a run.
std::uint64_t evaluation_seed(std::uint64_t seed, std::uint64_t index);

/// Test error of `net` under one draw of `spec` applied to its weights (biases
/// and BatchNorm affine parameters are left untouched). BatchNorm statistics are
/// recomputed on `train_data` for that draw.
double evaluate(const Network& net, const ProjectionSpec& spec, const Dataset& test_data,
                const Dataset& train_data, std::uint64_t seed, const EvalOptions& options = {});

struct SweepSpec {
  /// Kind plus any fixed parameters; the swept parameter is set per grid value.
  ProjectionSpec distortion;
  std::vector<double> grid;
  /// 0 selects the default: 5 for stochastic distortions, 1 otherwise.
  std::size_t trials = 0;
  std::uint64_t seed = 1;
  /// Grid points evaluated concurrently; results do not depend on this.
  std::size_t threads = 1;

  std::size_t effective_trials() const;
  void validate() const;
};

/// "start:stop:count" (inclusive, evenly spaced) or a comma-separated list.
std::vector<double> parse_grid(std::string_view text);

/// Default grid ranges for the sweepable kinds.
std::vector<double> default_grid(ProjectionKind kind);

struct SweepPoint {
  double parameter = 0.0;
  double mean_error = 0.0;
  double std_error = 0.0;  // sample standard deviation over trials
  std::size_t trials = 0;
  std::vector<double> errors;
};

struct SweepReport {
  std::string network_id;
  std::string distortion;  // kind name
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<SweepPoint> points;

  /// Header "parameter,mean_error,std_error,trials", preceded by a
  /// "# seed=..., config_hash=..." comment line.
  std::string to_csv() const;
  std::string to_json() const;
};

SweepReport sweep(const Network& net, const SweepSpec& spec, const Dataset& test_data,
                  const Dataset& train_data, const EvalOptions& options = {});

}  // namespace wproj
