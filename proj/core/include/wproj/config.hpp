#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wproj/dataset.hpp"
#include "wproj/nn.hpp"
#include "wproj/projections.hpp"
#include "wproj/tensor.hpp"
#include "wproj/trainer.hpp"

namespace wproj {

/// Layer list syntax, comma separated:
///   conv:KH-KW-IN-OUT[:sS][:pP]   fc:IN-OUT   bn   relu   flatten
/// BatchNorm channels are inferred from the preceding layer's output.
std::vector<LayerSpec> parse_layer_list(std::string_view text, const Tensor::Shape& input_shape);
std::string layer_list_string(const std::vector<LayerSpec>& specs);

/// "CxHxW", e.g. "3x32x32".
Tensor::Shape parse_input_shape(std::string_view text);
std::string input_shape_string(const Tensor::Shape& shape);

struct DataConfig {
  std::string source = "synthetic";  // synthetic | cifar10
  SyntheticKind kind = SyntheticKind::kStripes;
  std::size_t classes = 4;
  std::size_t train_size = 1000;
  std::size_t test_size = 500;
  double noise = 0.5;
  std::size_t size = 8;
  std::uint64_t seed = 1;
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;
  Preprocessing preprocess = Preprocessing::kNone;
  std::string whitening;  // optional matrix file, empty = none

  bool operator==(const DataConfig&) const = default;
};

struct NamedSweep {
  std::string name;
  ProjectionSpec distortion;  // kind plus fixed parameters
  std::vector<double> grid;
  std::size_t trials = 0;     // 0 = default for the kind

  bool operator==(const NamedSweep&) const = default;
};

/// Everything needed to reproduce one experiment. The text form is an INI-like
/// file with [experiment], [model], [train], [clip], [eval], [data] and
/// [sweep.NAME] sections; see parse_config().
struct ExperimentConfig {
  std::string name = "experiment";
  std::string out_dir = "out";
  Tensor::Shape input_shape{1, 8, 8};
  std::string layers;  // canonical layer list text
  /// Training settings. `train.seed` and `train.deterministic` double as the
  /// experiment-wide seed and determinism flag.
  TrainConfig train;
  std::size_t checkpoint_every = 0;  // epochs; 0 = only at the end
  std::vector<ProjectionSpec> eval_specs;
  DataConfig data;
  std::vector<NamedSweep> sweeps;

  std::vector<LayerSpec> layer_specs() const;
  /// Checks every field; throws ConfigError.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates. Unknown sections or keys, duplicate keys and bad
/// values throw ConfigError naming the line and key.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& cfg);

/// Overrides one key given as "section.key" (e.g. "train.epochs",
/// "sweep.noise.grid"), then re-validates.
void set_config_value(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value);

/// Hex FNV-1a hash of the canonical text.
std::string config_hash(const ExperimentConfig& cfg);

/// Named setups: tr-none-nc, tr-none-c, tr-sign-c, tr-stoch-c, tr-power-c,
/// tr-stochm-c, tr-stochm3-c (CIFAR-10 scale). Prefix with "toy-" for the
/// 8x8 synthetic version of the same training setup.
ExperimentConfig preset_config(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace wproj
