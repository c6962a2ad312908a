#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wproj/tensor.hpp"

namespace wproj {

enum class Preprocessing { kNone, kGcn };

struct Dataset {
  Tensor images;            // N x C x H x W
  std::vector<int> labels;  // in [0, classes)
  std::string split;
  Preprocessing preprocessing = Preprocessing::kNone;
  std::size_t classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Samples selected by index, in order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

inline constexpr std::size_t kCifarRecordBytes = 3073;

/// Decodes CIFAR-10 binary records (1 label byte + 1024 R + 1024 G + 1024 B).
/// Rejects empty input, a size that is not a whole number of records, and
/// labels above 9. Pixels are scaled to [0, 1].
Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string split = "train");

Dataset load_cifar10(const std::filesystem::path& path, std::string split = "train");
Dataset load_cifar10(std::span<const std::filesystem::path> paths, std::string split = "train");

/// Per image: subtract its mean and divide by max(std, epsilon).
Dataset gcn_normalize(Dataset ds, double epsilon = 1e-8);

/// Optional ZCA-style hook: x <- M (x - mu) with an externally computed matrix.
/// File layout: u32 dim, dim f64 mean values, dim*dim f64 row-major matrix, little-endian.
Dataset apply_whitening(Dataset ds, const std::filesystem::path& matrix_file);

enum class SyntheticKind { kBlobs, kStripes };

SyntheticKind parse_synthetic_kind(std::string_view name);
std::string_view synthetic_kind_name(SyntheticKind kind);

struct SyntheticOptions {
  SyntheticKind kind = SyntheticKind::kStripes;
  std::size_t n = 1000;
  std::size_t classes = 4;
  std::uint64_t seed = 1;
  /// Independent sample draws for the same task (e.g. 0 = train, 1 = test).
  std::uint64_t split = 0;
  double noise = 0.5;
  std::size_t size = 8;  // images are 1 x size x size
};

/// Small separable image classification task. Class c owns n/classes samples
/// (labels cycle 0..classes-1). Blobs: a fixed random prototype per class plus
/// Gaussian noise. Stripes: a class-specific orientation of a sinusoidal
/// grating with random phase plus Gaussian noise.
Dataset synthetic_dataset(const SyntheticOptions& options);

/// Class prototypes used by the blobs generator (classes x 1 x size x size).
/// They depend on the seed only, so every split of a task shares them.
Tensor blob_prototypes(std::size_t classes, std::size_t size, std::uint64_t seed);

}  // namespace wproj
