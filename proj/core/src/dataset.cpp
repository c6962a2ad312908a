#include "wproj/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "wproj/error.hpp"
#include "wproj/rng.hpp"

namespace wproj {
namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::uint64_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

double read_f64(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.images = gather_rows(ds.images, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(ds.labels.at(i));
  out.split = ds.split;
  out.preprocessing = ds.preprocessing;
  out.classes = ds.classes;
  return out;
}

Dataset parse_cifar10(std::span<const std::uint8_t> bytes, std::string split) {
  if (bytes.empty()) throw FormatError("CIFAR-10 data is empty");
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError("CIFAR-10 data size " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(kCifarRecordBytes));
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset ds;
  ds.images = Tensor({n, 3, kCifarSide, kCifarSide});
  ds.labels.resize(n);
  ds.split = std::move(split);
  ds.classes = 10;
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
    }
    ds.labels[r] = rec[0];
    double* out = ds.images.data() + r * kCifarPixels;
    for (std::size_t i = 0; i < kCifarPixels; ++i) out[i] = rec[1 + i] / 255.0;
  }
  return ds;
}

Dataset load_cifar10(const std::filesystem::path& path, std::string split) {
  const auto bytes = read_file(path);
  try {
    return parse_cifar10(bytes, std::move(split));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Dataset load_cifar10(std::span<const std::filesystem::path> paths, std::string split) {
  if (paths.empty()) throw FormatError("no CIFAR-10 files given");
  std::vector<std::uint8_t> all;
  for (const auto& p : paths) {
    auto bytes = read_file(p);
    if (bytes.size() % kCifarRecordBytes != 0 || bytes.empty()) {
      throw FormatError(p.string() + ": size " + std::to_string(bytes.size()) +
                        " is not a positive multiple of " + std::to_string(kCifarRecordBytes));
    }
    all.insert(all.end(), bytes.begin(), bytes.end());
  }
  return parse_cifar10(all, std::move(split));
}

Dataset gcn_normalize(Dataset ds, double epsilon) {
  const std::size_t n = ds.images.dim(0);
  const std::size_t per = n ? ds.images.size() / n : 0;
  for (std::size_t i = 0; i < n; ++i) {
    double* x = ds.images.data() + i * per;
    double sum = 0.0;
    for (std::size_t j = 0; j < per; ++j) sum += x[j];
    const double mean = sum / static_cast<double>(per);
    double sq = 0.0;
    for (std::size_t j = 0; j < per; ++j) sq += (x[j] - mean) * (x[j] - mean);
    const double scale = std::max(std::sqrt(sq / static_cast<double>(per)), epsilon);
    for (std::size_t j = 0; j < per; ++j) x[j] = (x[j] - mean) / scale;
  }
  ds.preprocessing = Preprocessing::kGcn;
  return ds;
}

Dataset apply_whitening(Dataset ds, const std::filesystem::path& matrix_file) {
  const auto bytes = read_file(matrix_file);
  if (bytes.size() < 4) throw FormatError(matrix_file.string() + ": truncated whitening file");
  const std::size_t dim = read_u32(bytes, 0);
  if (bytes.size() != 4 + 8 * (dim + dim * dim)) {
    throw FormatError(matrix_file.string() + ": size does not match dimension " +
                      std::to_string(dim));
  }
  const std::size_t n = ds.images.dim(0);
  const std::size_t per = n ? ds.images.size() / n : 0;
  if (per != dim) {
    throw FormatError("whitening dimension " + std::to_string(dim) + " does not match " +
                      std::to_string(per) + " values per image");
  }
  std::vector<double> centered(dim);
  for (std::size_t i = 0; i < n; ++i) {
    double* x = ds.images.data() + i * per;
    for (std::size_t j = 0; j < dim; ++j) centered[j] = x[j] - read_f64(bytes, 4 + 8 * j);
    for (std::size_t r = 0; r < dim; ++r) {
      double acc = 0.0;
      const std::size_t row = 4 + 8 * (dim + r * dim);
      for (std::size_t c = 0; c < dim; ++c) acc += read_f64(bytes, row + 8 * c) * centered[c];
      x[r] = acc;
    }
  }
  return ds;
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
  if (name == "blobs") return SyntheticKind::kBlobs;
  if (name == "stripes") return SyntheticKind::kStripes;
  throw InputError("unknown synthetic dataset kind '" + std::string(name) + "'");
}

std::string_view synthetic_kind_name(SyntheticKind kind) {
  return kind == SyntheticKind::kBlobs ? "blobs" : "stripes";
}

Tensor blob_prototypes(std::size_t classes, std::size_t size, std::uint64_t seed) {
  Tensor protos({classes, 1, size, size});
  for (std::size_t c = 0; c < classes; ++c) {
    Rng rng = make_stream(seed, StreamPurpose::kData, 0xb10b, c);
    for (std::size_t i = 0; i < size * size; ++i) protos[c * size * size + i] = standard_normal(rng);
  }
  return protos;
}

Dataset synthetic_dataset(const SyntheticOptions& o) {
  if (o.classes == 0 || o.n < o.classes) {
    throw InputError("synthetic dataset needs n >= classes >= 1");
  }
  if (o.size == 0 || !(o.noise >= 0.0)) throw InputError("synthetic dataset size/noise invalid");
  const std::size_t pixels = o.size * o.size;
  Dataset ds;
  ds.images = Tensor({o.n, 1, o.size, o.size});
  ds.labels.resize(o.n);
  ds.split = o.split == 0 ? "train" : "test";
  ds.classes = o.classes;

  const Tensor protos = o.kind == SyntheticKind::kBlobs ? blob_prototypes(o.classes, o.size, o.seed)
                                                        : Tensor();
  Rng rng = make_stream(o.seed, StreamPurpose::kData, 0x5a3b1e, o.split);
  const double two_pi = 2.0 * std::numbers::pi;
  const double freq = 1.5;
  for (std::size_t i = 0; i < o.n; ++i) {
    const std::size_t label = i % o.classes;
    ds.labels[i] = static_cast<int>(label);
    double* x = ds.images.data() + i * pixels;
    if (o.kind == SyntheticKind::kBlobs) {
      for (std::size_t p = 0; p < pixels; ++p) x[p] = protos[label * pixels + p];
    } else {
      const double theta = std::numbers::pi * static_cast<double>(label) / static_cast<double>(o.classes);
      const double phase = uniform(rng, 0.0, two_pi);
      for (std::size_t yy = 0; yy < o.size; ++yy) {
        for (std::size_t xx = 0; xx < o.size; ++xx) {
          const double u = static_cast<double>(xx) * std::cos(theta) +
                           static_cast<double>(yy) * std::sin(theta);
          x[yy * o.size + xx] = std::sin(two_pi * freq * u / static_cast<double>(o.size) + phase);
        }
      }
    }
    if (o.noise > 0.0) {
      for (std::size_t p = 0; p < pixels; ++p) x[p] += o.noise * standard_normal(rng);
    }
  }
  return ds;
}

}  // namespace wproj
