#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "wproj/dataset.hpp"
#include "wproj/error.hpp"

using namespace wproj;

namespace {

/// Record r: label r+3; channel c, pixel p -> (p + 7 c + 11 r) mod 256.
std::vector<std::uint8_t> two_records() {
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < 2; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(r + 3));
    for (int c = 0; c < 3; ++c)
      for (int p = 0; p < 1024; ++p) bytes.push_back(static_cast<std::uint8_t>((p + 7 * c + 11 * r) % 256));
  }
  return bytes;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Cifar, ParsesHandBuiltRecordsExactly) {
  const Dataset ds = parse_cifar10(two_records(), "test");
  ASSERT_EQ(ds.size(), 2U);
  EXPECT_EQ(ds.images.shape(), (Tensor::Shape{2, 3, 32, 32}));
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 4}));
  EXPECT_EQ(ds.split, "test");
  EXPECT_EQ(ds.classes, 10U);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < 1024; ++p) {
        const double expected = static_cast<double>((p + 7 * c + 11 * r) % 256) / 255.0;
        ASSERT_EQ(ds.images[(r * 3 + c) * 1024 + p], expected);
      }
}

TEST(Cifar, RejectsMalformedInput) {
  EXPECT_THROW(parse_cifar10({}), FormatError);
  auto bytes = two_records();
  bytes.pop_back();
  EXPECT_THROW(parse_cifar10(bytes), FormatError);
  bytes = two_records();
  bytes[kCifarRecordBytes] = 10;
  EXPECT_THROW(parse_cifar10(bytes), FormatError);
}

TEST(Cifar, LoadsFilesAndConcatenates) {
  const std::filesystem::path dir = fixture::temp_dir("cifar");
  write_bytes(dir / "a.bin", two_records());
  write_bytes(dir / "b.bin", two_records());
  const Dataset one = load_cifar10(dir / "a.bin");
  EXPECT_EQ(one, parse_cifar10(two_records()));
  const std::vector<std::filesystem::path> files = {dir / "a.bin", dir / "b.bin"};
  const Dataset both = load_cifar10(files);
  EXPECT_EQ(both.size(), 4U);
  EXPECT_EQ(both.labels, (std::vector<int>{3, 4, 3, 4}));
  auto truncated = two_records();
  truncated.resize(4000);
  write_bytes(dir / "t.bin", truncated);
  EXPECT_THROW(load_cifar10(dir / "t.bin"), FormatError);
  EXPECT_THROW(load_cifar10(dir / "missing.bin"), FormatError);
}

TEST(Cifar, RandomBytesNeverYieldGarbage) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t size = rng() % (3 * kCifarRecordBytes + 5);
    if (trial % 3 == 0) size = kCifarRecordBytes * (1 + rng() % 2);
    std::vector<std::uint8_t> bytes(size);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    if (trial % 6 == 0) {
      for (std::size_t r = 0; r < size / kCifarRecordBytes; ++r) bytes[r * kCifarRecordBytes] %= 10;
    }
    try {
      const Dataset ds = parse_cifar10(bytes);
      ASSERT_EQ(ds.size() * kCifarRecordBytes, size);
      for (int l : ds.labels) ASSERT_TRUE(l >= 0 && l <= 9);
      for (double v : ds.images.values()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    } catch (const FormatError&) {
    }
  }
}

TEST(Gcn, MatchesTwoPassOracle) {
  Dataset ds = fixture::toy_data(0, 20);
  const Dataset before = ds;
  ds = gcn_normalize(std::move(ds));
  EXPECT_EQ(ds.preprocessing, Preprocessing::kGcn);
  const std::size_t per = 64;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const auto expected = oracle::gcn_two_pass(
        std::span<const double>(before.images.data() + n * per, per), 1e-8);
    double mean = 0.0, sq = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double v = ds.images[n * per + j];
      EXPECT_NEAR(v, expected[j], 1e-12);
      mean += v;
      sq += v * v;
    }
    EXPECT_LT(std::abs(mean / per), 1e-10);
    EXPECT_NEAR(std::sqrt(sq / per), 1.0, 1e-10);
  }
}

TEST(Gcn, ConstantImageBecomesZero) {
  Dataset ds;
  ds.images = Tensor({1, 1, 2, 2}, 0.7);
  ds.labels = {0};
  ds.classes = 1;
  ds = gcn_normalize(std::move(ds));
  for (double v : ds.images.values()) EXPECT_EQ(v, 0.0);
}

TEST(Whitening, AppliesExternalMatrix) {
  const std::filesystem::path dir = fixture::temp_dir("whiten");
  Dataset ds;
  ds.images = Tensor({2, 1, 1, 2}, std::vector<double>{1, 2, 3, 4});
  ds.labels = {0, 1};
  ds.classes = 2;
  // mean (1, 1), matrix [[2, 0], [1, 1]]
  std::vector<std::uint8_t> bytes(4 + 8 * 6);
  const std::uint32_t dim = 2;
  std::memcpy(bytes.data(), &dim, 4);
  const double values[6] = {1, 1, 2, 0, 1, 1};
  std::memcpy(bytes.data() + 4, values, sizeof(values));
  write_bytes(dir / "m.bin", bytes);
  const Dataset w = apply_whitening(ds, dir / "m.bin");
  EXPECT_EQ(w.images.values()[0], 0.0);
  EXPECT_EQ(w.images.values()[1], 1.0);
  EXPECT_EQ(w.images.values()[2], 4.0);
  EXPECT_EQ(w.images.values()[3], 5.0);
  bytes.pop_back();
  write_bytes(dir / "bad.bin", bytes);
  EXPECT_THROW(apply_whitening(ds, dir / "bad.bin"), FormatError);
}

TEST(Synthetic, DeterministicAndBalanced) {
  for (SyntheticKind kind : {SyntheticKind::kBlobs, SyntheticKind::kStripes}) {
    SyntheticOptions o;
    o.kind = kind;
    o.n = 400;
    o.classes = 4;
    EXPECT_EQ(synthetic_dataset(o), synthetic_dataset(o));
    const Dataset ds = synthetic_dataset(o);
    EXPECT_EQ(ds.images.shape(), (Tensor::Shape{400, 1, 8, 8}));
    std::vector<int> count(4, 0);
    for (int l : ds.labels) ++count[static_cast<std::size_t>(l)];
    for (int c : count) EXPECT_EQ(c, 100);
    o.split = 1;
    EXPECT_NE(synthetic_dataset(o).images, ds.images);
  }
  EXPECT_EQ(parse_synthetic_kind("blobs"), SyntheticKind::kBlobs);
  EXPECT_THROW(parse_synthetic_kind("rings"), InputError);
  SyntheticOptions bad;
  bad.n = 2;
  EXPECT_THROW(synthetic_dataset(bad), InputError);
}

TEST(Synthetic, NoiselessBlobsAreCentroidSeparable) {
  SyntheticOptions o;
  o.kind = SyntheticKind::kBlobs;
  o.noise = 0.0;
  o.n = 200;
  o.classes = 5;
  const Dataset train = synthetic_dataset(o);
  o.split = 1;
  const Dataset test = synthetic_dataset(o);
  EXPECT_EQ(oracle::nearest_centroid_accuracy(train, test), 1.0);
}

TEST(Subset, SelectsInOrder) {
  const Dataset ds = fixture::toy_data(0, 8);
  const std::vector<std::size_t> idx = {5, 1};
  const Dataset s = subset(ds, idx);
  EXPECT_EQ(s.labels, (std::vector<int>{ds.labels[5], ds.labels[1]}));
  EXPECT_EQ(s.images[0], ds.images[5 * 64]);
}
