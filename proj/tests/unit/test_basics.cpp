#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "wproj/error.hpp"
#include "wproj/report.hpp"
#include "wproj/rng.hpp"
#include "wproj/tensor.hpp"

using namespace wproj;

TEST(Tensor, ShapesAndRows) {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2U);
  EXPECT_EQ(t.size(), 6U);
  EXPECT_EQ(shape_string(t.shape()), "(2x3)");
  EXPECT_EQ(slice_rows(t, 1, 2).values()[0], 4.0);
  const std::vector<std::size_t> rows = {1, 0};
  EXPECT_EQ(gather_rows(t, rows).values()[0], 4.0);
  EXPECT_EQ(t.reshaped({3, 2}).dim(0), 3U);
  EXPECT_ANY_THROW(t.reshaped({4, 2}));
  EXPECT_TRUE(t.all_finite());
  t[0] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(t.all_finite());
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  Rng a = make_stream(1, StreamPurpose::kProjection, 3, 4);
  Rng b = make_stream(1, StreamPurpose::kProjection, 3, 4);
  Rng c = make_stream(1, StreamPurpose::kProjection, 4, 3);
  Rng d = make_stream(1, StreamPurpose::kShuffle, 3, 4);
  const auto x = a();
  EXPECT_EQ(x, b());
  EXPECT_NE(x, c());
  EXPECT_NE(x, d());
  EXPECT_NE(mix_seed(1, {2}), mix_seed(2, {1}));
}

TEST(Report, NumberFormatting) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::numeric_limits<double>::infinity()), "inf");
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_ANY_THROW(parse_double("abc"));
  EXPECT_ANY_THROW(parse_double("1.5x"));
  EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
}

TEST(Report, AtomicWriteCreatesDirectories) {
  const std::string dir = fixture::temp_dir("report");
  write_file_atomic(dir + "/a/b/c.txt", "hello");
  EXPECT_EQ(read_text_file(dir + "/a/b/c.txt"), "hello");
  write_file_atomic(dir + "/a/b/c.txt", "again");
  EXPECT_EQ(read_text_file(dir + "/a/b/c.txt"), "again");
}
