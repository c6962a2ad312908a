#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fixtures.hpp"
#include "json.hpp"
#include "wproj/error.hpp"
#include "wproj/harness.hpp"
#include "wproj/rng.hpp"
#include "wproj/trainer.hpp"

using namespace wproj;

namespace {

struct Trained {
  Network net;
  Dataset train;
  Dataset test;
};

const Trained& trained_none_nc() {
  static const Trained t = [] {
    Trained r{Network{}, fixture::toy_data(0, 400), fixture::toy_data(1, 200)};
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.clip.enabled = false;
    r.net = train(cfg, fixture::toy_net(1), r.train, r.test, {}).state.net;
    return r;
  }();
  return t;
}

}  // namespace

TEST(Error, ArgmaxWithTiesToLowerClass) {
  Network net({2, 1, 1}, {Flatten{}, Dense{2, 2}});
  net.weight_layer(0).weight = Tensor({2, 2}, std::vector<double>{1, 0, 1, 0});
  Dataset ds;
  ds.images = Tensor({2, 2, 1, 1}, std::vector<double>{1, 0, -1, 0});
  ds.labels = {0, 1};
  ds.classes = 2;
  // Both logits tie for every sample, so class 0 is predicted twice.
  EXPECT_DOUBLE_EQ(classification_error(net, net.weights(), ds), 0.5);
}

TEST(Evaluate, IdentityDistortionsMatchNone) {
  const Trained& t = trained_none_nc();
  const double none = evaluate(t.net, parse_projection("none"), t.test, t.train, 7);
  Network calibrated = t.net;
  recompute_bn_stats(calibrated, t.net.weights(), t.train.images);
  EXPECT_EQ(none, classification_error(calibrated, t.net.weights(), t.test));
  EXPECT_EQ(evaluate(t.net, parse_projection("addnorm:sigma=0"), t.test, t.train, 7), none);
  EXPECT_EQ(evaluate(t.net, parse_projection("power:beta=1"), t.test, t.train, 7), none);
  EXPECT_EQ(evaluate(t.net, parse_projection("multunif:gamma=1"), t.test, t.train, 7), none);
}

TEST(Evaluate, DeterministicGivenSeed) {
  const Trained& t = trained_none_nc();
  const ProjectionSpec spec = parse_projection("addnorm:sigma=0.4");
  EXPECT_EQ(evaluate(t.net, spec, t.test, t.train, 3), evaluate(t.net, spec, t.test, t.train, 3));
}

TEST(Evaluate, InvariantToTestOrder) {
  const Trained& t = trained_none_nc();
  std::vector<std::size_t> order(t.test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::reverse(order.begin(), order.end());
  const Dataset shuffled = subset(t.test, order);
  for (const char* spec : {"none", "sign", "addnorm:sigma=0.3"}) {
    EXPECT_EQ(evaluate(t.net, parse_projection(spec), t.test, t.train, 1),
              evaluate(t.net, parse_projection(spec), shuffled, t.train, 1));
  }
}

TEST(Evaluate, BatchNormRecomputeHelpsUnderSign) {
  const Trained& t = trained_none_nc();
  EvalOptions stale;
  stale.recompute_bn = false;
  const ProjectionSpec sign = parse_projection("sign");
  EXPECT_GE(evaluate(t.net, sign, t.test, t.train, 1, stale), evaluate(t.net, sign, t.test, t.train, 1));
}

TEST(Evaluate, RejectsEmptySplits) {
  const Trained& t = trained_none_nc();
  const Dataset empty = subset(t.test, std::vector<std::size_t>{});
  EXPECT_THROW(evaluate(t.net, parse_projection("none"), empty, t.train, 1), InputError);
  EXPECT_THROW(evaluate(t.net, parse_projection("none"), t.test, empty, 1), InputError);
}

TEST(Grid, RangeAndListSyntax) {
  const auto g = parse_grid("0:0.7:8");
  ASSERT_EQ(g.size(), 8U);
  EXPECT_EQ(g[1], 0.1);
  EXPECT_EQ(g[7], 0.7);
  EXPECT_EQ(parse_grid("0, 0.2,0.4"), (std::vector<double>{0, 0.2, 0.4}));
  EXPECT_EQ(parse_grid("0.5:0.5:1"), (std::vector<double>{0.5}));
  EXPECT_THROW(parse_grid(""), InputError);
  EXPECT_THROW(parse_grid("0:1"), InputError);
  EXPECT_THROW(parse_grid("0:1:0"), InputError);
  EXPECT_EQ(default_grid(ProjectionKind::kAddNorm).back(), 0.7);
  EXPECT_EQ(default_grid(ProjectionKind::kPower).size(), 9U);
  EXPECT_THROW(default_grid(ProjectionKind::kSign), InputError);
}

TEST(Sweep, TrialsDefaultAndValidation) {
  SweepSpec s;
  s.distortion = parse_projection("addnorm");
  EXPECT_EQ(s.effective_trials(), 5U);
  s.distortion = parse_projection("power");
  EXPECT_EQ(s.effective_trials(), 1U);
  EXPECT_THROW(s.validate(), InputError);  // empty grid
  s.grid = {-1.0};
  EXPECT_THROW(s.validate(), InputError);
}

TEST(Sweep, SinglePointEqualsEvaluate) {
  const Trained& t = trained_none_nc();
  SweepSpec s;
  s.distortion = parse_projection("addnorm");
  s.grid = {0.3};
  s.trials = 1;
  s.seed = 9;
  const SweepReport r = sweep(t.net, s, t.test, t.train);
  ASSERT_EQ(r.points.size(), 1U);
  const std::uint64_t seed = mix_seed(9, {static_cast<std::uint64_t>(StreamPurpose::kSweep), 0, 0});
  EXPECT_EQ(r.points[0].mean_error, evaluate(t.net, parse_projection("addnorm:sigma=0.3"), t.test, t.train, seed));
  EXPECT_EQ(r.points[0].std_error, 0.0);
}

TEST(Sweep, StatisticsThreadsAndSerialization) {
  const Trained& t = trained_none_nc();
  SweepSpec s;
  s.distortion = parse_projection("addnorm");
  s.grid = {0.0, 0.2, 0.5};
  s.trials = 3;
  const SweepReport serial = sweep(t.net, s, t.test, t.train);
  s.threads = 3;
  const SweepReport parallel = sweep(t.net, s, t.test, t.train);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(serial.points[i].errors, parallel.points[i].errors);
    const auto& e = serial.points[i].errors;
    const double mean = (e[0] + e[1] + e[2]) / 3.0;
    double sq = 0.0;
    for (double v : e) sq += (v - mean) * (v - mean);
    EXPECT_DOUBLE_EQ(serial.points[i].mean_error, mean);
    EXPECT_NEAR(serial.points[i].std_error, std::sqrt(sq / 2.0), 1e-15);
  }
  const double baseline = evaluate(t.net, parse_projection("none"), t.test, t.train, 0);
  EXPECT_EQ(serial.points[0].mean_error, baseline);

  const std::string csv = serial.to_csv();
  EXPECT_EQ(csv.rfind("# seed=", 0), 0U);
  EXPECT_NE(csv.find("\nparameter,mean_error,std_error,trials\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto j = nlohmann::json::parse(serial.to_json());
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["metadata"]["distortion"], "addnorm");
  EXPECT_EQ(j["points"].size(), 3U);
}
