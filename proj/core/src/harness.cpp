#include "wproj/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>

#include "json.hpp"
#include "wproj/error.hpp"
#include "wproj/report.hpp"
#include "wproj/rng.hpp"

namespace wproj {
namespace {

void require_data(const Dataset& data, std::string_view what) {
  if (data.size() == 0 || data.images.rank() != 4 || data.images.dim(0) != data.size()) {
    throw InputError(std::string(what) + " split is empty or malformed");
  }
}

SweepPoint run_grid_point(const Network& net, const SweepSpec& spec, std::size_t index,
                          const Dataset& test_data, const Dataset& train_data,
                          const EvalOptions& options) {
  SweepPoint point;
  point.parameter = spec.grid[index];
  point.trials = spec.effective_trials();
  const ProjectionSpec distortion = with_parameter(spec.distortion, point.parameter);
  for (std::size_t t = 0; t < point.trials; ++t) {
    const std::uint64_t seed = mix_seed(spec.seed, {static_cast<std::uint64_t>(StreamPurpose::kSweep), index, t});
    point.errors.push_back(evaluate(net, distortion, test_data, train_data, seed, options));
  }
  double sum = 0.0;
  for (double e : point.errors) sum += e;
  point.mean_error = sum / static_cast<double>(point.trials);
  if (point.trials > 1) {
    double sq = 0.0;
    for (double e : point.errors) sq += (e - point.mean_error) * (e - point.mean_error);
    point.std_error = std::sqrt(sq / static_cast<double>(point.trials - 1));
  }
  return point;
}

}  // namespace

double classification_error(const Network& net, const WeightSet& weights, const Dataset& data,
                            std::size_t chunk) {
  require_data(data, "evaluation");
  const Tensor logits = infer(net, weights, data.images, chunk);
  const std::size_t classes = net.num_classes();
  std::size_t wrong = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const double* row = logits.data() + n * classes;
    const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
    if (best != data.labels[n]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

std::uint64_t evaluation_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(seed, {static_cast<std::uint64_t>(StreamPurpose::kEvaluation), index});
}

double evaluate(const Network& net, const ProjectionSpec& spec, const Dataset& test_data,
                const Dataset& train_data, std::uint64_t seed, const EvalOptions& options) {
  require_data(test_data, "test");
  if (options.recompute_bn) require_data(train_data, "training");
  const WeightSet distorted = project_weights(net, spec, seed, 0);
  if (!options.recompute_bn || net.bn_layers().empty()) {
    return classification_error(net, distorted, test_data, options.chunk);
  }
  Network calibrated = net;
  recompute_bn_stats(calibrated, distorted, train_data.images, options.chunk);
  return classification_error(calibrated, distorted, test_data, options.chunk);
}

std::size_t SweepSpec::effective_trials() const {
  if (trials > 0) return trials;
  return distortion.is_stochastic() ? 5 : 1;
}

void SweepSpec::validate() const {
  if (grid.empty()) throw InputError("sweep grid is empty");
  for (double v : grid) with_parameter(distortion, v);
}

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
      const auto pos = text.find(':', start);
      parts.push_back(text.substr(start, pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    if (parts.size() != 3) throw InputError("grid range must be start:stop:count");
    const double lo = parse_double(parts[0]);
    const double hi = parse_double(parts[1]);
    const double count_d = parse_double(parts[2]);
    if (!(count_d >= 1.0) || count_d != std::floor(count_d)) {
      throw InputError("grid count must be a positive integer");
    }
    const auto count = static_cast<std::size_t>(count_d);
    if (count == 1) return {lo};
    for (std::size_t i = 0; i < count; ++i) {
      const double v = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
      // Round away accumulated binary error so 0:0.7:8 yields 0.1, not 0.09999999999999999.
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", v);
      out.push_back(i + 1 == count ? hi : parse_double(buf));
    }
    return out;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find(',', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view item = text.substr(start, pos - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.push_back(parse_double(item));
    start = pos + 1;
  }
  if (out.empty()) throw InputError("grid is empty");
  return out;
}

std::vector<double> default_grid(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::kAddNorm:
      return parse_grid("0:0.7:8");
    case ProjectionKind::kMultUnif:
    case ProjectionKind::kStochM:
    case ProjectionKind::kStochM3:
      return parse_grid("0.1:1:10");
    case ProjectionKind::kPower:
      return parse_grid("0:2:9");
    default:
      throw InputError(std::string(kind_name(kind)) + " has no sweepable parameter");
  }
}

std::string SweepReport::to_csv() const {
  std::ostringstream os;
  os << "# seed=" << seed << ", config_hash=" << config_hash << ", distortion=" << distortion
     << '\n';
  os << "parameter,mean_error,std_error,trials\n";
  for (const SweepPoint& p : points) {
    os << format_double(p.parameter) << ',' << format_double(p.mean_error) << ','
       << format_double(p.std_error) << ',' << p.trials << '\n';
  }
  return os.str();
}

std::string SweepReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["metadata"] = {{"network_id", network_id},
                   {"distortion", distortion},
                   {"seed", seed},
                   {"config_hash", config_hash}};
  j["points"] = nlohmann::json::array();
  for (const SweepPoint& p : points) {
    j["points"].push_back({{"parameter", p.parameter},
                           {"mean_error", p.mean_error},
                           {"std_error", p.std_error},
                           {"trials", p.trials},
                           {"errors", p.errors}});
  }
  return j.dump(2) + "\n";
}

SweepReport sweep(const Network& net, const SweepSpec& spec, const Dataset& test_data,
                  const Dataset& train_data, const EvalOptions& options) {
  spec.validate();
  SweepReport report;
  report.distortion = std::string(kind_name(spec.distortion.kind));
  report.seed = spec.seed;
  report.points.resize(spec.grid.size());

  const std::size_t threads = std::max<std::size_t>(1, spec.threads);
  for (std::size_t begin = 0; begin < spec.grid.size(); begin += threads) {
    const std::size_t end = std::min(spec.grid.size(), begin + threads);
    if (threads == 1) {
      report.points[begin] = run_grid_point(net, spec, begin, test_data, train_data, options);
      continue;
    }
    std::vector<std::future<SweepPoint>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, run_grid_point, std::cref(net),
                                   std::cref(spec), i, std::cref(test_data),
                                   std::cref(train_data), std::cref(options)));
    }
    for (std::size_t i = begin; i < end; ++i) report.points[i] = pending[i - begin].get();
  }
  return report;
}

}  // namespace wproj
