#include "wproj/projections.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "wproj/error.hpp"
#include "wproj/report.hpp"

namespace wproj {
namespace {

struct KindEntry {
  ProjectionKind kind;
  std::string_view name;
  ProjectionUse use;
};

constexpr KindEntry kKinds[] = {
    {ProjectionKind::kNone, "none", ProjectionUse::kBoth},
    {ProjectionKind::kSign, "sign", ProjectionUse::kBoth},
    {ProjectionKind::kRound, "round", ProjectionUse::kBoth},
    {ProjectionKind::kPower, "power", ProjectionUse::kBoth},
    {ProjectionKind::kStoch, "stoch", ProjectionUse::kTrain},
    {ProjectionKind::kStochM, "stochm", ProjectionUse::kTrain},
    {ProjectionKind::kStochM3, "stochm3", ProjectionUse::kTrain},
    {ProjectionKind::kAddNorm, "addnorm", ProjectionUse::kTest},
    {ProjectionKind::kMultUnif, "multunif", ProjectionUse::kTest},
};

const KindEntry& entry(ProjectionKind kind) {
  for (const auto& e : kKinds) {
    if (e.kind == kind) return e;
  }
  throw InputError("unknown projection kind");
}

double sign_of(double w) { return w < 0.0 ? -1.0 : 1.0; }

std::string format_number(double v) { return format_double(v); }

double parse_number(std::string_view text, std::string_view what) {
  std::string s(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw InputError("invalid number '" + s + "' for " + std::string(what));
  }
  return v;
}

// StochM rule for one element given the layer's alpha.
double stochm_element(double w, double alpha, double gamma, Rng& rng) {
  const double p = 0.5 * (w / alpha + 1.0);
  const bool positive = uniform(rng, 0.0, 1.0) < p;
  const double scale = gamma == 1.0 ? 1.0 : uniform(rng, gamma, 1.0 / gamma);
  return positive ? w * scale : -w * scale;
}

}  // namespace

std::string_view kind_name(ProjectionKind kind) { return entry(kind).name; }

ProjectionKind parse_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const auto& e : kKinds) {
    if (e.name == lower) return e.kind;
  }
  throw InputError("unknown projection kind '" + std::string(name) + "'");
}

ProjectionUse projection_use(ProjectionKind kind) { return entry(kind).use; }

bool usable_for_training(ProjectionKind kind) {
  return projection_use(kind) != ProjectionUse::kTest;
}

bool usable_for_testing(ProjectionKind kind) {
  return projection_use(kind) != ProjectionUse::kTrain;
}

bool ProjectionSpec::is_stochastic() const noexcept {
  switch (kind) {
    case ProjectionKind::kStoch:
    case ProjectionKind::kStochM:
    case ProjectionKind::kStochM3:
    case ProjectionKind::kAddNorm:
    case ProjectionKind::kMultUnif:
      return true;
    case ProjectionKind::kPower:
      return sample_beta;
    default:
      return false;
  }
}

void ProjectionSpec::validate() const {
  switch (kind) {
    case ProjectionKind::kPower:
      if (!sample_beta && !(beta >= 0.0 && std::isfinite(beta))) {
        throw InputError("power projection needs beta >= 0, got " + format_number(beta));
      }
      break;
    case ProjectionKind::kStochM:
    case ProjectionKind::kStochM3:
    case ProjectionKind::kMultUnif:
      if (!(gamma > 0.0 && gamma <= 1.0)) {
        throw InputError(std::string(kind_name(kind)) + " needs gamma in (0, 1], got " +
                         format_number(gamma));
      }
      break;
    case ProjectionKind::kAddNorm:
      if (!(sigma >= 0.0 && std::isfinite(sigma))) {
        throw InputError("addnorm needs sigma >= 0, got " + format_number(sigma));
      }
      break;
    default:
      break;
  }
}

std::string ProjectionSpec::to_string() const {
  std::string out(kind_name(kind));
  switch (kind) {
    case ProjectionKind::kPower:
      return out + (sample_beta ? ":sample" : ":beta=" + format_number(beta));
    case ProjectionKind::kStochM:
    case ProjectionKind::kStochM3:
    case ProjectionKind::kMultUnif:
      return out + ":gamma=" + format_number(gamma);
    case ProjectionKind::kAddNorm:
      return out + ":sigma=" + format_number(sigma);
    default:
      return out;
  }
}

ProjectionSpec parse_projection(std::string_view text) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  text = trim(text);
  ProjectionSpec spec;
  const auto colon = text.find(':');
  spec.kind = parse_kind(trim(text.substr(0, colon)));
  if (colon != std::string_view::npos) {
    std::string_view rest = text.substr(colon + 1);
    while (!rest.empty()) {
      const auto next = rest.find(':');
      std::string_view item = trim(rest.substr(0, next));
      rest = next == std::string_view::npos ? std::string_view{} : rest.substr(next + 1);
      if (item == "sample" && spec.kind == ProjectionKind::kPower) {
        spec.sample_beta = true;
        continue;
      }
      const auto eq = item.find('=');
      if (eq == std::string_view::npos) {
        throw InputError("expected name=value in projection '" + std::string(text) + "'");
      }
      const std::string_view key = trim(item.substr(0, eq));
      const double value = parse_number(trim(item.substr(eq + 1)), key);
      const bool ok = (key == "beta" && spec.kind == ProjectionKind::kPower) ||
                      (key == "gamma" && (spec.kind == ProjectionKind::kStochM ||
                                          spec.kind == ProjectionKind::kStochM3 ||
                                          spec.kind == ProjectionKind::kMultUnif)) ||
                      (key == "sigma" && spec.kind == ProjectionKind::kAddNorm);
      if (!ok) {
        throw InputError("parameter '" + std::string(key) + "' does not apply to " +
                         std::string(kind_name(spec.kind)));
      }
      if (key == "beta") spec.beta = value;
      if (key == "gamma") spec.gamma = value;
      if (key == "sigma") spec.sigma = value;
    }
  }
  spec.validate();
  return spec;
}

ProjectionSpec with_parameter(ProjectionSpec spec, double value) {
  switch (spec.kind) {
    case ProjectionKind::kPower:
      spec.beta = value;
      spec.sample_beta = false;
      break;
    case ProjectionKind::kStochM:
    case ProjectionKind::kStochM3:
    case ProjectionKind::kMultUnif:
      spec.gamma = value;
      break;
    case ProjectionKind::kAddNorm:
      spec.sigma = value;
      break;
    default:
      throw InputError(std::string(kind_name(spec.kind)) + " has no sweepable parameter");
  }
  spec.validate();
  return spec;
}

double layer_alpha(std::span<const double> w) {
  double alpha = 0.0;
  for (double v : w) alpha = std::max(alpha, std::abs(v));
  return alpha;
}

Tensor project(const Tensor& w, const ProjectionSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.kind == ProjectionKind::kNone) return w;
  if (spec.kind == ProjectionKind::kStochM3) return stochm3(w, spec.gamma, rng);

  const double alpha = layer_alpha(w);
  Tensor p(w.shape());
  if (alpha == 0.0) return p;

  switch (spec.kind) {
    case ProjectionKind::kSign:
      for (std::size_t i = 0; i < w.size(); ++i) p[i] = alpha * sign_of(w[i]);
      break;
    case ProjectionKind::kRound:
      for (std::size_t i = 0; i < w.size(); ++i) p[i] = alpha * std::round(w[i] / alpha);
      break;
    case ProjectionKind::kPower: {
      const double beta = spec.sample_beta ? uniform(rng, 0.0, 2.0) : spec.beta;
      // alpha * (|w| / alpha) is not always |w| in floating point.
      if (beta == 1.0) return w;
      for (std::size_t i = 0; i < w.size(); ++i) {
        p[i] = alpha * std::pow(std::abs(w[i] / alpha), beta) * sign_of(w[i]);
      }
      break;
    }
    case ProjectionKind::kStoch:
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double prob = 0.5 * (w[i] / alpha + 1.0);
        p[i] = uniform(rng, 0.0, 1.0) < prob ? alpha : -alpha;
      }
      break;
    case ProjectionKind::kStochM:
      for (std::size_t i = 0; i < w.size(); ++i) p[i] = stochm_element(w[i], alpha, spec.gamma, rng);
      break;
    case ProjectionKind::kAddNorm: {
      const double stddev = alpha * spec.sigma;
      for (std::size_t i = 0; i < w.size(); ++i) p[i] = w[i] + stddev * standard_normal(rng);
      break;
    }
    case ProjectionKind::kMultUnif:
      for (std::size_t i = 0; i < w.size(); ++i) {
        p[i] = spec.gamma == 1.0 ? w[i] : w[i] * uniform(rng, spec.gamma, 1.0 / spec.gamma);
      }
      break;
    default:
      break;
  }
  return p;
}

double sorted_percentile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InputError("percentile of empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Tensor stochm3(const Tensor& w, double gamma, Rng& rng) {
  if (w.empty()) throw InputError("stochm3 needs a non-empty tensor");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InputError("stochm3 needs gamma in (0, 1]");
  const double alpha = layer_alpha(w);
  Tensor p(w.shape());
  if (alpha == 0.0) return p;

  std::vector<double> sorted(w.values().begin(), w.values().end());
  std::sort(sorted.begin(), sorted.end());
  const double lower = sorted_percentile(sorted, 0.25);
  const double upper = sorted_percentile(sorted, 0.75);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const bool middle = w[i] > lower && w[i] < upper;
    if (middle && uniform(rng, 0.0, 1.0) < 0.5) {
      p[i] = 0.0;
      continue;
    }
    p[i] = stochm_element(w[i], alpha, gamma, rng);
  }
  return p;
}

double expected_projection(double w, double alpha, const ProjectionSpec& spec) {
  switch (spec.kind) {
    case ProjectionKind::kStoch:
      return w;
    case ProjectionKind::kStochM:
      if (alpha == 0.0) return 0.0;
      return (w * w / alpha) * (spec.gamma + 1.0 / spec.gamma) / 2.0;
    default:
      throw InputError("closed-form expectation only for stoch and stochm, not " +
                       std::string(kind_name(spec.kind)));
  }
}

GlorotInit glorot_init(const LayerSpec& spec, Rng& rng) {
  const auto [fan_in, fan_out] = layer_fans(spec);
  GlorotInit out{Tensor(weight_shape(spec)),
                 std::sqrt(2.0 / static_cast<double>(fan_in + fan_out))};
  std::normal_distribution<double> dist(0.0, out.init_std);
  for (double& v : out.weight.values()) v = dist(rng);
  return out;
}

Network make_network(Tensor::Shape input_shape, std::vector<LayerSpec> specs,
                     std::uint64_t seed) {
  Network net(std::move(input_shape), std::move(specs));
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    Rng rng = make_stream(seed, StreamPurpose::kInit, k);
    Layer& layer = net.weight_layer(k);
    GlorotInit init = glorot_init(layer.spec, rng);
    layer.weight = std::move(init.weight);
    layer.init_std = init.init_std;
  }
  return net;
}

WeightSet project_weights(const Network& net, const ProjectionSpec& spec, std::uint64_t seed,
                          std::uint64_t step) {
  ProjectionSpec resolved = spec;
  if (spec.kind == ProjectionKind::kPower && spec.sample_beta) {
    Rng beta_rng = make_stream(seed, StreamPurpose::kBetaSample, step);
    resolved.beta = uniform(beta_rng, 0.0, 2.0);
    resolved.sample_beta = false;
  }
  WeightSet out;
  out.reserve(net.weight_layers().size());
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    if (resolved.kind == ProjectionKind::kNone) {
      out.push_back(net.weight_layer(k).weight);
      continue;
    }
    Rng rng = make_stream(seed, StreamPurpose::kProjection, step, k);
    out.push_back(project(net.weight_layer(k).weight, resolved, rng));
  }
  return out;
}

}  // namespace wproj
