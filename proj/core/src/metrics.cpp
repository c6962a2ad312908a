#include "wproj/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "wproj/error.hpp"
#include "wproj/report.hpp"

namespace wproj {
namespace {

nlohmann::json number_or_symbol(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

double second_moment(std::span<const double> w) {
  double sq = 0.0;
  for (double v : w) sq += v * v;
  return w.empty() ? 0.0 : sq / static_cast<double>(w.size());
}

}  // namespace

double effective_bits(double q_w, double q_n) {
  if (!(q_w >= 0.0)) throw InputError("Q_w must be non-negative");
  if (!(q_n >= 0.0)) throw InputError("Q_n must be non-negative");
  if (q_n == 0.0) return q_w == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return 0.5 * std::log2(1.0 + q_w / q_n);
}

double noise_second_moment(const ProjectionSpec& noise, double q_w, double alpha) {
  noise.validate();
  switch (noise.kind) {
    case ProjectionKind::kAddNorm:
      return (alpha * noise.sigma) * (alpha * noise.sigma);
    case ProjectionKind::kMultUnif: {
      const double lo = noise.gamma;
      const double hi = 1.0 / noise.gamma;
      const double mean = 0.5 * (lo + hi);
      const double var = (hi - lo) * (hi - lo) / 12.0;
      return q_w * (var + (mean - 1.0) * (mean - 1.0));
    }
    default:
      throw InputError("effective bits need an additive or multiplicative noise spec, not " +
                       std::string(kind_name(noise.kind)));
  }
}

BitsReport bits_report(const Network& net, const ProjectionSpec& noise) {
  BitsReport report;
  report.distortion = noise.to_string();
  const auto names = weight_layer_names(net);
  double weighted = 0.0, q_w_total = 0.0, q_n_total = 0.0;
  std::size_t total = 0;
  for (std::size_t k = 0; k < net.weight_layers().size(); ++k) {
    const Tensor& w = net.weight_layer(k).weight;
    LayerBits lb;
    lb.layer = names[k];
    lb.count = w.size();
    lb.q_w = second_moment(w.values());
    lb.q_n = noise_second_moment(noise, lb.q_w, layer_alpha(w));
    lb.bits = effective_bits(lb.q_w, lb.q_n);
    weighted += lb.bits * static_cast<double>(lb.count);
    q_w_total += lb.q_w * static_cast<double>(lb.count);
    q_n_total += lb.q_n * static_cast<double>(lb.count);
    total += lb.count;
    report.layers.push_back(lb);
  }
  const auto n = static_cast<double>(total);
  report.weighted_bits = weighted / n;
  report.pooled_q_w = q_w_total / n;
  report.pooled_q_n = q_n_total / n;
  report.pooled_bits = effective_bits(report.pooled_q_w, report.pooled_q_n);
  return report;
}

std::string BitsReport::to_json() const {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["distortion"] = distortion;
  j["layers"] = nlohmann::json::array();
  for (const LayerBits& lb : layers) {
    j["layers"].push_back({{"layer", lb.layer},
                           {"count", lb.count},
                           {"q_w", lb.q_w},
                           {"q_n", lb.q_n},
                           {"bits", number_or_symbol(lb.bits)}});
  }
  j["network"] = {{"weighted_bits", number_or_symbol(weighted_bits)},
                  {"pooled_q_w", pooled_q_w},
                  {"pooled_q_n", pooled_q_n},
                  {"pooled_bits", number_or_symbol(pooled_bits)}};
  return j.dump(2) + "\n";
}

std::vector<std::string> weight_layer_names(const Network& net) {
  std::vector<std::string> names;
  std::size_t convs = 0, fcs = 0;
  for (std::size_t i : net.weight_layers()) {
    if (std::holds_alternative<Conv2D>(net.layers()[i].spec)) {
      names.push_back("conv" + std::to_string(++convs));
    } else {
      names.push_back("fc" + std::to_string(++fcs));
    }
  }
  return names;
}

std::vector<double> weight_gap(const Network& net, const ProjectionSpec& spec) {
  if (spec.is_stochastic()) {
    throw InputError("weight gap needs a deterministic projection, not " + spec.to_string());
  }
  const WeightSet projected = project_weights(net, spec, 0, 0);
  std::vector<double> gaps;
  for (std::size_t k = 0; k < projected.size(); ++k) {
    const Tensor& w = net.weight_layer(k).weight;
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) sum += std::abs(w[i] - projected[k][i]);
    gaps.push_back(sum / static_cast<double>(w.size()));
  }
  return gaps;
}

std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("correlation inputs differ in length");
  if (a.empty()) return std::nullopt;
  const auto n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a, db = b[i] - mean_b;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<std::optional<double>> activation_correlation(const Network& net,
                                                          const ProjectionSpec& spec,
                                                          const Tensor& batch, std::uint64_t seed,
                                                          const Dataset* bn_data) {
  if (batch.rank() == 0 || batch.dim(0) == 0) throw InputError("correlation batch is empty");
  const WeightSet reference_weights = net.weights();
  const WeightSet projected = project_weights(net, spec, seed, 0);

  Network reference = net;
  Network distorted = net;
  if (bn_data) {
    recompute_bn_stats(reference, reference_weights, bn_data->images);
    recompute_bn_stats(distorted, projected, bn_data->images);
  }
  const ForwardCache a = forward(reference, reference_weights, batch, Mode::kInfer);
  const ForwardCache b = forward(distorted, projected, batch, Mode::kInfer);

  const auto& w_layers = net.weight_layers();
  std::vector<std::optional<double>> out;
  for (std::size_t k = 0; k < w_layers.size(); ++k) {
    const std::size_t block_end = k + 1 < w_layers.size() ? w_layers[k + 1] : net.layers().size();
    // activations[i + 1] is the output of layer i.
    out.push_back(pearson(a.activations[block_end].values(), b.activations[block_end].values()));
  }
  return out;
}

std::string Histogram::to_csv() const {
  std::ostringstream os;
  os << "bin_left,bin_right,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    os << format_double(edges[i]) << ',' << format_double(edges[i + 1]) << ',' << counts[i] << '\n';
  }
  return os.str();
}

Histogram weight_histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw InputError("histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) {
    h.edges.assign(bins + 1, 0.0);
    return h;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges.push_back(i == bins ? hi : lo + width * static_cast<double>(i));
  }
  for (double v : values) {
    std::size_t bin = 0;
    if (width > 0.0) {
      bin = static_cast<std::size_t>((v - lo) / width);
      bin = std::min(bin, bins - 1);
    }
    ++h.counts[bin];
  }
  return h;
}

std::string diagnostics_to_json(const std::vector<LayerDiagnostics>& layers,
                                const std::string& spec_name, std::uint64_t seed,
                                const std::string& config_hash) {
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["metadata"] = {{"projection", spec_name}, {"seed", seed}, {"config_hash", config_hash}};
  j["layers"] = nlohmann::json::array();
  for (const LayerDiagnostics& d : layers) {
    nlohmann::json entry = {{"layer", d.layer},
                            {"weight_gap", d.weight_gap},
                            {"histogram", {{"edges", d.histogram.edges},
                                           {"counts", d.histogram.counts}}}};
    entry["correlation"] = d.correlation ? nlohmann::json(*d.correlation) : nlohmann::json();
    j["layers"].push_back(entry);
  }
  return j.dump(2) + "\n";
}

}  // namespace wproj
