#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor y({n, o, oh, ow});
  auto at = [&](std::size_t ni, std::size_t ci, long yi, long xi) {
    if (yi < 0 || xi < 0 || yi >= static_cast<long>(h) || xi >= static_cast<long>(wd)) return 0.0;
    return x[((ni * c + ci) * h + static_cast<std::size_t>(yi)) * wd + static_cast<std::size_t>(xi)];
  };
  for (std::size_t ni = 0; ni < n; ++ni)
    for (std::size_t oi = 0; oi < o; ++oi)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t q = 0; q < ow; ++q) {
          double acc = b[oi];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long yi = static_cast<long>(r * stride + i) - static_cast<long>(pad);
                const long xi = static_cast<long>(q * stride + j) - static_cast<long>(pad);
                acc += w[((oi * c + ci) * kh + i) * kw + j] * at(ni, ci, yi, xi);
              }
          y[((ni * o + oi) * oh + r) * ow + q] = acc;
        }
  return y;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t n = x.dim(0), in = w.dim(1), out = w.dim(0);
  Tensor y({n, out});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < in; ++k) acc += x[i * in + k] * w[o * in + k];
      y[i * out + o] = acc;
    }
  return y;
}

Tensor central_difference(const std::function<double()>& f, Tensor& param, double h) {
  Tensor g(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + h;
    const double up = f();
    param[i] = saved - h;
    const double down = f();
    param[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - std::floor(pos);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double grid_argmin(const std::function<double(double)>& f, double lo, double hi,
                   std::size_t steps) {
  double best_x = lo;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < steps; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
    const double v = f(x);
    if (v < best) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

double nearest_centroid_accuracy(const wproj::Dataset& train, const wproj::Dataset& test) {
  const std::size_t dim = train.images.size() / train.size();
  const std::size_t classes = train.classes;
  std::vector<std::vector<double>> centroid(classes, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(classes, 0);
  for (std::size_t n = 0; n < train.size(); ++n) {
    const auto label = static_cast<std::size_t>(train.labels[n]);
    ++count[label];
    for (std::size_t d = 0; d < dim; ++d) centroid[label][d] += train.images[n * dim + d];
  }
  for (std::size_t c = 0; c < classes; ++c)
    for (double& v : centroid[c]) v /= static_cast<double>(count[c]);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < test.size(); ++n) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = test.images[n * dim + d] - centroid[c][d];
        d2 += diff * diff;
      }
      if (d2 < best_d) {
        best_d = d2;
        best = c;
      }
    }
    if (static_cast<int>(best) == test.labels[n]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

std::vector<double> gcn_two_pass(std::span<const double> image, double eps) {
  double mean = 0.0;
  for (double v : image) mean += v;
  mean /= static_cast<double>(image.size());
  double var = 0.0;
  for (double v : image) var += (v - mean) * (v - mean);
  var /= static_cast<double>(image.size());
  const double scale = std::max(std::sqrt(var), eps);
  std::vector<double> out;
  for (double v : image) out.push_back((v - mean) / scale);
  return out;
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (m.empty()) {
    for (const Tensor* g : grads) {
      m.emplace_back(g->size(), 0.0);
      v.emplace_back(g->size(), 0.0);
    }
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      const double g = (*grads[p])[i];
      m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g;
      v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g * g;
      (*params[p])[i] += -lr * (m[p][i] / c1) / (std::sqrt(v[p][i] / c2) + eps);
    }
  }
}

double square_hinge(const Tensor& logits, const Tensor& targets) {
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double margin = std::max(0.0, 1.0 - targets[i] * logits[i]);
    sum += margin * margin;
  }
  return sum / static_cast<double>(logits.size());
}

}  // namespace oracle
