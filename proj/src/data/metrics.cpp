#include "garamost/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace garamost {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_1d() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

void check_pair(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(what) + ": image sizes differ (" + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
  }
}

// 'valid' separable filtering of a double plane
std::vector<double> filter_valid(const std::vector<double>& src, std::int64_t w, std::int64_t h,
                                 const std::array<double, kWindow>& g) {
  const std::int64_t ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow * h));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * src[y * w + x + k];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(ow * oh));
  for (std::int64_t y = 0; y < oh; ++y)
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  check_pair(a, b, "ssim");
  const std::int64_t w = a.width, h = a.height;
  if (w < kWindow || h < kWindow) throw std::invalid_argument("ssim: images must be at least 11x11");
  constexpr double C1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double C2 = (0.03 * 1.0) * (0.03 * 1.0);
  const auto g = gaussian_1d();
  const std::size_t n = a.pixels.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = a.pixels[i];
    y[i] = b.pixels[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, w, h, g), my = filter_valid(y, w, h, g);
  const auto sxx = filter_valid(xx, w, h, g), syy = filter_valid(yy, w, h, g), sxy = filter_valid(xy, w, h, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + C1) * (2.0 * cxy + C2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
  }
  return 100.0 * total / static_cast<double>(mx.size());
}

double psnr(const Image& a, const Image& b) {
  check_pair(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.pixels.size());
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Aggregate aggregate(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("aggregate: no scores");
  // summing in sorted order makes the result independent of input order
  std::vector<double> sorted(scores);
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double var = 0.0;
  for (double s : sorted) var += (s - mean) * (s - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace garamost
