#pragma once

#include <vector>

#include "garamost/image_io.hpp"

namespace garamost {

inline constexpr double kPsnrCap = 99.0;

// Mean SSIM in percent: 11x11 Gaussian window (sigma 1.5) over every fully
// contained window, K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);
// 10 log10(1 / MSE), capped at 99 dB when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

Aggregate aggregate(const std::vector<double>& scores);

}  // namespace garamost
