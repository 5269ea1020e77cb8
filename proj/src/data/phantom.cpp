#include "garamost/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace garamost {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Standard normal from two hashed uniforms (Box-Muller).
double hashed_normal(std::uint64_t key) {
  const std::uint64_t a = splitmix(key), b = splitmix(a);
  const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double catmull_rom(double p0, double p1, double p2, double p3, double u) {
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * (2.0 * p1 + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) { return splitmix(splitmix(base) ^ index); }

PhantomParams random_phantom_params(std::mt19937_64& rng) {
  PhantomParams p;
  p.vessel_count = std::uniform_int_distribution<int>(4, 8)(rng);
  const double rot = std::uniform_real_distribution<double>(1.0, 3.0)(rng);
  p.rotation_per_frame = std::bernoulli_distribution(0.5)(rng) ? rot : -rot;
  p.bolus_speed = std::uniform_real_distribution<double>(0.02, 0.08)(rng);
  return p;
}

Phantom::Phantom(std::uint64_t seed, std::int64_t size, const PhantomParams& params)
    : seed_(seed), size_(size), params_(params) {
  if (size < 32) throw std::invalid_argument("phantom size must be at least 32, got " + std::to_string(size));
  if (params.vessel_count < 1) throw std::invalid_argument("phantom needs at least one vessel");
  if (!(params.noise >= 0.0)) throw std::invalid_argument("phantom noise must be non-negative");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double radius = 0.42 * static_cast<double>(size);
  bg_phase_x_ = unit(rng) * 2.0 * std::numbers::pi;
  bg_phase_y_ = unit(rng) * 2.0 * std::numbers::pi;
  bg_level_ = 0.7 + 0.1 * unit(rng);

  for (int v = 0; v < params.vessel_count; ++v) {
    // control points wander from a random rim point toward the interior
    const int n_ctrl = std::uniform_int_distribution<int>(4, 6)(rng);
    std::vector<double> cx, cy;
    double ang = unit(rng) * 2.0 * std::numbers::pi;
    double r = radius * (0.8 + 0.2 * unit(rng));
    double heading = ang + std::numbers::pi + (unit(rng) - 0.5) * 1.2;
    double x = r * std::cos(ang), y = r * std::sin(ang);
    const double step = radius * (0.35 + 0.2 * unit(rng));
    for (int c = 0; c < n_ctrl; ++c) {
      cx.push_back(x);
      cy.push_back(y);
      heading += (unit(rng) - 0.5) * 1.4;
      x += step * std::cos(heading);
      y += step * std::sin(heading);
      const double d = std::hypot(x, y);
      if (d > radius) {
        x *= radius / d;
        y *= radius / d;
        heading += std::numbers::pi / 2;
      }
    }
    Vessel vs;
    for (int seg = 0; seg + 1 < n_ctrl; ++seg) {
      const int i0 = std::max(seg - 1, 0), i3 = std::min(seg + 2, n_ctrl - 1);
      const double len = std::hypot(cx[seg + 1] - cx[seg], cy[seg + 1] - cy[seg]);
      const int samples = std::max(4, static_cast<int>(std::ceil(len * 4.0)));
      for (int s = 0; s < samples; ++s) {
        const double u = static_cast<double>(s) / samples;
        vs.xs.push_back(catmull_rom(cx[i0], cx[seg], cx[seg + 1], cx[i3], u));
        vs.ys.push_back(catmull_rom(cy[i0], cy[seg], cy[seg + 1], cy[i3], u));
      }
    }
    vs.xs.push_back(cx.back());
    vs.ys.push_back(cy.back());
    vs.arc.assign(vs.xs.size(), 0.0);
    for (std::size_t i = 1; i < vs.xs.size(); ++i) {
      vs.arc[i] = vs.arc[i - 1] + std::hypot(vs.xs[i] - vs.xs[i - 1], vs.ys[i] - vs.ys[i - 1]);
    }
    const double total = std::max(vs.arc.back(), 1e-9);
    for (auto& a : vs.arc) a /= total;
    const double width = 1.0 + 3.0 * unit(rng);  // 1-4 px
    vs.sigma = width / 2.0;
    vs.contrast = 0.25 + 0.35 * unit(rng);
    vs.start = 0.2 + 0.4 * unit(rng);
    vessels_.push_back(std::move(vs));
  }
}

Image Phantom::render(double t) const {
  const std::int64_t n = size_;
  const double c = 0.5 * static_cast<double>(n - 1);
  const double theta = params_.rotation_per_frame * t * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double omega = 2.0 * std::numbers::pi / static_cast<double>(n);

  // background in scene coordinates so it turns with the vessels
  Image img(n, n, 255);
  for (std::int64_t y = 0; y < n; ++y) {
    for (std::int64_t x = 0; x < n; ++x) {
      const double dx = x - c, dy = y - c;
      const double sx = ct * dx + st * dy, sy = -st * dx + ct * dy;
      img.at(x, y) = static_cast<float>(bg_level_ + 0.05 * std::sin(omega * sx + bg_phase_x_) +
                                        0.05 * std::cos(omega * 0.7 * sy + bg_phase_y_));
    }
  }

  // vessel opacity: max over splatted curve samples
  std::vector<double> opacity(static_cast<std::size_t>(n * n), 0.0);
  for (const auto& v : vessels_) {
    const double front = v.start + params_.bolus_speed * t;
    const double reach = std::ceil(3.0 * v.sigma);
    const double inv2s2 = 1.0 / (2.0 * v.sigma * v.sigma);
    for (std::size_t i = 0; i < v.xs.size(); ++i) {
      const double fill = smoothstep((front - v.arc[i]) / 0.08);
      if (fill <= 0.0) continue;
      const double amp = v.contrast * fill;
      // scene -> image: rotate by +theta
      const double px = c + ct * v.xs[i] - st * v.ys[i];
      const double py = c + st * v.xs[i] + ct * v.ys[i];
      const auto x0 = static_cast<std::int64_t>(std::max(0.0, std::floor(px - reach)));
      const auto x1 = static_cast<std::int64_t>(std::min<double>(n - 1, std::ceil(px + reach)));
      const auto y0 = static_cast<std::int64_t>(std::max(0.0, std::floor(py - reach)));
      const auto y1 = static_cast<std::int64_t>(std::min<double>(n - 1, std::ceil(py + reach)));
      for (std::int64_t y = y0; y <= y1; ++y) {
        for (std::int64_t x = x0; x <= x1; ++x) {
          const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
          const double o = amp * std::exp(-d2 * inv2s2);
          auto& dst = opacity[static_cast<std::size_t>(y * n + x)];
          if (o > dst) dst = o;
        }
      }
    }
  }

  // fixed-pattern detector noise: tied to the pixel grid, not to time, so a
  // static scene renders identical frames
  const std::uint64_t noise_key = derive_seed(seed_, 0x6E6F697365ull);
  for (std::int64_t i = 0; i < n * n; ++i) {
    double v = img.pixels[static_cast<std::size_t>(i)] - opacity[static_cast<std::size_t>(i)];
    if (params_.noise > 0.0) v += params_.noise * hashed_normal(noise_key ^ (static_cast<std::uint64_t>(i) << 1));
    img.pixels[static_cast<std::size_t>(i)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return img;
}

Sequence synth_sequence(std::uint64_t seed, int n_frames, std::int64_t size, const PhantomParams& params) {
  if (n_frames < 3) throw std::invalid_argument("a sequence needs at least 3 frames, got " + std::to_string(n_frames));
  Phantom ph(seed, size, params);
  Sequence s;
  s.seed = seed;
  s.params = params;
  for (int f = 0; f < n_frames; ++f) s.frames.push_back(ph.render(static_cast<double>(f)));
  return s;
}

std::vector<InterpSample> make_samples(const std::vector<Image>& frames, int n_interp) {
  if (n_interp < 1 || n_interp > 3) throw std::invalid_argument("n_interp must be 1, 2 or 3");
  const std::size_t span = static_cast<std::size_t>(n_interp) + 1;
  if (frames.size() < span + 1) {
    throw std::invalid_argument("sequence of " + std::to_string(frames.size()) + " frames is too short for " +
                                std::to_string(n_interp) + "-frame interpolation (needs " +
                                std::to_string(span + 1) + ")");
  }
  std::vector<InterpSample> out;
  for (std::size_t s = 0; s + span < frames.size(); ++s) {
    InterpSample smp;
    smp.i0 = frames[s];
    smp.i1 = frames[s + span];
    for (std::size_t k = 1; k < span; ++k) {
      smp.targets.emplace_back(static_cast<double>(k) / static_cast<double>(span), frames[s + k]);
    }
    out.push_back(std::move(smp));
  }
  return out;
}

std::vector<InterpSample> make_samples(const Sequence& seq, int n_interp) { return make_samples(seq.frames, n_interp); }

}  // namespace garamost
