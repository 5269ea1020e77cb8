#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "garamost/image_io.hpp"

namespace garamost {

struct PhantomParams {
  int vessel_count = 6;
  double rotation_per_frame = 2.0;  // degrees per frame step
  double bolus_speed = 0.05;        // fraction of each vessel's arc length per frame step
  double noise = 0.004;             // std of the fixed-pattern pixel noise
};

// Draws the per-sequence motion parameters used for training and held-out data.
PhantomParams random_phantom_params(std::mt19937_64& rng);

// Rotating vessel scene defined for every real frame time. Vessels are
// Catmull-Rom curves with Gaussian cross-sections; a contrast front travels
// along each curve while the whole scene turns about the image center.
class Phantom {
 public:
  Phantom(std::uint64_t seed, std::int64_t size, const PhantomParams& params);

  Image render(double t) const;

  std::int64_t size() const { return size_; }
  const PhantomParams& params() const { return params_; }

 private:
  struct Vessel {
    std::vector<double> xs, ys;  // dense samples along the curve, scene coords relative to center
    std::vector<double> arc;     // normalized arc length in [0, 1] at each sample
    double sigma;
    double contrast;
    double start;  // bolus front position at t = 0
  };

  std::uint64_t seed_;
  std::int64_t size_;
  PhantomParams params_;
  std::vector<Vessel> vessels_;
  double bg_phase_x_, bg_phase_y_, bg_level_;
};

struct Sequence {
  std::vector<Image> frames;
  std::uint64_t seed = 0;
  PhantomParams params;
};

Sequence synth_sequence(std::uint64_t seed, int n_frames, std::int64_t size, const PhantomParams& params);

struct InterpSample {
  Image i0, i1;
  std::vector<std::pair<double, Image>> targets;  // (t, frame), t = k / (n + 1)
};

// Sliding windows of n + 2 consecutive frames with stride 1.
std::vector<InterpSample> make_samples(const Sequence& seq, int n_interp);
std::vector<InterpSample> make_samples(const std::vector<Image>& frames, int n_interp);

// Mixes a base seed with an index into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace garamost
