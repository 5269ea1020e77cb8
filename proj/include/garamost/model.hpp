#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <vector>

#include "garamost/decoder.hpp"

namespace garamost {

struct StageTimes {
  double encoder_s = 0.0;
  double mg_msfe_s = 0.0;
  std::vector<double> decode_s;  // one entry per requested t
};

// The complete interpolation network. Parameters live in params(); the
// encoder, attention and decoder hold handles into it.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config, std::uint64_t seed = 0);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return *store_; }
  const ParamStore<T>& params() const { return *store_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const MgMsfe<T>& mg_msfe() const { return mgmsfe_; }
  const Decoder<T>& decoder() const { return decoder_; }

  // Differentiable forward on frames whose sides are multiples of 16. The
  // encoder and attention run once; each t is decoded independently.
  std::vector<Tensor<T>> forward(const Tensor<T>& i0, const Tensor<T>& i1, const std::vector<double>& times,
                                 StageTimes* times_out = nullptr) const;

  // Inference on arbitrary sizes: reflect-pads to a multiple of 16 (and to
  // the granularity minimum), runs without recording gradients, crops back.
  std::vector<Tensor<T>> interpolate(const Tensor<T>& i0, const Tensor<T>& i1, const std::vector<double>& times,
                                     StageTimes* times_out = nullptr) const;

  std::int64_t encoder_calls() const { return encoder_calls_.load(); }
  void reset_counters() { encoder_calls_ = 0; }

  void save(const std::filesystem::path& path) const;
  // Reads `path` and its `.cfg` sidecar.
  static std::unique_ptr<Model> load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  std::unique_ptr<ParamStore<T>> store_;
  Encoder<T> encoder_;
  MgMsfe<T> mgmsfe_;
  Decoder<T> decoder_;
  mutable std::atomic<std::int64_t> encoder_calls_{0};
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

}  // namespace garamost
