#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "garamost/checkpoint.hpp"
#include "garamost/ops.hpp"

namespace garamost {

enum class Init { kaiming, zeros, ones, prelu_slope };

inline constexpr double kPreluInitSlope = 0.25;

// Owns every trainable tensor of a model under a dotted name. Layers keep
// handles to the same tensors, so loading values here updates them in place.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  // fan_in is required for Init::kaiming.
  Tensor<T> create(const std::string& name, Shape shape, Init init, std::int64_t fan_in = 0);

  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  std::int64_t numel() const;

  void zero_grad();

  std::vector<NamedArray> export_arrays() const;
  // Requires exactly the stored names with matching shapes; the error lists
  // every missing, unexpected or mis-shaped name.
  void import_arrays(const std::vector<NamedArray>& arrays);

 private:
  std::mt19937_64 rng_;
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ConvOptions {
  int stride = 1;
  int dilation = 1;
  int padding = -1;  // -1: keep size for stride 1 ("same")
  bool bias = true;
  bool zero_init = false;
};

template <typename T>
struct Conv2d {
  ConvSpec<T> spec;
  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, spec); }
};

template <typename T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, std::int64_t in_ch, std::int64_t out_ch, int kernel,
                    ConvOptions options = {});

template <typename T>
struct PReLU {
  Tensor<T> slope;
  Tensor<T> operator()(const Tensor<T>& x) const { return prelu(x, slope); }
};

template <typename T>
PReLU<T> make_prelu(ParamStore<T>& store, const std::string& name, std::int64_t channels);

// Normalizes over the channel axis at each spatial position.
template <typename T>
struct ChannelNorm {
  Tensor<T> gain;
  Tensor<T> shift;
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, shift, 1); }
};

template <typename T>
ChannelNorm<T> make_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels);

// conv followed by PReLU
template <typename T>
struct ConvAct {
  Conv2d<T> conv;
  PReLU<T> act;
  Tensor<T> operator()(const Tensor<T>& x) const { return act(conv(x)); }
};

template <typename T>
ConvAct<T> make_conv_act(ParamStore<T>& store, const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
                         int kernel, ConvOptions options = {});

}  // namespace garamost
