#include "garamost/nn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace garamost {

template <typename T>
Tensor<T> ParamStore<T>::create(const std::string& name, Shape shape, Init init, std::int64_t fan_in) {
  if (contains(name)) throw std::logic_error("parameter '" + name + "' registered twice");
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<T> values(n, T(0));
  switch (init) {
    case Init::kaiming: {
      if (fan_in <= 0) throw std::logic_error("kaiming init of '" + name + "' needs a positive fan-in");
      const double a = kPreluInitSlope;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / ((1.0 + a * a) * static_cast<double>(fan_in))));
      for (auto& v : values) v = static_cast<T>(dist(rng_));
      break;
    }
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(values.begin(), values.end(), T(1));
      break;
    case Init::prelu_slope:
      std::fill(values.begin(), values.end(), static_cast<T>(kPreluInitSlope));
      break;
  }
  auto t = Tensor<T>::from(std::move(shape), std::move(values), true);
  index_.emplace(name, tensors_.size());
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named '" + name + "'");
  return tensors_[it->second];
}

template <typename T>
std::int64_t ParamStore<T>::numel() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

template <typename T>
std::vector<NamedArray> ParamStore<T>::export_arrays() const {
  std::vector<NamedArray> out;
  out.reserve(tensors_.size());
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto d = tensors_[i].data();
    out.push_back({names_[i], tensors_[i].shape(), std::vector<float>(d.begin(), d.end())});
  }
  return out;
}

template <typename T>
void ParamStore<T>::import_arrays(const std::vector<NamedArray>& arrays) {
  std::set<std::string> seen;
  std::string problems;
  for (const auto& a : arrays) {
    seen.insert(a.name);
    auto it = index_.find(a.name);
    if (it == index_.end()) {
      problems += "\n  unexpected: " + a.name;
    } else if (tensors_[it->second].shape() != a.shape) {
      problems += "\n  shape mismatch: " + a.name + " is " + shape_str(a.shape) + ", model expects " +
                  shape_str(tensors_[it->second].shape());
    }
  }
  for (const auto& n : names_) {
    if (!seen.count(n)) problems += "\n  missing: " + n;
  }
  if (!problems.empty()) throw ConfigError("checkpoint does not match the model:" + problems);
  for (const auto& a : arrays) {
    auto dst = tensors_[index_.at(a.name)].mutable_data();
    std::transform(a.values.begin(), a.values.end(), dst.begin(), [](float f) { return static_cast<T>(f); });
  }
}

template <typename T>
Conv2d<T> make_conv(ParamStore<T>& store, const std::string& name, std::int64_t in_ch, std::int64_t out_ch, int kernel,
                    ConvOptions options) {
  Conv2d<T> c;
  const Init init = options.zero_init ? Init::zeros : Init::kaiming;
  c.spec.kernel = store.create(name + ".weight", {out_ch, in_ch, kernel, kernel}, init, in_ch * kernel * kernel);
  if (options.bias) c.spec.bias = store.create(name + ".bias", {out_ch}, Init::zeros);
  c.spec.stride = options.stride;
  c.spec.dilation = options.dilation;
  c.spec.padding = options.padding >= 0 ? options.padding : options.dilation * (kernel / 2);
  return c;
}

template <typename T>
PReLU<T> make_prelu(ParamStore<T>& store, const std::string& name, std::int64_t channels) {
  return PReLU<T>{store.create(name + ".slope", {channels}, Init::prelu_slope)};
}

template <typename T>
ChannelNorm<T> make_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels) {
  return ChannelNorm<T>{store.create(name + ".gain", {channels}, Init::ones),
                        store.create(name + ".shift", {channels}, Init::zeros)};
}

template <typename T>
ConvAct<T> make_conv_act(ParamStore<T>& store, const std::string& name, std::int64_t in_ch, std::int64_t out_ch,
                         int kernel, ConvOptions options) {
  auto conv = make_conv(store, name + ".conv", in_ch, out_ch, kernel, options);
  return ConvAct<T>{conv, make_prelu(store, name + ".act", out_ch)};
}

#define GARAMOST_INSTANTIATE(T)                                                                                  \
  template class ParamStore<T>;                                                                                  \
  template Conv2d<T> make_conv(ParamStore<T>&, const std::string&, std::int64_t, std::int64_t, int, ConvOptions); \
  template PReLU<T> make_prelu(ParamStore<T>&, const std::string&, std::int64_t);                                \
  template ChannelNorm<T> make_norm(ParamStore<T>&, const std::string&, std::int64_t);                           \
  template ConvAct<T> make_conv_act(ParamStore<T>&, const std::string&, std::int64_t, std::int64_t, int, ConvOptions);

GARAMOST_INSTANTIATE(float)
GARAMOST_INSTANTIATE(double)

}  // namespace garamost
