#include "garamost/model.hpp"

#include <chrono>

#include "garamost/config.hpp"

namespace garamost {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  auto p = checkpoint;
  p += ".cfg";
  return p;
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      store_(std::make_unique<ParamStore<T>>(seed)),
      encoder_(*store_, config_),
      mgmsfe_(*store_, config_),
      decoder_(*store_, config_) {}

template <typename T>
std::vector<Tensor<T>> Model<T>::forward(const Tensor<T>& i0, const Tensor<T>& i1, const std::vector<double>& times,
                                         StageTimes* times_out) const {
  if (times.empty()) throw std::invalid_argument("interpolate: no time steps requested");
  for (double t : times) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t must lie in [0, 1], got " + std::to_string(t));
  }
  const int min_side = config_.min_input_size();
  if (i0.rank() == 4 && std::max(i0.dim(2), i0.dim(3)) < min_side) {
    throw std::invalid_argument("granularity (" + std::to_string(config_.r_path_a) + "," +
                                std::to_string(config_.r_path_b) + ") needs inputs of at least " +
                                std::to_string(min_side) + " px on the longer side, got " + shape_str(i0.shape()));
  }
  StageTimes st;
  auto start = Clock::now();
  ++encoder_calls_;
  const auto enc = encoder_.encode_pair(i0, i1);
  st.encoder_s = seconds_since(start);

  start = Clock::now();
  const auto ms = mgmsfe_.forward(enc.fused);
  st.mg_msfe_s = seconds_since(start);

  std::vector<Tensor<T>> frames;
  const DecodeInputs<T> in{&i0, &i1, &enc.pyr0, &enc.pyr1, &ms};
  for (double t : times) {
    start = Clock::now();
    frames.push_back(decoder_.decode(in, t).frame);
    st.decode_s.push_back(seconds_since(start));
  }
  if (times_out) *times_out = std::move(st);
  return frames;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::interpolate(const Tensor<T>& i0, const Tensor<T>& i1,
                                             const std::vector<double>& times, StageTimes* times_out) const {
  if (i0.rank() != 4 || i0.dim(1) != 1 || i0.shape() != i1.shape()) {
    throw ShapeError("interpolate: frames must be equal N x 1 x H x W, got " + shape_str(i0.shape()) + " and " +
                     shape_str(i1.shape()));
  }
  NoGradGuard no_grad;
  const std::int64_t h = i0.dim(2), w = i0.dim(3);
  const std::int64_t min_side = config_.min_input_size();
  std::int64_t ph = round_up(h, 16), pw = round_up(w, 16);
  if (std::max(ph, pw) < min_side) ph = pw = round_up(min_side, 16);
  if (ph - h > h - 1 || pw - w > w - 1) {
    throw std::invalid_argument("interpolate: a " + std::to_string(h) + "x" + std::to_string(w) +
                                " frame is too small to pad to " + std::to_string(ph) + "x" + std::to_string(pw));
  }
  auto p0 = (ph == h && pw == w) ? i0 : reflect_pad(i0, ph - h, pw - w);
  auto p1 = (ph == h && pw == w) ? i1 : reflect_pad(i1, ph - h, pw - w);
  auto frames = forward(p0, p1, times, times_out);
  if (ph != h || pw != w) {
    for (auto& f : frames) f = crop(f, h, w);
  }
  return frames;
}

template <typename T>
void Model<T>::save(const std::filesystem::path& path) const {
  write_checkpoint(path, store_->export_arrays());
  write_key_values(sidecar_path(path), config_.to_map());
}

template <typename T>
std::unique_ptr<Model<T>> Model<T>::load(const std::filesystem::path& path) {
  const auto sidecar = sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) {
    throw ConfigError("checkpoint " + path.string() + " has no model description (" + sidecar.string() + ")");
  }
  auto model = std::make_unique<Model<T>>(ModelConfig::from_map(read_key_values(sidecar)));
  model->params().import_arrays(read_checkpoint(path));
  return model;
}

template class Model<float>;
template class Model<double>;

}  // namespace garamost
