#include "garamost/encoder.hpp"

namespace garamost {

namespace {

// Downsample factors of the three members of a path, finest first. The m-th
// member gets factor/2 dilated convs, each at stride `factor`.
constexpr std::array<int, 3> kMemberFactor{8, 4, 2};

}  // namespace

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_batch(const Tensor<T>& x) {
  const auto n = x.dim(0);
  if (n % 2 != 0) throw ShapeError("split_batch: odd batch " + shape_str(x.shape()));
  return {slice(x, 0, 0, n / 2), slice(x, 0, n / 2, n)};
}

template <typename T>
Encoder<T>::Encoder(ParamStore<T>& store, const ModelConfig& config) {
  const std::int64_t C = config.base_channels;
  std::int64_t in = 1;
  for (int l = 0; l < 4; ++l) {
    const std::int64_t out = C << l;
    levels_[l] = make_conv_act(store, "msfe.level" + std::to_string(l), in, out, 3,
                               ConvOptions{.stride = l == 0 ? 1 : 2});
    in = out;
  }

  auto build_path = [&](Path& p, const std::string& name, int first_level) {
    std::int64_t total = 0;
    for (int m = 0; m < 3; ++m) {
      const std::int64_t ch = C << (first_level + m);
      const int f = kMemberFactor[m];
      for (int n = 1; n <= f / 2; ++n) {
        p.members[m].push_back(make_conv(store,
                                         name + ".member" + std::to_string(m) + ".dil" + std::to_string(n), ch, ch, 3,
                                         ConvOptions{.stride = f, .dilation = n, .padding = n, .bias = false}));
        total += ch;
      }
    }
    p.project = make_conv(store, name + ".project", total, config.model_dim, 1);
    p.norm = make_norm(store, name + ".norm", config.model_dim);
  };
  build_path(path_a_, "csfcf.pathA", 0);
  build_path(path_b_, "csfcf.pathB", 1);
}

template <typename T>
PyramidFeatures<T> Encoder<T>::extract_pyramid(const Tensor<T>& frames) const {
  if (frames.rank() != 4 || frames.dim(1) != 1) {
    throw ShapeError("extract_pyramid: expected N x 1 x H x W frames, got " + shape_str(frames.shape()));
  }
  if (frames.dim(2) % 16 != 0 || frames.dim(3) % 16 != 0) {
    throw ShapeError("extract_pyramid: spatial size " + shape_str(frames.shape()) +
                     " is not a multiple of 16; reflect-pad the frames first");
  }
  PyramidFeatures<T> p;
  Tensor<T> x = frames;
  for (int l = 0; l < 4; ++l) {
    x = levels_[l](x);
    p.L[l] = x;
  }
  return p;
}

template <typename T>
Tensor<T> Encoder<T>::fuse_path(const Tensor<T>& fine, const Tensor<T>& mid, const Tensor<T>& deep,
                                FusionPath path) const {
  const Path& p = path == FusionPath::A ? path_a_ : path_b_;
  const std::array<const Tensor<T>*, 3> members{&fine, &mid, &deep};
  const std::int64_t th = deep.dim(2) / 2, tw = deep.dim(3) / 2;
  for (int m = 0; m < 3; ++m) {
    const auto& s = members[m]->shape();
    const auto expect_c = p.members[m].front().spec.kernel.dim(1);
    if (s.size() != 4 || s[1] != expect_c || s[2] != th * kMemberFactor[m] || s[3] != tw * kMemberFactor[m]) {
      throw ShapeError("fuse_path: member " + std::to_string(m) + " has shape " + shape_str(s) +
                       ", inconsistent with a path targeting " + std::to_string(th) + "x" + std::to_string(tw));
    }
  }
  std::vector<Tensor<T>> parts;
  for (int m = 0; m < 3; ++m) {
    for (const auto& conv : p.members[m]) parts.push_back(conv(*members[m]));
  }
  return p.project(concat(parts, 1));
}

template <typename T>
EncodedPair<T> Encoder<T>::encode_pair(const Tensor<T>& i0, const Tensor<T>& i1) const {
  if (i0.shape() != i1.shape()) {
    throw ShapeError("encode_pair: frame shapes differ: " + shape_str(i0.shape()) + " vs " + shape_str(i1.shape()));
  }
  const auto pyr = extract_pyramid(concat<T>({i0, i1}, 0));
  const auto a = path_a_.norm(fuse_path(pyr.L[0], pyr.L[1], pyr.L[2], FusionPath::A));
  const auto b = path_b_.norm(fuse_path(pyr.L[1], pyr.L[2], pyr.L[3], FusionPath::B));

  EncodedPair<T> out;
  for (int l = 0; l < 4; ++l) std::tie(out.pyr0.L[l], out.pyr1.L[l]) = split_batch(pyr.L[l]);
  std::tie(out.fused.I00, out.fused.I10) = split_batch(a);
  std::tie(out.fused.I01, out.fused.I11) = split_batch(b);
  return out;
}

template class Encoder<float>;
template class Encoder<double>;
template std::pair<Tensor<float>, Tensor<float>> split_batch(const Tensor<float>&);
template std::pair<Tensor<double>, Tensor<double>> split_batch(const Tensor<double>&);

}  // namespace garamost
