#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "garamost/checkpoint.hpp"
#include "garamost/grad_check.hpp"
#include "garamost/ops.hpp"
#include "garamost/parallel.hpp"
#include "test_util.hpp"

using namespace garamost;
using garamost::testing::as_double;
using garamost::testing::max_abs_diff;
using garamost::testing::random_tensor;
using garamost::testing::reference_conv;

namespace {

std::vector<double> ramp(std::int64_t n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
  return v;
}

TensorD ones_kernel(std::int64_t o, std::int64_t c, std::int64_t k) { return TensorD::full({o, c, k, k}, 1.0); }

}  // namespace

TEST_CASE("conv2d sums a 3x3 neighbourhood of ones with zero padding") {
  auto x = TensorD::full({1, 1, 5, 5}, 1.0);
  auto y = conv2d(x, ConvSpec<double>{ones_kernel(1, 1, 3), {}, 1, 1, 1});
  CHECK(y.shape() == Shape{1, 1, 5, 5});
  CHECK(y.at({0, 0, 2, 2}) == doctest::Approx(9.0));
  CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(4.0));
  CHECK(y.at({0, 0, 0, 2}) == doctest::Approx(6.0));
}

TEST_CASE("dilated conv matches an explicitly zero-inflated kernel") {
  auto x = TensorD::from({1, 1, 5, 5}, ramp(25));
  auto k = random_tensor<double>({1, 1, 3, 3}, 7);
  auto y = conv2d(x, ConvSpec<double>{k, {}, 1, 2, 2});

  std::vector<double> inflated(25, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) inflated[(2 * i) * 5 + 2 * j] = k.at({0, 0, i, j});
  Shape os;
  auto ref = reference_conv(as_double(x), x.shape(), inflated, {1, 1, 5, 5}, nullptr, 1, 1, 2, 1, &os);
  CHECK(y.shape() == os);
  CHECK(max_abs_diff(as_double(y), ref) < 1e-12);
}

TEST_CASE("strided conv halves the map") {
  auto x = random_tensor<double>({2, 3, 8, 8}, 3);
  auto y = conv2d(x, ConvSpec<double>{random_tensor<double>({4, 3, 3, 3}, 4), {}, 2, 1, 1});
  CHECK(y.shape() == Shape{2, 4, 4, 4});
}

TEST_CASE("conv2d agrees with the nested-loop reference over random configurations") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    const int groups = pick(1, 2);
    const int cg = pick(1, 3), og = pick(1, 3);
    const int k = pick(0, 1) ? 3 : 1;
    const int stride = pick(1, 2), dilation = pick(1, 3), padding = pick(0, 3);
    const int h = pick(4, 8), w = pick(4, 8);
    if (conv_output_size(h, k, stride, dilation, padding) < 1 || conv_output_size(w, k, stride, dilation, padding) < 1)
      continue;
    auto x = random_tensor<float>({2, groups * cg, h, w}, 100 + trial);
    auto kern = random_tensor<float>({groups * og, cg, k, k}, 200 + trial);
    auto bias = random_tensor<float>({groups * og}, 300 + trial);
    auto y = conv2d(x, ConvSpec<float>{kern, bias, stride, dilation, padding, groups});
    Shape os;
    auto b = as_double(bias);
    auto ref = reference_conv(as_double(x), x.shape(), as_double(kern), kern.shape(), &b, stride, dilation, padding,
                              groups, &os);
    REQUIRE(y.shape() == os);
    CHECK(max_abs_diff(as_double(y), ref) < 1e-5);
  }
}

TEST_CASE("conv2d rejects mismatched channels") {
  auto x = TensorD::zeros({1, 2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, ConvSpec<double>{ones_kernel(1, 3, 3), {}, 1, 1, 1}), ShapeError);
}

TEST_CASE("bilinear_warp with zero flow is the identity") {
  auto img = random_tensor<double>({2, 3, 6, 7}, 5);
  auto y = bilinear_warp(img, TensorD::zeros({2, 2, 6, 7}));
  CHECK(max_abs_diff(as_double(y), as_double(img)) == 0.0);
}

TEST_CASE("bilinear_warp shifts a horizontal ramp") {
  const int H = 4, W = 6;
  std::vector<double> v(H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) v[y * W + x] = x;
  auto img = TensorD::from({1, 1, H, W}, v);

  std::vector<double> f(2 * H * W, 0.0);
  std::fill(f.begin(), f.begin() + H * W, 1.0);
  auto shifted = bilinear_warp(img, TensorD::from({1, 2, H, W}, f));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W - 1; ++x) CHECK(shifted.at({0, 0, y, x}) == doctest::Approx(x + 1));
  CHECK(shifted.at({0, 0, 0, W - 1}) == doctest::Approx(W - 1));

  std::fill(f.begin(), f.begin() + H * W, 0.5);
  auto half = bilinear_warp(img, TensorD::from({1, 2, H, W}, f));
  for (int x = 0; x < W - 1; ++x) CHECK(half.at({0, 0, 1, x}) == doctest::Approx(x + 0.5));
}

TEST_CASE("bilinear_warp rejects flow without two channels") {
  auto img = TensorD::zeros({1, 1, 4, 4});
  CHECK_THROWS_AS(bilinear_warp(img, TensorD::zeros({1, 3, 4, 4})), ShapeError);
}

TEST_CASE("pixel_shuffle tiles channels into r x r blocks") {
  auto x = TensorD::from({1, 16, 8, 8}, ramp(16 * 64));
  auto y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 4, 16, 16});
  for (int c = 0; c < 4; ++c)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int yy = 0; yy < 8; ++yy)
          for (int xx = 0; xx < 8; ++xx)
            REQUIRE(y.at({0, c, yy * 2 + i, xx * 2 + j}) == x.at({0, c * 4 + i * 2 + j, yy, xx}));
  auto back = pixel_unshuffle(y, 2);
  CHECK(max_abs_diff(as_double(back), as_double(x)) == 0.0);
  CHECK_THROWS_AS(pixel_shuffle(TensorD::zeros({1, 6, 2, 2}), 2), ShapeError);
}

TEST_CASE("softmax of equal logits is uniform") {
  auto y = softmax(TensorD::zeros({5}), 0);
  for (auto v : y.data()) CHECK(v == doctest::Approx(0.2));
}

TEST_CASE("softmax output is a distribution along the axis") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_tensor<float>({3, 7, 5}, seed, -20.0, 20.0);
    for (int axis = 0; axis < 3; ++axis) {
      auto y = softmax(x, axis);
      const auto& s = y.shape();
      std::int64_t outer = 1, inner = 1;
      for (int a = 0; a < axis; ++a) outer *= s[a];
      for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
      for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
          double total = 0.0;
          for (std::int64_t k = 0; k < s[axis]; ++k) {
            const float v = y.data()[(o * s[axis] + k) * inner + i];
            REQUIRE(v >= 0.0f);
            total += v;
          }
          REQUIRE(std::abs(total - 1.0) < 1e-6);
        }
    }
  }
}

TEST_CASE("prelu applies the negative slope") {
  auto y = prelu(TensorD::from({1, 2}, {-2.0, 3.0}), TensorD::from({1}, {0.25}));
  CHECK(y.data()[0] == doctest::Approx(-0.5));
  CHECK(y.data()[1] == doctest::Approx(3.0));
}

TEST_CASE("layer_norm standardizes a fiber") {
  auto y = layer_norm(TensorD::from({1, 4}, {1, 2, 3, 4}), TensorD::full({4}, 1.0), TensorD::zeros({4}), 1);
  double m = 0, var = 0;
  for (auto v : y.data()) m += v;
  m /= 4;
  for (auto v : y.data()) var += (v - m) * (v - m);
  var /= 4;
  CHECK(std::abs(m) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-6);
}

TEST_CASE("backward of sum(x*x) is 2x") {
  auto x = TensorD::from({3}, {1, 2, 3}, true);
  sum(x * x).backward();
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
  CHECK(x.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("leaf gradients accumulate and can be reset") {
  auto x = TensorD::from({2}, {1, 2}, true);
  sum(x).backward();
  sum(x).backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  x.zero_grad();
  CHECK(!x.has_grad());
}

TEST_CASE("tensors that do not require grad receive none") {
  auto w = TensorD::from({3}, {1, 2, 3}, true);
  auto c = TensorD::from({3}, {4, 5, 6});
  sum(w * c).backward();
  CHECK(!c.has_grad());
  CHECK(w.grad()[2] == doctest::Approx(6.0));
}

TEST_CASE("backward requires a scalar") {
  auto x = TensorD::from({2}, {1, 2}, true);
  CHECK_THROWS(scale(x, 2.0).backward());
}

TEST_CASE("no-grad mode records nothing") {
  auto x = TensorD::from({2}, {1, 2}, true);
  TensorD y;
  {
    NoGradGuard guard;
    y = sum(x * x);
  }
  CHECK(!y.requires_grad());
}

TEST_CASE("non-finite results raise a numeric error") {
  auto x = TensorD::from({1}, {1e308});
  CHECK_THROWS_AS(scale(x, 10.0), NumericError);
}

TEST_CASE("conv backward matches finite differences for an L1 loss") {
  auto x = random_tensor<double>({1, 2, 5, 5}, 21, -1, 1, true);
  auto k = random_tensor<double>({3, 2, 3, 3}, 22, -1, 1, true);
  auto b = random_tensor<double>({3}, 23, -1, 1, true);
  auto target = random_tensor<double>({1, 3, 5, 5}, 24, -3, 3);
  auto fn = [&](const std::vector<TensorD>& in) {
    return mean(abs(conv2d(in[0], ConvSpec<double>{in[1], in[2], 1, 1, 1}) - target));
  };
  CHECK(grad_check(fn, {x, k, b}, 1e-6) < 1e-4);
}

TEST_CASE("grad_check on smooth and linear functions") {
  auto x = random_tensor<double>({10}, 31, -2, 2, true);
  CHECK(grad_check([](const std::vector<TensorD>& in) { return sum(sigmoid(in[0])); }, {x}, 1e-5) < 1e-6);
  auto c = random_tensor<double>({10}, 32);
  CHECK(grad_check([&](const std::vector<TensorD>& in) { return sum(in[0] * c); }, {x}, 1e-5) < 1e-9);
}

TEST_CASE("warp gradient with respect to a non-integer flow") {
  auto img = random_tensor<double>({1, 2, 6, 6}, 41, 0, 1);
  auto flow = random_tensor<double>({1, 2, 6, 6}, 42, 0.1, 0.9, true);
  // keep samples strictly inside so the clamp is inactive
  auto fn = [&](const std::vector<TensorD>& in) {
    return sum(slice(slice(bilinear_warp(img, in[0]), 2, 0, 4), 3, 0, 4));
  };
  CHECK(grad_check(fn, {flow}, 1e-6) < 1e-4);
}

TEST_CASE("every differentiable primitive passes finite differences across seeds") {
  auto check = [](const char* name, std::uint64_t seed, double err) {
    INFO(std::string(name) << " seed " << seed);
    CHECK(err < 1e-4);
  };
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::uint64_t b = 1000 + 10 * s;
    auto w = random_tensor<double>({2, 3, 4, 4}, b + 9);  // random projection makes the loss non-trivial
    auto proj = [&](const TensorD& t) {
      return sum(t * random_tensor<double>(t.shape(), b + 8));
    };
    auto a = random_tensor<double>({2, 3, 4, 4}, b, -1, 1, true);
    auto c = random_tensor<double>({2, 3, 4, 4}, b + 1, -1, 1, true);
    check("add", s, grad_check([&](auto& in) { return proj(add(in[0], in[1])); }, {a, c}, 1e-6));
    check("sub", s, grad_check([&](auto& in) { return proj(sub(in[0], in[1])); }, {a, c}, 1e-6));
    check("mul", s, grad_check([&](auto& in) { return proj(mul(in[0], in[1])); }, {a, c}, 1e-6));
    check("add_scalar", s, grad_check([&](auto& in) { return proj(add_scalar(in[0], 0.3)); }, {a}, 1e-6));
    check("scale", s, grad_check([&](auto& in) { return proj(scale(in[0], -1.7)); }, {a}, 1e-6));
    check("sigmoid", s, grad_check([&](auto& in) { return proj(sigmoid(in[0])); }, {a}, 1e-6));
    check("abs", s, grad_check([&](auto& in) { return proj(abs(in[0])); }, {a}, 1e-6));
    check("clamp", s, grad_check([&](auto& in) { return proj(clamp(in[0], -0.5, 0.5)); }, {a}, 1e-6));
    auto slope = random_tensor<double>({3}, b + 2, 0.1, 0.5, true);
    check("prelu", s, grad_check([&](auto& in) { return proj(prelu(in[0], in[1])); }, {a, slope}, 1e-6));
    check("mean", s, grad_check([&](auto& in) { return mean(in[0] * in[0]); }, {a}, 1e-6));
    check("softmax", s, grad_check([&](auto& in) { return proj(softmax(in[0], 1)); }, {a}, 1e-6));
    auto gain = random_tensor<double>({3}, b + 3, 0.5, 1.5, true);
    auto shift = random_tensor<double>({3}, b + 4, -0.5, 0.5, true);
    check("layer_norm", s,
          grad_check([&](auto& in) { return proj(layer_norm(in[0], in[1], in[2], 1)); }, {a, gain, shift}, 1e-6));
    check("reshape", s, grad_check([&](auto& in) { return sum(reshape(in[0], {6, 16}) * reshape(w, {6, 16})); }, {a},
                                   1e-6));
    check("concat", s,
          grad_check([&](auto& in) { return proj(concat<double>({in[0], in[1]}, 1)); }, {a, c}, 1e-6));
    check("slice", s, grad_check([&](auto& in) { return proj(slice(in[0], 2, 1, 3)); }, {a}, 1e-6));
    auto m1 = random_tensor<double>({3, 4, 5}, b + 5, -1, 1, true);
    auto m2 = random_tensor<double>({3, 5, 2}, b + 6, -1, 1, true);
    check("matmul", s, grad_check([&](auto& in) { return proj(matmul(in[0], in[1])); }, {m1, m2}, 1e-6));
    auto m3 = random_tensor<double>({3, 2, 4}, b + 7, -1, 1, true);
    check("matmul_t", s,
          grad_check([&](auto& in) { return proj(matmul(in[0], in[1], true, true)); }, {m1, m3}, 1e-6));
    auto k = random_tensor<double>({4, 3, 3, 3}, b + 11, -1, 1, true);
    auto kb = random_tensor<double>({4}, b + 12, -1, 1, true);
    check("conv2d", s,
          grad_check([&](auto& in) { return proj(conv2d(in[0], ConvSpec<double>{in[1], in[2], 2, 1, 1})); },
                     {a, k, kb}, 1e-6));
    auto kd = random_tensor<double>({3, 1, 3, 3}, b + 13, -1, 1, true);
    check("conv2d_dilated_grouped", s,
          grad_check([&](auto& in) { return proj(conv2d(in[0], ConvSpec<double>{in[1], {}, 1, 2, 2, 3})); },
                     {a, kd}, 1e-6));
    auto img = random_tensor<double>({2, 3, 4, 4}, b + 14, 0, 1, true);
    auto flow = random_tensor<double>({2, 2, 4, 4}, b + 15, 0.1, 0.9, true);
    // fractional flow on the interior 2x2 never reaches the clamp or an integer sample position
    check("bilinear_warp", s, grad_check([&](auto& in) {
            return proj(slice(slice(bilinear_warp(in[0], in[1]), 2, 1, 3), 3, 1, 3));
          }, {img, flow}, 1e-6));
    auto sh = random_tensor<double>({1, 8, 2, 3}, b + 16, -1, 1, true);
    check("pixel_shuffle", s, grad_check([&](auto& in) { return proj(pixel_shuffle(in[0], 2)); }, {sh}, 1e-6));
    check("pixel_unshuffle", s, grad_check([&](auto& in) { return proj(pixel_unshuffle(in[0], 2)); }, {a}, 1e-6));
    check("resize_bilinear", s,
          grad_check([&](auto& in) { return proj(resize_bilinear(in[0], 7, 3)); }, {a}, 1e-6));
    check("reflect_pad", s, grad_check([&](auto& in) { return proj(reflect_pad(in[0], 2, 3)); }, {a}, 1e-6));
    auto lw = random_tensor<double>({2, 9, 4, 4}, b + 17, -1, 1, true);
    check("local_aggregate", s,
          grad_check([&](auto& in) { return proj(local_aggregate(in[0], in[1], 3)); }, {lw, a}, 1e-6));
  }
}

TEST_CASE("local_aggregate matches a direct window sum") {
  auto wts = random_tensor<double>({1, 9, 4, 5}, 51);
  auto vals = random_tensor<double>({1, 2, 4, 5}, 52);
  auto y = local_aggregate(wts, vals, 3);
  for (int c = 0; c < 2; ++c)
    for (int yy = 0; yy < 4; ++yy)
      for (int xx = 0; xx < 5; ++xx) {
        double acc = 0.0;
        int o = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx, ++o) {
            const int sy = yy + dy, sx = xx + dx;
            if (sy < 0 || sy >= 4 || sx < 0 || sx >= 5) continue;
            acc += wts.at({0, o, yy, xx}) * vals.at({0, c, sy, sx});
          }
        REQUIRE(y.at({0, c, yy, xx}) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("resize_bilinear preserves constants and matches half-pixel sampling") {
  auto c = TensorD::full({1, 1, 4, 4}, 3.0);
  auto up = resize_bilinear(c, 8, 8);
  for (auto v : up.data()) CHECK(v == doctest::Approx(3.0));
  auto x = TensorD::from({1, 1, 1, 2}, {0.0, 1.0});
  auto y = resize_bilinear(x, 1, 4);
  // output centres at 0.5,1.5,2.5,3.5 map to source -0.25 (clamped),0.25,0.75,1.25 (clamped)
  CHECK(y.data()[0] == doctest::Approx(0.0));
  CHECK(y.data()[1] == doctest::Approx(0.25));
  CHECK(y.data()[2] == doctest::Approx(0.75));
  CHECK(y.data()[3] == doctest::Approx(1.0));
}

TEST_CASE("forward and backward are bitwise deterministic and thread-count independent") {
  auto run = [](int threads) {
    set_thread_count(threads);
    auto x = random_tensor<float>({3, 4, 16, 16}, 61, -1, 1, true);
    auto k = random_tensor<float>({8, 4, 3, 3}, 62, -1, 1, true);
    auto y = conv2d(x, ConvSpec<float>{k, {}, 1, 1, 1});
    auto loss = mean(abs(y));
    loss.backward();
    std::vector<float> out(y.data().begin(), y.data().end());
    out.insert(out.end(), k.grad().begin(), k.grad().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    return out;
  };
  const int original = thread_count();
  auto a = run(1);
  auto b = run(1);
  auto c = run(4);
  set_thread_count(original);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::vector<NamedArray> arrays{{"a.weight", {2, 3}, {1.5f, -2.0f, 3.25f, 0.0f, -0.0f, 1e-30f}},
                                 {"b", {1}, {std::nextafter(1.0f, 2.0f)}}};
  std::stringstream ss;
  write_checkpoint(ss, arrays);
  auto back = read_checkpoint(ss);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].name == arrays[i].name);
    CHECK(back[i].shape == arrays[i].shape);
    CHECK(std::memcmp(back[i].values.data(), arrays[i].values.data(), arrays[i].values.size() * 4) == 0);
  }
}

TEST_CASE("corrupted checkpoints raise parse errors") {
  std::vector<NamedArray> arrays{{"w", {4}, {1, 2, 3, 4}}};
  std::stringstream ss;
  write_checkpoint(ss, arrays);
  const std::string good = ss.str();

  std::stringstream truncated(good.substr(0, good.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), ParseError);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::stringstream m(bad_magic);
  try {
    read_checkpoint(m);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 0);
  }

  std::string bad_rank = good;
  bad_rank[5 + 4 + 1] = 100;  // rank field after magic, name length and name
  std::stringstream r(bad_rank);
  CHECK_THROWS_AS(read_checkpoint(r), ParseError);
}
