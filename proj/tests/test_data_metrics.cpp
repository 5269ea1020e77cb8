#include <doctest.h>

#include <filesystem>
#include <random>

#include "garamost/errors.hpp"
#include "garamost/image_io.hpp"
#include "garamost/metrics.hpp"
#include "garamost/phantom.hpp"
#include "oracles.hpp"

using namespace garamost;
using namespace garamost::testing;

namespace {

Image random_image(std::int64_t w, std::int64_t h, int maxval, std::uint64_t seed) {
  Image img(w, h, maxval);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dist(0, maxval);
  for (auto& p : img.pixels) p = static_cast<float>(dist(rng)) / static_cast<float>(maxval);
  return img;
}

Image smooth_image(std::int64_t size, double phase) {
  Image img(size, size);
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x)
      img.at(x, y) = static_cast<float>(0.5 + 0.4 * std::sin(0.4 * x + phase) * std::cos(0.3 * y - phase));
  return img;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("garamost_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("PGM round trip is bit exact at 8 and 16 bits") {
  for (int maxval : {255, 65535, 1000}) {
    const auto img = random_image(13, 7, maxval, static_cast<std::uint64_t>(maxval));
    const auto bytes = encode_pgm(img);
    const auto back = decode_pgm(bytes);
    CHECK(back.width == 13);
    CHECK(back.height == 7);
    CHECK(back.maxval == maxval);
    CHECK(back.pixels == img.pixels);
    CHECK(encode_pgm(back) == bytes);
  }
  const auto img = random_image(5, 4, 255, 3);
  CHECK(encode_pgm(img).size() == std::string("P5\n5 4\n255\n").size() + 20);
  CHECK(encode_pgm(random_image(5, 4, 65535, 3)).size() == std::string("P5\n5 4\n65535\n").size() + 40);
}

TEST_CASE("PGM header comments are skipped") {
  const std::string bytes = std::string("P5\n# made by hand\n2 1\n255\n") + '\x00' + '\xff';
  const auto img = decode_pgm(bytes);
  CHECK(img.pixels == std::vector<float>{0.0f, 1.0f});
}

TEST_CASE("malformed PGM input gives parse errors with offsets") {
  auto offset_of = [](const std::string& bytes) -> std::int64_t {
    try {
      decode_pgm(bytes);
    } catch (const ParseError& e) {
      return static_cast<std::int64_t>(e.offset());
    }
    return -1;
  };
  CHECK(offset_of("") == 0);
  CHECK(offset_of("GIF89a") == 0);
  CHECK(offset_of("P2\n2 2\n255\n0 0 0 0") == 1);
  CHECK(offset_of("P5\n2 2\n255\n\x01\x02") >= 0);
  CHECK(offset_of("P5\n0 2\n255\n") >= 0);
  CHECK(offset_of("P5\n2 x\n255\n") >= 0);
  CHECK(offset_of("P5\n1 1\n70000\n\x01") >= 0);
  // 16-bit sample above maxval
  CHECK(offset_of(std::string("P5\n1 1\n300\n") + '\x01' + '\x2d') >= 0);

  const std::string good = encode_pgm(random_image(6, 6, 255, 9));
  for (std::size_t cut = 0; cut < good.size(); ++cut) CHECK_THROWS_AS(decode_pgm(good.substr(0, cut)), ParseError);
  CHECK_THROWS_AS(load_pgm("/nonexistent/garamost.pgm"), std::runtime_error);
}

TEST_CASE("sequences round trip through directories") {
  const auto dir = scratch_dir("seq");
  std::vector<Image> frames{random_image(8, 8, 255, 1), random_image(8, 8, 255, 2), random_image(8, 8, 65535, 3)};
  save_sequence(frames, dir);
  CHECK(std::filesystem::exists(frame_path(dir, 2)));
  CHECK(frame_path(dir, 2).filename() == "frame_0002.pgm");
  const auto back = load_sequence(dir);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back[i].pixels == frames[i].pixels);
  std::filesystem::remove_all(dir);
}

TEST_CASE("image tensor conversion") {
  const auto a = random_image(6, 4, 255, 1), b = random_image(6, 4, 255, 2);
  const auto t = images_to_tensor({&a, &b});
  CHECK(t.shape() == Shape{2, 1, 4, 6});
  CHECK(tensor_to_image(t, 1).pixels == b.pixels);
  CHECK(image_to_tensor(a).shape() == Shape{1, 1, 4, 6});
  const auto c = random_image(5, 4, 255, 3);
  CHECK_THROWS_AS(images_to_tensor({&a, &c}), ShapeError);
}

TEST_CASE("phantom sequences are deterministic and defined at any time") {
  PhantomParams params;
  const auto a = synth_sequence(42, 4, 64, params), b = synth_sequence(42, 4, 64, params);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.frames[i].pixels == b.frames[i].pixels);
  const auto c = synth_sequence(43, 4, 64, params);
  CHECK(a.frames[0].pixels != c.frames[0].pixels);

  for (const auto& f : a.frames)
    for (float p : f.pixels) {
      CHECK(p >= 0.0f);
      CHECK(p <= 1.0f);
    }
  CHECK(a.frames[0].pixels != a.frames[1].pixels);

  const Phantom ph(42, 64, params);
  CHECK(ph.render(2.0).pixels == a.frames[2].pixels);
  const auto mid = ph.render(1.5);
  CHECK(mid.pixels != a.frames[1].pixels);
  CHECK(mid.pixels != a.frames[2].pixels);

  PhantomParams still = params;
  still.rotation_per_frame = 0.0;
  still.bolus_speed = 0.0;
  const auto s = synth_sequence(7, 3, 32, still);
  CHECK(s.frames[0].pixels == s.frames[1].pixels);
  CHECK(s.frames[1].pixels == s.frames[2].pixels);
}

TEST_CASE("sliding windows of n + 2 frames") {
  std::vector<Image> frames;
  for (int i = 0; i < 5; ++i) frames.push_back(random_image(4, 4, 255, static_cast<std::uint64_t>(i)));
  const auto three = make_samples(frames, 3);
  REQUIRE(three.size() == 1);
  REQUIRE(three[0].targets.size() == 3);
  CHECK(three[0].targets[0].first == 0.25);
  CHECK(three[0].targets[2].first == 0.75);
  CHECK(three[0].targets[1].second.pixels == frames[2].pixels);
  CHECK(three[0].i1.pixels == frames[4].pixels);

  const auto one = make_samples(frames, 1);
  REQUIRE(one.size() == 3);
  CHECK(one[2].i0.pixels == frames[2].pixels);
  CHECK(one[2].targets[0].first == 0.5);
  CHECK(one[2].targets[0].second.pixels == frames[3].pixels);

  frames.pop_back();
  CHECK(make_samples(frames, 2).size() == 1);
  CHECK_THROWS_AS(make_samples(frames, 3), std::invalid_argument);
}

TEST_CASE("SSIM and PSNR match the direct formulas on 16x16 fixtures") {
  std::vector<std::pair<Image, Image>> cases;
  cases.emplace_back(random_image(16, 16, 255, 1), random_image(16, 16, 255, 2));
  cases.emplace_back(smooth_image(16, 0.0), smooth_image(16, 0.2));
  auto noisy = smooth_image(16, 0.0);
  for (std::size_t i = 0; i < noisy.pixels.size(); ++i) noisy.pixels[i] += (i % 3 == 0 ? 0.02f : -0.01f);
  cases.emplace_back(smooth_image(16, 0.0), noisy);
  Image binary(16, 16), inverted(16, 16);
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t x = 0; x < 16; ++x) {
      binary.at(x, y) = ((x / 3 + y / 5) % 2) ? 1.0f : 0.0f;
      inverted.at(x, y) = 1.0f - binary.at(x, y);
    }
  cases.emplace_back(binary, inverted);
  cases.emplace_back(random_image(17, 23, 255, 5), random_image(17, 23, 255, 6));

  for (const auto& [a, b] : cases) {
    CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9);
    CHECK(std::abs(psnr(a, b) - psnr_oracle(a, b)) < 1e-9);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
  }
  CHECK(ssim(binary, inverted) < 0.0);
  CHECK(std::abs(ssim(binary, binary) - 100.0) < 1e-9);
  CHECK(psnr(binary, binary) == kPsnrCap);
  CHECK(psnr(binary, inverted) == 0.0);

  // uniform offset of 0.1 gives MSE 0.01, i.e. 20 dB
  Image lo(16, 16), hi(16, 16);
  for (auto& p : lo.pixels) p = 0.25f;
  for (auto& p : hi.pixels) p = 0.25f + 0.1f;
  CHECK(std::abs(psnr(lo, hi) - psnr_oracle(lo, hi)) < 1e-9);
  CHECK(std::abs(psnr(lo, hi) - 20.0) < 1e-5);

  // larger errors give lower PSNR
  const auto base = smooth_image(16, 0.0);
  double last = kPsnrCap + 1;
  for (float d : {0.001f, 0.01f, 0.05f, 0.2f}) {
    auto shifted = base;
    for (auto& p : shifted.pixels) p += d;
    const double v = psnr(base, shifted);
    CHECK(v < last);
    last = v;
  }

  CHECK_THROWS_AS(ssim(random_image(16, 16, 255, 1), random_image(16, 15, 255, 1)), std::invalid_argument);
  CHECK_THROWS_AS(ssim(random_image(10, 16, 255, 1), random_image(10, 16, 255, 1)), std::invalid_argument);
}

TEST_CASE("aggregate mean and population std") {
  const auto two = aggregate({90.0, 100.0});
  CHECK(two.mean == 95.0);
  CHECK(two.std == 5.0);
  const auto pair = aggregate({1.0, 3.0});
  CHECK(pair.mean == 2.0);
  CHECK(pair.std == 1.0);
  const auto one = aggregate({42.5});
  CHECK(one.mean == 42.5);
  CHECK(one.std == 0.0);
  CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
  const auto p = aggregate({1.0, 4.0, 2.5, 7.0}), q = aggregate({7.0, 2.5, 4.0, 1.0});
  CHECK(p.mean == q.mean);
  CHECK(p.std == q.std);
}

TEST_CASE("derived seeds differ by index and base") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 9) == derive_seed(5, 9));
}
