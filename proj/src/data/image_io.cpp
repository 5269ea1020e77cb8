#include "garamost/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace garamost {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

class HeaderReader {
 public:
  HeaderReader(const std::string& b, std::size_t start) : b_(b), pos_(start) {}

  std::size_t pos() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (is_space(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > 1'000'000'000L) throw ParseError(std::string("PGM ") + what + " is implausibly large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("PGM header: expected ") + what +
                           (pos_ < b_.size() ? "" : " but reached end of file"),
                       start);
    }
    return v;
  }

  void single_whitespace() {
    if (pos_ >= b_.size() || !is_space(b_[pos_])) {
      throw ParseError("PGM header: expected a whitespace byte before pixel data", pos_);
    }
    ++pos_;
  }

 private:
  const std::string& b_;
  std::size_t pos_;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

Image decode_pgm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("not a PGM file (missing 'P' magic)", 0);
  if (bytes[1] != '5') {
    throw ParseError(std::string("unsupported PGM variant 'P") + bytes[1] + "' (only binary P5 is accepted)", 1);
  }
  HeaderReader r(bytes, 2);
  if (r.pos() < bytes.size() && !is_space(bytes[r.pos()]) && bytes[r.pos()] != '#') {
    throw ParseError("PGM header: expected whitespace after magic", r.pos());
  }
  const std::size_t wpos = r.pos();
  const long w = r.number("width");
  const long h = r.number("height");
  const std::size_t mpos = r.pos();
  const long maxval = r.number("maxval");
  if (w < 1 || h < 1) throw ParseError("PGM header: image must be at least 1x1", wpos);
  if (maxval < 1 || maxval > 65535) throw ParseError("PGM header: maxval must be in 1..65535", mpos);
  r.single_whitespace();

  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t data_start = r.pos();
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * bps;
  if (bytes.size() - data_start < need) {
    throw ParseError("PGM payload truncated: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(bytes.size() - data_start),
                     bytes.size());
  }
  Image img(w, h, static_cast<int>(maxval));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + data_start);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const unsigned v = bps == 1 ? p[i] : (unsigned(p[2 * i]) << 8) | p[2 * i + 1];
    if (v > static_cast<unsigned>(maxval)) {
      throw ParseError("PGM sample " + std::to_string(v) + " exceeds maxval " + std::to_string(maxval),
                       data_start + i * bps);
    }
    img.pixels[i] = static_cast<float>(v) / static_cast<float>(maxval);
  }
  return img;
}

std::string encode_pgm(const Image& image) {
  if (image.width < 1 || image.height < 1 ||
      static_cast<std::int64_t>(image.pixels.size()) != image.width * image.height) {
    throw ShapeError("encode_pgm: image dimensions do not match its pixel count");
  }
  if (image.maxval < 1 || image.maxval > 65535) throw std::invalid_argument("encode_pgm: maxval must be in 1..65535");
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n" +
                    std::to_string(image.maxval) + "\n";
  const bool wide = image.maxval >= 256;
  out.reserve(out.size() + image.pixels.size() * (wide ? 2 : 1));
  for (float f : image.pixels) {
    const double c = std::clamp(static_cast<double>(f), 0.0, 1.0);
    const auto v = static_cast<unsigned>(std::lround(c * image.maxval));
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFFu));
  }
  return out;
}

Image load_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void save_pgm(const Image& image, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write to " + path.string() + " failed");
}

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof name, "frame_%04zu.pgm", index);
  return dir / name;
}

void save_sequence(const std::vector<Image>& frames, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) save_pgm(frames[i], frame_path(dir, i));
}

std::vector<Image> load_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<Image> frames;
  for (std::size_t i = 0;; ++i) {
    const auto p = frame_path(dir, i);
    if (!std::filesystem::exists(p)) break;
    frames.push_back(load_pgm(p));
    if (frames.back().width != frames.front().width || frames.back().height != frames.front().height) {
      throw ShapeError("sequence " + dir.string() + ": " + p.filename().string() + " differs in size from frame 0");
    }
  }
  if (frames.empty()) throw std::runtime_error("no frame_0000.pgm in " + dir.string());
  return frames;
}

TensorF image_to_tensor(const Image& image) { return images_to_tensor({&image}); }

TensorF images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: no images");
  const auto w = images.front()->width, h = images.front()->height;
  std::vector<float> v;
  v.reserve(images.size() * static_cast<std::size_t>(w * h));
  for (const Image* im : images) {
    if (im->width != w || im->height != h) throw ShapeError("images_to_tensor: images differ in size");
    v.insert(v.end(), im->pixels.begin(), im->pixels.end());
  }
  return TensorF::from({static_cast<std::int64_t>(images.size()), 1, h, w}, std::move(v));
}

Image tensor_to_image(const TensorF& t, std::int64_t n, int maxval) {
  if (t.rank() != 4 || t.dim(1) != 1 || n < 0 || n >= t.dim(0)) {
    throw ShapeError("tensor_to_image: expected N x 1 x H x W with sample " + std::to_string(n) + ", got " +
                     shape_str(t.shape()));
  }
  Image img(t.dim(3), t.dim(2), maxval);
  const auto d = t.data();
  const auto plane = img.width * img.height;
  std::copy_n(d.begin() + n * plane, plane, img.pixels.begin());
  return img;
}

}  // namespace garamost
