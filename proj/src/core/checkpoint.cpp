#include "garamost/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace garamost {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;
constexpr std::uint32_t kMaxNameLen = 1u << 16;
constexpr std::uint32_t kMaxRank = 8;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint truncated while reading ") + what, pos_);
    }
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedArray>& arrays) {
  std::string buf(kCheckpointMagic, kMagicLen);
  for (const auto& a : arrays) {
    if (shape_numel(a.shape) != static_cast<std::int64_t>(a.values.size())) {
      throw ShapeError("checkpoint entry '" + a.name + "' has " + std::to_string(a.values.size()) +
                       " values for shape " + shape_str(a.shape));
    }
    put_u32(buf, static_cast<std::uint32_t>(a.name.size()));
    buf += a.name;
    put_u32(buf, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) put_u32(buf, static_cast<std::uint32_t>(d));
    for (float f : a.values) put_u32(buf, std::bit_cast<std::uint32_t>(f));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  // write-then-rename so an interrupted save never clobbers the previous file
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    write_checkpoint(f, arrays);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<NamedArray> read_checkpoint(std::istream& in) {
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  if (r.take(std::min<std::size_t>(kMagicLen, 5), "magic") != std::string(kCheckpointMagic, kMagicLen)) {
    throw ParseError("not a checkpoint: bad magic (expected \"GMST1\")", 0);
  }
  std::vector<NamedArray> out;
  while (!r.at_end()) {
    NamedArray a;
    const std::size_t entry_start = r.pos();
    const auto name_len = r.u32("name length");
    if (name_len == 0 || name_len > kMaxNameLen) throw ParseError("implausible parameter name length", entry_start);
    a.name = r.take(name_len, "parameter name");
    const std::size_t rank_at = r.pos();
    const auto rank = r.u32("rank");
    if (rank > kMaxRank) throw ParseError("implausible rank " + std::to_string(rank), rank_at);
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = r.u32("dimension");
      a.shape.push_back(d);
      count *= d;
      if (count > (std::uint64_t(1) << 34)) throw ParseError("implausible tensor size", rank_at);
    }
    r.need(static_cast<std::size_t>(count) * 4, ("values of '" + a.name + "'").c_str());
    a.values.resize(static_cast<std::size_t>(count));
    for (auto& v : a.values) v = std::bit_cast<float>(r.u32("value"));
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(f);
}

}  // namespace garamost
