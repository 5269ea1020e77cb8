#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "garamost/tensor.hpp"

namespace garamost {

// Checkpoint container layout (all integers little-endian):
//   "GMST1"
//   repeated until end of file:
//     u32 name_len, name bytes (UTF-8), u32 rank, u32 dims[rank], f32 values[prod(dims)]
inline constexpr char kCheckpointMagic[] = "GMST1";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedArray>& arrays);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);

// Throws ParseError (with the byte offset) on bad magic, truncation or
// implausible header fields.
std::vector<NamedArray> read_checkpoint(std::istream& in);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

}  // namespace garamost
