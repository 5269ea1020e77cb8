#pragma once

#include <array>
#include <map>
#include <string>

namespace garamost {

struct ModelConfig {
  int base_channels = 16;  // C: L0 width, doubled per pyramid level
  int model_dim = 64;      // D: fused feature width
  int key_dim = 16;        // |k|
  int value_dim = 64;      // |v|
  int r_path_a = 7;        // local position scope on the 1/8 path
  int r_path_b = 7;        // local position scope on the 1/16 path
  bool share_directions = true;
  bool deep_structs = false;
  int fme_width = 64;
  int fme_blocks = 4;
  std::array<int, 4> refiner_widths{32, 64, 128, 256};
  bool zero_init_heads = true;

  // Throws ConfigError describing the first invalid field.
  void validate() const;

  // Smallest input side (after padding to a multiple of 16) that supports
  // both granularities.
  int min_input_size() const;

  // Round-trips through flat `key = value` text (checkpoint sidecars).
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

}  // namespace garamost
