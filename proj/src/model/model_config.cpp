#include "garamost/model_config.hpp"

#include <algorithm>
#include <sstream>

#include "garamost/errors.hpp"

namespace garamost {

namespace {

int max_scope(int map_side) { return 2 * map_side - 1; }

int parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int out = 0;
  try {
    out = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](const char* name, int v) {
    if (v < 1) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(v));
  };
  positive("base_channels", base_channels);
  positive("model_dim", model_dim);
  positive("key_dim", key_dim);
  positive("value_dim", value_dim);
  positive("fme_width", fme_width);
  if (fme_blocks < 0) throw ConfigError("fme_blocks must be non-negative");
  for (int w : refiner_widths) positive("refiner_widths", w);
  if (key_dim % 2 != 0) throw ConfigError("key_dim must be even (position map alternates row/column ramps)");
  for (int r : {r_path_a, r_path_b}) {
    if (r < 1 || r % 2 == 0) throw ConfigError("granularity must be an odd positive integer, got " + std::to_string(r));
  }
}

int ModelConfig::min_input_size() const {
  // path A runs at 1/8 and path B at 1/16 of the padded input
  int side = 16;
  while (max_scope(side / 8) < r_path_a || max_scope(side / 16) < r_path_b) side += 16;
  return side;
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::ostringstream widths;
  for (std::size_t i = 0; i < refiner_widths.size(); ++i) widths << (i ? "," : "") << refiner_widths[i];
  return {
      {"base_channels", std::to_string(base_channels)},
      {"model_dim", std::to_string(model_dim)},
      {"key_dim", std::to_string(key_dim)},
      {"value_dim", std::to_string(value_dim)},
      {"granularity", std::to_string(r_path_a) + "," + std::to_string(r_path_b)},
      {"share_directions", share_directions ? "true" : "false"},
      {"deep_structs", deep_structs ? "true" : "false"},
      {"fme_width", std::to_string(fme_width)},
      {"fme_blocks", std::to_string(fme_blocks)},
      {"refiner_widths", widths.str()},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "base_channels") {
      c.base_channels = parse_int(k, v);
    } else if (k == "model_dim") {
      c.model_dim = parse_int(k, v);
    } else if (k == "key_dim") {
      c.key_dim = parse_int(k, v);
    } else if (k == "value_dim") {
      c.value_dim = parse_int(k, v);
    } else if (k == "granularity") {
      const auto comma = v.find(',');
      if (comma == std::string::npos) throw ConfigError("granularity expects 'rA,rB', got '" + v + "'");
      c.r_path_a = parse_int(k, v.substr(0, comma));
      c.r_path_b = parse_int(k, v.substr(comma + 1));
    } else if (k == "share_directions") {
      c.share_directions = parse_bool(k, v);
    } else if (k == "deep_structs") {
      c.deep_structs = parse_bool(k, v);
    } else if (k == "fme_width") {
      c.fme_width = parse_int(k, v);
    } else if (k == "fme_blocks") {
      c.fme_blocks = parse_int(k, v);
    } else if (k == "refiner_widths") {
      std::stringstream ss(v);
      std::string item;
      std::size_t i = 0;
      while (std::getline(ss, item, ',')) {
        if (i >= c.refiner_widths.size()) throw ConfigError("refiner_widths expects 4 values");
        c.refiner_widths[i++] = parse_int(k, item);
      }
      if (i != c.refiner_widths.size()) throw ConfigError("refiner_widths expects 4 values");
    } else {
      throw ConfigError("unknown model key '" + k + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace garamost
