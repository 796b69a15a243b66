#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fass/tensor.hpp"
#include "json.hpp"

namespace fass {

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// One JSON manifest line, a newline, then every array as little-endian f32
// in manifest order. The manifest carries `header` plus the array table.
void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const std::vector<NamedArray>& arrays);

struct CheckpointFile {
  nlohmann::json header;
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
};

CheckpointFile read_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& text);

}  // namespace fass
