#include "fass/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fass/errors.hpp"

namespace fass {

namespace {

constexpr const char* kFormat = "fass-checkpoint";
constexpr int kVersion = 1;

void append_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

float read_le(const char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const nlohmann::json& header,
                      const std::vector<NamedArray>& arrays) {
  nlohmann::json manifest = header;
  manifest["format"] = kFormat;
  manifest["version"] = kVersion;
  manifest["arrays"] = nlohmann::json::array();
  std::string payload;
  for (const auto& a : arrays) {
    if (shape_numel(a.shape) != a.values.size()) throw DimensionError("checkpoint: array " + a.name + " size mismatch");
    manifest["arrays"].push_back({{"name", a.name}, {"shape", a.shape}});
    for (float v : a.values) append_le(payload, v);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << manifest.dump() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

const NamedArray& CheckpointFile::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw FormatError("checkpoint: missing array " + name);
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  CheckpointFile file;
  try {
    file.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": bad manifest: " + e.what());
  }
  if (file.header.value("format", "") != kFormat) throw FormatError("checkpoint " + path.string() + ": not a checkpoint");
  if (file.header.value("version", 0) != kVersion) {
    throw FormatError("checkpoint " + path.string() + ": unknown version " + file.header["version"].dump());
  }
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t offset = 0;
  for (const auto& entry : file.header["arrays"]) {
    NamedArray a{entry["name"].get<std::string>(), entry["shape"].get<Shape>(), {}};
    const std::size_t n = shape_numel(a.shape);
    if (offset + 4 * n > payload.size()) {
      throw FormatError("checkpoint " + path.string() + ": expected at least " + std::to_string(offset + 4 * n) +
                        " payload bytes, found " + std::to_string(payload.size()));
    }
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) a.values[i] = read_le(payload.data() + offset + 4 * i);
    offset += 4 * n;
    file.arrays.push_back(std::move(a));
  }
  if (offset != payload.size()) {
    throw FormatError("checkpoint " + path.string() + ": expected " + std::to_string(offset) + " payload bytes, found " +
                      std::to_string(payload.size()));
  }
  file.header.erase("arrays");
  return file;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace fass
