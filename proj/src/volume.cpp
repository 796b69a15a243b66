#include "fass/volume.hpp"

#include <algorithm>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>

#include "fass/errors.hpp"
#include "json.hpp"

namespace fass {

namespace fs = std::filesystem;

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

Mask Volume::foreground() const {
  Mask m(dims);
  for (std::size_t i = 0; i < labels.size(); ++i) m.values[i] = labels[i] > 0 ? 1 : 0;
  return m;
}

Mask Volume::class_mask(std::uint8_t cls) const {
  Mask m(dims);
  for (std::size_t i = 0; i < labels.size(); ++i) m.values[i] = labels[i] == cls ? 1 : 0;
  return m;
}

Volume crop(const Volume& v, const Coord3& origin, const Dims3& size) {
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || size[a] <= 0 || origin[a] + size[a] > v.dims[a]) {
      throw DimensionError("crop: region exceeds volume bounds on axis " + std::to_string(a));
    }
  }
  Volume out(size);
  out.spacing_mm = v.spacing_mm;
  for (int z = 0; z < size[0]; ++z)
    for (int y = 0; y < size[1]; ++y) {
      const std::size_t src = flat_index(v.dims, origin[0] + z, origin[1] + y, origin[2]);
      const std::size_t dst = flat_index(size, z, y, 0);
      std::copy_n(v.intensities.begin() + static_cast<std::ptrdiff_t>(src), size[2],
                  out.intensities.begin() + static_cast<std::ptrdiff_t>(dst));
      std::copy_n(v.labels.begin() + static_cast<std::ptrdiff_t>(src), size[2],
                  out.labels.begin() + static_cast<std::ptrdiff_t>(dst));
    }
  return out;
}

namespace {

// One counter-clockwise quarter turn in the (a, b) plane:
// out[.., i (axis a), j (axis b), ..] = in[.., j, n_b - 1 - i, ..].
template <typename T>
std::vector<T> quarter_turn(const std::vector<T>& in, const Dims3& dims, int a, int b, Dims3& out_dims) {
  out_dims = dims;
  std::swap(out_dims[a], out_dims[b]);
  std::vector<T> out(in.size());
  for (int z = 0; z < out_dims[0]; ++z)
    for (int y = 0; y < out_dims[1]; ++y)
      for (int x = 0; x < out_dims[2]; ++x) {
        std::array<int, 3> o{z, y, x};
        std::array<int, 3> s = o;
        s[a] = o[b];
        s[b] = dims[b] - 1 - o[a];
        out[flat_index(out_dims, z, y, x)] = in[flat_index(dims, s[0], s[1], s[2])];
      }
  return out;
}

std::pair<int, int> plane_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    case 2: return {0, 1};
  }
  throw ConfigError("rotate90: axis must be 0, 1 or 2");
}

}  // namespace

Volume rotate90(const Volume& v, int axis, int quarter_turns) {
  const auto [a, b] = plane_axes(axis);
  Volume cur = v;
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    Volume next;
    next.intensities = quarter_turn(cur.intensities, cur.dims, a, b, next.dims);
    next.labels = quarter_turn(cur.labels, cur.dims, a, b, next.dims);
    next.spacing_mm = cur.spacing_mm;
    std::swap(next.spacing_mm[a], next.spacing_mm[b]);
    cur = std::move(next);
  }
  return cur;
}

Mask rotate90(const Mask& m, int axis, int quarter_turns) {
  const auto [a, b] = plane_axes(axis);
  Mask cur = m;
  const int turns = ((quarter_turns % 4) + 4) % 4;
  for (int t = 0; t < turns; ++t) {
    Mask next;
    next.values = quarter_turn(cur.values, cur.dims, a, b, next.dims);
    cur = std::move(next);
  }
  return cur;
}

Rotation draw_rotation(std::mt19937_64& rng) {
  Rotation r;
  r.axis = std::uniform_int_distribution<int>(0, 2)(rng);
  r.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
  return r;
}

Volume rotate_augment(const Volume& v, std::mt19937_64& rng) {
  const Rotation r = draw_rotation(rng);
  return rotate90(v, r.axis, r.quarter_turns);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

fs::path with_ext(const fs::path& base, const char* ext) {
  fs::path p = base;
  if (p.extension() == ".json" || p.extension() == ".img" || p.extension() == ".lbl") p.replace_extension();
  p += ext;
  return p;
}

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

std::vector<char> read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

void write_volume(const Volume& v, const fs::path& base) {
  if (v.intensities.size() != v.size() || v.labels.size() != v.size()) {
    throw DimensionError("write_volume: payload does not match dims");
  }
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  nlohmann::json header = {{"version", 1},
                           {"dims", {v.dims[0], v.dims[1], v.dims[2]}},
                           {"spacing_mm", {v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]}},
                           {"dtype", "f32"},
                           {"label_dtype", "u8"}};
  {
    std::ofstream out(with_ext(base, ".json"));
    out << header.dump(2) << '\n';
    if (!out) throw FormatError("cannot write " + with_ext(base, ".json").string());
  }
  {
    std::ofstream out(with_ext(base, ".img"), std::ios::binary);
    for (float f : v.intensities) {
      std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(f));
      out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    if (!out) throw FormatError("cannot write " + with_ext(base, ".img").string());
  }
  {
    std::ofstream out(with_ext(base, ".lbl"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(v.labels.data()), static_cast<std::streamsize>(v.labels.size()));
    if (!out) throw FormatError("cannot write " + with_ext(base, ".lbl").string());
  }
}

Volume read_volume(const fs::path& base) {
  const fs::path header_path = with_ext(base, ".json");
  std::ifstream hin(header_path);
  if (!hin) throw FormatError("cannot open " + header_path.string());
  nlohmann::json header;
  try {
    hin >> header;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header_path.string() + ": malformed header: " + e.what());
  }
  if (!header.contains("version") || header["version"] != 1) {
    throw FormatError(header_path.string() + ": unknown volume format version " +
                      (header.contains("version") ? header["version"].dump() : std::string("<missing>")));
  }
  if (header.value("dtype", "") != "f32" || header.value("label_dtype", "") != "u8") {
    throw FormatError(header_path.string() + ": unsupported dtype");
  }
  Volume v;
  try {
    const auto dims = header.at("dims");
    if (dims.size() != 3) throw FormatError(header_path.string() + ": dims must have three entries");
    for (int a = 0; a < 3; ++a) {
      v.dims[a] = dims.at(a).get<int>();
      if (v.dims[a] <= 0) throw FormatError(header_path.string() + ": non-positive dimension");
    }
    if (header.contains("spacing_mm")) {
      for (int a = 0; a < 3; ++a) v.spacing_mm[a] = header["spacing_mm"].at(a).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header_path.string() + ": " + e.what());
  }
  const std::size_t n = v.size();

  const std::vector<char> img = read_all(with_ext(base, ".img"));
  if (img.size() != n * sizeof(float)) {
    throw FormatError(with_ext(base, ".img").string() + ": expected " + std::to_string(n * sizeof(float)) +
                      " bytes, found " + std::to_string(img.size()));
  }
  const std::vector<char> lbl = read_all(with_ext(base, ".lbl"));
  if (lbl.size() != n) {
    throw FormatError(with_ext(base, ".lbl").string() + ": expected " + std::to_string(n) + " bytes, found " +
                      std::to_string(lbl.size()));
  }
  v.intensities.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, img.data() + i * sizeof bits, sizeof bits);
    v.intensities[i] = std::bit_cast<float>(to_little(bits));
  }
  v.labels.assign(lbl.begin(), lbl.end());
  return v;
}

std::vector<fs::path> list_volumes(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void standardize_intensities(Volume& v) {
  if (v.intensities.empty()) return;
  double mean = 0.0;
  for (float x : v.intensities) mean += x;
  mean /= static_cast<double>(v.intensities.size());
  double var = 0.0;
  for (float x : v.intensities) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.intensities.size()));
  if (!(sd > 0.0)) return;
  for (float& x : v.intensities) x = static_cast<float>((x - mean) / sd);
}

}  // namespace fass
