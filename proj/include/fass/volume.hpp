#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace fass {

// (D, H, W), row-major with W fastest.
using Dims3 = std::array<int, 3>;
using Coord3 = std::array<int, 3>;

inline std::size_t dims_volume(const Dims3& d) {
  return static_cast<std::size_t>(d[0]) * static_cast<std::size_t>(d[1]) * static_cast<std::size_t>(d[2]);
}

inline std::size_t flat_index(const Dims3& d, int z, int y, int x) {
  return (static_cast<std::size_t>(z) * static_cast<std::size_t>(d[1]) + static_cast<std::size_t>(y)) *
             static_cast<std::size_t>(d[2]) +
         static_cast<std::size_t>(x);
}

inline bool in_bounds(const Dims3& d, int z, int y, int x) {
  return z >= 0 && y >= 0 && x >= 0 && z < d[0] && y < d[1] && x < d[2];
}

// Binary voxel mask sharing the Volume layout.
struct Mask {
  Dims3 dims{};
  std::vector<std::uint8_t> values;

  Mask() = default;
  explicit Mask(const Dims3& d) : dims(d), values(dims_volume(d), 0) {}

  bool at(int z, int y, int x) const { return values[flat_index(dims, z, y, x)] != 0; }
  void set(int z, int y, int x, bool on = true) { values[flat_index(dims, z, y, x)] = on ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

// Image volume with its integer label map (0 background, 1 organ, 2 tumor).
struct Volume {
  Dims3 dims{};
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::vector<float> intensities;
  std::vector<std::uint8_t> labels;

  Volume() = default;
  explicit Volume(const Dims3& d)
      : dims(d), intensities(dims_volume(d), 0.0f), labels(dims_volume(d), 0) {}

  std::size_t size() const { return dims_volume(dims); }
  float intensity(int z, int y, int x) const { return intensities[flat_index(dims, z, y, x)]; }
  std::uint8_t label(int z, int y, int x) const { return labels[flat_index(dims, z, y, x)]; }

  // Voxels with label > 0.
  Mask foreground() const;
  // Voxels with label == cls.
  Mask class_mask(std::uint8_t cls) const;
  bool operator==(const Volume&) const = default;
};

// Sub-volume [origin, origin + size) of both intensities and labels.
Volume crop(const Volume& v, const Coord3& origin, const Dims3& size);

// Quarter turns in the plane orthogonal to `axis` (0 = D, 1 = H, 2 = W),
// applied jointly to intensities and labels; the rotated axes swap extents
// and spacings.
Volume rotate90(const Volume& v, int axis, int quarter_turns);
Mask rotate90(const Mask& m, int axis, int quarter_turns);

struct Rotation {
  int axis = 0;
  int quarter_turns = 0;
};

// Uniform choice of axis and multiple of 90 degrees.
Rotation draw_rotation(std::mt19937_64& rng);
Volume rotate_augment(const Volume& v, std::mt19937_64& rng);

// Zero mean, unit variance intensities (unchanged when the volume is constant).
void standardize_intensities(Volume& v);

// `<base>.json` header, `<base>.img` little-endian f32, `<base>.lbl` u8.
// `base` may be given with or without the .json extension.
void write_volume(const Volume& v, const std::filesystem::path& base);
Volume read_volume(const std::filesystem::path& base);

// Every `<name>.json` volume header in `dir`, sorted by file name.
std::vector<std::filesystem::path> list_volumes(const std::filesystem::path& dir);

}  // namespace fass
