#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fass/errors.hpp"
#include "fass/phantom.hpp"
#include "fass/volume.hpp"

using namespace fass;
namespace fs = std::filesystem;

namespace {

PhantomSpec small_spec(std::uint64_t seed) {
  PhantomSpec s;
  s.dims = {48, 48, 48};
  s.tumor_radius_min = 3.0;
  s.tumor_radius_max = 5.0;
  s.seed = seed;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("fass_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("phantom generation is a pure function of the spec") {
  const Volume a = generate_phantom(small_spec(7));
  const Volume b = generate_phantom(small_spec(7));
  const Volume c = generate_phantom(small_spec(8));
  CHECK(a == b);
  CHECK_FALSE(a == c);
}

TEST_CASE("labels match the generating geometry") {
  const Phantom p = generate_phantom_with_geometry(small_spec(3));
  const Volume& v = p.volume;
  REQUIRE(!p.geometry.tumors.empty());
  for (int z = 0; z < v.dims[0]; ++z)
    for (int y = 0; y < v.dims[1]; ++y)
      for (int x = 0; x < v.dims[2]; ++x) {
        bool tumor = false;
        for (const auto& t : p.geometry.tumors) tumor = tumor || t.contains(z, y, x);
        const int expected = tumor ? 2 : (p.geometry.organ.contains(z, y, x) ? 1 : 0);
        REQUIRE(v.label(z, y, x) == expected);
        if (tumor) REQUIRE(p.geometry.organ.contains(z, y, x));
      }
}

TEST_CASE("zero contrast and zero noise make organ indistinguishable from background") {
  PhantomSpec s = small_spec(11);
  s.contrast_delta = 0.0;
  s.noise_sigma = 0.0;
  s.organ_delta = 0.0;
  s.texture_amplitude = 0.0;
  const Volume v = generate_phantom(s);
  for (float f : v.intensities) REQUIRE(f == static_cast<float>(s.background_mean));
  CHECK(v.foreground().count() > 0);
  CHECK(v.class_mask(2).count() > 0);
}

TEST_CASE("tumor voxel count approximates the analytic ellipsoid volume") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PhantomSpec s;
    s.tumor_count_min = s.tumor_count_max = 1;
    s.tumor_radius_min = 6.0;
    s.tumor_radius_max = 9.0;
    s.seed = seed;
    const Phantom p = generate_phantom_with_geometry(s);
    const double analytic = p.geometry.tumors.at(0).analytic_volume();
    const double counted = static_cast<double>(p.volume.class_mask(2).count());
    CHECK(std::abs(counted - analytic) / analytic < 0.25);
  }
}

TEST_CASE("default organ occupies 5-30% of the volume over 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PhantomSpec s;
    s.seed = seed;
    const Volume v = generate_phantom(s);
    const double frac = static_cast<double>(v.foreground().count()) / static_cast<double>(v.size());
    CHECK(frac >= 0.05);
    CHECK(frac <= 0.30);
  }
}

TEST_CASE("invalid specs and impossible tumors are rejected") {
  PhantomSpec s = small_spec(0);
  s.contrast_delta = -0.1;
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s = small_spec(0);
  s.tumor_radius_min = s.tumor_radius_max = 40.0;
  CHECK_THROWS_AS(generate_phantom(s), GenerationError);
}

TEST_CASE("four quarter turns about any axis restore the volume") {
  Volume v({4, 5, 6});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v.intensities[i] = u(rng);
    v.labels[i] = static_cast<std::uint8_t>(i % 3);
  }
  v.spacing_mm = {1.0, 2.0, 3.0};
  for (int axis = 0; axis < 3; ++axis) {
    Volume r = v;
    for (int t = 0; t < 4; ++t) r = rotate90(r, axis, 1);
    CHECK(r == v);
    const Volume once = rotate90(v, axis, 1);
    CHECK(once.dims != v.dims);
  }
}

TEST_CASE("rotation keeps intensity-label pairs together") {
  Volume v({6, 6, 6});
  for (std::size_t i = 0; i < v.size(); ++i) {
    v.intensities[i] = static_cast<float>(i);
    v.labels[i] = static_cast<std::uint8_t>(i % 7);
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 12; ++trial) {
    const Volume r = rotate_augment(v, rng);
    for (std::size_t i = 0; i < r.size(); ++i) {
      const auto src = static_cast<std::size_t>(r.intensities[i]);
      REQUIRE(r.labels[i] == v.labels[src]);
    }
  }
}

TEST_CASE("numpy rot90 convention on a 2x3 plane") {
  Volume v({1, 2, 3});
  for (int i = 0; i < 6; ++i) v.intensities[static_cast<std::size_t>(i)] = static_cast<float>(i);
  const Volume r = rotate90(v, 0, 1);
  // np.rot90([[0,1,2],[3,4,5]]) == [[2,5],[1,4],[0,3]]
  CHECK(r.dims == Dims3{1, 3, 2});
  CHECK(r.intensities == std::vector<float>{2, 5, 1, 4, 0, 3});
}

TEST_CASE("volume files round-trip bit-exactly") {
  const fs::path dir = scratch_dir("roundtrip");
  Volume v = generate_phantom(small_spec(2));
  v.spacing_mm = {0.8, 0.75, 2.5};
  write_volume(v, dir / "case0");
  const Volume back = read_volume(dir / "case0.json");
  CHECK(back == v);
  CHECK(list_volumes(dir).size() == 1);
  fs::remove_all(dir);
}

TEST_CASE("volume reader validates payload sizes and version") {
  const fs::path dir = scratch_dir("format");
  Volume v({2, 2, 2});
  write_volume(v, dir / "tiny");
  CHECK(fs::file_size(dir / "tiny.img") == 32);
  CHECK(read_volume(dir / "tiny") == v);

  fs::resize_file(dir / "tiny.img", 28);
  try {
    read_volume(dir / "tiny");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("32") != std::string::npos);
    CHECK(msg.find("28") != std::string::npos);
  }

  write_volume(v, dir / "tiny");
  {
    std::ofstream out(dir / "tiny.json");
    out << R"({"version": 2, "dims": [2,2,2], "dtype": "f32", "label_dtype": "u8"})";
  }
  CHECK_THROWS_AS(read_volume(dir / "tiny"), FormatError);
  fs::remove_all(dir);
}
