#pragma once
// Fixed inputs shared by the unit and acceptance suites.

#include "fass/phantom.hpp"
#include "fass/volume.hpp"

namespace scenario {

// 48^3 corner of the default phantom with seed 3: about a fifth of the
// 32^3 background origins satisfy alpha = 0.1.
inline fass::Volume fa_reference_patch() {
  fass::PhantomSpec spec;
  spec.seed = 3;
  return fass::crop(fass::generate_phantom(spec), {0, 0, 0}, {48, 48, 48});
}

}  // namespace scenario
