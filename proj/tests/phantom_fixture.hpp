#pragma once

#include "facereg/phantom.hpp"

namespace facereg::testing {

// Half-resolution phantom: 2 mm grid, 320 x 240 camera, no depth noise.
inline PhantomSpec small_phantom_spec() {
  PhantomSpec s;
  s.dims = {88, 80, 58};
  s.spacing_mm = 2.0;
  s.image_width = 320;
  s.image_height = 240;
  s.fx = s.fy = 307.5;
  s.cx = 159.5;
  s.cy = 119.5;
  s.noise_sigma = 0.0;
  return s;
}

}  // namespace facereg::testing
