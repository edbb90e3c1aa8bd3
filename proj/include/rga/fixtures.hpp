#pragma once

#include <string>
#include <vector>

#include "rga/tensor.hpp"

namespace rga {

struct NamedImage {
  std::string name;
  Image image;
};

/// Eight procedurally generated images, 16×16 to 64×64, already on the
/// 8-bit intensity grid. Fully determined by the built-in seeds.
std::vector<NamedImage> fixture_suite();

}  // namespace rga
