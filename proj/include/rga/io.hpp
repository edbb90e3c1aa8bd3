#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rga/regions.hpp"
#include "rga/tensor.hpp"

namespace rga::io {

namespace fs = std::filesystem;

/// 8-bit RGB (gray and alpha inputs are converted), v/255 per channel.
Image read_png(const fs::path& path);

/// round(v·255) after clamping to [0,1]. Written atomically.
void write_png(const fs::path& path, const Image& image);
void write_mask_png(const fs::path& path, const BinaryMask& mask);

std::vector<unsigned char> encode_png(const Image& image);
Image decode_png(const std::vector<unsigned char>& bytes);

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const fs::path& path, const std::string& contents);
void write_file_atomic(const fs::path& path, const std::vector<unsigned char>& contents);
std::string read_file(const fs::path& path);

/// (δ+ε)/(2ε), mid-gray when ε = 0.
Image perturbation_visual(const Tensor& delta, double epsilon);

struct Padded {
  Image image;
  Index height = 0;  ///< original extents
  Index width = 0;
};

/// Mirror-pads bottom and right edges (edge pixel not repeated) up to the
/// next multiple of `multiple`.
Padded reflect_pad(const Image& image, Index multiple = 4);
Image crop(const Image& image, Index height, Index width);
BinaryMask crop(const BinaryMask& mask, Index height, Index width);

}  // namespace rga::io
