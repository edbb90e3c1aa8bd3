#include "rga/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include "rga/errors.hpp"

namespace rga::io {

namespace {

unsigned char to_byte(float v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f));
}

std::vector<unsigned char> encode_raw(const std::vector<unsigned char>& raw, Index height, Index width, bool gray) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, raw.data(), 0, nullptr))
    throw IoError(std::string("png encode: ") + img.message);
  std::vector<unsigned char> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, raw.data(), 0, nullptr))
    throw IoError(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  Index m = i % period;
  return m < n ? m : period - m;
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& image) {
  require_image(image, "encode_png");
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.size()));
  for (Index i = 0; i < image.size(); ++i) raw[static_cast<std::size_t>(i)] = to_byte(image[i]);
  return encode_raw(raw, image.dim(0), image.dim(1), false);
}

Image decode_png(const std::vector<unsigned char>& bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw IoError(std::string("png decode: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(img));
  // composite any alpha onto black
  png_color black{0, 0, 0};
  if (!png_image_finish_read(&img, &black, raw.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError(std::string("png decode: ") + img.message);
  }
  Image out = make_image(img.height, img.width);
  for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<float>(raw[static_cast<std::size_t>(i)]) / 255.f;
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image read_png(const fs::path& path) {
  const std::string s = read_file(path);
  try {
    return decode_png(std::vector<unsigned char>(s.begin(), s.end()));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_file_atomic(const fs::path& path, const std::vector<unsigned char>& contents) {
  write_file_atomic(path, std::string(contents.begin(), contents.end()));
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

void write_png(const fs::path& path, const Image& image) { write_file_atomic(path, encode_png(image)); }

void write_mask_png(const fs::path& path, const BinaryMask& mask) {
  std::vector<unsigned char> raw(static_cast<std::size_t>(mask.height() * mask.width()));
  for (Index r = 0; r < mask.height(); ++r)
    for (Index c = 0; c < mask.width(); ++c)
      raw[static_cast<std::size_t>(r * mask.width() + c)] = mask(r, c) ? 255 : 0;
  write_file_atomic(path, encode_raw(raw, mask.height(), mask.width(), true));
}

Image perturbation_visual(const Tensor& delta, double epsilon) {
  if (epsilon <= 0.0) return Image::Constant(delta.shape(), 0.5f);
  const auto e = static_cast<float>(epsilon);
  return Image(delta.shape(), ((delta.array() + e) / (2.f * e)).max(0.f).min(1.f));
}

Padded reflect_pad(const Image& image, Index multiple) {
  require_image(image, "reflect_pad");
  if (multiple < 1) throw ContractError("reflect_pad: multiple must be >= 1");
  const Index h = image.dim(0), w = image.dim(1);
  const Index ph = (h + multiple - 1) / multiple * multiple;
  const Index pw = (w + multiple - 1) / multiple * multiple;
  Padded out{make_image(ph, pw), h, w};
  for (Index r = 0; r < ph; ++r)
    for (Index c = 0; c < pw; ++c)
      for (Index k = 0; k < 3; ++k) out.image(r, c, k) = image(reflect_index(r, h), reflect_index(c, w), k);
  return out;
}

Image crop(const Image& image, Index height, Index width) {
  require_image(image, "crop");
  if (height > image.dim(0) || width > image.dim(1) || height < 1 || width < 1)
    throw DimensionError("crop: " + std::to_string(height) + "x" + std::to_string(width) + " outside " +
                         image.shape().str());
  Image out = make_image(height, width);
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c)
      for (Index k = 0; k < 3; ++k) out(r, c, k) = image(r, c, k);
  return out;
}

BinaryMask crop(const BinaryMask& mask, Index height, Index width) {
  if (height > mask.height() || width > mask.width() || height < 0 || width < 0)
    throw DimensionError("crop: mask is smaller than the requested extent");
  return BinaryMask(BinaryMask::Bits(mask.bits().topLeftCorner(height, width)));
}

}  // namespace rga::io
