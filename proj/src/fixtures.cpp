#include "rga/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "rga/attack.hpp"
#include "rga/rng.hpp"

namespace rga {

namespace {

using Rgb = std::array<float, 3>;

Rgb random_color(Rng& rng) {
  return {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
}

void put(Image& img, Index r, Index c, const Rgb& v) {
  for (int k = 0; k < 3; ++k) img(r, c, k) = v[k];
}

Image gradient(Index h, Index w, Rng& rng) {
  const Rgb a = random_color(rng), b = random_color(rng);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image img = make_image(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const double u = 0.5 + 0.5 * ((c - w / 2.0) * ca + (r - h / 2.0) * sa) / (0.5 * std::max(h, w));
      const auto t = static_cast<float>(std::clamp(u, 0.0, 1.0));
      put(img, r, c, {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])});
    }
  return img;
}

void add_blobs(Image& img, Rng& rng, int count) {
  const Index h = img.dim(0), w = img.dim(1);
  for (int i = 0; i < count; ++i) {
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double rad = rng.uniform(0.12, 0.3) * static_cast<double>(std::min(h, w));
    const Rgb col = random_color(rng);
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c)
        if ((r - cy) * (r - cy) + (c - cx) * (c - cx) <= rad * rad) put(img, r, c, col);
  }
}

void add_rectangles(Image& img, Rng& rng, int count) {
  const Index h = img.dim(0), w = img.dim(1);
  for (int i = 0; i < count; ++i) {
    const Index r0 = rng.uniform_int(0, h - 4), c0 = rng.uniform_int(0, w - 4);
    const Index rh = rng.uniform_int(4, std::max<Index>(4, h / 2)), cw = rng.uniform_int(4, std::max<Index>(4, w / 2));
    const Rgb col = random_color(rng);
    for (Index r = r0; r < std::min(h, r0 + rh); ++r)
      for (Index c = c0; c < std::min(w, c0 + cw); ++c) put(img, r, c, col);
  }
}

Image stripes(Index h, Index w, Rng& rng, bool vertical, Index period) {
  std::array<Rgb, 3> palette{random_color(rng), random_color(rng), random_color(rng)};
  Image img = make_image(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) put(img, r, c, palette[static_cast<std::size_t>(((vertical ? c : r) / period) % 3)]);
  return img;
}

}  // namespace

std::vector<NamedImage> fixture_suite() {
  std::vector<NamedImage> out;
  auto emit = [&](std::string name, Image img) { out.push_back({std::move(name), quantize_8bit(img)}); };

  Rng rng(derive_seed(0x5eed, 0));
  {
    Image img = gradient(16, 16, rng);
    add_blobs(img, rng, 2);
    emit("f0_blobs16", std::move(img));
  }
  emit("f1_vstripes32", stripes(32, 32, rng, true, 8));
  {
    Image img = gradient(32, 32, rng);
    add_blobs(img, rng, 3);
    emit("f2_blobs32", std::move(img));
  }
  {
    Image img = gradient(48, 48, rng);
    add_rectangles(img, rng, 4);
    emit("f3_rects48", std::move(img));
  }
  {
    Image img = gradient(64, 64, rng);
    add_blobs(img, rng, 5);
    emit("f4_blobs64", std::move(img));
  }
  emit("f5_hstripes64x48", stripes(64, 48, rng, false, 12));
  emit("f6_gradient32x64", gradient(32, 64, rng));
  {
    Image img = gradient(64, 64, rng);
    add_rectangles(img, rng, 6);
    emit("f7_rects64", std::move(img));
  }
  return out;
}

}  // namespace rga
