#include "rga/regions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "rga/errors.hpp"
#include "rga/rng.hpp"

namespace rga {

void MaskSet::validate() const {
  for (std::size_t i = 1; i < masks.size(); ++i)
    if (!masks[i].same_size(masks[0]))
      throw DimensionError("MaskSet: mask " + std::to_string(i) + " is " + std::to_string(masks[i].height()) + "x" +
                           std::to_string(masks[i].width()) + ", expected " + std::to_string(masks[0].height()) +
                           "x" + std::to_string(masks[0].width()));
}

BinaryMask RegionGuidedMap::support() const {
  BinaryMask m(height(), width());
  for (Index r = 0; r < height(); ++r)
    for (Index c = 0; c < width(); ++c) m(r, c) = colored(r, c);
  return m;
}

void SadConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("sad.gamma must lie in (0, 1]");
  if (n_dilate < 0) throw ConfigError("sad.n_dilate must be >= 0");
}

Index compute_grid_size(Index width, Index height, double gamma) {
  if (width < 1 || height < 1) throw ContractError("compute_grid_size: dimensions must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("compute_grid_size: gamma must lie in (0, 1]");
  const auto g = static_cast<Index>(std::floor(static_cast<double>(std::min(width, height)) * gamma));
  return std::max<Index>(g, 1);
}

BinaryMask dilate_region(const BinaryMask& mask, int iterations) {
  if (iterations < 0) throw ContractError("dilate_region: iterations must be >= 0");
  const Index h = mask.height(), w = mask.width();
  BinaryMask cur = mask;
  BinaryMask next(h, w);
  for (int it = 0; it < iterations; ++it) {
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        const Index r0 = std::max<Index>(r - 1, 0), r1 = std::min<Index>(r + 1, h - 1);
        const Index c0 = std::max<Index>(c - 1, 0), c1 = std::min<Index>(c + 1, w - 1);
        next(r, c) = cur.bits().block(r0, c0, r1 - r0 + 1, c1 - c0 + 1).any();
      }
    if (next == cur) break;  // fixed point: further iterations change nothing
    std::swap(cur, next);
  }
  return cur;
}

std::vector<BinaryMask> segment_grid(const BinaryMask& mask, Index grid_size) {
  if (grid_size < 1) throw ContractError("segment_grid: grid_size must be >= 1");
  std::vector<BinaryMask> tiles;
  const Index h = mask.height(), w = mask.width();
  for (Index r0 = 0; r0 < h; r0 += grid_size)
    for (Index c0 = 0; c0 < w; c0 += grid_size) {
      const Index th = std::min(grid_size, h - r0), tw = std::min(grid_size, w - c0);
      const auto block = mask.bits().block(r0, c0, th, tw);
      if (!block.any()) continue;
      BinaryMask tile(h, w);
      tile.bits().block(r0, c0, th, tw) = block;
      tiles.push_back(std::move(tile));
    }
  return tiles;
}

std::vector<BinaryMask> connected_components(const BinaryMask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw ContractError("connected_components: connectivity must be 4 or 8");
  const Index h = mask.height(), w = mask.width();
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> label =
      Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Constant(h, w, -1);
  std::vector<BinaryMask> out;
  std::vector<std::pair<Index, Index>> stack;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      if (!mask(r, c) || label(r, c) >= 0) continue;
      const int id = static_cast<int>(out.size());
      BinaryMask comp(h, w);
      stack.assign(1, {r, c});
      label(r, c) = id;
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        comp(pr, pc) = true;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == 4 && dr != 0 && dc != 0) continue;
            const Index nr = pr + dr, nc = pc + dc;
            if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
            if (!mask(nr, nc) || label(nr, nc) >= 0) continue;
            label(nr, nc) = id;
            stack.emplace_back(nr, nc);
          }
      }
      out.push_back(std::move(comp));
    }
  return out;
}

namespace {

std::vector<std::size_t> iteration_order(const MaskSet& masks, MaskOrder order) {
  std::vector<std::size_t> idx(masks.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (order == MaskOrder::AreaDescending) {
    std::vector<Index> areas(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) areas[i] = masks.masks[i].area();
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return areas[a] > areas[b]; });
  }
  return idx;
}

std::array<float, 3> draw_color(Rng& rng) {
  std::array<float, 3> rgb{};
  for (auto& ch : rgb) ch = static_cast<float>(rng.uniform_int(1, 255)) / 255.f;
  return rgb;
}

}  // namespace

RegionGuidedMap build_rgm(const MaskSet& masks, const SadConfig& cfg, RgmTrace* trace) {
  cfg.validate();
  masks.validate();
  if (masks.empty()) throw ContractError("build_rgm: empty mask set has no image dimensions");
  const Index h = masks.masks[0].height(), w = masks.masks[0].width();
  const Index grid = compute_grid_size(w, h, cfg.gamma);

  RegionGuidedMap rgm{make_image(h, w)};
  Rng rng(cfg.seed);
  if (trace) {
    trace->writes.setZero(h, w);
    trace->small_branch.clear();
    trace->visit_order.clear();
    trace->grid_size = grid;
    trace->colors_drawn = 0;
  }

  auto paint = [&](const BinaryMask& region, const std::array<float, 3>& rgb) {
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) {
        if (!region(r, c) || rgm.colored(r, c)) continue;
        for (int k = 0; k < 3; ++k) rgm.pixels(r, c, k) = rgb[k];
        if (trace) ++trace->writes(r, c);
      }
    if (trace) ++trace->colors_drawn;
  };

  for (std::size_t j : iteration_order(masks, cfg.order)) {
    const BinaryMask& mask = masks.masks[j];
    const bool small = mask.area() <= grid * grid;
    if (trace) {
      trace->small_branch.push_back(small);
      trace->visit_order.push_back(j);
    }
    if (small) {
      const auto dilated = dilate_region(mask, cfg.n_dilate);
      paint(dilated, draw_color(rng));
    } else {
      for (const auto& block : segment_grid(mask, grid)) paint(block, draw_color(rng));
    }
  }
  return rgm;
}

}  // namespace rga
