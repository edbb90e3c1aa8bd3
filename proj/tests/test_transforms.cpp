#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rga/errors.hpp"
#include "rga/transforms.hpp"

using namespace rga;
using doctest::Approx;

namespace {

template <typename S = float>
BasicTensor<S> random_image(Rng& rng, Index h, Index w) {
  BasicTensor<S> x(Shape{h, w, 3});
  for (Index i = 0; i < x.size(); ++i) x[i] = static_cast<S>(rng.uniform());
  return x;
}

}  // namespace

TEST_CASE("TransformConfig validation") {
  TransformConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_translate_frac = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.scale_lo = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.scale_lo = 1.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.si_scales.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.si_scales = {1.0, 1.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dim_prob = 1.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("sample_rst") {
  SUBCASE("zero ranges give the identity") {
    TransformConfig c;
    c.max_translate_frac = 0, c.max_rotate_rad = 0, c.scale_lo = c.scale_hi = 1.0;
    Rng rng(1);
    CHECK(sample_rst(rng, c, 32, 32).is_identity());
  }
  SUBCASE("deterministic") {
    Rng a(5), b(5);
    const TransformConfig c;
    for (int i = 0; i < 5; ++i) {
      const auto s = sample_rst(a, c, 40, 30), t = sample_rst(b, c, 40, 30);
      CHECK(s.tx == t.tx);
      CHECK(s.ty == t.ty);
      CHECK(s.theta == t.theta);
      CHECK(s.s == t.s);
    }
  }
  SUBCASE("empirical means within 3 sigma of the midpoints") {
    const TransformConfig c;
    Rng rng(7);
    const int n = 10000;
    double tx = 0, ty = 0, th = 0, s = 0;
    for (int i = 0; i < n; ++i) {
      const auto t = sample_rst(rng, c, 50, 40);
      CHECK(std::abs(t.tx) <= 4.0);
      CHECK(std::abs(t.theta) <= c.max_rotate_rad);
      CHECK(t.s >= 0.9);
      CHECK(t.s <= 1.1);
      tx += t.tx, ty += t.ty, th += t.theta, s += t.s;
    }
    // uniform on [a,b]: sd = (b-a)/sqrt(12); sd of the mean = sd/sqrt(n)
    auto sem = [&](double width) { return width / std::sqrt(12.0) / std::sqrt(double(n)); };
    CHECK(std::abs(tx / n) < 3 * sem(8.0));
    CHECK(std::abs(ty / n) < 3 * sem(8.0));
    CHECK(std::abs(th / n) < 3 * sem(2 * c.max_rotate_rad));
    CHECK(std::abs(s / n - 1.0) < 3 * sem(0.2));
  }
}

TEST_CASE("warp") {
  Rng rng(2);
  SUBCASE("identity is bit exact") {
    const Image x = random_image(rng, 9, 7);
    CHECK(warp(x, {}).identical(x));
  }
  SUBCASE("translation by one column") {
    Image x = make_image(5, 5);
    x(2, 2, 0) = 1.f;
    x(1, 4, 1) = 1.f;
    const Image y = warp(x, {1.0, 0.0, 0.0, 1.0});
    CHECK(y(2, 3, 0) == 1.f);
    CHECK(y(2, 2, 0) == 0.f);
    CHECK(y.array().sum() == 1.f);  // the pixel at column 4 left the frame
    CHECK(y(2, 0, 0) == 0.f);
  }
  SUBCASE("value range and linearity") {
    for (int t = 0; t < 10; ++t) {
      const Image x = random_image(rng, 12, 10), z = random_image(rng, 12, 10);
      const SimilarityTransform tr{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-0.3, 0.3), rng.uniform(0.8, 1.2)};
      const Image wx = warp(x, tr);
      CHECK(wx.array().minCoeff() >= std::min(0.f, x.array().minCoeff()));
      CHECK(wx.array().maxCoeff() <= x.array().maxCoeff() + 1e-6f);
      const Image lin = warp(Image(x.shape(), 0.3f * x.array() - 1.7f * z.array()), tr);
      const Image sep(x.shape(), 0.3f * wx.array() - 1.7f * warp(z, tr).array());
      CHECK((lin.array() - sep.array()).abs().maxCoeff() < 1e-5f);
    }
  }
  SUBCASE("gradient") {
    for (int t = 0; t < 3; ++t) {
      const auto x = random_image<double>(rng, 6, 7);
      const SimilarityTransform tr{0.6, -0.3, 0.25, 1.07};
      const auto rep = ad::finite_diff_check<double>(
          [&](ad::Tape<double>& tape, ad::Var v) {
            const auto y = ad::warp(tape, v, tr);
            return ad::dot(tape, y, y);
          },
          x, 1e-3, 32, t);
      CHECK(rep.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("scale_copies") {
  ad::Tape<float> tape;
  const auto x = tape.leaf(Image::Constant({2, 2, 3}, 1.f));
  const auto one = ad::scale_copies(tape, x, {1.0});
  CHECK(tape.value(one[0]).identical(tape.value(x)));
  const auto half = ad::scale_copies(tape, x, {0.5});
  CHECK((tape.value(half[0]).array() == 0.5f).all());

  // linear loss: averaged gradient is mean(scales) × gradient at scale 1
  Rng rng(3);
  const Image w = random_image(rng, 2, 2);
  ad::Tape<float> t2;
  const auto xv = t2.leaf(random_image(rng, 2, 2));
  const auto wv = t2.leaf(w);
  const std::vector<double> scales{1.0, 0.5, 0.25};
  ad::Var total{};
  const auto copies = ad::scale_copies(t2, xv, scales);
  for (std::size_t k = 0; k < copies.size(); ++k) {
    const auto l = ad::dot(t2, copies[k], wv);
    total = k ? ad::add(t2, total, l) : l;
  }
  const auto g = ad::backward(t2, ad::scale(t2, total, 1.f / 3.f), xv).value;
  for (Index i = 0; i < g.size(); ++i) CHECK(g[i] == Approx(1.75 / 3.0 * w[i]).epsilon(1e-6));
}

TEST_CASE("dim_transform") {
  Rng rng(4);
  const Image x = random_image(rng, 16, 12);
  TransformConfig c;
  SUBCASE("probability zero is identity") {
    c.dim_prob = 0.0;
    Rng r(1);
    for (int i = 0; i < 5; ++i) CHECK(dim_transform(r, x, c).identical(x));
  }
  SUBCASE("zero pad fraction is identity") {
    c.dim_prob = 1.0;
    c.dim_pad_max_frac = 0.0;
    Rng r(1);
    CHECK(dim_transform(r, x, c).identical(x));
  }
  SUBCASE("deterministic, shrinks into a zero canvas") {
    c.dim_prob = 1.0;
    Rng a(9), b(9);
    const Image y1 = dim_transform(a, x, c), y2 = dim_transform(b, x, c);
    CHECK(y1.identical(y2));
    CHECK(y1.shape() == x.shape());
    Rng d(9);
    const auto draw = sample_dim(d, c, 16, 12);
    CHECK(draw.applied);
    CHECK(draw.new_height <= 16);
    CHECK(draw.new_width <= 12);
    if (draw.new_height < 16 || draw.new_width < 12) CHECK((y1.array() == 0.f).any());
  }
  SUBCASE("gradient") {
    c.dim_prob = 1.0;
    c.dim_pad_max_frac = 0.2;
    Rng d(3);
    const auto draw = sample_dim(d, c, 10, 10);
    const auto xd = random_image<double>(rng, 10, 10);
    const auto rep = ad::finite_diff_check<double>(
        [&](ad::Tape<double>& tape, ad::Var v) {
          const auto y = ad::dim_apply(tape, v, draw);
          return ad::dot(tape, y, y);
        },
        xd, 1e-3, 32, 1);
    CHECK(rep.max_rel_error < 1e-3);
  }
}
