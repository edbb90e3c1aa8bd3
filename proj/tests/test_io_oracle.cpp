#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "json.hpp"
#include "rga/attack.hpp"
#include "rga/errors.hpp"
#include "rga/io.hpp"
#include "rga/oracle.hpp"

using namespace rga;
namespace fs = std::filesystem;

#ifndef RGA_SIDECAR_PATH
#error "RGA_SIDECAR_PATH must point at the sidecar binary"
#endif

namespace {

Image random_image(Rng& rng, Index h, Index w) {
  Image x = make_image(h, w);
  for (Index i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
  return x;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rga_io_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string sidecar(const std::string& args) { return std::string("'") + RGA_SIDECAR_PATH + "' " + args; }

}  // namespace

TEST_CASE("png round trip") {
  const auto dir = scratch("png");
  Rng rng(1);
  const Image x = quantize_8bit(random_image(rng, 7, 5));
  io::write_png(dir / "a.png", x);
  CHECK(io::read_png(dir / "a.png").identical(x));
  CHECK(io::decode_png(io::encode_png(x)).identical(x));
  CHECK_FALSE(fs::exists(dir / "a.png.tmp"));

  // out-of-range values clamp
  Image y = Image::Constant({2, 2, 3}, 1.7f);
  y[0] = -0.3f;
  const Image back = io::decode_png(io::encode_png(y));
  CHECK(back[0] == 0.f);
  CHECK(back[1] == 1.f);

  BinaryMask m(3, 4);
  m(1, 2) = true;
  io::write_mask_png(dir / "m.png", m);
  const Image mm = io::read_png(dir / "m.png");
  CHECK(mm(1, 2, 0) == 1.f);
  CHECK(mm.array().sum() == 3.f);

  CHECK_THROWS_AS(io::read_png(dir / "missing.png"), IoError);
  io::write_file_atomic(dir / "junk.png", std::string("not a png"));
  CHECK_THROWS_AS(io::read_png(dir / "junk.png"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("atomic write replaces contents") {
  const auto dir = scratch("atomic");
  io::write_file_atomic(dir / "f.txt", std::string("one"));
  io::write_file_atomic(dir / "f.txt", std::string("two"));
  CHECK(io::read_file(dir / "f.txt") == "two");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  fs::remove_all(dir);
}

TEST_CASE("reflect_pad and crop") {
  Rng rng(2);
  for (auto [h, w] : {std::pair<Index, Index>{5, 7}, {8, 8}, {3, 2}, {13, 6}}) {
    const Image x = random_image(rng, h, w);
    const auto p = io::reflect_pad(x);
    CHECK(p.image.dim(0) % 4 == 0);
    CHECK(p.image.dim(1) % 4 == 0);
    CHECK(p.image.dim(0) - h < 4);
    CHECK(io::crop(p.image, p.height, p.width).identical(x));
    if (p.image.dim(1) > w) CHECK(p.image(0, w, 1) == x(0, w - 2, 1));
    if (p.image.dim(0) > h) CHECK(p.image(h, 0, 2) == x(h - 2, 0, 2));
  }
}

TEST_CASE("perturbation_visual") {
  Tensor d(Shape{1, 2, 3});
  d[0] = -0.1f, d[1] = 0.1f, d[2] = 0.f;
  const Image v = io::perturbation_visual(d, 0.1);
  CHECK(v[0] == 0.f);
  CHECK(v[1] == 1.f);
  CHECK(v[2] == 0.5f);
  CHECK((io::perturbation_visual(d, 0.0).array() == 0.5f).all());
}

TEST_CASE("base64") {
  auto enc = [](std::string s) { return oracle::base64_encode({s.begin(), s.end()}); };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");
  const auto dec = oracle::base64_decode("Zm9vYmE=");
  CHECK(std::string(dec.begin(), dec.end()) == "fooba");
  CHECK_THROWS_AS(oracle::base64_decode("Zm9"), TransportError);
  CHECK_THROWS_AS(oracle::base64_decode("Zm9*"), TransportError);

  Tensor t(Shape{3});
  t[0] = 1.f, t[1] = -2.5f, t[2] = 0.f;
  // little-endian float32: 1.0 = 00 00 80 3f
  CHECK(oracle::encode_floats(t).substr(0, 4) == "AACA");
  CHECK(oracle::decode_floats(oracle::encode_floats(t), t.shape()).identical(t));
  CHECK_THROWS_AS(oracle::decode_floats(oracle::encode_floats(t), Shape{4}), TransportError);
}

TEST_CASE("response parsing") {
  Tensor t(Shape{2});
  t[0] = 0.5f, t[1] = 2.f;
  const nlohmann::json ok = {{"id", 3}, {"ok", true}, {"shape", {2}}, {"data", oracle::encode_floats(t)}};
  CHECK(oracle::parse_response(ok.dump(), 3).identical(t));
  CHECK_THROWS_AS(oracle::parse_response(ok.dump(), 4), TransportError);
  CHECK_THROWS_AS(oracle::parse_response("{\"id\":3,\"ok\":false,\"error\":\"boom\"}", 3), TransportError);
  try {
    oracle::parse_response("{not json", 0);
    FAIL("no throw");
  } catch (const TransportError& e) {
    CHECK(e.raw() == "{not json");
  }
}

TEST_CASE("loopback client matches the in-process victim") {
  const ToyVictim v(4);
  oracle::OracleClient client(std::make_unique<oracle::LoopbackChannel>(v));
  Rng rng(3);
  const Image x = random_image(rng, 8, 12);
  CHECK(client.encode(x).identical(v.encode(x)));
  FeatureVector ct(Shape{2 * 3 * 16});
  for (Index i = 0; i < ct.size(); ++i) ct[i] = static_cast<float>(rng.uniform(-1, 1));
  CHECK(client.encode_vjp(x, ct).identical(v.encode_vjp(x, ct)));
  CHECK_THROWS_AS(client.segment_everything(x), CapabilityError);
  CHECK_THROWS_AS(client.segment_point(x, {0, 0}), CapabilityError);
  // a victim-side error comes back as ok=false
  CHECK_THROWS_AS(client.encode(make_image(6, 8)), TransportError);

  std::istringstream in(oracle::encode_request(7, x) + "\n");
  std::ostringstream out;
  oracle::serve(in, out, v);
  CHECK(oracle::parse_response(out.str().substr(0, out.str().size() - 1), 7).identical(v.encode(x)));

  auto seg = std::make_shared<ToyVictim>(4);
  oracle::OracleClient with_seg(std::make_unique<oracle::LoopbackChannel>(v), seg);
  CHECK(with_seg.segment_everything(x).size() == v.segment_everything(x).size());
}

TEST_CASE("sidecar process") {
  Rng rng(5);
  const Image x = random_image(rng, 8, 8);
  SUBCASE("toy mode is bit identical") {
    const ToyVictim v(2);
    oracle::OracleClient client(std::make_unique<oracle::SidecarProcess>(sidecar("--mode toy --seed 2")));
    CHECK(client.encode(x).identical(v.encode(x)));
    const FeatureVector ct = v.encode(x);
    CHECK(client.encode_vjp(x, ct).identical(v.encode_vjp(x, ct)));
    CHECK(client.encode(x).identical(v.encode(x)));
  }
  SUBCASE("zeros mode returns a zero vector") {
    oracle::OracleClient client(std::make_unique<oracle::SidecarProcess>(sidecar("--mode zeros")));
    const auto y = client.encode(x);
    CHECK(y.size() > 0);
    CHECK((y.array() == 0.f).all());
  }
  SUBCASE("malformed output keeps the raw line") {
    oracle::OracleClient client(std::make_unique<oracle::SidecarProcess>(sidecar("--mode malformed")));
    try {
      client.encode(x);
      FAIL("no throw");
    } catch (const TransportError& e) {
      CHECK(e.raw() == "{not json");
    }
  }
  SUBCASE("silent sidecar times out") {
    oracle::OracleClient client(
        std::make_unique<oracle::SidecarProcess>(sidecar("--mode silent"), std::chrono::milliseconds(300)));
    CHECK_THROWS_WITH_AS(client.encode(x), doctest::Contains("timed out"), TransportError);
  }
  SUBCASE("command that exits immediately") {
    oracle::OracleClient client(std::make_unique<oracle::SidecarProcess>("exit 0"));
    CHECK_THROWS_AS(client.encode(x), TransportError);
  }
}
