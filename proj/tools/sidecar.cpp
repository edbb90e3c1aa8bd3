// Gradient-oracle sidecar speaking newline-delimited JSON on stdin/stdout.
//   toy        answers with the in-process toy encoder
//   zeros      encode returns zeros, encode_vjp returns zeros
//   malformed  replies with a line that is not JSON
//   silent     reads requests and never answers
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "rga/oracle.hpp"
#include "rga/victim.hpp"

namespace {

class ZeroVictim final : public rga::VictimModel {
 public:
  rga::FeatureVector encode(const rga::Image& image) const override {
    rga::require_toy_dimensions(image.shape());
    return rga::FeatureVector::Zero({image.dim(0) / 4 * (image.dim(1) / 4) * rga::kToyChannels2});
  }
  rga::Image encode_vjp(const rga::Image& image, const rga::FeatureVector&) const override {
    return rga::Image::Zero(image.shape());
  }
  rga::MaskSet segment_everything(const rga::Image&) const override { return {}; }
  rga::BinaryMask segment_point(const rga::Image& image, rga::PointPrompt) const override {
    return rga::BinaryMask(image.dim(0), image.dim(1));
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rga-forge gradient oracle sidecar"};
  std::uint64_t seed = 0;
  std::string mode = "toy";
  app.add_option("--seed", seed, "toy encoder seed");
  app.add_option("--mode", mode, "toy|zeros|malformed|silent")
      ->check(CLI::IsMember({"toy", "zeros", "malformed", "silent"}));
  CLI11_PARSE(app, argc, argv);

  std::ios::sync_with_stdio(false);
  if (mode == "toy") {
    rga::oracle::serve(std::cin, std::cout, rga::ToyVictim(seed));
  } else if (mode == "zeros") {
    rga::oracle::serve(std::cin, std::cout, ZeroVictim{});
  } else {
    std::string line;
    while (std::getline(std::cin, line))
      if (mode == "malformed") std::cout << "{not json" << std::endl;
  }
  return 0;
}
