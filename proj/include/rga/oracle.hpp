#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rga/tensor.hpp"
#include "rga/victim.hpp"

namespace rga::oracle {

/// Base64 (RFC 4648, padded) of the little-endian float32 bytes.
std::string encode_floats(const Tensor& t);
/// Inverse of encode_floats; throws TransportError on bad input or a length
/// that disagrees with `shape`.
Tensor decode_floats(const std::string& b64, const Shape& shape);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

std::string encode_request(long id, const Image& image);
std::string encode_vjp_request(long id, const Image& image, const FeatureVector& cotangent);

/// Parses one response line; throws TransportError on malformed JSON,
/// an id other than `expected_id`, or ok=false.
Tensor parse_response(const std::string& line, long expected_id);

/// Answers protocol requests from `in` on `out` until EOF. Errors on a
/// request become ok=false responses; the loop keeps going.
void serve(std::istream& in, std::ostream& out, const VictimModel& victim);
/// One request line to one response line.
std::string handle_line(const std::string& line, const VictimModel& victim);

/// Bidirectional line transport.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Sends `line` (without trailing newline) and returns the next response
  /// line.
  virtual std::string exchange(const std::string& line) = 0;
};

/// Runs `command` through /bin/sh with piped stdin/stdout.
class SidecarProcess final : public LineChannel {
 public:
  explicit SidecarProcess(const std::string& command,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~SidecarProcess() override;
  SidecarProcess(const SidecarProcess&) = delete;
  SidecarProcess& operator=(const SidecarProcess&) = delete;

  std::string exchange(const std::string& line) override;

 private:
  std::string read_line();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

/// Serves requests with an in-process victim, through the full encode and
/// decode path.
class LoopbackChannel final : public LineChannel {
 public:
  explicit LoopbackChannel(const VictimModel& victim) : victim_(victim) {}
  std::string exchange(const std::string& line) override { return handle_line(line, victim_); }

 private:
  const VictimModel& victim_;
};

/// VictimModel whose encode and encode_vjp go over the protocol. Requests
/// are serialized. segment_* delegate to `segmenter` when given, otherwise
/// throw CapabilityError.
class OracleClient final : public VictimModel {
 public:
  explicit OracleClient(std::unique_ptr<LineChannel> channel, std::shared_ptr<const VictimModel> segmenter = nullptr);

  FeatureVector encode(const Image& image) const override;
  Image encode_vjp(const Image& image, const FeatureVector& cotangent) const override;
  MaskSet segment_everything(const Image& image) const override;
  BinaryMask segment_point(const Image& image, PointPrompt p) const override;

 private:
  Tensor round_trip(const std::string& request, long id) const;

  std::unique_ptr<LineChannel> channel_;
  std::shared_ptr<const VictimModel> segmenter_;
  mutable std::mutex mutex_;
  mutable long next_id_ = 0;
};

}  // namespace rga::oracle
