#include "rga/oracle.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>
#include <thread>

#include "json.hpp"

#include "rga/errors.hpp"

namespace rga::oracle {

using nlohmann::json;

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

json shape_json(const Shape& s) {
  json a = json::array();
  for (Index i = 0; i < s.rank(); ++i) a.push_back(s[i]);
  return a;
}

Shape shape_from_json(const json& j) {
  if (!j.is_array() || j.empty() || j.size() > 4) throw TransportError("shape must be an array of 1 to 4 extents");
  std::vector<Index> dims;
  for (const auto& d : j) {
    if (!d.is_number_integer() || d.get<long long>() < 0) throw TransportError("shape extents must be nonnegative integers");
    dims.push_back(d.get<Index>());
  }
  return Shape(dims);
}

}  // namespace

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(v >> s) & 63]);
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out.push_back(kAlphabet[(v >> 18) & 63]);
    out.push_back(kAlphabet[(v >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw TransportError("base64 length is not a multiple of 4");
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> v{};
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
        v[k] = 0;
        continue;
      }
      if (pad > 0 || (v[k] = b64_value(c)) < 0) throw TransportError("invalid base64 character");
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>(w >> 16));
    if (pad < 2) out.push_back(static_cast<unsigned char>(w >> 8));
    if (pad < 1) out.push_back(static_cast<unsigned char>(w));
  }
  return out;
}

std::string encode_floats(const Tensor& t) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(t.size()) * 4);
  for (Index i = 0; i < t.size(); ++i) {
    const std::uint32_t le = to_le(std::bit_cast<std::uint32_t>(t[i]));
    std::memcpy(bytes.data() + 4 * i, &le, 4);
  }
  return base64_encode(bytes);
}

Tensor decode_floats(const std::string& b64, const Shape& shape) {
  const auto bytes = base64_decode(b64);
  if (bytes.size() != static_cast<std::size_t>(shape.numel()) * 4)
    throw TransportError("payload has " + std::to_string(bytes.size()) + " bytes, shape " + shape.str() + " needs " +
                         std::to_string(shape.numel() * 4));
  Tensor t(shape);
  for (Index i = 0; i < t.size(); ++i) {
    std::uint32_t le;
    std::memcpy(&le, bytes.data() + 4 * i, 4);
    t[i] = std::bit_cast<float>(to_le(le));
  }
  return t;
}

std::string encode_request(long id, const Image& image) {
  return json{{"id", id}, {"op", "encode"}, {"shape", shape_json(image.shape())}, {"data", encode_floats(image)}}.dump();
}

std::string encode_vjp_request(long id, const Image& image, const FeatureVector& cotangent) {
  return json{{"id", id},
              {"op", "encode_vjp"},
              {"shape", shape_json(image.shape())},
              {"data", encode_floats(image)},
              {"cotangent_shape", json::array({cotangent.size()})},
              {"cotangent", encode_floats(cotangent)}}
      .dump();
}

Tensor parse_response(const std::string& line, long expected_id) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    throw TransportError("malformed response", line);
  }
  try {
    if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer())
      throw TransportError("response without integer id", line);
    if (j["id"].get<long>() != expected_id)
      throw TransportError("response id " + std::to_string(j["id"].get<long>()) + ", expected " +
                               std::to_string(expected_id),
                           line);
    if (!j.value("ok", false))
      throw TransportError("oracle error: " + j.value("error", std::string("unspecified")), line);
    return decode_floats(j.at("data").get<std::string>(), shape_from_json(j.at("shape")));
  } catch (const json::exception& e) {
    throw TransportError(std::string("bad response: ") + e.what(), line);
  } catch (const TransportError& e) {
    if (!e.raw().empty()) throw;
    throw TransportError(e.what(), line);
  }
}

std::string handle_line(const std::string& line, const VictimModel& victim) {
  json id = nullptr;
  try {
    const json req = json::parse(line);
    id = req.at("id");
    const std::string op = req.at("op").get<std::string>();
    const Image image = decode_floats(req.at("data").get<std::string>(), shape_from_json(req.at("shape")));
    Tensor result;
    if (op == "encode") {
      result = victim.encode(image);
    } else if (op == "encode_vjp") {
      const Tensor ct =
          decode_floats(req.at("cotangent").get<std::string>(), shape_from_json(req.at("cotangent_shape")));
      result = victim.encode_vjp(image, ct);
    } else {
      throw ContractError("unknown op '" + op + "'");
    }
    return json{{"id", id}, {"ok", true}, {"shape", shape_json(result.shape())}, {"data", encode_floats(result)}}.dump();
  } catch (const std::exception& e) {
    return json{{"id", id}, {"ok", false}, {"error", e.what()}}.dump();
  }
}

void serve(std::istream& in, std::ostream& out, const VictimModel& victim) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_line(line, victim) << '\n';
    out.flush();
  }
}

SidecarProcess::SidecarProcess(const std::string& command, std::chrono::milliseconds timeout) : timeout_(timeout) {
  int sv[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
    throw TransportError(std::string("socketpair: ") + std::strerror(errno));
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(sv[0]);
    ::close(sv[1]);
    throw TransportError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(sv[1], STDIN_FILENO);
    ::dup2(sv[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(sv[1]);
  pid_ = pid;
  to_child_ = from_child_ = sv[0];
}

SidecarProcess::~SidecarProcess() {
  if (to_child_ >= 0) {
    ::shutdown(to_child_, SHUT_WR);
    ::close(to_child_);
  }
  if (pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
  }
}

std::string SidecarProcess::exchange(const std::string& line) {
  std::string msg = line;
  msg.push_back('\n');
  std::size_t sent = 0;
  while (sent < msg.size()) {
    const ssize_t n = ::send(to_child_, msg.data() + sent, msg.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("sidecar write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  return read_line();
}

std::string SidecarProcess::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string out = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return out;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TransportError("sidecar timed out", buffer_);
    pollfd p{from_child_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(left.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw TransportError(std::string("poll: ") + std::strerror(errno));
    if (r == 0) continue;
    char chunk[65536];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw TransportError("sidecar closed its output", buffer_);
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

OracleClient::OracleClient(std::unique_ptr<LineChannel> channel, std::shared_ptr<const VictimModel> segmenter)
    : channel_(std::move(channel)), segmenter_(std::move(segmenter)) {
  if (!channel_) throw ContractError("OracleClient: null channel");
}

Tensor OracleClient::round_trip(const std::string& request, long id) const {
  return parse_response(channel_->exchange(request), id);
}

FeatureVector OracleClient::encode(const Image& image) const {
  std::lock_guard lock(mutex_);
  const long id = next_id_++;
  Tensor out = round_trip(encode_request(id, image), id);
  if (out.rank() != 1) throw TransportError("encode returned shape " + out.shape().str() + ", expected rank 1");
  return out;
}

Image OracleClient::encode_vjp(const Image& image, const FeatureVector& cotangent) const {
  std::lock_guard lock(mutex_);
  const long id = next_id_++;
  Tensor out = round_trip(encode_vjp_request(id, image, cotangent), id);
  if (!(out.shape() == image.shape()))
    throw TransportError("encode_vjp returned shape " + out.shape().str() + ", expected " + image.shape().str());
  return out;
}

MaskSet OracleClient::segment_everything(const Image& image) const {
  if (!segmenter_) throw CapabilityError("oracle victim has no segmenter; segment_everything unavailable");
  return segmenter_->segment_everything(image);
}

BinaryMask OracleClient::segment_point(const Image& image, PointPrompt p) const {
  if (!segmenter_) throw CapabilityError("oracle victim has no segmenter; segment_point unavailable");
  return segmenter_->segment_point(image, p);
}

}  // namespace rga::oracle
