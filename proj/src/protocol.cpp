#include "dronos/protocol.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>

#include "dronos/error.hpp"

namespace dronos::proto {

using nlohmann::json;

namespace {

json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace

json ack(const json& id, json body) {
  body["v"] = kVersion;
  body["type"] = "ack";
  body["id"] = id;
  return body;
}

json error(const json& id, const std::string& reason, const std::string& field) {
  json j{{"v", kVersion}, {"type", "error"}, {"id", id}, {"reason", reason}};
  if (!field.empty()) j["field"] = field;
  return j;
}

json event_to_json(const orch::Event& e) {
  return {{"v", kVersion}, {"type", "event"},   {"t", e.t},
          {"drone_id", e.drone_id}, {"event", e.type}, {"detail", e.detail}};
}

json session_to_json(const orch::SessionSummary& s) {
  json cmd = json::array();
  for (auto c : s.command.channels) cmd.push_back(c);
  return {{"drone_id", s.drone_id},
          {"tracked_id", s.tracked_object_id},
          {"priority", s.priority},
          {"mode", orch::to_string(s.mode)},
          {"armed", s.armed},
          {"health", tracking::to_string(s.health)},
          {"position", vec(s.position)},
          {"velocity", vec(s.velocity)},
          {"target", vec(s.target)},
          {"safe_target", vec(s.safe_target)},
          {"target_yaw", rad_to_deg(s.target_yaw)},
          {"verdict", safety::to_string(s.verdict)},
          {"path_id", s.path_id},
          {"path_t", s.path_t},
          {"held", s.held},
          {"channels", cmd}};
}

json snapshot_to_json(const orch::WorldSnapshot& world, std::uint64_t seq) {
  json sessions = json::array();
  for (const auto& s : world.sessions) sessions.push_back(session_to_json(s));
  json objects = json::array();
  if (world.tracking) {
    for (const auto& [id, obj] : world.tracking->objects) {
      if (!obj.has_pose()) continue;
      objects.push_back({{"id", id},
                         {"kind", tracking::to_string(obj.kind)},
                         {"position", vec(obj.smoothed.position)}});
    }
  }
  json zones = json::array();
  for (const auto& z : world.zones) zones.push_back(safety::zone_to_json(z));
  return {{"v", kVersion},      {"type", "snapshot"}, {"seq", seq},       {"t", world.t},
          {"degraded", world.degraded}, {"sessions", sessions}, {"objects", objects},
          {"zones", zones}};
}

const json& require(const json& msg, const std::string& field) {
  auto it = msg.find(field);
  if (it == msg.end()) throw ParseError(field, "missing field '" + field + "'");
  return *it;
}

int require_int(const json& msg, const std::string& field) {
  const json& v = require(msg, field);
  if (!v.is_number_integer()) throw ParseError(field, "'" + field + "' must be an integer");
  return v.get<int>();
}

double require_number(const json& msg, const std::string& field) {
  const json& v = require(msg, field);
  if (!v.is_number()) throw ParseError(field, "'" + field + "' must be a number");
  return v.get<double>();
}

std::string require_string(const json& msg, const std::string& field) {
  const json& v = require(msg, field);
  if (!v.is_string()) throw ParseError(field, "'" + field + "' must be a string");
  return v.get<std::string>();
}

path::PointerRay pointer_from_json(const json& msg) {
  path::PointerRay ray;
  ray.origin = safety::vec_from_json(require(msg, "origin"), "origin");
  ray.forward = safety::vec_from_json(require(msg, "forward"), "forward");
  ray.distance = require_number(msg, "distance");
  try {
    ray.validate();
  } catch (const Error& e) {
    throw ParseError(std::string("forward"), e.what());
  }
  return ray;
}

bool looks_like_http(const std::string& prefix) {
  return prefix.rfind("GET ", 0) == 0;
}

std::string websocket_accept(const std::string& client_key) {
  const std::string input = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(input.data()), input.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(out), static_cast<std::size_t>(n));
}

std::optional<std::string> websocket_key(const std::string& request) {
  if (!looks_like_http(request)) return std::nullopt;
  std::optional<std::string> key;
  bool upgrade = false;
  std::size_t pos = request.find("\r\n");
  while (pos != std::string::npos) {
    const std::size_t next = request.find("\r\n", pos + 2);
    if (next == std::string::npos) break;
    const std::string line = request.substr(pos + 2, next - pos - 2);
    if (line.empty()) break;
    const auto colon = line.find(':');
    if (colon != std::string::npos) {
      const std::string name = lower(trim(line.substr(0, colon)));
      const std::string value = trim(line.substr(colon + 1));
      if (name == "sec-websocket-key") key = value;
      if (name == "upgrade" && lower(value) == "websocket") upgrade = true;
    }
    pos = next;
  }
  if (!upgrade || !key || key->empty()) return std::nullopt;
  return key;
}

std::string websocket_handshake_response(const std::string& client_key) {
  return "HTTP/1.1 101 Switching Protocols\r\n"
         "Upgrade: websocket\r\n"
         "Connection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         websocket_accept(client_key) + "\r\n\r\n";
}

std::optional<WsFrame> websocket_decode(std::string& buffer, bool require_mask, std::size_t max_payload) {
  if (buffer.size() < 2) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buffer[0]);
  const auto b1 = static_cast<std::uint8_t>(buffer[1]);
  if (b0 & 0x70) throw Error(ErrorCode::Protocol, "websocket: reserved bits set");
  const bool masked = b1 & 0x80;
  if (require_mask && !masked) throw Error(ErrorCode::Protocol, "websocket: client frame not masked");
  std::uint64_t len = b1 & 0x7F;
  std::size_t header = 2;
  if (len == 126) {
    if (buffer.size() < 4) return std::nullopt;
    len = (static_cast<std::uint64_t>(static_cast<std::uint8_t>(buffer[2])) << 8) |
          static_cast<std::uint8_t>(buffer[3]);
    header = 4;
  } else if (len == 127) {
    if (buffer.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<std::uint8_t>(buffer[2 + i]);
    header = 10;
  }
  if (len > max_payload) throw Error(ErrorCode::Protocol, "websocket: frame too large");
  const std::size_t mask_at = header;
  if (masked) header += 4;
  if (buffer.size() < header + len) return std::nullopt;
  WsFrame frame;
  frame.fin = b0 & 0x80;
  frame.opcode = static_cast<WsOpcode>(b0 & 0x0F);
  frame.payload = buffer.substr(header, static_cast<std::size_t>(len));
  if (masked)
    for (std::size_t i = 0; i < frame.payload.size(); ++i) frame.payload[i] ^= buffer[mask_at + i % 4];
  buffer.erase(0, header + static_cast<std::size_t>(len));
  switch (frame.opcode) {
    case WsOpcode::Continuation:
    case WsOpcode::Text:
    case WsOpcode::Binary:
    case WsOpcode::Close:
    case WsOpcode::Ping:
    case WsOpcode::Pong:
      break;
    default:
      throw Error(ErrorCode::Protocol, "websocket: unknown opcode");
  }
  return frame;
}

std::string websocket_encode(WsOpcode opcode, const std::string& payload, std::optional<std::uint32_t> mask) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | static_cast<std::uint8_t>(opcode)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::size_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xFFFF) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n & 0xFF));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(n) >> (8 * i)) & 0xFF));
  }
  if (!mask) return out + payload;
  char key[4];
  for (int i = 0; i < 4; ++i) key[i] = static_cast<char>((*mask >> (8 * (3 - i))) & 0xFF);
  out.append(key, 4);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

}  // namespace dronos::proto
