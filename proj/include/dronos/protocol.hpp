#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dronos/orchestrator.hpp"

// Wire format of the API service: one JSON object per line, every message
// carrying "v":1. The same objects travel as text frames after a WebSocket
// upgrade.
namespace dronos::proto {

inline constexpr int kVersion = 1;
inline constexpr int kDefaultApiPort = 47820;
inline constexpr std::size_t kMaxLine = 1 << 20;

nlohmann::json ack(const nlohmann::json& id, nlohmann::json body = nlohmann::json::object());
nlohmann::json error(const nlohmann::json& id, const std::string& reason,
                     const std::string& field = {});
nlohmann::json event_to_json(const orch::Event& event);
nlohmann::json snapshot_to_json(const orch::WorldSnapshot& world, std::uint64_t seq);
nlohmann::json session_to_json(const orch::SessionSummary& s);

// Validated accessors; throw ParseError naming the offending field.
const nlohmann::json& require(const nlohmann::json& msg, const std::string& field);
int require_int(const nlohmann::json& msg, const std::string& field);
double require_number(const nlohmann::json& msg, const std::string& field);
std::string require_string(const nlohmann::json& msg, const std::string& field);
path::PointerRay pointer_from_json(const nlohmann::json& msg);

// --- WebSocket (RFC 6455) ---

// True once the buffered prefix is recognisably an HTTP request line.
bool looks_like_http(const std::string& prefix);
std::string websocket_accept(const std::string& client_key);
// Parses a complete HTTP upgrade request; nullopt if it is not one.
std::optional<std::string> websocket_key(const std::string& request);
std::string websocket_handshake_response(const std::string& client_key);

enum class WsOpcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };

struct WsFrame {
  bool fin = true;
  WsOpcode opcode = WsOpcode::Text;
  std::string payload;
};

// Consumes one frame from the front of buffer; nullopt when incomplete.
// Throws Protocol on reserved bits, oversized or (when require_mask) unmasked frames.
std::optional<WsFrame> websocket_decode(std::string& buffer, bool require_mask = true,
                                        std::size_t max_payload = kMaxLine);
// Server frames are unmasked; clients must pass a mask key.
std::string websocket_encode(WsOpcode opcode, const std::string& payload,
                             std::optional<std::uint32_t> mask = std::nullopt);

}  // namespace dronos::proto
