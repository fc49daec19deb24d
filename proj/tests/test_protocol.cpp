#include <random>

#include "doctest.h"
#include "dronos/error.hpp"
#include "dronos/protocol.hpp"

using namespace dronos;
using namespace dronos::proto;
using nlohmann::json;

namespace {

std::string bytes(std::initializer_list<int> b) {
  std::string s;
  for (int c : b) s.push_back(static_cast<char>(c));
  return s;
}

}  // namespace

TEST_CASE("websocket accept key") {
  CHECK(websocket_accept("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
  const std::string req =
      "GET /ws HTTP/1.1\r\nHost: localhost\r\nUpgrade: WebSocket\r\nConnection: Upgrade\r\n"
      "Sec-WebSocket-Key:  dGhlIHNhbXBsZSBub25jZQ== \r\nSec-WebSocket-Version: 13\r\n\r\n";
  REQUIRE(websocket_key(req));
  CHECK(*websocket_key(req) == "dGhlIHNhbXBsZSBub25jZQ==");
  CHECK_FALSE(websocket_key("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
  CHECK_FALSE(websocket_key("{\"v\":1}\n"));
  const std::string resp = websocket_handshake_response("dGhlIHNhbXBsZSBub25jZQ==");
  CHECK(resp.rfind("HTTP/1.1 101", 0) == 0);
  CHECK(resp.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=\r\n") != std::string::npos);
  CHECK(looks_like_http("GET /"));
  CHECK_FALSE(looks_like_http("{\"v\""));
}

TEST_CASE("websocket frames match the RFC examples") {
  CHECK(websocket_encode(WsOpcode::Text, "Hello") == bytes({0x81, 0x05, 0x48, 0x65, 0x6c, 0x6c, 0x6f}));
  const std::string masked =
      bytes({0x81, 0x85, 0x37, 0xfa, 0x21, 0x3d, 0x7f, 0x9f, 0x4d, 0x51, 0x58});
  CHECK(websocket_encode(WsOpcode::Text, "Hello", 0x37fa213dU) == masked);

  std::string buf = masked;
  auto f = websocket_decode(buf);
  REQUIRE(f);
  CHECK(f->fin);
  CHECK(f->opcode == WsOpcode::Text);
  CHECK(f->payload == "Hello");
  CHECK(buf.empty());

  // A fragmented unmasked text message.
  buf = bytes({0x01, 0x03, 0x48, 0x65, 0x6c, 0x80, 0x02, 0x6c, 0x6f});
  auto a = websocket_decode(buf, false);
  auto b = websocket_decode(buf, false);
  REQUIRE((a && b));
  CHECK_FALSE(a->fin);
  CHECK(b->opcode == WsOpcode::Continuation);
  CHECK(a->payload + b->payload == "Hello");

  // 256-byte binary message uses the 16-bit length form.
  const std::string big(256, 'x');
  const std::string enc = websocket_encode(WsOpcode::Binary, big);
  CHECK(enc.substr(0, 4) == bytes({0x82, 0x7E, 0x01, 0x00}));
  const std::string huge(65536, 'y');
  CHECK(websocket_encode(WsOpcode::Binary, huge).substr(0, 10) ==
        bytes({0x82, 0x7F, 0, 0, 0, 0, 0, 1, 0, 0}));
}

TEST_CASE("websocket decode edge cases") {
  std::string unmasked = websocket_encode(WsOpcode::Text, "hi");
  CHECK_THROWS_AS(websocket_decode(unmasked, true), Error);
  std::string rsv = bytes({0xC1, 0x80, 0, 0, 0, 0});
  CHECK_THROWS_AS(websocket_decode(rsv), Error);
  std::string bad_op = bytes({0x83, 0x80, 0, 0, 0, 0});
  CHECK_THROWS_AS(websocket_decode(bad_op), Error);
  std::string too_big = websocket_encode(WsOpcode::Text, std::string(200, 'a'), 1u);
  CHECK_THROWS_AS(websocket_decode(too_big, true, 100), Error);

  std::mt19937_64 rng(2);
  for (std::size_t len : {0u, 1u, 125u, 126u, 127u, 65535u, 65536u, 70000u}) {
    std::string payload(len, '\0');
    for (auto& c : payload) c = static_cast<char>(rng());
    const std::string frame = websocket_encode(WsOpcode::Binary, payload, static_cast<std::uint32_t>(rng()));
    // Every strict prefix is incomplete and leaves the buffer untouched.
    for (std::size_t cut : {std::size_t{0}, std::size_t{1}, frame.size() / 2, frame.size() - 1}) {
      std::string part = frame.substr(0, cut);
      CHECK_FALSE(websocket_decode(part));
      CHECK(part.size() == cut);
    }
    std::string whole = frame + "tail";
    auto f = websocket_decode(whole);
    REQUIRE(f);
    CHECK(f->payload == payload);
    CHECK(whole == "tail");
  }
}

TEST_CASE("message builders") {
  const json a = ack(7, {{"path_id", "sq"}});
  CHECK(a["v"] == 1);
  CHECK(a["type"] == "ack");
  CHECK(a["id"] == 7);
  CHECK(a["path_id"] == "sq");
  const json e = error("abc", "bad speed", "path.waypoints[2].speed_to");
  CHECK(e["type"] == "error");
  CHECK(e["id"] == "abc");
  CHECK(e["field"] == "path.waypoints[2].speed_to");
  CHECK_FALSE(error(1, "x").contains("field"));

  orch::WorldSnapshot w;
  w.t = 1.5;
  orch::SessionSummary s;
  s.drone_id = 3;
  s.command = msp::RcCommand::neutral(1450);
  s.position = {1, 2, 3};
  w.sessions.push_back(s);
  const json snap = snapshot_to_json(w, 42);
  CHECK(snap["type"] == "snapshot");
  CHECK(snap["seq"] == 42);
  CHECK(snap["sessions"][0]["drone_id"] == 3);
  CHECK(snap["sessions"][0]["mode"] == "idle");
  CHECK(snap["sessions"][0]["position"] == json::array({1.0, 2.0, 3.0}));
  CHECK(snap["sessions"][0]["channels"][2] == 1450);

  const json ev = event_to_json({2.0, 1, "failsafe", "drone tracking lost"});
  CHECK(ev["event"] == "failsafe");
  CHECK(ev["drone_id"] == 1);
}

TEST_CASE("field accessors") {
  const json m = json::parse(R"({"a": 1, "b": 2.5, "c": "x", "origin": [0,0,1], "forward": {"x":1,"y":0,"z":0}, "distance": 1.5})");
  CHECK(require_int(m, "a") == 1);
  CHECK(require_number(m, "b") == 2.5);
  CHECK(require_string(m, "c") == "x");
  auto field = [&](auto fn) {
    try {
      fn();
    } catch (const ParseError& e) {
      return e.path();
    }
    return std::string("<none>");
  };
  CHECK(field([&] { require_int(m, "b"); }) == "b");
  CHECK(field([&] { require_string(m, "zz"); }) == "zz");
  const auto ray = pointer_from_json(m);
  CHECK(ray.distance == 1.5);
  CHECK(ray.origin == Vec3{0, 0, 1});
  json bad = m;
  bad["forward"] = json::array({1, 1, 0});
  CHECK(field([&] { pointer_from_json(bad); }) == "forward");
}
