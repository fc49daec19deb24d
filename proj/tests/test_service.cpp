#include <poll.h>
#include <sys/socket.h>

#include <chrono>
#include <cstdlib>
#include <random>
#include <thread>

#include "doctest.h"
#include "dronos/client.hpp"
#include "dronos/error.hpp"
#include "dronos/flight_path.hpp"
#include "dronos/net.hpp"
#include "dronos/protocol.hpp"
#include "dronos/service.hpp"

using namespace dronos;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

service::ServiceConfig local_config() {
  service::ServiceConfig cfg;
  cfg.api_port = 0;
  cfg.track_port = 0;
  return cfg;
}

template <class D>
double seconds(D d) { return std::chrono::duration<double>(d).count(); }

std::optional<json> next_of_type(client::Client& c, const std::string& type, double timeout) {
  const auto until = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout));
  while (Clock::now() < until) {
    auto m = c.next(seconds(until - Clock::now()));
    if (m && m->value("type", "") == type) return m;
  }
  return std::nullopt;
}

const json* session_of(const json& snapshot, int drone_id) {
  for (const auto& s : snapshot["sessions"])
    if (s["drone_id"] == drone_id) return &s;
  return nullptr;
}

Vec3 vec(const json& a) { return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()}; }

json raw_request(const net::Fd& fd, net::LineReader& reader, const json& msg) {
  net::send_all(fd, msg.dump() + "\n");
  auto line = reader.next(3000);
  REQUIRE(line);
  return json::parse(*line);
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("snapshots at 30 Hz with no drones") {
  service::Service svc(local_config());
  svc.start();
  client::Client c("127.0.0.1", svc.api_port());
  CHECK(c.request({{"type", "subscribe"}})["type"] == "ack");
  std::size_t count = 0;
  std::int64_t last_seq = -1;
  double last_t = -1;
  bool monotone = true;
  const auto start = Clock::now();
  while (seconds(Clock::now() - start) < 3.0) {
    auto m = c.next(0.5);
    if (!m || (*m)["type"] != "snapshot") continue;
    ++count;
    CHECK((*m)["sessions"].empty());
    const auto seq = (*m)["seq"].get<std::int64_t>();
    const double t = (*m)["t"].get<double>();
    monotone = monotone && seq > last_seq && t >= last_t;
    last_seq = seq;
    last_t = t;
  }
  const double rate = count / seconds(Clock::now() - start);
  MESSAGE("snapshot rate " << rate << " Hz");
  CHECK(rate >= 24.0);
  CHECK(rate <= 36.0);
  CHECK(monotone);
  svc.stop();
}

TEST_CASE("request handling") {
  service::Service svc(local_config());
  svc.start();
  client::Client c("127.0.0.1", svc.api_port());

  SUBCASE("malformed upload echoes id and field") {
    const json bad = json::parse(R"({"v":1,"id":"u1","type":"upload_path","path":{"id":"p","waypoints":[
      {"x":0,"y":0,"z":1},{"x":1,"y":0,"z":1},{"x":1,"y":1,"z":1,"speed_to":-2}]}})");
    const json r = c.request(bad);
    CHECK(r["type"] == "error");
    CHECK(r["id"] == "u1");
    CHECK(r["field"] == "path.waypoints[2].speed_to");
  }
  SUBCASE("upload, list, get and validate") {
    const json doc = json::parse(R"({"format":1,"id":"sq","loop":false,"waypoints":[
      {"x":0,"y":0,"z":1},{"x":1,"y":0,"z":1,"hold":0.5},{"x":1,"y":1,"z":1,"yaw":90}]})");
    json r = c.request({{"type", "upload_path"}, {"path", doc}});
    CHECK(r["type"] == "ack");
    CHECK(r["path_id"] == "sq");
    CHECK(r["waypoints"] == 3);
    r = c.request({{"type", "list_paths"}});
    CHECK(r["paths"] == json::array({"sq"}));
    r = c.request({{"type", "get_path"}, {"path_id", "sq"}});
    CHECK(path::path_from_json(r["path"]) == path::path_from_json(doc));
    r = c.request({{"type", "get_path"}, {"path_id", "nope"}});
    CHECK(r["type"] == "error");
    CHECK(r["field"] == "path_id");

    r = c.request({{"type", "define_zones"},
                   {"zones", json::parse(R"([{"id":"pillar","center":{"x":0.5,"y":0,"z":1},"radius":0.2}])")}});
    CHECK(r["type"] == "ack");
    r = c.request({{"type", "validate_path"}, {"path_id", "sq"}});
    CHECK(r["ok"] == false);
    CHECK(r["issues"][0]["zone"] == "pillar");
    r = c.request({{"type", "define_zones"}, {"zones", json::parse(R"([{"id":"z","radius":-1,"center":[0,0,0]}])")}});
    CHECK(r["type"] == "error");
    CHECK(r["field"] == "zones[0]");
  }
  SUBCASE("envelope errors") {
    json r = c.request({{"type", "bogus"}});
    CHECK(r["type"] == "error");
    CHECK(r["field"] == "type");
    r = c.request({{"v", 2}, {"type", "ping"}});
    CHECK(r["field"] == "v");
    r = c.request({{"type", "command"}, {"drone_id", 1}, {"transition", "jump"}});
    CHECK(r["field"] == "transition");
    r = c.request({{"type", "command"}, {"drone_id", 9}, {"transition", "arm"}});
    CHECK(r["type"] == "error");
    CHECK(r["reason"].get<std::string>().find("unknown drone") != std::string::npos);
    r = c.request({{"type", "pointer_update"}, {"drone_id", 1}, {"origin", {0, 0, 1}}, {"forward", {0, 2, 0}}, {"distance", 1}});
    CHECK(r["field"] == "forward");
    r = c.request({{"type", "set_gains"}, {"preset", "turbo"}});
    CHECK(r["field"] == "preset");
  }
  SUBCASE("missing id gets an error without an id") {
    net::Fd fd = net::tcp_connect("127.0.0.1", svc.api_port());
    net::LineReader reader(fd);
    const json r = raw_request(fd, reader, {{"v", 1}, {"type", "ping"}});
    CHECK(r["type"] == "error");
    CHECK(r["id"].is_null());
    CHECK(r["field"] == "id");
  }
  svc.stop();
}

TEST_CASE("every request gets exactly one reply") {
  service::ServiceConfig cfg = local_config();
  service::DroneConfig d;
  d.drone_id = 1;
  cfg.drones.push_back(d);
  service::Service svc(cfg);
  svc.start();
  net::Fd fd = net::tcp_connect("127.0.0.1", svc.api_port());
  net::LineReader reader(fd);
  std::mt19937_64 rng(5);
  const int n = 300;
  std::string batch;
  for (int i = 0; i < n; ++i) {
    json m{{"v", 1}, {"id", i}};
    switch (rng() % 6) {
      case 0: m["type"] = "ping"; break;
      case 1: m["type"] = "list_paths"; break;
      case 2: m["type"] = "command"; m["drone_id"] = 1; m["transition"] = "hover"; break;
      case 3: m["type"] = "command"; m["drone_id"] = 1; m["transition"] = "arm"; break;
      case 4: m["type"] = "set_gains"; m["gains"] = {{"v_max", 0.4}}; break;
      default: m["type"] = "get_path"; m["path_id"] = "missing"; break;
    }
    batch += m.dump() + "\n";
  }
  net::send_all(fd, batch);
  std::map<int, int> seen;
  int replies = 0;
  while (replies < n) {
    auto line = reader.next(3000);
    REQUIRE(line);
    const json r = json::parse(*line);
    if (r["type"] != "ack" && r["type"] != "error") continue;
    ++seen[r["id"].get<int>()];
    ++replies;
  }
  CHECK(seen.size() == static_cast<std::size_t>(n));
  for (const auto& [id, k] : seen) CHECK(k == 1);
  CHECK_FALSE(reader.next(300));
  svc.stop();
}

TEST_CASE("fuzzed input never takes the service down") {
  service::Service svc(local_config());
  svc.start();
  std::mt19937_64 rng(77);
  const std::string seeds[] = {
      R"({"v":1,"id":1,"type":"upload_path","path":{"id":"p","waypoints":[{"x":0,"y":0,"z":1}]}})",
      R"({"v":1,"id":2,"type":"pointer_update","drone_id":1,"origin":[0,0,1],"forward":[1,0,0],"distance":1})",
      R"({"v":1,"id":3,"type":"define_zones","zones":[{"id":"a","center":[0,0,1],"radius":0.3}]})",
      R"({"v":1,"id":4,"type":"record_finish","epsilon":0.05})",
      "GET / HTTP/1.1\r\nUpgrade: websocket\r\nSec-WebSocket-Key: x\r\n\r\n"};
  for (int round = 0; round < 60; ++round) {
    net::Fd fd = net::tcp_connect("127.0.0.1", svc.api_port());
    std::string data;
    for (int k = 0; k < 20; ++k) {
      std::string s = seeds[rng() % std::size(seeds)];
      const int edits = static_cast<int>(rng() % 6);
      for (int e = 0; e < edits && !s.empty(); ++e) {
        const std::size_t at = rng() % s.size();
        switch (rng() % 3) {
          case 0: s[at] = static_cast<char>(rng()); break;
          case 1: s.erase(at, 1 + rng() % 8); break;
          default: s.insert(at, std::string(1 + rng() % 4, static_cast<char>(rng()))); break;
        }
      }
      data += s + (rng() % 4 ? "\n" : "");
    }
    if (round % 10 == 0) data += std::string(1 << 16, static_cast<char>(rng()));
    try {
      net::send_all(fd, data);
    } catch (const Error&) {
      // the service may close a connection it considers hostile
    }
  }
  client::Client c("127.0.0.1", svc.api_port());
  CHECK(c.request({{"type", "ping"}})["type"] == "ack");
  CHECK(svc.running());
  svc.stop();
}

TEST_CASE("oversized line is rejected") {
  service::Service svc(local_config());
  svc.start();
  net::Fd fd = net::tcp_connect("127.0.0.1", svc.api_port());
  net::LineReader reader(fd);
  try {
    net::send_all(fd, std::string(proto::kMaxLine + 10, 'a'));
  } catch (const Error&) {
  }
  auto line = reader.next(3000);
  REQUIRE(line);
  CHECK(json::parse(*line)["type"] == "error");
  svc.stop();
}

TEST_CASE("websocket clients speak the same messages") {
  service::Service svc(local_config());
  svc.start();
  net::Fd fd = net::tcp_connect("127.0.0.1", svc.api_port());
  net::send_all(fd,
                "GET /ws HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                "Sec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n");
  std::string buffer;
  auto fill = [&](double timeout) {
    pollfd p{fd.get(), POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(timeout * 1000)) <= 0) return false;
    char chunk[65536];
    const ssize_t n = ::recv(fd.get(), chunk, sizeof chunk, 0);
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
    return true;
  };
  while (buffer.find("\r\n\r\n") == std::string::npos) REQUIRE(fill(3.0));
  const std::size_t end = buffer.find("\r\n\r\n") + 4;
  const std::string head = buffer.substr(0, end);
  buffer.erase(0, end);
  CHECK(head.rfind("HTTP/1.1 101", 0) == 0);
  CHECK(head.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);

  auto next_message = [&](double timeout) -> std::optional<json> {
    const auto until = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout));
    for (;;) {
      if (auto f = proto::websocket_decode(buffer, false)) {
        if (f->opcode == proto::WsOpcode::Text) return json::parse(f->payload);
        continue;
      }
      if (Clock::now() > until || !fill(0.2)) {
        if (Clock::now() > until) return std::nullopt;
      }
    }
  };
  net::send_all(fd, proto::websocket_encode(proto::WsOpcode::Text, R"({"v":1,"id":"w1","type":"ping"})", 0xA1B2C3D4u));
  auto r = next_message(3.0);
  REQUIRE(r);
  CHECK((*r)["id"] == "w1");
  CHECK((*r)["type"] == "ack");

  net::send_all(fd, proto::websocket_encode(proto::WsOpcode::Text, R"({"v":1,"id":"w2","type":"subscribe"})", 7u));
  bool snapshot = false;
  for (int i = 0; i < 20 && !snapshot; ++i) {
    auto m = next_message(1.0);
    snapshot = m && (*m)["type"] == "snapshot";
  }
  CHECK(snapshot);

  net::send_all(fd, proto::websocket_encode(proto::WsOpcode::Ping, "hb", 9u));
  bool pong = false;
  const auto until = Clock::now() + std::chrono::seconds(3);
  while (!pong && Clock::now() < until) {
    if (auto f = proto::websocket_decode(buffer, false)) {
      pong = f->opcode == proto::WsOpcode::Pong && f->payload == "hb";
      continue;
    }
    fill(0.2);
  }
  CHECK(pong);

  // Unmasked client frames violate the protocol and close the connection.
  net::send_all(fd, proto::websocket_encode(proto::WsOpcode::Text, R"({"v":1,"id":"w3","type":"ping"})"));
  bool closed = false;
  const auto close_until = Clock::now() + std::chrono::seconds(3);
  while (!closed && Clock::now() < close_until) {
    pollfd p{fd.get(), POLLIN, 0};
    if (::poll(&p, 1, 200) <= 0) continue;
    char chunk[65536];
    closed = ::recv(fd.get(), chunk, sizeof chunk, 0) <= 0;
  }
  CHECK(closed);
  svc.stop();
}

TEST_CASE("demonstration recording over the API") {
  service::Service svc(local_config());
  svc.start();
  client::Client c("127.0.0.1", svc.api_port());
  CHECK(c.request({{"type", "record_pose"}, {"t", 0}, {"position", {0, 0, 1}}})["type"] == "error");
  CHECK(c.request({{"type", "record_start"}})["type"] == "ack");
  // L-shaped sweep: 0..1 m along x, then 0..1 m along y.
  double t = 0;
  for (int i = 0; i <= 50; ++i, t += 0.01) c.request({{"type", "record_pose"}, {"t", t}, {"position", {i * 0.02, 0, 1}}});
  for (int i = 1; i <= 50; ++i, t += 0.01) c.request({{"type", "record_pose"}, {"t", t}, {"position", {1, i * 0.02, 1}}});
  const json dup = c.request({{"type", "record_pose"}, {"t", t - 0.01}, {"position", {5, 5, 1}}});
  CHECK(dup["kept"] == false);
  CHECK(dup["size"] == 101);
  const json r = c.request({{"type", "record_finish"}, {"epsilon", 0.01}, {"speed", 0.3}, {"path_id", "L"}});
  REQUIRE(r["type"] == "ack");
  const path::FlightPath p = path::path_from_json(r["path"]);
  REQUIRE(p.waypoints().size() == 3);
  CHECK(distance(p.waypoints()[1].position, {1, 0, 1}) < 1e-9);
  CHECK(p.waypoints()[2].speed_to == 0.3);
  CHECK(c.request({{"type", "list_paths"}})["paths"] == json::array({"L"}));

  CHECK(c.request({{"type", "record_start"}})["type"] == "ack");
  c.request({{"type", "record_pose"}, {"t", 0}, {"position", {0, 0, 1}}});
  const json short_rec = c.request({{"type", "record_finish"}});
  CHECK(short_rec["type"] == "error");
  svc.stop();
}

TEST_CASE("busy port fails at startup") {
  net::Fd blocker = net::tcp_listen("127.0.0.1", 0);
  service::ServiceConfig cfg = local_config();
  cfg.api_port = net::bound_port(blocker);
  service::Service svc(cfg);
  CHECK_THROWS_AS(svc.start(), Error);
  CHECK_FALSE(svc.running());

  net::Fd udp = net::udp_bind("127.0.0.1", 0);
  cfg = local_config();
  cfg.track_port = net::bound_port(udp);
  service::Service svc2(cfg);
  CHECK_THROWS_AS(svc2.start(), Error);
}

TEST_CASE("tick jitter with 50 subscribers") {
  service::Service svc(local_config());
  svc.start();
  std::vector<std::unique_ptr<client::Client>> subs;
  for (int i = 0; i < 50; ++i) {
    subs.push_back(std::make_unique<client::Client>("127.0.0.1", svc.api_port()));
    subs.back()->send({{"type", "subscribe"}});
  }
  const std::uint64_t ticks_before = svc.stats().ticks;
  const auto start = Clock::now();
  std::uint64_t received = 0;
  while (seconds(Clock::now() - start) < 4.0) {
    for (auto& s : subs)
      while (s->next(0.0)) ++received;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  const service::Stats st = svc.stats();
  const std::uint64_t ticks = st.ticks - ticks_before;
  CHECK(ticks >= 180);
  CHECK(st.clients_dropped == 0);
  CHECK(received >= 50 * 100);
  const std::size_t window = std::min<std::size_t>(st.tick_intervals.size(), ticks);
  std::size_t outside = 0;
  double worst = 0.0;
  for (std::size_t i = st.tick_intervals.size() - window; i < st.tick_intervals.size(); ++i) {
    const double dt = st.tick_intervals[i];
    worst = std::max(worst, std::abs(dt - 0.02));
    if (dt < 0.016 || dt > 0.024) ++outside;
  }
  MESSAGE("ticks " << ticks << ", intervals outside +-20%: " << outside << ", worst deviation " << worst);
  CHECK(outside == 0);
  svc.stop();
}

TEST_CASE("a stalled subscriber is dropped without disturbing others") {
  service::ServiceConfig cfg = local_config();
  cfg.stall_timeout = 0.5;
  service::Service svc(cfg);
  svc.start();
  client::Client admin("127.0.0.1", svc.api_port());
  // Large snapshots make a non-reading client back up quickly.
  json zones = json::array();
  for (int i = 0; i < 1500; ++i)
    zones.push_back({{"id", "z" + std::to_string(i)}, {"center", {0.001 * i, 2.5, 2.0}}, {"radius", 0.1}});
  REQUIRE(admin.request({{"type", "define_zones"}, {"zones", zones}})["type"] == "ack");
  client::Client reader("127.0.0.1", svc.api_port());
  REQUIRE(reader.request({{"type", "subscribe"}})["type"] == "ack");

  net::Fd stalled = net::tcp_connect("127.0.0.1", svc.api_port());
  net::send_all(stalled, std::string(R"({"v":1,"id":1,"type":"subscribe"})") + "\n");

  const std::uint64_t ticks_before = svc.stats().ticks;
  const auto start = Clock::now();
  std::size_t snapshots = 0;
  while (seconds(Clock::now() - start) < 4.0 && svc.stats().clients_dropped == 0) {
    auto m = reader.next(0.05);
    if (m && (*m)["type"] == "snapshot") ++snapshots;
  }
  const service::Stats st = svc.stats();
  MESSAGE("dropped after " << seconds(Clock::now() - start) << " s; reader got " << snapshots);
  CHECK(st.clients_dropped == 1);
  CHECK(st.ticks - ticks_before >= 0.8 * 50 * seconds(Clock::now() - start));
  CHECK(reader.request({{"type", "ping"}})["type"] == "ack");
  CHECK(next_of_type(reader, "snapshot", 1.0));
  svc.stop();
}

TEST_CASE("pointer updates steer a realtime session") {
  service::ServiceConfig cfg = local_config();
  service::Runtime rt(cfg, 1);
  rt.start();
  const int port = rt.service().api_port();
  client::Client c("127.0.0.1", port);
  REQUIRE(c.request({{"type", "subscribe"}})["type"] == "ack");
  REQUIRE(c.request({{"type", "command"}, {"drone_id", 1}, {"transition", "arm"}})["type"] == "ack");
  REQUIRE(c.request({{"type", "command"}, {"drone_id", 1}, {"transition", "takeoff"}})["type"] == "ack");
  bool hover = false;
  const auto until = Clock::now() + std::chrono::seconds(20);
  while (!hover && Clock::now() < until) {
    auto m = next_of_type(c, "snapshot", 1.0);
    if (!m) continue;
    if (const json* s = session_of(*m, 1)) hover = (*s)["mode"] == "hover";
  }
  REQUIRE(hover);
  REQUIRE(c.request({{"type", "command"}, {"drone_id", 1}, {"transition", "start_realtime"}, {"distance", 1.5}})["type"] == "ack");

  // Sweep the pointer at 60 Hz; every reported target must be the oracle
  // value of one of the most recently sent rays.
  std::vector<Vec3> expected;
  int matched = 0, snapshots = 0;
  const auto sweep_start = Clock::now();
  auto period = std::chrono::microseconds(16667);
  auto next_send = sweep_start;
  for (int k = 0; k < 120; ++k) {
    const double a = -0.8 + 1.6 * k / 119.0;
    path::PointerRay ray{{0, -2, 1.0}, {std::sin(a), std::cos(a), 0}, 1.5 + 0.25 * std::sin(3 * a)};
    expected.push_back(path::realtime_target(ray, cfg.orchestrator.altitude));
    const json r = c.request({{"type", "pointer_update"}, {"drone_id", 1}, {"origin", {0, -2, 1.0}},
                              {"forward", {std::sin(a), std::cos(a), 0}}, {"distance", ray.distance}});
    REQUIRE(r["type"] == "ack");
    next_send += period;
    while (Clock::now() < next_send) {
      auto m = c.next(seconds(next_send - Clock::now()));
      if (!m || (*m)["type"] != "snapshot") continue;
      const json* s = session_of(*m, 1);
      if (!s || (*s)["mode"] != "realtime") continue;
      const Vec3 target = vec((*s)["target"]);
      // Snapshots taken before the first ray was applied still show the entry point.
      if (matched == 0 && distance(target, expected.front()) > 1e-9 && expected.size() < 8) continue;
      ++snapshots;
      // The snapshot may predate the newest ray by a couple of ticks.
      for (std::size_t back = 0; back < std::min<std::size_t>(expected.size(), 6); ++back) {
        if (distance(target, expected[expected.size() - 1 - back]) < 1e-9) {
          ++matched;
          break;
        }
      }
    }
  }
  MESSAGE("matched " << matched << " of " << snapshots << " snapshots");
  CHECK(snapshots >= 45);
  CHECK(matched == snapshots);

  // Once the stream stops, the target settles on the final ray.
  bool settled = false;
  for (int i = 0; i < 10 && !settled; ++i) {
    auto m = next_of_type(c, "snapshot", 1.0);
    if (!m) continue;
    if (const json* s = session_of(*m, 1)) settled = distance(vec((*s)["target"]), expected.back()) < 1e-9;
  }
  CHECK(settled);
  rt.stop();
}

TEST_CASE("config files") {
  const json doc = json::parse(R"({
    "api_port": 0, "track_port": 0, "control_rate": 50, "preset": "aggressive",
    "fence": {"min": {"x": -2, "y": -2, "z": 0}, "max": {"x": 2, "y": 2, "z": 2}},
    "d_min": 0.6, "k_rep": 3.0,
    "zones": [{"id": "p", "center": {"x": 0, "y": 0, "z": 1}, "radius": 0.3}],
    "drones": [{"id": 1, "tracked_id": 11, "priority": 0, "link": {"type": "tcp", "host": "127.0.0.1", "port": 47810}},
               {"id": 2, "tracked_id": 12, "priority": 1}],
    "objects": [{"id": 50, "kind": "user"}]
  })");
  const service::ServiceConfig cfg = service::config_from_json(doc);
  CHECK(cfg.preset == "aggressive");
  CHECK(cfg.orchestrator.d_min == 0.6);
  CHECK(cfg.orchestrator.k_rep == 3.0);
  CHECK(cfg.orchestrator.fence.max == Vec3{2, 2, 2});
  REQUIRE(cfg.drones.size() == 2);
  CHECK(cfg.drones[0].link.kind == service::LinkConfig::Kind::Tcp);
  CHECK(cfg.drones[0].tracked_id == 11);
  CHECK(cfg.drones[1].link.kind == service::LinkConfig::Kind::None);
  REQUIRE(cfg.zones.size() == 1);
  REQUIRE(cfg.objects.size() == 1);
  CHECK(cfg.objects[0].kind == tracking::ObjectKind::User);

  service::ServiceConfig env = cfg;
  ::setenv("DRONOS_API_PORT", "48123", 1);
  ::setenv("DRONOS_TRACK_PORT", "not-a-port", 1);
  service::apply_environment(env);
  CHECK(env.api_port == 48123);
  CHECK(env.track_port == 0);
  ::unsetenv("DRONOS_API_PORT");
  ::unsetenv("DRONOS_TRACK_PORT");

  CHECK_THROWS_AS(service::config_from_json(json::parse(R"({"control_rate": -5})")), Error);
  CHECK_THROWS_AS(service::config_from_json(json::parse(R"({"drones": [{"id": 1}, {"id": 1}]})")), Error);
  CHECK_THROWS_AS(service::load_config("/nonexistent/dronos.json"), Error);
}

}  // TEST_SUITE
