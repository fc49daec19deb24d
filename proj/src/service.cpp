#include "dronos/service.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "dronos/error.hpp"
#include "dronos/net.hpp"
#include "dronos/protocol.hpp"

namespace dronos::service {

using nlohmann::json;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

void ServiceConfig::validate() const {
  if (api_port < 0 || api_port > 65535 || track_port < 0 || track_port > 65535)
    throw Error(ErrorCode::Config, "ports must be in [0, 65535]");
  if (!(control_rate > 0.0 && control_rate <= 1000.0))
    throw Error(ErrorCode::Config, "control_rate must be in (0, 1000]");
  if (!(snapshot_rate > 0.0 && snapshot_rate <= 1000.0))
    throw Error(ErrorCode::Config, "snapshot_rate must be in (0, 1000]");
  orchestrator.validate();
  std::map<int, int> seen;
  for (const auto& d : drones) {
    if (seen[d.drone_id]++) throw Error(ErrorCode::Config, "duplicate drone id " + std::to_string(d.drone_id));
    if (d.link.kind == LinkConfig::Kind::Tcp && (d.link.port <= 0 || d.link.port > 65535))
      throw Error(ErrorCode::Config, "drone " + std::to_string(d.drone_id) + ": link port out of range");
    if (d.link.kind == LinkConfig::Kind::Serial && d.link.device.empty())
      throw Error(ErrorCode::Config, "drone " + std::to_string(d.drone_id) + ": serial link needs a device");
  }
  for (const auto& z : zones) z.validate();
}

namespace {

std::string resolve(const std::string& base_dir, const std::string& file) {
  fs::path p(file);
  return p.is_absolute() ? file : (fs::path(base_dir) / p).string();
}

LinkConfig link_from_json(const json& j) {
  LinkConfig link;
  const std::string type = j.value("type", std::string("none"));
  if (type == "tcp") {
    link.kind = LinkConfig::Kind::Tcp;
    link.host = j.value("host", link.host);
    link.port = j.at("port").get<int>();
  } else if (type == "serial") {
    link.kind = LinkConfig::Kind::Serial;
    link.device = j.at("device").get<std::string>();
    link.baud = j.value("baud", link.baud);
  } else if (type != "none") {
    throw ParseError(std::string("link.type"), "link type must be tcp, serial or none");
  }
  return link;
}

}  // namespace

ServiceConfig config_from_json(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ParseError(std::string("$"), "config must be a JSON object");
  ServiceConfig c;
  try {
    c.host = doc.value("host", c.host);
    c.api_port = doc.value("api_port", c.api_port);
    c.track_port = doc.value("track_port", c.track_port);
    c.control_rate = doc.value("control_rate", c.control_rate);
    c.snapshot_rate = doc.value("snapshot_rate", c.snapshot_rate);
    c.orchestrator.control_period = 1.0 / c.control_rate;
    if (doc.contains("presets_file")) c.presets_file = resolve(base_dir, doc["presets_file"].get<std::string>());
    c.preset = doc.value("preset", c.preset);
    if (doc.contains("zones_file")) c.zones = safety::load_zones(resolve(base_dir, doc["zones_file"].get<std::string>()));
    if (doc.contains("zones")) {
      auto more = safety::zones_from_json(doc["zones"]);
      c.zones.insert(c.zones.end(), more.begin(), more.end());
    }
    auto& o = c.orchestrator;
    if (doc.contains("fence")) o.fence = safety::fence_from_json(doc["fence"]);
    o.d_min = doc.value("d_min", o.d_min);
    o.k_rep = doc.value("k_rep", o.k_rep);
    o.takeoff_altitude = doc.value("takeoff_altitude", o.takeoff_altitude);
    o.filter.standoff = doc.value("standoff", o.filter.standoff);
    o.filter.hold_instead = doc.value("hold_instead", o.filter.hold_instead);
    if (doc.contains("thresholds")) {
      o.thresholds.stale_after = doc["thresholds"].value("stale_after", o.thresholds.stale_after);
      o.thresholds.lost_after = doc["thresholds"].value("lost_after", o.thresholds.lost_after);
    }
    if (doc.contains("altitude")) {
      o.altitude.z_floor = doc["altitude"].value("z_floor", o.altitude.z_floor);
      o.altitude.z_ceiling = doc["altitude"].value("z_ceiling", o.altitude.z_ceiling);
    }
    if (doc.contains("smoothing")) {
      const auto& s = doc["smoothing"];
      c.smoothing.drone = s.value("drone", c.smoothing.drone);
      c.smoothing.controller = s.value("controller", c.smoothing.controller);
      c.smoothing.user = s.value("user", c.smoothing.user);
    }
    if (doc.contains("drones")) {
      for (std::size_t i = 0; i < doc["drones"].size(); ++i) {
        const auto& d = doc["drones"][i];
        DroneConfig dc;
        dc.drone_id = d.at("id").get<int>();
        dc.tracked_id = d.value("tracked_id", dc.drone_id);
        dc.priority = d.value("priority", static_cast<int>(i));
        dc.preset = d.value("preset", std::string{});
        if (d.contains("link")) dc.link = link_from_json(d["link"]);
        c.drones.push_back(dc);
      }
    }
    if (doc.contains("objects")) {
      for (const auto& ob : doc["objects"])
        c.objects.push_back({ob.at("id").get<int>(), tracking::object_kind_from_string(ob.at("kind").get<std::string>())});
    }
    c.max_clients = doc.value("max_clients", c.max_clients);
    c.send_buffer_limit = doc.value("send_buffer_limit", c.send_buffer_limit);
    c.stall_timeout = doc.value("stall_timeout", c.stall_timeout);
  } catch (const json::exception& e) {
    throw ParseError(std::string("$"), std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ServiceConfig load_config(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + file);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("$"), file + ": " + e.what());
  }
  return config_from_json(doc, fs::path(file).parent_path().string());
}

void apply_environment(ServiceConfig& config) {
  config.api_port = net::env_port("DRONOS_API_PORT", config.api_port);
  config.track_port = net::env_port("DRONOS_TRACK_PORT", config.track_port);
}

std::vector<SimServerConfig::Drone> default_sim_drones(int count) {
  std::vector<SimServerConfig::Drone> out;
  for (int i = 0; i < count; ++i) {
    const double x = (static_cast<double>(i) - 0.5 * (count - 1)) * 1.0;
    out.push_back({i + 1, i + 1, {x, 0.0, 0.0}});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double seconds_since(Clock::time_point origin) {
  return std::chrono::duration<double>(Clock::now() - origin).count();
}

speed_t baud_constant(int baud) {
  switch (baud) {
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 921600: return B921600;
    default: throw Error(ErrorCode::Config, "unsupported baud rate " + std::to_string(baud));
  }
}

// Outbound MSP link. Writes never block: frames that do not fit are dropped
// and the next tick sends a fresher one.
class Link {
 public:
  explicit Link(LinkConfig cfg) : cfg_(std::move(cfg)) {}

  void send(const std::vector<std::uint8_t>& bytes, Clock::time_point now) {
    if (cfg_.kind == LinkConfig::Kind::None) return;
    if (!fd_.valid() && !connect(now)) return;
    if (connecting_ && !finish_connect()) return;
    ssize_t n = cfg_.kind == LinkConfig::Kind::Tcp
                    ? ::send(fd_.get(), bytes.data(), bytes.size(), MSG_DONTWAIT | MSG_NOSIGNAL)
                    : ::write(fd_.get(), bytes.data(), bytes.size());
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) fd_.reset();
  }

 private:
  bool connect(Clock::time_point now) {
    if (now - last_attempt_ < std::chrono::seconds(1)) return false;
    last_attempt_ = now;
    if (cfg_.kind == LinkConfig::Kind::Serial) {
      net::Fd fd(::open(cfg_.device.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK | O_CLOEXEC));
      if (!fd.valid()) return false;
      termios tio{};
      if (::tcgetattr(fd.get(), &tio) == 0) {
        ::cfmakeraw(&tio);
        ::cfsetspeed(&tio, baud_constant(cfg_.baud));
        ::tcsetattr(fd.get(), TCSANOW, &tio);
      }
      fd_ = std::move(fd);
      return true;
    }
    try {
      net::Fd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0));
      if (!fd.valid()) return false;
      net::set_nodelay(fd);
      sockaddr_in addr{};
      addr.sin_family = AF_INET;
      addr.sin_port = htons(static_cast<std::uint16_t>(cfg_.port));
      if (inet_pton(AF_INET, cfg_.host == "localhost" ? "127.0.0.1" : cfg_.host.c_str(), &addr.sin_addr) != 1)
        return false;
      int r = ::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
      if (r != 0 && errno != EINPROGRESS) return false;
      connecting_ = r != 0;
      fd_ = std::move(fd);
      return !connecting_ || finish_connect();
    } catch (const Error&) {
      return false;
    }
  }

  bool finish_connect() {
    pollfd p{fd_.get(), POLLOUT, 0};
    if (::poll(&p, 1, 0) <= 0) return false;
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd_.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) {
      fd_.reset();
      connecting_ = false;
      return false;
    }
    connecting_ = false;
    return true;
  }

  LinkConfig cfg_;
  net::Fd fd_;
  bool connecting_ = false;
  Clock::time_point last_attempt_{};
};

struct Connection {
  std::uint64_t id = 0;
  net::Fd fd;
  std::string in;
  std::string out;
  bool websocket = false;
  bool http_checked = false;
  std::string ws_message;  // fragments of the current message
  bool closing = false;    // flush then close
  bool subscribed_snapshots = false;
  bool subscribed_events = false;
  std::uint64_t seq = 0;
  std::string latest_snapshot;  // latest wins
  Clock::time_point last_progress = Clock::now();
  std::optional<path::Recorder> recorder;
  std::optional<int> record_source;  // tracked object sampled into the recorder
  double record_speed = 0.5;
};

}  // namespace

struct Service::Impl {
  explicit Impl(ServiceConfig cfg) : config(std::move(cfg)), registry(config.smoothing) {}

  ServiceConfig config;
  tracking::Registry registry;
  std::map<std::string, control::ControlConfig> presets;
  std::unique_ptr<orch::Orchestrator> orchestrator;
  std::map<int, Link> links;
  Clock::time_point origin = Clock::now();

  net::Fd api_fd;
  net::Fd udp_fd;
  int wake_pipe[2] = {-1, -1};
  std::atomic<bool> running{false};
  bool started = false;
  std::thread loop_thread, track_thread, io_thread;
  std::mutex stop_mutex;
  std::condition_variable stop_cv;

  // loop -> io
  std::mutex out_mutex;
  std::deque<orch::Reply> replies;
  std::deque<orch::Event> events;
  std::shared_ptr<const orch::WorldSnapshot> latest_world;

  // io-thread state
  std::map<std::uint64_t, Connection> connections;
  std::uint64_t next_connection = 1;
  struct PendingReply {
    std::uint64_t connection;
    json request_id;
    json body;
  };
  std::map<std::uint64_t, PendingReply> pending;
  std::vector<safety::Zone> zones;  // io-side mirror for validation

  mutable std::mutex stats_mutex;
  Stats stats;

  void wake() {
    char b = 1;
    [[maybe_unused]] auto r = ::write(wake_pipe[1], &b, 1);
  }

  void loop();
  void track();
  void io();

  void accept_clients();
  void read_client(Connection& c);
  void handle_line(Connection& c, const std::string& line);
  void handle_message(Connection& c, const json& msg);
  void send(Connection& c, const json& msg);
  void send_raw(Connection& c, const std::string& text);
  void flush(Connection& c);
  void drop(Connection& c, bool slow);
  void deliver_outputs();
  void broadcast_snapshot();
};

void Service::Impl::loop() {
  const auto period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(config.orchestrator.control_period));
  auto next = Clock::now();
  auto previous = Clock::time_point{};
  while (running.load()) {
    std::this_thread::sleep_until(next);
    const auto wake_time = Clock::now();
    const double now = std::chrono::duration<double>(wake_time - origin).count();
    orch::TickOutput out;
    try {
      out = orchestrator->tick(registry.snapshot(), now, config.orchestrator.control_period);
    } catch (const std::exception&) {
      // a malformed tick must not kill the loop; commands stay as last sent
    }
    for (const auto& [drone_id, cmd] : out.commands) {
      auto it = links.find(drone_id);
      if (it != links.end()) it->second.send(msp::encode_set_raw_rc(cmd), wake_time);
    }
    {
      std::lock_guard lock(out_mutex);
      for (auto& r : out.replies) replies.push_back(std::move(r));
      for (auto& e : out.events) events.push_back(std::move(e));
      latest_world = std::make_shared<const orch::WorldSnapshot>(orchestrator->world());
    }
    wake();
    {
      std::lock_guard lock(stats_mutex);
      ++stats.ticks;
      if (previous != Clock::time_point{}) {
        stats.tick_intervals.push_back(std::chrono::duration<double>(wake_time - previous).count());
        if (stats.tick_intervals.size() > 4096)
          stats.tick_intervals.erase(stats.tick_intervals.begin(), stats.tick_intervals.begin() + 2048);
      }
    }
    previous = wake_time;
    next += period;
    if (Clock::now() > next + period) next = Clock::now();
  }
}

void Service::Impl::track() {
  char buf[2048];
  while (running.load()) {
    pollfd p{udp_fd.get(), POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    for (;;) {
      ssize_t n = ::recv(udp_fd.get(), buf, sizeof buf, MSG_DONTWAIT);
      if (n <= 0) break;
      const double now = seconds_since(origin);
      std::string_view data(buf, static_cast<std::size_t>(n));
      std::size_t start = 0;
      while (start < data.size()) {
        std::size_t end = data.find('\n', start);
        if (end == std::string_view::npos) end = data.size();
        if (end > start) registry.ingest(data.substr(start, end - start), now);
        start = end + 1;
      }
      std::lock_guard lock(stats_mutex);
      ++stats.datagrams;
    }
  }
}

void Service::Impl::send_raw(Connection& c, const std::string& text) {
  if (c.websocket) {
    std::string payload = text;
    if (!payload.empty() && payload.back() == '\n') payload.pop_back();
    c.out += proto::websocket_encode(proto::WsOpcode::Text, payload);
  } else {
    c.out += text;
  }
}

void Service::Impl::send(Connection& c, const json& msg) {
  send_raw(c, msg.dump(-1, ' ', false, json::error_handler_t::replace) + "\n");
}

void Service::Impl::drop(Connection& c, bool slow) {
  c.closing = true;
  c.out.clear();
  c.fd.reset();
  if (slow) {
    std::lock_guard lock(stats_mutex);
    ++stats.clients_dropped;
  }
}

void Service::Impl::flush(Connection& c) {
  if (!c.fd.valid()) return;
  if (c.out.empty() && !c.latest_snapshot.empty()) {
    send_raw(c, c.latest_snapshot);
    c.latest_snapshot.clear();
    std::lock_guard lock(stats_mutex);
    ++stats.snapshots_sent;
  }
  while (!c.out.empty()) {
    ssize_t n = ::send(c.fd.get(), c.out.data(), c.out.size(), MSG_DONTWAIT | MSG_NOSIGNAL);
    if (n > 0) {
      c.out.erase(0, static_cast<std::size_t>(n));
      c.last_progress = Clock::now();
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
    if (n < 0 && errno == EINTR) continue;
    drop(c, false);
    return;
  }
  if (c.out.empty()) c.last_progress = Clock::now();
  if (c.out.size() > config.send_buffer_limit ||
      (!c.out.empty() && seconds_since(c.last_progress) > config.stall_timeout)) {
    drop(c, true);
    return;
  }
  if (c.closing && c.out.empty()) c.fd.reset();
}

void Service::Impl::accept_clients() {
  for (;;) {
    int fd = ::accept4(api_fd.get(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
    if (fd < 0) return;
    net::Fd owned(fd);
    if (connections.size() >= config.max_clients) continue;
    net::set_nodelay(owned);
    Connection c;
    c.id = next_connection++;
    c.fd = std::move(owned);
    connections.emplace(c.id, std::move(c));
  }
}

void Service::Impl::read_client(Connection& c) {
  char buf[8192];
  for (;;) {
    ssize_t n = ::recv(c.fd.get(), buf, sizeof buf, MSG_DONTWAIT);
    if (n == 0) {
      c.fd.reset();
      return;
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno != EAGAIN && errno != EWOULDBLOCK) c.fd.reset();
      break;
    }
    c.in.append(buf, static_cast<std::size_t>(n));
    if (c.in.size() > 4 * proto::kMaxLine) break;
  }

  if (!c.http_checked && c.in.size() >= 4) {
    c.http_checked = true;
    if (proto::looks_like_http(c.in)) {
      const auto end = c.in.find("\r\n\r\n");
      if (end == std::string::npos) {
        c.http_checked = c.in.size() > 16384;
        if (c.http_checked) drop(c, false);
        return;
      }
      const std::string request = c.in.substr(0, end + 4);
      c.in.erase(0, end + 4);
      if (auto key = proto::websocket_key(request)) {
        c.out += proto::websocket_handshake_response(*key);
        c.websocket = true;
      } else {
        c.out += "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
        c.closing = true;
        return;
      }
    }
  }
  if (c.closing || !c.http_checked) return;

  if (c.websocket) {
    try {
      while (auto frame = proto::websocket_decode(c.in)) {
        switch (frame->opcode) {
          case proto::WsOpcode::Close:
            c.out += proto::websocket_encode(proto::WsOpcode::Close, frame->payload.substr(0, 2));
            c.closing = true;
            return;
          case proto::WsOpcode::Ping:
            c.out += proto::websocket_encode(proto::WsOpcode::Pong, frame->payload);
            break;
          case proto::WsOpcode::Pong:
            break;
          default:
            c.ws_message += frame->payload;
            if (c.ws_message.size() > proto::kMaxLine) throw Error(ErrorCode::Protocol, "message too large");
            if (frame->fin) {
              std::string message;
              message.swap(c.ws_message);
              std::size_t start = 0;
              while (start <= message.size()) {
                std::size_t nl = message.find('\n', start);
                if (nl == std::string::npos) nl = message.size();
                if (nl > start) handle_line(c, message.substr(start, nl - start));
                start = nl + 1;
              }
            }
        }
      }
    } catch (const Error&) {
      c.out += proto::websocket_encode(proto::WsOpcode::Close, std::string("\x03\xea", 2));
      c.closing = true;
    }
    return;
  }

  std::size_t start = 0;
  for (;;) {
    const std::size_t nl = c.in.find('\n', start);
    if (nl == std::string::npos) break;
    std::string line = c.in.substr(start, nl - start);
    start = nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) handle_line(c, line);
    if (c.closing) break;
  }
  c.in.erase(0, start);
  if (c.in.size() > proto::kMaxLine) {
    send(c, proto::error(nullptr, "line exceeds " + std::to_string(proto::kMaxLine) + " bytes"));
    c.closing = true;
  }
}

void Service::Impl::handle_line(Connection& c, const std::string& line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::exception& e) {
    send(c, proto::error(nullptr, std::string("invalid JSON: ") + e.what()));
    return;
  }
  if (!msg.is_object()) {
    send(c, proto::error(nullptr, "message must be a JSON object"));
    return;
  }
  handle_message(c, msg);
}

namespace {

orch::Request command_request(const json& msg, int drone_id, orch::Command command) {
  orch::Request r;
  r.drone_id = drone_id;
  r.command = command;
  if (auto it = msg.find("path_id"); it != msg.end()) {
    if (!it->is_string()) throw ParseError(std::string("path_id"), "'path_id' must be a string");
    r.path_id = it->get<std::string>();
  }
  if (auto it = msg.find("demonstrated"); it != msg.end()) {
    if (!it->is_boolean()) throw ParseError(std::string("demonstrated"), "'demonstrated' must be a boolean");
    r.demonstrated = it->get<bool>();
  }
  if (msg.contains("controller_id")) r.controller_id = proto::require_int(msg, "controller_id");
  if (msg.contains("distance")) r.distance = proto::require_number(msg, "distance");
  return r;
}

json issues_to_json(const safety::PathReport& report) {
  json issues = json::array();
  for (const auto& i : report.issues)
    issues.push_back({{"where", i.where}, {"zone", i.zone_id}, {"message", i.message}});
  return issues;
}

const path::FlightPath* parse_path_field(const json& msg, double v_max, std::optional<path::FlightPath>& storage) {
  const json& doc = proto::require(msg, "path");
  try {
    storage.emplace(path::path_from_json(doc, v_max));
  } catch (const ParseError& e) {
    throw ParseError("path." + (e.path().empty() ? std::string("waypoints") : e.path()), e.what());
  } catch (const Error& e) {
    throw ParseError(std::string("path"), e.what());
  }
  return &*storage;
}

}  // namespace

void Service::Impl::handle_message(Connection& c, const json& msg) {
  json id = msg.contains("id") ? msg["id"] : json(nullptr);
  try {
    if (!msg.contains("id")) throw ParseError(std::string("id"), "missing request id");
    if (!id.is_string() && !id.is_number_integer()) throw ParseError(std::string("id"), "id must be a string or integer");
    if (auto v = msg.find("v"); v == msg.end() || !v->is_number_integer() || *v != proto::kVersion)
      throw ParseError(std::string("v"), "unsupported protocol version (expected \"v\":1)");
    const std::string type = proto::require_string(msg, "type");
    const double v_max = presets.at(config.preset).v_max;

    auto queue = [&](std::uint64_t ticket, json body = json::object()) {
      pending[ticket] = {c.id, id, std::move(body)};
    };

    if (type == "ping") {
      send(c, proto::ack(id, {{"t", seconds_since(origin)}}));
    } else if (type == "upload_path") {
      std::optional<path::FlightPath> p;
      parse_path_field(msg, v_max, p);
      auto report = safety::validate_path(*p, zones, config.orchestrator.fence);
      auto shared = std::make_shared<const path::FlightPath>(std::move(*p));
      orchestrator->store_path(shared);
      send(c, proto::ack(id, {{"path_id", shared->id()},
                              {"waypoints", shared->waypoints().size()},
                              {"duration", shared->duration()},
                              {"issues", issues_to_json(report)}}));
    } else if (type == "get_path") {
      const std::string pid = proto::require_string(msg, "path_id");
      auto p = orchestrator->find_path(pid);
      if (!p) throw ParseError(std::string("path_id"), "unknown path '" + pid + "'");
      send(c, proto::ack(id, {{"path", path::path_to_json(*p)}}));
    } else if (type == "list_paths") {
      send(c, proto::ack(id, {{"paths", orchestrator->path_ids()}}));
    } else if (type == "validate_path") {
      std::optional<path::FlightPath> storage;
      std::shared_ptr<const path::FlightPath> stored;
      const path::FlightPath* p = nullptr;
      if (msg.contains("path_id")) {
        stored = orchestrator->find_path(proto::require_string(msg, "path_id"));
        if (!stored) throw ParseError(std::string("path_id"), "unknown path");
        p = stored.get();
      } else {
        p = parse_path_field(msg, v_max, storage);
      }
      auto report = safety::validate_path(*p, zones, config.orchestrator.fence);
      send(c, proto::ack(id, {{"ok", report.ok()}, {"issues", issues_to_json(report)}, {"report", report.to_text()}}));
    } else if (type == "define_zones") {
      std::vector<safety::Zone> parsed;
      try {
        parsed = safety::zones_from_json(proto::require(msg, "zones"));
      } catch (const ParseError& e) {
        throw ParseError(e.path().empty() ? std::string("zones") : e.path(), e.what());
      }
      for (auto& z : parsed) z.validate();
      zones = parsed;
      queue(orchestrator->set_zones(std::move(parsed)), {{"count", zones.size()}});
    } else if (type == "command") {
      const int drone = proto::require_int(msg, "drone_id");
      const std::string t = proto::require_string(msg, "transition");
      orch::Command cmd;
      try {
        cmd = orch::command_from_string(t);
      } catch (const Error&) {
        throw ParseError(std::string("transition"), "unknown transition '" + t + "'");
      }
      queue(orchestrator->submit(command_request(msg, drone, cmd)));
    } else if (type == "set_mode") {
      const int drone = proto::require_int(msg, "drone_id");
      const std::string mode = proto::require_string(msg, "mode");
      orch::Request r;
      if (mode == "scripted") {
        r = command_request(msg, drone, orch::Command::StartPath);
      } else if (mode == "playback") {
        r = command_request(msg, drone, orch::Command::StartPath);
        r.demonstrated = true;
      } else if (mode == "realtime") {
        r = command_request(msg, drone, orch::Command::StartRealtime);
      } else if (mode == "hover") {
        r = command_request(msg, drone, orch::Command::Hover);
      } else if (mode == "landing") {
        r = command_request(msg, drone, orch::Command::Land);
      } else if (mode == "takeoff") {
        r = command_request(msg, drone, orch::Command::Takeoff);
      } else {
        throw ParseError(std::string("mode"), "unknown mode '" + mode + "'");
      }
      queue(orchestrator->submit(r));
    } else if (type == "pointer_update") {
      const int drone = proto::require_int(msg, "drone_id");
      orchestrator->set_pointer(drone, proto::pointer_from_json(msg));
      send(c, proto::ack(id));
    } else if (type == "subscribe") {
      c.subscribed_snapshots = msg.value("snapshots", true);
      c.subscribed_events = msg.value("events", true);
      send(c, proto::ack(id, {{"rate", config.snapshot_rate}}));
    } else if (type == "unsubscribe") {
      c.subscribed_snapshots = c.subscribed_events = false;
      c.latest_snapshot.clear();
      send(c, proto::ack(id));
    } else if (type == "set_gains") {
      std::optional<int> drone;
      if (msg.contains("drone_id")) drone = proto::require_int(msg, "drone_id");
      control::ControlConfig cfg = presets.at(config.preset);
      if (msg.contains("preset")) {
        const std::string name = proto::require_string(msg, "preset");
        auto it = presets.find(name);
        if (it == presets.end()) throw ParseError(std::string("preset"), "unknown preset '" + name + "'");
        cfg = it->second;
      }
      if (msg.contains("gains")) {
        try {
          cfg = control::config_from_json(msg["gains"], cfg.preset_name, cfg);
        } catch (const Error& e) {
          throw ParseError(std::string("gains"), e.what());
        }
      }
      queue(orchestrator->set_gains(drone, cfg));
    } else if (type == "record_start") {
      c.recorder.emplace();
      c.recorder->start();
      c.record_source.reset();
      if (msg.contains("tracked_id")) c.record_source = proto::require_int(msg, "tracked_id");
      if (msg.contains("speed")) c.record_speed = proto::require_number(msg, "speed");
      send(c, proto::ack(id));
    } else if (type == "record_pose") {
      if (!c.recorder || !c.recorder->active()) throw Error(ErrorCode::IllegalTransition, "no recording in progress");
      Pose pose;
      pose.position = safety::vec_from_json(proto::require(msg, "position"), "position");
      pose.timestamp = proto::require_number(msg, "t");
      const bool kept = c.recorder->record(pose);
      send(c, proto::ack(id, {{"kept", kept}, {"size", c.recorder->size()}}));
    } else if (type == "record_finish") {
      if (!c.recorder) throw Error(ErrorCode::IllegalTransition, "no recording in progress");
      c.recorder->stop();
      c.record_source.reset();
      const double eps = msg.contains("epsilon") ? proto::require_number(msg, "epsilon") : path::kDefaultEpsilon;
      const double speed = msg.contains("speed") ? proto::require_number(msg, "speed") : c.record_speed;
      const std::string pid = msg.contains("path_id") ? proto::require_string(msg, "path_id") : "demonstration";
      auto p = std::make_shared<const path::FlightPath>(c.recorder->finish(eps, speed, pid));
      if (msg.value("store", true)) orchestrator->store_path(p);
      send(c, proto::ack(id, {{"path", path::path_to_json(*p)}, {"samples", c.recorder->size()}}));
    } else {
      throw ParseError(std::string("type"), "unknown message type '" + type + "'");
    }
  } catch (const ParseError& e) {
    send(c, proto::error(id, e.what(), e.path()));
  } catch (const Error& e) {
    send(c, proto::error(id, e.what()));
  } catch (const std::exception& e) {
    send(c, proto::error(id, e.what()));
  }
}

void Service::Impl::deliver_outputs() {
  std::deque<orch::Reply> rs;
  std::deque<orch::Event> es;
  {
    std::lock_guard lock(out_mutex);
    rs.swap(replies);
    es.swap(events);
  }
  for (const auto& r : rs) {
    auto it = pending.find(r.ticket);
    if (it == pending.end()) continue;
    auto conn = connections.find(it->second.connection);
    if (conn != connections.end() && conn->second.fd.valid()) {
      if (r.ok)
        send(conn->second, proto::ack(it->second.request_id, it->second.body));
      else
        send(conn->second, proto::error(it->second.request_id, r.error));
    }
    pending.erase(it);
  }
  if (es.empty()) return;
  std::vector<std::string> lines;
  for (const auto& e : es) lines.push_back(proto::event_to_json(e).dump() + "\n");
  for (auto& [cid, c] : connections) {
    if (!c.subscribed_events || !c.fd.valid()) continue;
    for (const auto& l : lines) send_raw(c, l);
  }
}

void Service::Impl::broadcast_snapshot() {
  std::shared_ptr<const orch::WorldSnapshot> world;
  {
    std::lock_guard lock(out_mutex);
    world = latest_world;
  }
  auto tracking_snapshot = registry.snapshot();
  for (auto& [cid, c] : connections) {
    if (c.recorder && c.recorder->active() && c.record_source) {
      if (const auto* obj = tracking_snapshot->find(*c.record_source); obj && obj->has_pose())
        c.recorder->record(obj->smoothed);
    }
  }
  orch::WorldSnapshot empty;
  empty.t = seconds_since(origin);
  const orch::WorldSnapshot& w = world ? *world : empty;
  json doc;
  bool built = false;
  for (auto& [cid, c] : connections) {
    if (!c.subscribed_snapshots || !c.fd.valid()) continue;
    if (!built) {
      doc = proto::snapshot_to_json(w, 0);
      built = true;
    }
    doc["seq"] = ++c.seq;
    c.latest_snapshot = doc.dump() + "\n";
  }
}

void Service::Impl::io() {
  const auto snapshot_period = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(1.0 / config.snapshot_rate));
  auto next_snapshot = Clock::now() + snapshot_period;
  std::vector<pollfd> fds;
  std::vector<std::uint64_t> ids;
  while (running.load()) {
    fds.clear();
    ids.clear();
    fds.push_back({api_fd.get(), POLLIN, 0});
    fds.push_back({wake_pipe[0], POLLIN, 0});
    for (auto& [cid, c] : connections) {
      short events = POLLIN;
      if (!c.out.empty() || !c.latest_snapshot.empty()) events |= POLLOUT;
      fds.push_back({c.fd.get(), events, 0});
      ids.push_back(cid);
    }
    const auto now = Clock::now();
    const int timeout = next_snapshot > now
                            ? static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(next_snapshot - now).count()) + 1
                            : 0;
    ::poll(fds.data(), fds.size(), timeout);
    if (!running.load()) break;

    if (fds[1].revents & POLLIN) {
      char buf[256];
      while (::read(wake_pipe[0], buf, sizeof buf) > 0) {
      }
    }
    if (fds[0].revents & POLLIN) accept_clients();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto it = connections.find(ids[i]);
      if (it == connections.end()) continue;
      Connection& c = it->second;
      if (fds[i + 2].revents & (POLLIN | POLLHUP | POLLERR)) {
        if (!c.closing) read_client(c);
        else if (fds[i + 2].revents & (POLLHUP | POLLERR)) c.fd.reset();
      }
    }
    deliver_outputs();
    if (Clock::now() >= next_snapshot) {
      broadcast_snapshot();
      next_snapshot += snapshot_period;
      if (Clock::now() > next_snapshot) next_snapshot = Clock::now() + snapshot_period;
    }
    std::size_t subscribers = 0;
    for (auto it = connections.begin(); it != connections.end();) {
      flush(it->second);
      if (!it->second.fd.valid()) {
        it = connections.erase(it);
      } else {
        subscribers += it->second.subscribed_snapshots;
        ++it;
      }
    }
    std::lock_guard lock(stats_mutex);
    stats.clients = connections.size();
    stats.subscribers = subscribers;
  }
  connections.clear();
}

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  auto& im = *impl_;
  im.config.validate();
  im.config.orchestrator.control_period = 1.0 / im.config.control_rate;
  im.presets = control::load_presets(im.config.presets_file.empty() ? control::default_presets_path()
                                                                    : im.config.presets_file);
  if (!im.presets.contains(im.config.preset))
    throw Error(ErrorCode::Config, "unknown preset '" + im.config.preset + "'");
  std::vector<orch::DroneSpec> specs;
  for (const auto& d : im.config.drones) {
    const std::string name = d.preset.empty() ? im.config.preset : d.preset;
    auto it = im.presets.find(name);
    if (it == im.presets.end()) throw Error(ErrorCode::Config, "unknown preset '" + name + "'");
    specs.push_back({d.drone_id, d.tracked_id, d.priority, it->second});
    im.registry.register_object(d.tracked_id, tracking::ObjectKind::Drone);
    im.links.emplace(d.drone_id, Link(d.link));
  }
  for (const auto& o : im.config.objects) im.registry.register_object(o.id, o.kind);
  for (const auto& z : im.config.zones)
    if (z.is_dynamic() && !im.registry.snapshot()->objects.contains(z.dynamic->tracked_object_id))
      im.registry.register_object(z.dynamic->tracked_object_id, tracking::ObjectKind::User);
  im.orchestrator = std::make_unique<orch::Orchestrator>(im.config.orchestrator, std::move(specs));
  im.zones = im.config.zones;
  im.orchestrator->set_zones(im.config.zones);
}

Service::~Service() { stop(); }

void Service::start() {
  auto& im = *impl_;
  if (im.started) throw Error(ErrorCode::IllegalTransition, "service already started");
  im.api_fd = net::tcp_listen(im.config.host, im.config.api_port);
  net::set_nonblocking(im.api_fd);
  im.udp_fd = net::udp_bind(im.config.host, im.config.track_port);
  if (::pipe2(im.wake_pipe, O_NONBLOCK | O_CLOEXEC) != 0) throw Error(ErrorCode::Io, "pipe failed");
  im.origin = Clock::now();
  im.running = true;
  im.started = true;
  im.loop_thread = std::thread([&im] { im.loop(); });
  im.track_thread = std::thread([&im] { im.track(); });
  im.io_thread = std::thread([&im] { im.io(); });
}

void Service::stop() {
  auto& im = *impl_;
  if (!im.started) return;
  im.running = false;
  im.wake();
  for (std::thread* t : {&im.loop_thread, &im.track_thread, &im.io_thread})
    if (t->joinable()) t->join();
  ::close(im.wake_pipe[0]);
  ::close(im.wake_pipe[1]);
  im.wake_pipe[0] = im.wake_pipe[1] = -1;
  im.api_fd.reset();
  im.udp_fd.reset();
  im.started = false;
  std::lock_guard lock(im.stop_mutex);
  im.stop_cv.notify_all();
}

void Service::wait() {
  auto& im = *impl_;
  std::unique_lock lock(im.stop_mutex);
  im.stop_cv.wait(lock, [&] { return !im.running.load(); });
}

bool Service::running() const { return impl_->running.load(); }
int Service::api_port() const { return impl_->api_fd.valid() ? net::bound_port(impl_->api_fd) : -1; }
int Service::track_port() const { return impl_->udp_fd.valid() ? net::bound_port(impl_->udp_fd) : -1; }

Stats Service::stats() const {
  std::lock_guard lock(impl_->stats_mutex);
  return impl_->stats;
}

// ---------------------------------------------------------------------------

struct SimServer::Impl {
  explicit Impl(SimServerConfig cfg) : config(std::move(cfg)), sim(with_log_off(config.sim)) {}

  static sim::SimConfig with_log_off(sim::SimConfig c) {
    c.keep_log = false;
    return c;
  }

  SimServerConfig config;
  sim::Simulator sim;
  std::vector<net::Fd> listeners;
  std::vector<net::Fd> peers;
  std::vector<int> ports;
  net::Fd udp;
  std::atomic<bool> running{false};
  std::thread thread;
  mutable std::mutex mutex;
  std::vector<sim::SimDrone> drones_copy;
  std::optional<sim::Noise> noise_change;

  void run() {
    const auto dt = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(config.sim.physics_dt));
    auto next = Clock::now();
    std::uint8_t buf[4096];
    while (running.load()) {
      for (std::size_t i = 0; i < listeners.size(); ++i) {
        int fd = ::accept4(listeners[i].get(), nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
        if (fd >= 0) peers[i] = net::Fd(fd);
        if (!peers[i].valid()) continue;
        for (;;) {
          ssize_t n = ::recv(peers[i].get(), buf, sizeof buf, MSG_DONTWAIT);
          if (n > 0) {
            sim.feed_msp(config.drones[i].drone_id, std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
            continue;
          }
          if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)) peers[i].reset();
          break;
        }
      }
      {
        std::lock_guard lock(mutex);
        if (noise_change) {
          sim.set_noise(*noise_change);
          noise_change.reset();
        }
      }
      for (const auto& line : sim.poll_tracker()) {
        try {
          net::send_datagram(udp, config.track_host, config.track_port, line);
        } catch (const Error&) {
        }
      }
      sim.advance();
      {
        std::lock_guard lock(mutex);
        drones_copy = sim.drones();
      }
      next += dt;
      std::this_thread::sleep_until(next);
      if (Clock::now() > next + 20 * dt) next = Clock::now();
    }
  }
};

SimServer::SimServer(SimServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  for (const auto& d : impl_->config.drones) impl_->sim.add_drone(d.drone_id, d.tracked_id, d.start);
  for (const auto& a : impl_->config.actors) impl_->sim.add_actor(a);
  impl_->drones_copy = impl_->sim.drones();
}

SimServer::~SimServer() { stop(); }

void SimServer::listen() {
  auto& im = *impl_;
  if (!im.listeners.empty() || im.config.drones.empty()) return;
  for (std::size_t i = 0; i < im.config.drones.size(); ++i) {
    const int port = im.config.msp_port == 0 ? 0 : im.config.msp_port + static_cast<int>(i);
    net::Fd l = net::tcp_listen(im.config.host, port, 4);
    net::set_nonblocking(l);
    im.ports.push_back(net::bound_port(l));
    im.listeners.push_back(std::move(l));
    im.peers.emplace_back();
  }
}

void SimServer::set_track_port(int port) {
  if (impl_->running) throw Error(ErrorCode::IllegalTransition, "simulator already running");
  impl_->config.track_port = port;
}

void SimServer::start() {
  auto& im = *impl_;
  if (im.running) return;
  listen();
  im.udp = net::udp_socket();
  im.running = true;
  im.thread = std::thread([&im] { im.run(); });
}

void SimServer::stop() {
  auto& im = *impl_;
  if (!im.running) return;
  im.running = false;
  if (im.thread.joinable()) im.thread.join();
  im.peers.clear();
}

std::vector<int> SimServer::msp_ports() const { return impl_->ports; }

std::vector<sim::SimDrone> SimServer::drones() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->drones_copy;
}

void SimServer::set_noise(const sim::Noise& noise) {
  noise.validate();
  std::lock_guard lock(impl_->mutex);
  impl_->noise_change = noise;
}

Runtime::Runtime(ServiceConfig config, int sim_drones, sim::Noise noise, std::uint64_t seed) {
  if (sim_drones < 0) throw Error(ErrorCode::InvalidArgument, "sim drone count must be >= 0");
  if (sim_drones > 0) {
    SimServerConfig sc;
    if (config.drones.empty()) {
      for (int i = 0; i < sim_drones; ++i) {
        DroneConfig d;
        d.drone_id = d.tracked_id = i + 1;
        d.priority = i;
        config.drones.push_back(d);
      }
    }
    if (static_cast<int>(config.drones.size()) < sim_drones)
      throw Error(ErrorCode::Config, "more simulated drones than configured drones");
    const auto spots = default_sim_drones(sim_drones);
    const Vec3 centre = config.orchestrator.fence.center();
    for (int i = 0; i < sim_drones; ++i)
      sc.drones.push_back({config.drones[i].drone_id, config.drones[i].tracked_id,
                           {centre.x + spots[i].start.x, centre.y, 0.0}});
    sc.msp_port = config.api_port == 0 ? 0 : sim::kDefaultMspPort;
    sc.track_host = config.host;
    sc.sim.noise = noise;
    sc.sim.seed = seed;
    sim_ = std::make_unique<SimServer>(sc);
    sim_->listen();
    const auto ports = sim_->msp_ports();
    for (int i = 0; i < sim_drones; ++i) {
      auto& link = config.drones[i].link;
      link.kind = LinkConfig::Kind::Tcp;
      link.host = sc.host;
      link.port = ports[i];
    }
  }
  service_ = std::make_unique<Service>(std::move(config));
}

Runtime::~Runtime() { stop(); }

void Runtime::start() {
  service_->start();
  if (sim_) {
    sim_->set_track_port(service_->track_port());
    sim_->start();
  }
}

void Runtime::stop() {
  if (sim_) sim_->stop();
  if (service_) service_->stop();
}

void Runtime::wait() { service_->wait(); }

}  // namespace dronos::service
