#include "dronos/client.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include "dronos/error.hpp"
#include "dronos/protocol.hpp"

namespace dronos::client {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

Client::Client(const std::string& host, int port) : fd_(net::tcp_connect(host, port)), reader_(fd_) {}

json Client::send(json msg) {
  if (!msg.contains("v")) msg["v"] = proto::kVersion;
  if (!msg.contains("id")) msg["id"] = "c" + std::to_string(next_id_++);
  net::send_all(fd_, msg.dump() + "\n");
  return msg["id"];
}

std::optional<json> Client::read(double timeout) {
  auto line = reader_.next(static_cast<int>(timeout * 1000.0));
  if (!line) return std::nullopt;
  try {
    return json::parse(*line);
  } catch (const json::exception&) {
    throw Error(ErrorCode::Protocol, "server sent invalid JSON");
  }
}

json Client::request(json msg, double timeout) {
  const json id = send(std::move(msg));
  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout);
  for (;;) {
    const double left = std::chrono::duration<double>(deadline - Clock::now()).count();
    if (left <= 0.0) throw Error(ErrorCode::Timeout, "timed out waiting for reply");
    auto m = read(left);
    if (!m) {
      if (Clock::now() >= deadline) throw Error(ErrorCode::Timeout, "timed out waiting for reply");
      throw Error(ErrorCode::Io, "connection closed");
    }
    const std::string type = m->value("type", "");
    if ((type == "ack" || type == "error") && m->contains("id") && (*m)["id"] == id) return *m;
    backlog_.push_back(std::move(*m));
    if (backlog_.size() > 10000) backlog_.pop_front();
  }
}

std::optional<json> Client::next(double timeout) {
  if (!backlog_.empty()) {
    json m = std::move(backlog_.front());
    backlog_.pop_front();
    return m;
  }
  return read(timeout);
}

namespace {

json checked(const json& reply) {
  if (reply.value("type", "") == "error") {
    const std::string reason = reply.value("reason", "error");
    if (reason.rfind("illegal transition", 0) == 0) throw Error(ErrorCode::IllegalTransition, reason);
    throw Error(ErrorCode::Protocol, reason);
  }
  return reply;
}

const json* session_of(const json& snapshot, int drone_id) {
  for (const auto& s : snapshot.at("sessions"))
    if (s.value("drone_id", -1) == drone_id) return &s;
  return nullptr;
}

}  // namespace

FlyResult fly(const std::string& host, int port, const std::string& path_file, int drone_id, double timeout) {
  std::ifstream in(path_file);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path_file);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("$"), path_file + ": " + e.what());
  }

  Client c(host, port);
  const json up = checked(c.request({{"type", "upload_path"}, {"path", doc}}));
  const std::string path_id = up.at("path_id").get<std::string>();
  std::ostringstream report;
  report << "uploaded " << path_id << " (" << up.value("waypoints", 0) << " waypoints, "
         << up.value("duration", 0.0) << " s)\n";
  for (const auto& issue : up.value("issues", json::array()))
    report << "warning: " << issue.value("where", "") << " " << issue.value("message", "") << '\n';
  checked(c.request({{"type", "subscribe"}}));

  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout);
  auto left = [&] { return std::chrono::duration<double>(deadline - Clock::now()).count(); };
  bool started = false;
  bool takeoff_sent = false;
  while (left() > 0.0) {
    auto m = c.next(std::min(left(), 0.5));
    if (!m) continue;
    const std::string type = m->value("type", "");
    if (type == "event" && m->value("drone_id", -1) == drone_id) {
      const std::string ev = m->value("event", "");
      if (ev == "failsafe") throw Error(ErrorCode::Violation, "drone entered failsafe: " + m->value("detail", ""));
      if (ev == "path_done" && started) {
        report << "path " << path_id << " completed at t=" << m->value("t", 0.0) << " s\n";
        return {true, report.str()};
      }
    }
    if (type != "snapshot" || started) continue;
    const json* s = session_of(*m, drone_id);
    if (!s) throw Error(ErrorCode::InvalidArgument, "service has no drone " + std::to_string(drone_id));
    const std::string mode = s->value("mode", "");
    if (mode == "idle" && !takeoff_sent) {
      if (!s->value("armed", false)) checked(c.request({{"type", "command"}, {"drone_id", drone_id}, {"transition", "arm"}}));
      checked(c.request({{"type", "command"}, {"drone_id", drone_id}, {"transition", "takeoff"}}));
      takeoff_sent = true;
      report << "takeoff\n";
    } else if (mode == "hover" || mode == "scripted" || mode == "playback" || mode == "realtime") {
      checked(c.request({{"type", "command"}, {"drone_id", drone_id}, {"transition", "start_path"}, {"path_id", path_id}}));
      started = true;
      report << "started " << path_id << '\n';
    } else if (mode == "failsafe") {
      throw Error(ErrorCode::IllegalTransition, "drone is in failsafe");
    }
  }
  throw Error(ErrorCode::Timeout, "timed out after " + std::to_string(timeout) + " s");
}

}  // namespace dronos::client
