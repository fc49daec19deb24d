#pragma once

#include <deque>
#include <optional>
#include <string>

#include "json.hpp"

#include "dronos/net.hpp"

namespace dronos::client {

// Blocking line-JSON client for the API service.
class Client {
 public:
  Client(const std::string& host, int port);

  // Sends a message, stamping "v" and a fresh "id" when absent; returns the id.
  nlohmann::json send(nlohmann::json msg);
  // Waits for the ack or error carrying this id. Unrelated messages are kept
  // for next(). Throws Error(Io) on disconnect or timeout.
  nlohmann::json request(nlohmann::json msg, double timeout = 5.0);
  // Next server message of any type, or nullopt on timeout.
  std::optional<nlohmann::json> next(double timeout = 1.0);

  const net::Fd& fd() const { return fd_; }

 private:
  std::optional<nlohmann::json> read(double timeout);

  net::Fd fd_;
  net::LineReader reader_;
  std::deque<nlohmann::json> backlog_;
  long next_id_ = 1;
};

struct FlyResult {
  bool completed = false;
  std::string report;
};

// Upload, arm/take off when idle, start the path once hovering and wait for
// its path_done event. Throws Error on protocol errors, failsafe or timeout.
FlyResult fly(const std::string& host, int port, const std::string& path_file, int drone_id,
              double timeout);

}  // namespace dronos::client
