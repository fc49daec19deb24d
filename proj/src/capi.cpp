#include "dronos/dronos.h"

#include <cstring>
#include <deque>
#include <fstream>
#include <new>
#include <sstream>

#include "dronos/client.hpp"
#include "dronos/error.hpp"
#include "dronos/flight_path.hpp"
#include "dronos/msp.hpp"
#include "dronos/replay.hpp"
#include "dronos/safety.hpp"
#include "dronos/service.hpp"

using namespace dronos;

struct dronos_msp_decoder {
  msp::StreamDecoder decoder;
  std::deque<msp::RcCommand> queue;
};

struct dronos_path {
  path::FlightPath path;
};

struct dronos_service {
  std::unique_ptr<service::Runtime> runtime;
};

namespace {

thread_local std::string g_last_error;

dronos_status fail(dronos_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

dronos_status from_code(ErrorCode code) {
  return static_cast<dronos_status>(static_cast<int>(code));
}

// Runs fn, translating exceptions into status codes.
template <typename Fn>
dronos_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const ParseError& e) {
    std::string msg = e.what();
    if (!e.path().empty() && msg.find(e.path()) == std::string::npos) msg = e.path() + ": " + msg;
    return fail(DRONOS_E_PARSE, msg);
  } catch (const Error& e) {
    return fail(from_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DRONOS_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DRONOS_E_INTERNAL, e.what());
  } catch (...) {
    return fail(DRONOS_E_INTERNAL, "unknown error");
  }
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void set_out(char** out, const std::string& s) {
  if (out) *out = duplicate(s);
}

#define REQUIRE(cond, what) \
  if (!(cond)) return fail(DRONOS_E_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* dronos_version(void) { return "0.1.0"; }

const char* dronos_status_string(dronos_status status) {
  switch (status) {
    case DRONOS_OK: return "ok";
    case DRONOS_E_TIMEOUT: return "timed out";
    case DRONOS_E_EMPTY: return "nothing available";
    case DRONOS_E_BUFFER_TOO_SMALL: return "buffer too small";
    case DRONOS_E_INTERNAL: return "internal error";
    default:
      if (status >= DRONOS_E_INVALID_ARGUMENT && status <= DRONOS_E_VIOLATION)
        return to_string(static_cast<ErrorCode>(static_cast<int>(status)));
      return "unknown status";
  }
}

const char* dronos_last_error(void) { return g_last_error.c_str(); }

void dronos_string_free(char* s) { std::free(s); }

dronos_status dronos_msp_encode_rc(const uint16_t* channels, size_t count, uint8_t* out, size_t capacity,
                                   size_t* written) {
  return guarded([&] {
    REQUIRE(channels && out && written, "null argument");
    msp::RcCommand cmd;
    cmd.channels.assign(channels, channels + count);
    const auto bytes = msp::encode_set_raw_rc(cmd);
    *written = bytes.size();
    if (capacity < bytes.size()) return fail(DRONOS_E_BUFFER_TOO_SMALL, "output buffer too small");
    std::memcpy(out, bytes.data(), bytes.size());
    return DRONOS_OK;
  });
}

dronos_status dronos_msp_decoder_create(dronos_msp_decoder** out) {
  return guarded([&] {
    REQUIRE(out, "null argument");
    *out = new dronos_msp_decoder();
    return DRONOS_OK;
  });
}

void dronos_msp_decoder_destroy(dronos_msp_decoder* decoder) { delete decoder; }

dronos_status dronos_msp_decoder_feed(dronos_msp_decoder* decoder, const uint8_t* bytes, size_t length,
                                      size_t* queued) {
  return guarded([&] {
    REQUIRE(decoder && (bytes || length == 0), "null argument");
    for (const auto& frame : decoder->decoder.feed(std::span<const std::uint8_t>(bytes, length))) {
      if (frame.command != msp::kSetRawRc) continue;
      try {
        decoder->queue.push_back(msp::decode_set_raw_rc(frame));
      } catch (const Error&) {
        // a well-framed but invalid command is dropped like a corrupt frame
      }
    }
    if (queued) *queued = decoder->queue.size();
    return DRONOS_OK;
  });
}

dronos_status dronos_msp_decoder_next(dronos_msp_decoder* decoder, uint16_t* channels, size_t capacity,
                                      size_t* count) {
  return guarded([&] {
    REQUIRE(decoder && channels && count, "null argument");
    if (decoder->queue.empty()) return fail(DRONOS_E_EMPTY, "no decoded command queued");
    const auto& cmd = decoder->queue.front();
    *count = cmd.channels.size();
    if (capacity < cmd.channels.size()) return fail(DRONOS_E_BUFFER_TOO_SMALL, "channel buffer too small");
    std::copy(cmd.channels.begin(), cmd.channels.end(), channels);
    decoder->queue.pop_front();
    return DRONOS_OK;
  });
}

dronos_status dronos_msp_decoder_stats(const dronos_msp_decoder* decoder, uint64_t* frames, uint64_t* resyncs) {
  return guarded([&] {
    REQUIRE(decoder, "null argument");
    if (frames) *frames = decoder->decoder.frames_decoded();
    if (resyncs) *resyncs = decoder->decoder.resync_count();
    return DRONOS_OK;
  });
}

dronos_status dronos_path_load(const char* file, dronos_path** out) {
  return guarded([&] {
    REQUIRE(file && out, "null argument");
    *out = new dronos_path{path::load_path(file)};
    return DRONOS_OK;
  });
}

dronos_status dronos_path_parse(const char* json, dronos_path** out) {
  return guarded([&] {
    REQUIRE(json && out, "null argument");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("$"), e.what());
    }
    *out = new dronos_path{path::path_from_json(doc)};
    return DRONOS_OK;
  });
}

void dronos_path_destroy(dronos_path* path) { delete path; }

dronos_status dronos_path_duration(const dronos_path* path, double* seconds) {
  return guarded([&] {
    REQUIRE(path && seconds, "null argument");
    *seconds = path->path.duration();
    return DRONOS_OK;
  });
}

dronos_status dronos_path_waypoint_count(const dronos_path* path, size_t* count) {
  return guarded([&] {
    REQUIRE(path && count, "null argument");
    *count = path->path.waypoints().size();
    return DRONOS_OK;
  });
}

dronos_status dronos_path_sample(const dronos_path* path, double t, double position[3], double* yaw, int* done) {
  return guarded([&] {
    REQUIRE(path && position, "null argument");
    const auto s = path::sample(path->path, t);
    position[0] = s.position.x;
    position[1] = s.position.y;
    position[2] = s.position.z;
    if (yaw) *yaw = s.yaw;
    if (done) *done = s.done ? 1 : 0;
    return DRONOS_OK;
  });
}

dronos_status dronos_path_to_json(const dronos_path* path, char** json) {
  return guarded([&] {
    REQUIRE(path && json, "null argument");
    *json = duplicate(path::path_to_json(path->path).dump(2));
    return DRONOS_OK;
  });
}

dronos_status dronos_simplify(const double* xyz, size_t n, double epsilon, size_t* kept, size_t* kept_count) {
  return guarded([&] {
    REQUIRE((xyz || n == 0) && kept && kept_count, "null argument");
    std::vector<Vec3> pts(n);
    for (size_t i = 0; i < n; ++i) pts[i] = {xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]};
    const auto idx = path::simplify_indices(pts, epsilon);
    std::copy(idx.begin(), idx.end(), kept);
    *kept_count = idx.size();
    return DRONOS_OK;
  });
}

dronos_status dronos_validate_files(const char* path_file, const char* zones_file, const char* config_file,
                                    char** report) {
  return guarded([&] {
    REQUIRE(path_file, "null argument");
    safety::Geofence fence;
    std::vector<safety::Zone> zones;
    if (config_file) {
      const auto cfg = service::load_config(config_file);
      fence = cfg.orchestrator.fence;
      zones = cfg.zones;
    }
    if (zones_file) {
      auto more = safety::load_zones(zones_file);
      zones.insert(zones.end(), more.begin(), more.end());
    }
    const auto p = path::load_path(path_file);
    const auto r = safety::validate_path(p, zones, fence);
    std::ostringstream text;
    text << "path " << p.id() << ": " << p.waypoints().size() << " waypoints, " << zones.size()
         << " zones\n";
    text << r.to_text();
    set_out(report, text.str());
    if (!r.ok()) return fail(DRONOS_E_VIOLATION, "path violates " + std::to_string(r.issues.size()) + " constraint(s)");
    return DRONOS_OK;
  });
}

dronos_status dronos_replay_file(const char* scenario_file, const char* out_dir, char** report) {
  return guarded([&] {
    REQUIRE(scenario_file, "null argument");
    const auto sc = replay::load_scenario(scenario_file);
    const auto rep = replay::run_scenario(sc, out_dir ? out_dir : "");
    set_out(report, "scenario " + sc.name + "\n" + rep.to_text());
    if (!rep.safe) return fail(DRONOS_E_VIOLATION, "safety violation");
    if (!rep.completed) return fail(DRONOS_E_VIOLATION, "path not completed");
    return DRONOS_OK;
  });
}

void dronos_service_options_init(dronos_service_options* options) {
  if (!options) return;
  options->config_file = nullptr;
  options->host = nullptr;
  options->api_port = -1;
  options->track_port = -1;
  options->sim_drones = 0;
  options->sim_noise_sigma = 0.0;
  options->sim_seed = 1;
}

dronos_status dronos_service_create(const dronos_service_options* options, dronos_service** out) {
  return guarded([&] {
    REQUIRE(options && out, "null argument");
    service::ServiceConfig cfg = options->config_file ? service::load_config(options->config_file)
                                                      : service::ServiceConfig{};
    service::apply_environment(cfg);
    if (options->host) cfg.host = options->host;
    if (options->api_port >= 0) cfg.api_port = options->api_port;
    if (options->track_port >= 0) cfg.track_port = options->track_port;
    sim::Noise noise;
    noise.pose_sigma = options->sim_noise_sigma;
    noise.validate();
    auto handle = std::make_unique<dronos_service>();
    handle->runtime = std::make_unique<service::Runtime>(cfg, options->sim_drones, noise, options->sim_seed);
    *out = handle.release();
    return DRONOS_OK;
  });
}

dronos_status dronos_service_start(dronos_service* service) {
  return guarded([&] {
    REQUIRE(service, "null argument");
    service->runtime->start();
    return DRONOS_OK;
  });
}

dronos_status dronos_service_ports(const dronos_service* service, int* api_port, int* track_port) {
  return guarded([&] {
    REQUIRE(service, "null argument");
    if (api_port) *api_port = service->runtime->service().api_port();
    if (track_port) *track_port = service->runtime->service().track_port();
    return DRONOS_OK;
  });
}

dronos_status dronos_service_stop(dronos_service* service) {
  return guarded([&] {
    REQUIRE(service, "null argument");
    service->runtime->stop();
    return DRONOS_OK;
  });
}

dronos_status dronos_service_wait(dronos_service* service) {
  return guarded([&] {
    REQUIRE(service, "null argument");
    service->runtime->wait();
    return DRONOS_OK;
  });
}

void dronos_service_destroy(dronos_service* service) { delete service; }

dronos_status dronos_fly(const char* host, int port, const char* path_file, int drone_id, double timeout_seconds,
                         char** report) {
  return guarded([&] {
    REQUIRE(path_file, "null argument");
    REQUIRE(port > 0 && port <= 65535, "port out of range");
    REQUIRE(timeout_seconds > 0.0, "timeout must be positive");
    const auto r = client::fly(host ? host : "127.0.0.1", port, path_file, drone_id, timeout_seconds);
    set_out(report, r.report);
    return DRONOS_OK;
  });
}

}  // extern "C"
