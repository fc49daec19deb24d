#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"
#include "dronos/dronos.h"

namespace {

int report_failure(dronos_status status) {
  std::fprintf(stderr, "error: %s: %s\n", dronos_status_string(status), dronos_last_error());
  return status == DRONOS_E_VIOLATION ? 1 : 2;
}

void print_and_free(char* text) {
  if (!text) return;
  std::fputs(text, stdout);
  dronos_string_free(text);
}

int env_port(const char* name, int fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  char* end = nullptr;
  long p = std::strtol(v, &end, 10);
  return (*end == '\0' && p > 0 && p <= 65535) ? static_cast<int>(p) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dronos: indoor drone flight automation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dronos_version()));

  std::string config_file, host;
  int api_port = -1, track_port = -1, sim_drones = 0;
  double noise = 0.0;
  std::uint64_t seed = 1;
  auto* serve = app.add_subcommand("serve", "run the API service (optionally with an embedded simulator)");
  serve->add_option("--config", config_file, "service config JSON")->check(CLI::ExistingFile);
  serve->add_option("--host", host, "bind address");
  serve->add_option("--api-port", api_port, "TCP port for clients (0 = any free port)");
  serve->add_option("--track-port", track_port, "UDP port for tracking datagrams");
  serve->add_option("--sim", sim_drones, "number of simulated drones")->check(CLI::Range(0, 16));
  serve->add_option("--noise", noise, "simulated tracking noise sigma in metres")->check(CLI::NonNegativeNumber);
  serve->add_option("--seed", seed, "simulator seed");

  std::string path_file, zones_file, validate_config;
  auto* validate = app.add_subcommand("validate", "statically check a path against zones and the fence");
  validate->add_option("path", path_file, "flight path JSON")->required()->check(CLI::ExistingFile);
  validate->add_option("--zones", zones_file, "zones JSON")->check(CLI::ExistingFile);
  validate->add_option("--config", validate_config, "service config (fence and zones)")->check(CLI::ExistingFile);

  std::string scenario_file, out_dir;
  auto* replay = app.add_subcommand("replay", "run a scenario headless against the simulator");
  replay->add_option("scenario", scenario_file, "scenario JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", out_dir, "directory for trajectory, RC streams, events and report");

  std::string fly_path, fly_host = "127.0.0.1";
  int drone_id = 1;
  int fly_port = env_port("DRONOS_API_PORT", 47820);
  double timeout = 120.0;
  auto* fly = app.add_subcommand("fly", "upload a path to a running service and fly it");
  fly->add_option("path", fly_path, "flight path JSON")->required()->check(CLI::ExistingFile);
  fly->add_option("--drone", drone_id, "drone id")->required();
  fly->add_option("--host", fly_host, "service host");
  fly->add_option("--port", fly_port, "service port")->check(CLI::Range(1, 65535));
  fly->add_option("--timeout", timeout, "seconds to wait for completion")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*validate) {
    char* report = nullptr;
    const dronos_status s = dronos_validate_files(path_file.c_str(), zones_file.empty() ? nullptr : zones_file.c_str(),
                                                  validate_config.empty() ? nullptr : validate_config.c_str(), &report);
    print_and_free(report);
    return s == DRONOS_OK ? 0 : report_failure(s);
  }

  if (*replay) {
    char* report = nullptr;
    const dronos_status s =
        dronos_replay_file(scenario_file.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(), &report);
    print_and_free(report);
    return s == DRONOS_OK ? 0 : report_failure(s);
  }

  if (*fly) {
    char* report = nullptr;
    const dronos_status s = dronos_fly(fly_host.c_str(), fly_port, fly_path.c_str(), drone_id, timeout, &report);
    print_and_free(report);
    return s == DRONOS_OK ? 0 : report_failure(s);
  }

  // serve: signals are taken synchronously so shutdown runs on this thread
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  dronos_service_options opts;
  dronos_service_options_init(&opts);
  opts.config_file = config_file.empty() ? nullptr : config_file.c_str();
  opts.host = host.empty() ? nullptr : host.c_str();
  opts.api_port = api_port;
  opts.track_port = track_port;
  opts.sim_drones = sim_drones;
  opts.sim_noise_sigma = noise;
  opts.sim_seed = seed;

  dronos_service* svc = nullptr;
  dronos_status s = dronos_service_create(&opts, &svc);
  if (s != DRONOS_OK) return report_failure(s);
  s = dronos_service_start(svc);
  if (s != DRONOS_OK) {
    const int code = report_failure(s);
    dronos_service_destroy(svc);
    return code;
  }
  int api = 0, track = 0;
  dronos_service_ports(svc, &api, &track);
  std::printf("dronos serving: api tcp %d, tracking udp %d%s\n", api, track,
              sim_drones > 0 ? ", embedded simulator" : "");
  std::fflush(stdout);

  int sig = 0;
  sigwait(&signals, &sig);
  std::printf("shutting down\n");
  dronos_service_stop(svc);
  dronos_service_destroy(svc);
  return 0;
}
