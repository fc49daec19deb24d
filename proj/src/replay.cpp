#include "dronos/replay.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dronos/error.hpp"

namespace dronos::replay {

namespace fs = std::filesystem;

namespace {

std::string resolve(const std::string& base_dir, const std::string& file) {
  fs::path p(file);
  return p.is_absolute() ? file : (fs::path(base_dir) / p).string();
}

sim::Noise noise_from(const nlohmann::json& j, sim::Noise n = {}) {
  n.pose_sigma = j.value("sigma", n.pose_sigma);
  n.dropout = j.value("dropout", n.dropout);
  n.validate();
  return n;
}

}  // namespace

Scenario scenario_from_json(const nlohmann::json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ParseError(std::string("$"), "scenario must be a JSON object");
  Scenario sc;
  try {
    sc.name = doc.value("name", sc.name);
    sc.seed = doc.value("seed", sc.seed);
    sc.duration = doc.value("duration", sc.duration);
    if (!(sc.duration > 0.0)) throw ParseError(std::string("duration"), "duration must be > 0");
    if (doc.contains("noise")) sc.noise = noise_from(doc["noise"]);
    if (doc.contains("fence")) sc.orchestrator.fence = safety::fence_from_json(doc["fence"]);
    sc.orchestrator.d_min = doc.value("d_min", sc.orchestrator.d_min);
    sc.orchestrator.k_rep = doc.value("k_rep", sc.orchestrator.k_rep);
    sc.orchestrator.takeoff_altitude = doc.value("takeoff_altitude", sc.orchestrator.takeoff_altitude);
    sc.orchestrator.filter.standoff = doc.value("standoff", sc.orchestrator.filter.standoff);
    sc.orchestrator.filter.hold_instead = doc.value("hold_instead", sc.orchestrator.filter.hold_instead);
    sc.zone_tolerance = doc.value("zone_tolerance", sc.zone_tolerance);

    if (doc.contains("presets_file"))
      sc.presets = control::load_presets(resolve(base_dir, doc["presets_file"].get<std::string>()));
    else
      sc.presets = control::load_presets(control::default_presets_path());
    sc.preset = doc.value("preset", sc.preset);
    if (!sc.presets.contains(sc.preset))
      throw ParseError(std::string("preset"), "unknown preset '" + sc.preset + "'");

    if (doc.contains("zones_file"))
      sc.zones = safety::load_zones(resolve(base_dir, doc["zones_file"].get<std::string>()));
    if (doc.contains("zones")) {
      auto more = safety::zones_from_json(doc["zones"]);
      sc.zones.insert(sc.zones.end(), more.begin(), more.end());
    }

    const double v_max = sc.presets.at(sc.preset).v_max;
    if (doc.contains("paths")) {
      for (std::size_t i = 0; i < doc["paths"].size(); ++i) {
        const auto& entry = doc["paths"][i];
        if (entry.is_string())
          sc.paths.push_back(std::make_shared<const path::FlightPath>(
              path::load_path(resolve(base_dir, entry.get<std::string>()), v_max)));
        else
          sc.paths.push_back(std::make_shared<const path::FlightPath>(path::path_from_json(entry, v_max)));
      }
    }

    if (!doc.contains("drones") || !doc["drones"].is_array() || doc["drones"].empty())
      throw ParseError(std::string("drones"), "scenario needs at least one drone");
    for (std::size_t i = 0; i < doc["drones"].size(); ++i) {
      const auto& d = doc["drones"][i];
      const std::string where = "drones[" + std::to_string(i) + "]";
      ScenarioDrone sd;
      sd.drone_id = d.at("id").get<int>();
      sd.tracked_id = d.value("tracked_id", sd.drone_id);
      sd.priority = d.value("priority", static_cast<int>(i));
      sd.start = safety::vec_from_json(d.at("start"), where + ".start");
      sd.yaw = deg_to_rad(d.value("yaw", 0.0));
      sd.path_id = d.value("path", std::string{});
      if (!sd.path_id.empty() &&
          std::none_of(sc.paths.begin(), sc.paths.end(), [&](const auto& p) { return p->id() == sd.path_id; }))
        throw ParseError(where + ".path", "unknown path '" + sd.path_id + "'");
      sd.demonstrated = d.value("demonstrated", false);
      if (d.contains("preset")) sd.preset = d["preset"].get<std::string>();
      sd.params.hover_throttle = d.value("hover_throttle", sd.params.hover_throttle);
      sc.drones.push_back(sd);
    }
    if (doc.contains("actors")) {
      for (std::size_t i = 0; i < doc["actors"].size(); ++i) {
        const auto& a = doc["actors"][i];
        const std::string where = "actors[" + std::to_string(i) + "]";
        ScenarioActor actor;
        actor.motion.tracked_id = a.at("id").get<int>();
        actor.kind = tracking::object_kind_from_string(a.value("kind", std::string("user")));
        actor.motion.start = safety::vec_from_json(a.at("start"), where + ".start");
        if (a.contains("velocity")) actor.motion.velocity = safety::vec_from_json(a["velocity"], where + ".velocity");
        actor.motion.t_start = a.value("t_start", 0.0);
        actor.motion.t_end = a.value("t_end", 1e9);
        actor.motion.yaw = deg_to_rad(a.value("yaw", 0.0));
        sc.actors.push_back(actor);
      }
    }
    if (doc.contains("commands")) {
      for (const auto& c : doc["commands"]) {
        ScheduledRequest r;
        r.t = c.at("t").get<double>();
        r.request.drone_id = c.at("drone_id").get<int>();
        r.request.command = orch::command_from_string(c.at("command").get<std::string>());
        r.request.path_id = c.value("path", std::string{});
        r.request.demonstrated = c.value("demonstrated", false);
        if (c.contains("controller_id")) r.request.controller_id = c["controller_id"].get<int>();
        r.request.distance = c.value("distance", 1.0);
        sc.requests.push_back(r);
      }
    }
    if (doc.contains("noise_events")) {
      sim::Noise current = sc.noise;
      for (const auto& n : doc["noise_events"]) {
        current = noise_from(n, current);
        sc.noise_changes.push_back({n.at("t").get<double>(), current});
      }
    }
    sc.auto_start = doc.value("auto_start", sc.auto_start);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("$"), std::string("scenario: ") + e.what());
  }
  return sc;
}

Scenario load_scenario(const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open scenario " + file);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("$"), file + ": " + e.what());
  }
  return scenario_from_json(doc, fs::path(file).parent_path().string());
}

ClosedLoop::ClosedLoop(Scenario scenario)
    : scenario_(std::move(scenario)),
      sim_(sim::SimConfig{scenario_.physics_dt, sim::kTrackerRate, scenario_.seed, scenario_.noise}) {
  std::sort(scenario_.requests.begin(), scenario_.requests.end(),
            [](const auto& a, const auto& b) { return a.t < b.t; });
  std::sort(scenario_.noise_changes.begin(), scenario_.noise_changes.end(),
            [](const auto& a, const auto& b) { return a.t < b.t; });
  control_every_ = static_cast<std::uint64_t>(
      std::max(1.0, std::round(scenario_.orchestrator.control_period / scenario_.physics_dt)));

  std::vector<orch::DroneSpec> specs;
  for (const ScenarioDrone& d : scenario_.drones) {
    const std::string preset = d.preset.value_or(scenario_.preset);
    auto it = scenario_.presets.find(preset);
    if (it == scenario_.presets.end()) throw Error(ErrorCode::Config, "unknown preset '" + preset + "'");
    specs.push_back({d.drone_id, d.tracked_id, d.priority, it->second});
    sim_.add_drone(d.drone_id, d.tracked_id, d.start, d.yaw, d.params);
    registry_.register_object(d.tracked_id, tracking::ObjectKind::Drone);
  }
  for (const ScenarioActor& a : scenario_.actors) {
    sim_.add_actor(a.motion);
    registry_.register_object(a.motion.tracked_id, a.kind);
  }
  orchestrator_ = std::make_unique<orch::Orchestrator>(scenario_.orchestrator, std::move(specs));
  orchestrator_->set_zones(scenario_.zones);
  for (const auto& p : scenario_.paths) orchestrator_->store_path(p);
}

void ClosedLoop::control_tick() {
  const double now = sim_.time();
  while (next_request_ < scenario_.requests.size() && scenario_.requests[next_request_].t <= now + 1e-9)
    orchestrator_->submit(scenario_.requests[next_request_++].request);

  if (scenario_.auto_start) {
    for (const ScenarioDrone& d : scenario_.drones) {
      if (sim_.step_index() == 0) {
        orchestrator_->submit({d.drone_id, orch::Command::Arm});
        orchestrator_->submit({d.drone_id, orch::Command::Takeoff});
      }
    }
  }

  orch::TickOutput out = orchestrator_->tick(registry_.snapshot(), now, scenario_.orchestrator.control_period);
  for (auto& [drone_id, cmd] : out.commands) {
    const auto bytes = msp::encode_set_raw_rc(cmd);
    sim_.feed_msp(drone_id, bytes);
    auto& stream = msp_streams_[drone_id];
    stream.insert(stream.end(), bytes.begin(), bytes.end());
  }
  for (const auto& e : out.events)
    if (e.type == "path_done") path_done_[e.drone_id] = true;

  if (scenario_.auto_start) {
    for (const auto& s : orchestrator_->world().sessions) {
      const auto& d = *std::find_if(scenario_.drones.begin(), scenario_.drones.end(),
                                    [&](const auto& sd) { return sd.drone_id == s.drone_id; });
      if (!d.path_id.empty() && !path_started_[d.drone_id] && s.mode == orch::ModeKind::Hover) {
        orch::Request r{d.drone_id, orch::Command::StartPath};
        r.path_id = d.path_id;
        r.demonstrated = d.demonstrated;
        orchestrator_->submit(r);
        path_started_[d.drone_id] = true;
      }
    }
  }

  ticks_.push_back({now, std::move(out.commands)});
  events_.insert(events_.end(), out.events.begin(), out.events.end());
  replies_.insert(replies_.end(), out.replies.begin(), out.replies.end());
}

void ClosedLoop::step() {
  const double now = sim_.time();
  while (next_noise_ < scenario_.noise_changes.size() && scenario_.noise_changes[next_noise_].t <= now + 1e-9)
    sim_.set_noise(scenario_.noise_changes[next_noise_++].noise);
  for (const std::string& line : sim_.poll_tracker()) registry_.ingest(line, now);
  if (sim_.step_index() % control_every_ == 0) control_tick();
  sim_.advance();
}

void ClosedLoop::run_until(double t) {
  const auto target = static_cast<std::uint64_t>(std::llround(t / scenario_.physics_dt));
  while (sim_.step_index() < target) step();
}

std::string ClosedLoop::trajectory_csv() const {
  return std::string(sim::Simulator::log_header()) + sim_.log();
}

bool ClosedLoop::path_done(int drone_id) const {
  auto it = path_done_.find(drone_id);
  return it != path_done_.end() && it->second;
}

std::optional<double> ClosedLoop::first_event_time(int drone_id, const std::string& type) const {
  for (const auto& e : events_)
    if (e.drone_id == drone_id && e.type == type) return e.t;
  return std::nullopt;
}

namespace {

struct Row {
  double t;
  int drone_id;
  Vec3 p;
};

std::vector<Row> parse_log(const std::string& log) {
  std::vector<Row> rows;
  std::istringstream in(log);
  std::string line;
  while (std::getline(in, line)) {
    Row r{};
    double yaw, vx, vy, vz;
    if (std::sscanf(line.c_str(), "%lf,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.t, &r.drone_id, &r.p.x,
                    &r.p.y, &r.p.z, &yaw, &vx, &vy, &vz) == 9)
      rows.push_back(r);
  }
  return rows;
}

}  // namespace

Report evaluate(const ClosedLoop& loop) {
  const Scenario& sc = loop.scenario();
  Report rep;
  const auto rows = parse_log(loop.simulator().log());
  const std::size_t n = sc.drones.size();
  const double sample_every = sc.orchestrator.control_period;
  const double pair_limit = sc.separation_fraction * sc.orchestrator.d_min;

  for (std::size_t i = 0; i + n <= rows.size(); i += n) {
    const double t = rows[i].t;
    const bool control_sample =
        std::abs(std::remainder(t, sample_every)) < 0.25 * sc.physics_dt;
    for (std::size_t a = 0; a < n; ++a) {
      const Vec3& p = rows[i + a].p;
      for (std::size_t b = a + 1; b < n; ++b)
        rep.min_pair_distance = std::min(rep.min_pair_distance, distance(p, rows[i + b].p));
      if (!control_sample) continue;
      for (const auto& z : sc.zones) {
        if (z.is_dynamic()) {
          for (const auto& actor : sc.actors) {
            if (actor.motion.tracked_id != z.dynamic->tracked_object_id) continue;
            const double clearance = distance(p, actor.motion.position_at(t)) - z.dynamic->radius;
            rep.min_actor_clearance = std::min(rep.min_actor_clearance, clearance);
          }
        } else {
          rep.min_zone_clearance = std::min(rep.min_zone_clearance, safety::surface_distance(z, p));
        }
      }
      const Vec3 c = sc.orchestrator.fence.clamp(p);
      rep.max_fence_excursion = std::max(rep.max_fence_excursion, distance(c, p));
    }
  }
  if (rep.min_zone_clearance < -sc.zone_tolerance)
    rep.violations.push_back("static zone clearance " + std::to_string(rep.min_zone_clearance) + " m");
  if (n > 1 && rep.min_pair_distance < pair_limit)
    rep.violations.push_back("drone separation " + std::to_string(rep.min_pair_distance) + " m");
  if (rep.min_actor_clearance < -sc.zone_tolerance)
    rep.violations.push_back("dynamic zone clearance " + std::to_string(rep.min_actor_clearance) + " m");
  if (rep.max_fence_excursion > sc.zone_tolerance)
    rep.violations.push_back("geofence excursion " + std::to_string(rep.max_fence_excursion) + " m");
  for (const auto& e : loop.events())
    if (e.type == "failsafe") ++rep.failsafe_events;
  rep.safe = rep.violations.empty();

  rep.completed = true;
  for (const auto& d : sc.drones)
    if (!d.path_id.empty() && !loop.path_done(d.drone_id)) rep.completed = false;
  return rep;
}

nlohmann::json Report::to_json() const {
  nlohmann::json j{{"completed", completed},
                   {"safe", safe},
                   {"max_fence_excursion", max_fence_excursion},
                   {"failsafe_events", failsafe_events},
                   {"violations", violations}};
  if (min_zone_clearance < 1e9) j["min_zone_clearance"] = min_zone_clearance;
  if (min_pair_distance < 1e9) j["min_pair_distance"] = min_pair_distance;
  if (min_actor_clearance < 1e9) j["min_actor_clearance"] = min_actor_clearance;
  return j;
}

std::string Report::to_text() const {
  std::ostringstream os;
  os << "completed: " << (completed ? "yes" : "no") << '\n';
  os << "safe: " << (safe ? "yes" : "no") << '\n';
  if (min_zone_clearance < 1e9) os << "min static zone clearance: " << min_zone_clearance << " m\n";
  if (min_pair_distance < 1e9) os << "min pairwise distance: " << min_pair_distance << " m\n";
  if (min_actor_clearance < 1e9) os << "min dynamic zone clearance: " << min_actor_clearance << " m\n";
  os << "max fence excursion: " << max_fence_excursion << " m\n";
  os << "failsafe events: " << failsafe_events << '\n';
  for (const auto& v : violations) os << "violation: " << v << '\n';
  return os.str();
}

Report run_scenario(const Scenario& scenario, const std::string& out_dir) {
  ClosedLoop loop(scenario);
  loop.run();
  Report rep = evaluate(loop);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(fs::path(out_dir) / "trajectory.csv") << loop.trajectory_csv();
    for (const auto& [id, bytes] : loop.msp_streams()) {
      std::ofstream rc(fs::path(out_dir) / ("rc_" + std::to_string(id) + ".bin"), std::ios::binary);
      rc.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    std::ofstream events(fs::path(out_dir) / "events.jsonl");
    for (const auto& e : loop.events())
      events << nlohmann::json{{"t", e.t}, {"drone_id", e.drone_id}, {"type", e.type}, {"detail", e.detail}}.dump()
             << '\n';
    std::ofstream(fs::path(out_dir) / "report.json") << rep.to_json().dump(2) << '\n';
  }
  return rep;
}

}  // namespace dronos::replay
