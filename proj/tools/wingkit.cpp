// Command-line front end: simulate, sysid, sweep, dataset, linkdemo.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "wingkit/harness.hpp"
#include "wingkit/link.hpp"
#include "wingkit/rng.hpp"
#include "wingkit/sysid.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace wingkit;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 0;
  fs::path out = "out";
  double dt = kDefaultDt;
  std::string params_path;
  int jobs = 1;
  std::string config_path;
};

struct SimulateArgs {
  std::string task;
  std::string maneuver = "left-s-descent";
  std::string policy = "state";
  int trials = 10;
  double scale = 1.0;
  double salt_pepper = 0.0;
  double duration = 0.0;
};

struct SysidArgs {
  std::string input;
  bool generate = false;
  double noise = 0.0;
  double init_scale = 2.0;
  int transitions = 500;
};

struct SweepArgs {
  std::string scale;
  std::string salt_pepper;
  std::string maneuver = "straight";
  std::string policy = "vision";
  int trials = 10;
};

struct DatasetArgs {
  int trajectories = 2;
  std::string maneuver = "left-s-descent";
  double noise = 0.02;
  double duration = 0.0;
  double scale = 1.0;
  double salt_pepper = 0.0;
};

struct LinkArgs {
  std::string maneuver = "straight";
  std::string policy = "state";
  std::string transport = "udp";
  double duration = 5.0;
  double drop = 0.0;
  int latency = 0;
  int port = 47801;
  int manual_at = -1;
  int degrade_at = -1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Root seed; every random stream derives from it");
  sub->add_option("--out", c.out, "Output directory")->capture_default_str();
  sub->add_option("--dt", c.dt, "Integration step in seconds")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--params", c.params_path, "Dynamics parameters JSON (fit output or flat)");
  sub->add_option("--jobs", c.jobs, "Worker threads for independent trials")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sub->add_option("--config", c.config_path,
                  "Flat key=value file; explicit flags take precedence");
}

// Applies "key = value" lines to options of `sub` that were not given
// explicitly.
void merge_config(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    if (eq == std::string::npos) {
      if (!trim(line).empty()) throw UsageError("config line is not key=value: " + line);
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt || key == "config") throw UsageError("unknown config key: " + key);
    if (opt->count() > 0) continue;
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1") {
        opt->add_result("true");
        opt->run_callback();
      } else if (value != "false" && value != "0") {
        throw UsageError("flag " + key + " expects true/false");
      }
      continue;
    }
    opt->add_result(value);
    opt->run_callback();
  }
}

DynParams load_params(const std::string& path) {
  if (path.empty()) return DynParams::reference();
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot read params file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoFailure("bad params JSON in " + path + ": " + e.what());
  }
  const json& p = j.contains("params") ? j["params"] : j;
  std::array<double, DynParams::kCount> k = DynParams::reference().as_array();
  for (std::size_t i = 0; i < DynParams::kCount; ++i) {
    const char* name = DynParams::names()[i];
    if (p.contains(name)) k[i] = p[name].get<double>();
  }
  const DynParams params = DynParams::from_array(k);
  if (!params.positive()) throw InvalidArgument("dynamics parameters must be positive");
  return params;
}

json params_json(const DynParams& p) {
  json j;
  const auto k = p.as_array();
  for (std::size_t i = 0; i < DynParams::kCount; ++i) j[DynParams::names()[i]] = k[i];
  return j;
}

std::vector<Maneuver> resolve_maneuvers(const std::string& name) {
  if (name == "all") {
    return {Maneuver::LeftSDescent, Maneuver::RightSAscent, Maneuver::RightSharpClimb};
  }
  const auto m = parse_maneuver(name);
  if (!m) throw UsageError("unknown maneuver: " + name);
  return {*m};
}

FollowerPolicy resolve_policy(const std::string& name) {
  if (name == "state") return state_expert_policy();
  if (name == "vision") return vision_policy();
  throw UsageError("unknown policy: " + name);
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("malformed level: '" + item + "'");
    }
    if (used != item.size() || !std::isfinite(v)) throw UsageError("malformed level: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write " + path.string());
  return out;
}

// One "key=value" comment line per config entry.
std::vector<std::string> header_lines(const json& config) {
  std::vector<std::string> lines;
  for (const auto& [key, value] : config.items()) lines.push_back(key + "=" + value.dump());
  return lines;
}

void write_header(std::ostream& out, const json& config) {
  for (const auto& line : header_lines(config)) out << "# " << line << '\n';
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

// simulate -------------------------------------------------------------------

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  if (a.task.empty()) throw UsageError("--task is required");
  if (a.task != "tracking" && a.task != "landing") throw UsageError("--task must be tracking or landing");
  if (a.trials <= 0) throw UsageError("--trials must be positive");
  RandomizationSpec limits;
  if (a.scale < limits.scale_min || a.scale > limits.scale_max) throw UsageError("--scale outside [0.5, 2.0]");
  if (a.salt_pepper < limits.salt_pepper_min || a.salt_pepper > limits.salt_pepper_max) {
    throw UsageError("--salt-pepper outside [0, 0.3]");
  }
  const bool tracking = a.task == "tracking";
  const auto maneuvers = tracking ? resolve_maneuvers(a.maneuver) : std::vector<Maneuver>{};
  if (!tracking && a.policy != "state") throw UsageError("landing runs the state-based expert only");
  const FollowerPolicy policy = resolve_policy(a.policy);
  const DynParams params = load_params(c.params_path);

  json config;
  config["command"] = "simulate";
  config["task"] = a.task;
  config["maneuver"] = tracking ? a.maneuver : "landing";
  config["policy"] = a.policy;
  config["trials"] = a.trials;
  config["seed"] = c.seed;
  config["dt"] = c.dt;
  config["scale"] = a.scale;
  config["salt_pepper"] = a.salt_pepper;
  config["duration"] = a.duration;
  config["jobs"] = c.jobs;
  config["params"] = params_json(params);

  std::vector<Scenario> scenarios;
  std::vector<std::string> labels;
  const RunwaySpec runway;
  if (tracking) {
    for (Maneuver m : maneuvers) {
      for (int i = 0; i < a.trials; ++i) {
        Scenario s = make_tracking_scenario(m, stream_seed(c.seed, "simulate.trial", scenarios.size()));
        s.dt = c.dt;
        s.duration = a.duration > 0.0 ? a.duration : s.duration;
        s.appearance.scale_factor = a.scale;
        s.appearance.salt_pepper_fraction = a.salt_pepper;
        scenarios.push_back(s);
        labels.push_back(to_string(m));
      }
    }
  } else {
    for (int i = 0; i < a.trials; ++i) {
      Scenario s = make_landing_scenario(stream_seed(c.seed, "simulate.trial", i), runway, true,
                                         a.duration > 0.0 ? a.duration : 10.0);
      s.dt = c.dt;
      scenarios.push_back(s);
      labels.push_back("landing");
    }
  }

  const std::vector<TrialResult> results =
      tracking ? run_tracking_trials_parallel(scenarios, policy, params, {}, c.jobs)
               : run_landing_trials(scenarios, landing_expert_policy(runway), runway, params, c.jobs);
  const Metrics m = compute_metrics(results);

  ensure_dir(c.out);
  ensure_dir(c.out / "trajectories");
  {
    json doc;
    doc["config"] = config;
    json metrics;
    metrics["trials"] = m.trials;
    metrics["sr"] = m.sr;
    metrics["ate_cm"] = optional_number(m.ate_cm);
    metrics["ald_cm"] = optional_number(m.ald_cm);
    metrics["art_s"] = m.art_s;
    doc["metrics"] = metrics;
    auto out = open_out(c.out / "metrics.json");
    out << doc.dump(2) << '\n';
  }
  {
    auto out = open_out(c.out / "trials.csv");
    write_header(out, config);
    out << "trial,maneuver,seed,success,ate_cm,art_s,ald_cm\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      double art = 0.0;
      for (double t : r.runtimes) art += t;
      if (!r.runtimes.empty()) art /= static_cast<double>(r.runtimes.size());
      const auto ate = trial_ate_cm(r);
      const auto ald = trial_ald_cm(r);
      out << i << ',' << labels[i] << ',' << r.seed << ',' << (r.success ? 1 : 0) << ','
          << (ate ? fmt(*ate) : "") << ',' << fmt(art) << ',' << (ald ? fmt(*ald) : "") << '\n';
    }
  }
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto comments = header_lines(config);
    comments.push_back("trial=" + std::to_string(i));
    comments.push_back("trial_seed=" + std::to_string(results[i].seed));
    auto f = open_out(c.out / "trajectories" / ("trial_" + std::to_string(i) + "_follower.csv"));
    write_trajectory_csv(f, results[i].follower, comments);
    if (!results[i].leader.states.empty()) {
      auto l = open_out(c.out / "trajectories" / ("trial_" + std::to_string(i) + "_leader.csv"));
      write_trajectory_csv(l, results[i].leader, comments);
    }
  }
  std::cout << "trials " << m.trials << "  sr " << m.sr;
  if (m.ate_cm) std::cout << "  ate_cm " << fmt(*m.ate_cm);
  if (m.ald_cm) std::cout << "  ald_cm " << fmt(*m.ald_cm);
  std::cout << "  art_s " << m.art_s << '\n';
  return 0;
}

// sysid ----------------------------------------------------------------------

int cmd_sysid(const Common& c, const SysidArgs& a) {
  if (a.input.empty() && !a.generate) throw UsageError("give --input or --generate");
  if (a.init_scale <= 0.0) throw UsageError("--init-scale must be positive");
  if (a.noise < 0.0) throw UsageError("--noise must be non-negative");
  const DynParams truth = load_params(c.params_path);

  json config;
  config["command"] = "sysid";
  config["seed"] = c.seed;
  config["dt"] = c.dt;
  config["generate"] = a.generate;
  config["input"] = a.input;
  config["noise"] = a.noise;
  config["init_scale"] = a.init_scale;
  config["transitions"] = a.transitions;

  ensure_dir(c.out);
  Trajectory traj;
  if (a.generate) {
    ExcitationOptions opt;
    opt.transitions = a.transitions;
    opt.dt = c.dt;
    traj = generate_excitation(truth, level_state({-10.0, 0.0, 2.5}, 0.0, 8.0),
                               stream_seed(c.seed, "sysid.excitation"), opt);
    if (a.noise > 0.0) traj = add_state_noise(traj, a.noise, stream_seed(c.seed, "sysid.noise"));
    config["generator_params"] = params_json(truth);
    auto out = open_out(c.out / "excitation.csv");
    write_trajectory_csv(out, traj, header_lines(config));
  } else {
    std::ifstream in(a.input);
    if (!in) throw IoFailure("cannot read " + a.input);
    traj = read_trajectory_csv(in);
  }

  std::array<double, DynParams::kCount> guess = DynParams::reference().as_array();
  for (double& k : guess) k *= a.init_scale;
  const FitResult fit = fit_params(dataset_from_trajectory(traj), DynParams::from_array(guess));

  json doc;
  doc["config"] = config;
  doc["fit"] = json::parse(fit_result_json(fit));
  auto out = open_out(c.out / "fit.json");
  out << doc.dump(2) << '\n';

  const auto k = fit.params.as_array();
  std::cout << std::left << std::setw(16) << "parameter" << std::setw(16) << "value"
            << "stderr\n";
  for (std::size_t i = 0; i < DynParams::kCount; ++i) {
    std::cout << std::setw(16) << DynParams::names()[i] << std::setw(16) << fmt(k[i])
              << fmt(fit.stderr_[i]) << '\n';
  }
  std::cout << "sse " << fit.sse << "  iterations " << fit.iterations
            << (fit.converged ? "  converged" : "  not converged") << '\n';
  return 0;
}

// sweep ----------------------------------------------------------------------

int cmd_sweep(const Common& c, const SweepArgs& a) {
  const auto scales = parse_levels(a.scale);
  const auto noises = parse_levels(a.salt_pepper);
  if (scales.empty() && noises.empty()) throw UsageError("give --scale and/or --salt-pepper levels");
  RandomizationSpec limits;
  for (double s : scales) {
    if (s < limits.scale_min || s > limits.scale_max) throw UsageError("scale level outside [0.5, 2.0]");
  }
  for (double n : noises) {
    if (n < limits.salt_pepper_min || n > limits.salt_pepper_max) {
      throw UsageError("salt-pepper level outside [0, 0.3]");
    }
  }
  if (a.trials <= 0) throw UsageError("--trials must be positive");
  const auto maneuvers = resolve_maneuvers(a.maneuver);
  if (maneuvers.size() != 1) throw UsageError("sweep takes a single maneuver");
  const FollowerPolicy policy = resolve_policy(a.policy);
  const DynParams params = load_params(c.params_path);

  Scenario base = make_tracking_scenario(maneuvers.front(), c.seed);
  const auto rows = perturbation_sweep(base, scales, noises, policy, params, a.trials, c.jobs);

  json config;
  config["command"] = "sweep";
  config["maneuver"] = a.maneuver;
  config["policy"] = a.policy;
  config["trials"] = a.trials;
  config["seed"] = c.seed;
  config["scale"] = a.scale;
  config["salt_pepper"] = a.salt_pepper;
  config["params"] = params_json(params);

  ensure_dir(c.out);
  auto out = open_out(c.out / "sweep.csv");
  write_header(out, config);
  out << "kind,level,sr\n";
  for (const auto& r : rows) {
    out << r.kind << ',' << fmt(r.level) << ',' << fmt(r.sr) << '\n';
    std::cout << r.kind << ' ' << fmt(r.level) << "  sr " << fmt(r.sr) << '\n';
  }
  return 0;
}

// dataset --------------------------------------------------------------------

int cmd_dataset(const Common& c, const DatasetArgs& a) {
  if (a.trajectories <= 0) throw UsageError("--trajectories must be positive");
  if (a.noise < 0.0) throw UsageError("--noise must be non-negative");
  const auto maneuvers = resolve_maneuvers(a.maneuver);
  const DynParams params = load_params(c.params_path);

  std::vector<Scenario> scenarios;
  for (int i = 0; i < a.trajectories; ++i) {
    const Maneuver m = maneuvers[static_cast<std::size_t>(i) % maneuvers.size()];
    Scenario s = make_tracking_scenario(m, stream_seed(c.seed, "dataset.trajectory", i));
    s.dt = c.dt;
    if (a.duration > 0.0) s.duration = a.duration;
    s.appearance.scale_factor = a.scale;
    s.appearance.salt_pepper_fraction = a.salt_pepper;
    scenarios.push_back(s);
  }
  const ControlSigma sigma{a.noise, a.noise, a.noise, a.noise};
  const auto manifest = generate_il_dataset(scenarios, GuidanceGains{}, sigma, c.out, params);

  json config;
  config["command"] = "dataset";
  config["trajectories"] = a.trajectories;
  config["maneuver"] = a.maneuver;
  config["seed"] = c.seed;
  config["dt"] = c.dt;
  config["noise"] = a.noise;
  config["duration"] = a.duration;
  config["scale"] = a.scale;
  config["salt_pepper"] = a.salt_pepper;
  config["params"] = params_json(params);
  config["rows"] = manifest.rows;
  auto out = open_out(c.out / "dataset.json");
  out << config.dump(2) << '\n';
  std::cout << "rows " << manifest.rows << "  manifest " << manifest.manifest_path.string() << '\n';
  return 0;
}

// linkdemo -------------------------------------------------------------------

int cmd_linkdemo(const Common& c, const LinkArgs& a) {
  if (a.duration <= 0.0) throw UsageError("--duration must be positive");
  if (a.drop < 0.0 || a.drop > 1.0) throw UsageError("--drop outside [0, 1]");
  if (a.latency < 0) throw UsageError("--latency must be non-negative");
  if (a.port <= 0 || a.port >= 65535) throw UsageError("--port outside 1..65534");
  if (a.transport != "udp" && a.transport != "memory") throw UsageError("--transport must be udp or memory");
  const auto maneuvers = resolve_maneuvers(a.maneuver);
  if (maneuvers.size() != 1) throw UsageError("linkdemo takes a single maneuver");
  const FollowerPolicy policy = resolve_policy(a.policy);
  const DynParams params = load_params(c.params_path);

  Scenario s = make_tracking_scenario(maneuvers.front(), c.seed);
  s.dt = c.dt;
  s.duration = a.duration;
  LinkConfig link;
  link.tick_rate = 1.0 / c.dt;
  link.drop_probability = a.drop;
  link.latency_ticks = a.latency;
  link.seed = c.seed;
  LoopOptions options;
  if (a.manual_at >= 0) options.pilot.push_back({a.manual_at, FlightMode::Manual, {}});
  if (a.degrade_at >= 0) {
    for (int k = 0; k < 5; ++k) options.degraded_ticks.push_back(a.degrade_at + k);
  }
  if (options.pilot.size() == 1) options.pilot.front().stick.values = {0.8f, 0.0f, 0.0f, 0.0f};

  std::unique_ptr<Transport> transport;
  if (a.transport == "udp") {
    transport = std::make_unique<UdpLoopbackTransport>(static_cast<std::uint16_t>(a.port));
  } else {
    transport = std::make_unique<InMemoryTransport>();
  }
  const LoopResult result = run_loop(s, params, policy, QualityMonitor{}, link, *transport, options);

  json config;
  config["command"] = "linkdemo";
  config["maneuver"] = a.maneuver;
  config["policy"] = a.policy;
  config["transport"] = a.transport;
  config["seed"] = c.seed;
  config["dt"] = c.dt;
  config["duration"] = a.duration;
  config["drop"] = a.drop;
  config["latency"] = a.latency;
  config["port"] = a.port;
  config["manual_at"] = a.manual_at;
  config["degrade_at"] = a.degrade_at;
  config["params"] = params_json(params);

  ensure_dir(c.out);
  {
    auto out = open_out(c.out / "link_log.jsonl");
    write_loop_log(out, result);
  }
  json summary;
  summary["config"] = config;
  summary["ticks"] = result.ticks.size();
  summary["closed_early"] = result.closed_early;
  json dropped = json::array(), safety = json::array();
  for (const auto& t : result.ticks) {
    if (t.dropped) dropped.push_back(t.tick);
    if (t.safety) safety.push_back(t.tick);
  }
  summary["dropped_ticks"] = dropped;
  summary["safety_ticks"] = safety;
  auto out = open_out(c.out / "linkdemo.json");
  out << summary.dump(2) << '\n';
  std::cout << "ticks " << result.ticks.size() << "  dropped " << dropped.size() << "  safety "
            << safety.size() << (result.closed_early ? "  (transport closed)" : "") << '\n';
  if (result.closed_early) throw TransportClosed("loop ended before its duration");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale fixed-wing autonomy toolkit"};
  app.require_subcommand(1);

  Common common;
  SimulateArgs sim;
  SysidArgs sys;
  SweepArgs sweep;
  DatasetArgs data;
  LinkArgs link;

  auto* s = app.add_subcommand("simulate", "Run tracking or landing trials");
  add_common(s, common);
  s->add_option("--task", sim.task, "tracking | landing (required)");
  s->add_option("--maneuver", sim.maneuver,
                "left-s-descent | right-s-ascent | right-sharp-climb | straight | all")
      ->capture_default_str();
  s->add_option("--policy", sim.policy, "state | vision")->capture_default_str();
  s->add_option("--trials", sim.trials, "Trials per maneuver")->capture_default_str();
  s->add_option("--scale", sim.scale, "Leader scale factor")->capture_default_str();
  s->add_option("--salt-pepper", sim.salt_pepper, "Salt-and-pepper fraction of leader pixels")
      ->capture_default_str();
  s->add_option("--duration", sim.duration, "Override trial duration in seconds");

  auto* y = app.add_subcommand("sysid", "Fit dynamics parameters to a trajectory CSV");
  add_common(y, common);
  y->add_option("--input", sys.input, "Trajectory CSV");
  y->add_flag("--generate", sys.generate, "Generate a synthetic excitation dataset first");
  y->add_option("--noise", sys.noise, "State noise sigma for --generate")->capture_default_str();
  y->add_option("--init-scale", sys.init_scale, "Initial guess as a multiple of the reference")
      ->capture_default_str();
  y->add_option("--transitions", sys.transitions, "Transitions for --generate")->capture_default_str();

  auto* w = app.add_subcommand("sweep", "Success rate over leader appearance perturbations");
  add_common(w, common);
  w->add_option("--scale", sweep.scale, "Comma-separated scale levels in [0.5, 2.0]");
  w->add_option("--salt-pepper", sweep.salt_pepper, "Comma-separated noise levels in [0, 0.3]");
  w->add_option("--maneuver", sweep.maneuver, "Leader maneuver")->capture_default_str();
  w->add_option("--policy", sweep.policy, "state | vision")->capture_default_str();
  w->add_option("--trials", sweep.trials, "Trials per level")->capture_default_str();

  auto* d = app.add_subcommand("dataset", "Export an imitation-learning dataset");
  add_common(d, common);
  d->add_option("--trajectories", data.trajectories, "Number of trajectories")->capture_default_str();
  d->add_option("--maneuver", data.maneuver, "Leader maneuver, or all to cycle")->capture_default_str();
  d->add_option("--noise", data.noise, "Expert noise sigma on every channel")->capture_default_str();
  d->add_option("--duration", data.duration, "Override trajectory duration in seconds");
  d->add_option("--scale", data.scale, "Leader scale factor")->capture_default_str();
  d->add_option("--salt-pepper", data.salt_pepper, "Salt-and-pepper fraction")->capture_default_str();

  auto* l = app.add_subcommand("linkdemo", "Run the ground-link loop over UDP loopback");
  add_common(l, common);
  l->add_option("--maneuver", link.maneuver, "Leader maneuver")->capture_default_str();
  l->add_option("--policy", link.policy, "state | vision")->capture_default_str();
  l->add_option("--transport", link.transport, "udp | memory")->capture_default_str();
  l->add_option("--duration", link.duration, "Seconds of simulated time")->capture_default_str();
  l->add_option("--drop", link.drop, "Frame drop probability")->capture_default_str();
  l->add_option("--latency", link.latency, "Frame latency in ticks")->capture_default_str();
  l->add_option("--port", link.port, "Air-side UDP port; ground uses port + 1")->capture_default_str();
  l->add_option("--manual-at", link.manual_at, "Tick at which the pilot takes over");
  l->add_option("--degrade-at", link.degrade_at, "First of five degraded frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    const auto chosen = app.get_subcommands();
    std::cerr << '\n' << (chosen.empty() ? app.help() : chosen.front()->help());
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    merge_config(sub, common.config_path);
    if (sub == s) return cmd_simulate(common, sim);
    if (sub == y) return cmd_sysid(common, sys);
    if (sub == w) return cmd_sweep(common, sweep);
    if (sub == d) return cmd_dataset(common, data);
    return cmd_linkdemo(common, link);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
