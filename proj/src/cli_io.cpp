#include "blora/cli_io.hpp"

#include "blora/characterization.hpp"
#include "blora/device_sim.hpp"
#include "blora/errors.hpp"
#include "blora/markov_model.hpp"

#include "defaults_yaml.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace blora {

namespace {

int line_of(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  return m.is_null() ? 0 : m.line + 1;
}

[[noreturn]] void bad_value(const std::string& key, const YAML::Node& n, const std::string& why) {
  throw ParseError("line " + std::to_string(line_of(n)) + ": " + key + ": " + why, line_of(n));
}

template <typename T>
T scalar(const std::string& key, const YAML::Node& n) {
  if (!n.IsScalar())
    bad_value(key, n, "expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::BadConversion&) {
    bad_value(key, n, "cannot convert '" + n.Scalar() + "'");
  }
}

bool flag(const std::string& key, const YAML::Node& n) {
  if (!n.IsScalar())
    bad_value(key, n, "expected a scalar");
  const std::string& s = n.Scalar();
  if (s == "0")
    return false;
  if (s == "1")
    return true;
  return scalar<bool>(key, n);
}

bool is_inf(const std::string& s) {
  std::string l;
  for (char c : s)
    l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return l == "inf" || l == ".inf" || l == "infinity";
}

using Setter = std::function<void(Scenario&, const std::string&, const YAML::Node&)>;
using SectionMap = std::map<std::string, std::map<std::string, Setter>>;

const SectionMap& sections() {
  static const SectionMap m = [] {
    SectionMap s;
    s["harvester"]["E_volts"] = [](Scenario& x, auto& k, auto& n) {
      x.circuit.harvester.voltage_v = scalar<double>(k, n);
    };
    s["harvester"]["power_watts"] = [](Scenario& x, auto& k, auto& n) {
      x.circuit.harvester.power_w = scalar<double>(k, n);
    };
    s["capacitor"]["C_farads"] = [](Scenario& x, auto& k, auto& n) {
      x.circuit.capacitor.capacitance_f = scalar<double>(k, n);
    };
    s["capacitor"]["esr_ohms"] = [](Scenario& x, auto& k, auto& n) {
      x.circuit.capacitor.esr_ohm = scalar<double>(k, n);
    };
    s["capacitor"]["epr_ohms"] = [](Scenario& x, auto& k, auto& n) {
      if (n.IsScalar() && is_inf(n.Scalar()))
        x.circuit.capacitor.epr_ohm.reset();
      else
        x.circuit.capacitor.epr_ohm = scalar<double>(k, n);
    };
    for (DeviceState st : kAllDeviceStates) {
      std::string name(to_string(st));
      for (auto& c : name)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      s["loads"][name] = [st](Scenario& x, auto& k, auto& n) {
        x.circuit.loads[st] = scalar<double>(k, n);
      };
    }
    s["radio"]["sf"] = [](Scenario& x, auto& k, auto& n) { x.radio.sf = scalar<int>(k, n); };
    s["radio"]["bw_hz"] = [](Scenario& x, auto& k, auto& n) {
      x.radio.bw_hz = scalar<double>(k, n);
    };
    s["radio"]["coding_rate"] = [](Scenario& x, auto& k, auto& n) {
      try {
        x.radio.cr_index = parse_coding_rate(scalar<std::string>(k, n));
      } catch (const DomainError& e) {
        bad_value(k, n, e.what());
      }
    };
    s["radio"]["n_preamble"] = [](Scenario& x, auto& k, auto& n) {
      x.radio.n_preamble = scalar<int>(k, n);
    };
    s["radio"]["ih"] = [](Scenario& x, auto& k, auto& n) { x.radio.implicit_header = flag(k, n); };
    s["radio"]["de"] = [](Scenario& x, auto& k, auto& n) { x.radio.low_dr_optimize = flag(k, n); };
    s["radio"]["tx_power_dbm"] = [](Scenario& x, auto& k, auto& n) {
      x.radio.tx_power_dbm = scalar<double>(k, n);
    };
    s["traffic"]["ul_payload_bytes"] = [](Scenario& x, auto& k, auto& n) {
      x.ul_pl = scalar<int>(k, n);
    };
    s["traffic"]["dl_payload_bytes"] = [](Scenario& x, auto& k, auto& n) {
      x.dl_pl = scalar<int>(k, n);
    };
    s["traffic"]["interval_s"] = [](Scenario& x, auto& k, auto& n) {
      x.interval_m = scalar<double>(k, n);
    };
    s["traffic"]["p1"] = [](Scenario& x, auto& k, auto& n) { x.p1 = scalar<double>(k, n); };
    s["traffic"]["p2"] = [](Scenario& x, auto& k, auto& n) { x.p2 = scalar<double>(k, n); };
    s["device"]["v_min"] = [](Scenario& x, auto& k, auto& n) {
      x.circuit.thresholds.v_min = scalar<double>(k, n);
    };
    s["device"]["turn_on_fraction"] = [](Scenario& x, auto& k, auto& n) {
      x.circuit.thresholds.turn_on_fraction = scalar<double>(k, n);
    };
    s["markov"]["granularity"] = [](Scenario& x, auto& k, auto& n) {
      x.granularity = scalar<int>(k, n);
    };
    return s;
  }();
  return m;
}

Scenario parse_unvalidated(std::string_view text, const Scenario& base) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw ParseError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg, e.mark.line + 1);
  }
  Scenario s = base;
  if (root.IsNull())
    return s;
  if (!root.IsMap())
    throw ParseError("top level must be a mapping of sections", line_of(root));
  const SectionMap& known = sections();
  for (const auto& sec : root) {
    const std::string name = sec.first.as<std::string>();
    auto it = known.find(name);
    if (it == known.end())
      throw ParseError("line " + std::to_string(line_of(sec.first)) + ": unknown section '" +
                           name + "'",
                       line_of(sec.first));
    if (sec.second.IsNull())
      continue;
    if (!sec.second.IsMap())
      throw ParseError("line " + std::to_string(line_of(sec.second)) + ": section '" + name +
                           "' must be a mapping",
                       line_of(sec.second));
    for (const auto& kv : sec.second) {
      const std::string key = kv.first.as<std::string>();
      auto k = it->second.find(key);
      if (k == it->second.end())
        throw ParseError("line " + std::to_string(line_of(kv.first)) + ": unknown key '" +
                             name + "." + key + "'",
                         line_of(kv.first));
      k->second(s, name + "." + key, kv.second);
    }
  }
  return s;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ParseError("cannot read scenario file " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

} // namespace

std::string_view defaults_yaml() { return detail::kDefaultsYaml; }

const Scenario& default_scenario() {
  static const Scenario s = [] {
    Scenario x = parse_unvalidated(detail::kDefaultsYaml, Scenario{});
    validate(x);
    return x;
  }();
  return s;
}

Scenario parse_scenario(std::string_view text, const Scenario& base) {
  Scenario s = parse_unvalidated(text, base);
  validate(s);
  return s;
}

Scenario parse_scenario(std::string_view text) { return parse_scenario(text, default_scenario()); }

std::filesystem::path resolve_scenario_path(const std::filesystem::path& path) {
  if (path.is_absolute() || std::filesystem::exists(path))
    return path;
  if (const char* dir = std::getenv(kScenarioDirEnv); dir && *dir) {
    auto candidate = std::filesystem::path(dir) / path;
    if (std::filesystem::exists(candidate))
      return candidate;
  }
  return path;
}

Scenario load_scenario(const std::filesystem::path& path) {
  const auto resolved = resolve_scenario_path(path);
  const std::string text = read_file(resolved);
  try {
    return parse_scenario(text);
  } catch (const ParseError& e) {
    throw ParseError(resolved.string() + ": " + e.what(), e.line());
  }
}

std::string dump_scenario(const Scenario& s) {
  const auto& c = s.circuit;
  // shortest of %.15g .. %.17g that reads back exactly
  auto num = [](double v) {
    for (const char* spec : {"%.15g", "%.16g"}) {
      std::string t = fmt(spec, v);
      if (std::strtod(t.c_str(), nullptr) == v)
        return t;
    }
    return fmt("%.17g", v);
  };
  std::ostringstream o;
  o << "harvester:\n"
    << "  E_volts: " << num(c.harvester.voltage_v) << "\n"
    << "  power_watts: " << num(c.harvester.power_w) << "\n"
    << "capacitor:\n"
    << "  C_farads: " << num(c.capacitor.capacitance_f) << "\n"
    << "  esr_ohms: " << num(c.capacitor.esr_ohm) << "\n"
    << "  epr_ohms: " << (c.capacitor.epr_ohm ? num(*c.capacitor.epr_ohm) : "inf") << "\n"
    << "loads:\n";
  for (DeviceState st : kAllDeviceStates) {
    std::string name(to_string(st));
    for (auto& ch : name)
      ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    o << "  " << name << ": " << num(c.loads[st]) << "\n";
  }
  o << "radio:\n"
    << "  sf: " << s.radio.sf << "\n"
    << "  bw_hz: " << num(s.radio.bw_hz) << "\n"
    << "  coding_rate: \"" << coding_rate_string(s.radio.cr_index) << "\"\n"
    << "  n_preamble: " << s.radio.n_preamble << "\n"
    << "  ih: " << (s.radio.implicit_header ? 1 : 0) << "\n"
    << "  de: " << (s.radio.low_dr_optimize ? 1 : 0) << "\n"
    << "  tx_power_dbm: " << num(s.radio.tx_power_dbm) << "\n"
    << "traffic:\n"
    << "  ul_payload_bytes: " << s.ul_pl << "\n"
    << "  dl_payload_bytes: " << s.dl_pl << "\n"
    << "  interval_s: " << num(s.interval_m) << "\n"
    << "  p1: " << num(s.p1) << "\n"
    << "  p2: " << num(s.p2) << "\n"
    << "device:\n"
    << "  v_min: " << num(c.thresholds.v_min) << "\n"
    << "  turn_on_fraction: " << num(c.thresholds.turn_on_fraction) << "\n"
    << "markov:\n"
    << "  granularity: " << s.granularity << "\n";
  return o.str();
}

std::string format_voltage(double v) { return fmt("%.6g", v); }
std::string format_time(double t) { return fmt("%.9g", t); }
std::string format_probability(double p) { return fmt("%.6g", p); }

void write_csv(std::ostream& out, const Table& table) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(table.header);
  for (const auto& r : table.rows)
    line(r);
}

void write_json(std::ostream& out, const Table& table) {
  using nlohmann::ordered_json;
  ordered_json arr = ordered_json::array();
  for (const auto& r : table.rows) {
    ordered_json obj = ordered_json::object();
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      const std::string& cell = i < r.size() ? r[i] : std::string();
      if (cell.empty()) {
        obj[table.header[i]] = nullptr;
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end && *end == '\0' && std::isfinite(v)) {
        if (cell.find_first_of(".eE") == std::string::npos)
          obj[table.header[i]] = std::strtoll(cell.c_str(), nullptr, 10);
        else
          obj[table.header[i]] = v;
      } else {
        obj[table.header[i]] = cell;
      }
    }
    arr.push_back(std::move(obj));
  }
  out << arr.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// command line

namespace {

struct ScenarioFlags {
  std::string path;
  std::optional<int> sf, pl, dl, granularity, n_preamble;
  std::optional<double> m, threshold, capacitance, power, p1, p2, esr, epr, bw;
  std::optional<std::string> cr;
  std::optional<bool> ih, de;
};

struct OutputFlags {
  std::string path;
  bool json = false;
  bool dump_config = false;
};

void add_scenario_flags(CLI::App* app, ScenarioFlags& f) {
  app->add_option("--scenario", f.path, "scenario file (YAML)");
  app->add_option("--sf", f.sf, "spreading factor");
  app->add_option("--pl", f.pl, "uplink payload bytes");
  app->add_option("--dl", f.dl, "downlink payload bytes");
  app->add_option("--m", f.m, "uplink interval in seconds");
  app->add_option("--threshold", f.threshold, "turn-on threshold as a fraction of E");
  app->add_option("--capacitance", f.capacitance, "capacitance in farads");
  app->add_option("--power", f.power, "harvested power in watts");
  app->add_option("--p1", f.p1, "downlink probability in RX1");
  app->add_option("--p2", f.p2, "downlink probability in RX2");
  app->add_option("--esr", f.esr, "capacitor ESR in ohms");
  app->add_option("--epr", f.epr, "capacitor EPR in ohms");
  app->add_option("--granularity", f.granularity, "chain levels per volt");
  app->add_option("--bw", f.bw, "bandwidth in Hz");
  app->add_option("--cr", f.cr, "coding rate, e.g. 4/5");
  app->add_option("--n-preamble", f.n_preamble, "preamble symbols");
  app->add_option("--ih", f.ih, "implicit header (0/1)");
  app->add_option("--de", f.de, "low data rate optimization (0/1)");
}

void add_output_flags(CLI::App* app, OutputFlags& o) {
  app->add_option("--out", o.path, "write the result table to this file");
  app->add_flag("--json", o.json, "write JSON instead of CSV");
  app->add_flag("--dump-config", o.dump_config, "print the effective scenario and exit");
}

Scenario build_scenario(const ScenarioFlags& f) {
  Scenario s = default_scenario();
  if (!f.path.empty()) {
    const auto resolved = resolve_scenario_path(f.path);
    try {
      s = parse_unvalidated(read_file(resolved), s);
    } catch (const ParseError& e) {
      throw ParseError(resolved.string() + ": " + e.what(), e.line());
    }
  }
  if (f.sf) s.radio.sf = *f.sf;
  if (f.pl) s.ul_pl = *f.pl;
  if (f.dl) s.dl_pl = *f.dl;
  if (f.m) s.interval_m = *f.m;
  if (f.threshold) s.circuit.thresholds.turn_on_fraction = *f.threshold;
  if (f.capacitance) s.circuit.capacitor.capacitance_f = *f.capacitance;
  if (f.power) s.circuit.harvester.power_w = *f.power;
  if (f.p1) s.p1 = *f.p1;
  if (f.p2) s.p2 = *f.p2;
  if (f.esr) s.circuit.capacitor.esr_ohm = *f.esr;
  if (f.epr) s.circuit.capacitor.epr_ohm = *f.epr;
  if (f.granularity) s.granularity = *f.granularity;
  if (f.bw) s.radio.bw_hz = *f.bw;
  if (f.cr) s.radio.cr_index = parse_coding_rate(*f.cr);
  if (f.n_preamble) s.radio.n_preamble = *f.n_preamble;
  if (f.ih) s.radio.implicit_header = *f.ih;
  if (f.de) s.radio.low_dr_optimize = *f.de;
  validate(s);
  return s;
}

void emit(const Table& t, const OutputFlags& o, std::ostream& out, bool to_stdout_by_default) {
  auto write = [&](std::ostream& os) { o.json ? write_json(os, t) : write_csv(os, t); };
  if (!o.path.empty()) {
    std::ofstream f(o.path, std::ios::binary);
    if (!f)
      throw std::runtime_error("cannot write " + o.path);
    write(f);
  } else if (to_stdout_by_default) {
    write(out);
  }
}

std::string summary_line(double pdr, double pdl1, double pdl2) {
  return "pdr=" + format_probability(pdr) + " pdl1=" + format_probability(pdl1) +
         " pdl2=" + format_probability(pdl2);
}

std::string opt_cell(const std::optional<double>& v, std::string (*f)(double)) {
  return v ? f(*v) : std::string();
}

struct BisectionFlags {
  BisectionSettings s;
  void add(CLI::App* app) {
    app->add_option("--v-tol", s.voltage_tol_v, "start-voltage bisection tolerance (V)");
    app->add_option("--c-lo", s.capacitance_lo_f, "lowest capacitance searched (F)");
    app->add_option("--c-hi", s.capacitance_hi_f, "highest capacitance searched (F)");
    app->add_option("--c-tol", s.capacitance_tol_f, "capacitance bisection tolerance (F)");
  }
};

std::vector<MClass> parse_m_classes(const std::vector<std::string>& names) {
  std::vector<MClass> out;
  for (const auto& n : names) {
    auto it = std::find_if(kAllMClasses.begin(), kAllMClasses.end(),
                           [&](MClass m) { return to_string(m) == n; });
    if (it == kAllMClasses.end())
      throw DomainError("unknown M class '" + n + "'");
    out.push_back(*it);
  }
  return out;
}

} // namespace

int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Battery-less LoRaWAN Class A device: circuit model, simulator and Markov chain",
               "blora"};
  app.require_subcommand(1);

  ScenarioFlags sf;
  OutputFlags of;
  unsigned jobs = 1;

  auto* airtime = app.add_subcommand("airtime", "time on air of one frame");
  auto* trace = app.add_subcommand("trace", "voltage trace of one cycle or a simulation run");
  auto* simulate = app.add_subcommand("simulate", "event-based simulation");
  auto* chain = app.add_subcommand("chain", "Markov chain model");
  auto* sweep = app.add_subcommand("sweep", "sweep one parameter with either engine");
  auto* mincap = app.add_subcommand("min-cap", "minimum capacitance for one cycle");
  auto* minint = app.add_subcommand("min-interval", "minimum uplink interval");
  auto* wakeup = app.add_subcommand("wakeup", "time to wake up from v_min");
  auto* accuracy = app.add_subcommand("accuracy", "chain vs simulator accuracy grid");
  for (auto* sub : {airtime, trace, simulate, chain, sweep, mincap, minint, wakeup, accuracy}) {
    add_scenario_flags(sub, sf);
    add_output_flags(sub, of);
  }

  std::string dl_case_name = "none";
  double v_start = 0.0;
  long cycles = 0;
  double trace_step = 0.0;
  trace->add_option("--dl-case", dl_case_name, "none, rx1 or rx2");
  trace->add_option("--v-start", v_start, "start voltage of the single cycle (default v_sl)");
  trace->add_option("--cycles", cycles, "trace a simulation of this many scheduled uplinks");
  trace->add_option("--step", trace_step, "extra samples every this many seconds");

  std::uint64_t seed = 1;
  long n_tx = 1000;
  bool keep_cold_start = false;
  simulate->add_option("--seed", seed, "PRNG seed");
  simulate->add_option("--n", n_tx, "scheduled uplinks to count");
  simulate->add_flag("--keep-cold-start", keep_cold_start,
                     "count uplinks before the first wake-up");
  trace->add_option("--seed", seed, "PRNG seed for --cycles");

  bool pdl2_rx2 = false;
  bool direct = false;
  std::string matrix_path;
  chain->add_flag("--pdl2-rx2", pdl2_rx2, "RX2 success requires the RX2 threshold");
  chain->add_flag("--direct", direct, "solve with sparse LU instead of power iteration");
  chain->add_option("--matrix", matrix_path, "write the transition matrix to this file");

  std::string axis_name = "threshold";
  std::vector<double> values;
  std::vector<double> intervals;
  std::string engine_name = "both";
  int seeds = 5;
  sweep->add_option("--axis", axis_name,
                    "ul_pl, dl_pl, threshold, interval, capacitance, power or granularity");
  sweep->add_option("--values", values, "axis values")->delimiter(',');
  sweep->add_option("--intervals", intervals, "uplink intervals crossed with the values")
      ->delimiter(',');
  sweep->add_option("--engine", engine_name, "simulator, chain or both");
  sweep->add_option("--seeds", seeds, "simulator seeds averaged");
  sweep->add_option("--n", n_tx, "scheduled uplinks per simulation");
  sweep->add_option("--jobs", jobs, "worker threads");

  BisectionFlags bis;
  for (auto* sub : {mincap, minint}) {
    sub->add_option("--dl-case", dl_case_name, "none, rx1 or rx2");
    sub->add_option("--axis", axis_name, "sweep this axis instead of a single value");
    sub->add_option("--values", values, "axis values")->delimiter(',');
    sub->add_option("--jobs", jobs, "worker threads");
    bis.add(sub);
  }
  wakeup->add_option("--values", values, "threshold fractions")->delimiter(',');

  std::string cases = "ABCDE";
  std::vector<std::string> m_classes;
  std::vector<double> thresholds{0.70, 0.84, 0.96};
  std::vector<int> granularities{100, 500, 750, 1000};
  std::string summary_path;
  accuracy->add_option("--cases", cases, "case letters, e.g. AD");
  accuracy->add_option("--m-classes", m_classes, "small, medium, high, very_high")
      ->delimiter(',');
  accuracy->add_option("--thresholds", thresholds, "threshold fractions")->delimiter(',');
  accuracy->add_option("--granularities", granularities, "granularities")->delimiter(',');
  accuracy->add_option("--seeds", seeds, "simulator seeds averaged");
  accuracy->add_option("--n", n_tx, "scheduled uplinks per simulation");
  accuracy->add_option("--jobs", jobs, "worker threads");
  accuracy->add_option("--summary", summary_path, "write per-threshold/granularity percentiles");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const Scenario sc = build_scenario(sf);
    for (auto [name, pl] : {std::pair{"uplink", sc.ul_pl}, {"downlink", sc.dl_pl}})
      if (payload_outside_frame_range(pl))
        err << "warning: " << name << " payload of " << pl
            << " B is outside the 13..51 B LoRaWAN frame range\n";
    if (of.dump_config) {
      out << dump_scenario(sc);
      return 0;
    }

    if (*airtime) {
      const double t = time_on_air(sc.radio, sc.ul_pl);
      out << format_time(t) << '\n';
      emit({{"sf", "pl", "airtime_s"},
            {{std::to_string(sc.radio.sf), std::to_string(sc.ul_pl), format_time(t)}}},
           of, out, false);
      return 0;
    }

    if (*trace) {
      std::vector<TracePoint> points;
      if (cycles > 0) {
        SimOptions opt;
        opt.seed = seed;
        opt.n_scheduled = cycles;
        opt.record_trace = true;
        opt.trace_step_s = trace_step;
        opt.discard_cold_start = false;
        points = run_simulation(sc, opt).trace;
      } else {
        const double v0 = trace->count("--v-start") ? v_start : sc.circuit.v_sl();
        points = single_cycle_trace(sc, v0, dl_case_from_string(dl_case_name)).trace;
      }
      Table t{{"time_s", "voltage_v", "state"}, {}};
      for (const auto& p : points)
        t.rows.push_back(
            {format_time(p.time_s), format_voltage(p.voltage_v), std::string(to_string(p.state))});
      emit(t, of, out, true);
      return 0;
    }

    if (*simulate) {
      SimOptions opt;
      opt.seed = seed;
      opt.n_scheduled = n_tx;
      opt.discard_cold_start = !keep_cold_start;
      const SimStats st = run_simulation(sc, opt).stats;
      out << summary_line(st.pdr, st.pdl1, st.pdl2) << '\n';
      auto n = [](long v) { return std::to_string(v); };
      emit({{"seed", "n_scheduled", "n_tx_success", "n_tx_lost_off", "n_tx_aborted",
             "n_dl1_success", "n_dl1_aborted", "n_dl2_success", "n_dl2_aborted", "pdr", "pdl1",
             "pdl2"},
            {{std::to_string(seed), n(st.n_scheduled), n(st.n_tx_success), n(st.n_tx_lost_off),
              n(st.n_tx_aborted), n(st.n_dl1_success), n(st.n_dl1_aborted), n(st.n_dl2_success),
              n(st.n_dl2_aborted), format_probability(st.pdr), format_probability(st.pdl1),
              format_probability(st.pdl2)}}},
           of, out, false);
      return 0;
    }

    if (*chain) {
      const TransitionMatrix p = build_transition_matrix(sc, sc.granularity);
      const std::vector<double> pi =
          direct ? stationary_distribution_direct(p, 0) : stationary_distribution(p, 0);
      const ChainResult r = chain_metrics(
          p, pi, sc, sc.granularity, pdl2_rx2 ? Pdl2Indicator::Rx2Threshold : Pdl2Indicator::VMin);
      out << summary_line(r.pdr, r.pdl1, r.pdl2) << '\n';
      if (!matrix_path.empty()) {
        std::ofstream f(matrix_path, std::ios::binary);
        if (!f)
          throw std::runtime_error("cannot write " + matrix_path);
        write_matrix_dump(f, p);
      }
      Table t{{"kind", "level", "voltage_v", "pi"}, {}};
      for (std::size_t i = 0; i < p.size(); ++i)
        t.rows.push_back({std::string(to_string(p.state(i).kind)),
                          std::to_string(p.state(i).level),
                          format_voltage(p.state(i).level / static_cast<double>(sc.granularity)),
                          format_probability(pi[i])});
      emit(t, of, out, false);
      return 0;
    }

    if (*sweep) {
      SweepSpec spec;
      spec.base = sc;
      spec.axis = sweep_axis_from_string(axis_name);
      if (!values.empty())
        spec.values = values;
      else if (spec.axis != SweepAxis::Threshold)
        throw DomainError("--values is required for axis " + axis_name);
      spec.intervals = intervals;
      spec.sim_seeds = seeds;
      spec.sim_transmissions = n_tx;
      spec.jobs = jobs;
      const auto rows = threshold_sweep(spec, engine_from_string(engine_name));
      Table t{{"axis", "value", "interval_s", "status", "sim_pdr", "sim_pdl1", "sim_pdl2",
               "mc_pdr", "mc_pdl1", "mc_pdl2"},
              {}};
      for (const auto& r : rows) {
        auto m = [](const std::optional<Metrics>& x, double Metrics::*f) {
          return x ? format_probability((*x).*f) : std::string();
        };
        t.rows.push_back({axis_name, fmt("%.9g", r.value), format_time(r.interval_m),
                          std::string(to_string(r.status)), m(r.sim, &Metrics::pdr),
                          m(r.sim, &Metrics::pdl1), m(r.sim, &Metrics::pdl2),
                          m(r.chain, &Metrics::pdr), m(r.chain, &Metrics::pdl1),
                          m(r.chain, &Metrics::pdl2)});
      }
      emit(t, of, out, true);
      return 0;
    }

    if (*mincap || *minint) {
      const DlCase dl = dl_case_from_string(dl_case_name);
      const bool cap = mincap->parsed();
      const char* column = cap ? "min_capacitance_f" : "min_interval_s";
      auto cell = [&](double v) { return cap ? fmt("%.6g", v) : format_time(v); };
      if (!(cap ? mincap : minint)->count("--axis")) {
        std::optional<double> v;
        if (cap)
          v = min_capacitance(sc, dl, bis.s);
        else
          v = min_tx_interval(sc, dl, bis.s);
        if (!v) {
          err << "infeasible: the cycle cannot complete at this capacitance\n";
          return 3;
        }
        out << cell(*v) << '\n';
        emit({{column}, {{cell(*v)}}}, of, out, false);
        return 0;
      }
      SweepSpec spec;
      spec.base = sc;
      spec.axis = sweep_axis_from_string(axis_name);
      spec.values = values;
      spec.dl_case = dl;
      spec.jobs = jobs;
      const auto rows = cycle_sweep(
          spec, cap ? CycleQuantity::MinCapacitance : CycleQuantity::MinInterval, bis.s);
      Table t{{"axis", "value", "dl_case", column}, {}};
      for (const auto& r : rows)
        t.rows.push_back({axis_name, fmt("%.9g", r.value), std::string(to_string(dl)),
                          r.result ? cell(*r.result) : std::string()});
      emit(t, of, out, true);
      return 0;
    }

    if (*wakeup) {
      if (values.empty()) {
        const auto t = wakeup_time(sc.circuit, sc.circuit.thresholds.turn_on_fraction);
        if (!t) {
          err << "infeasible: the threshold is above the Off asymptote\n";
          return 3;
        }
        out << format_time(*t) << '\n';
        emit({{"threshold", "wakeup_s"},
              {{fmt("%.9g", sc.circuit.thresholds.turn_on_fraction), format_time(*t)}}},
             of, out, false);
        return 0;
      }
      Table t{{"threshold", "wakeup_s"}, {}};
      for (double th : values)
        t.rows.push_back({fmt("%.9g", th), opt_cell(wakeup_time(sc.circuit, th), format_time)});
      emit(t, of, out, true);
      return 0;
    }

    if (*accuracy) {
      AccuracyOptions opt;
      opt.cases = cases;
      if (!m_classes.empty())
        opt.m_classes = parse_m_classes(m_classes);
      opt.thresholds = thresholds;
      opt.granularities = granularities;
      opt.sim_seeds = seeds;
      opt.sim_transmissions = n_tx;
      opt.jobs = jobs;
      const auto rows = accuracy_study(opt);
      Table t{{"case", "m_class", "interval_s", "p1", "p2", "threshold", "granularity", "pdr_sim",
               "pdr_mc", "abs_error", "chain_s"},
              {}};
      for (const auto& r : rows)
        t.rows.push_back({std::string(1, r.case_id), std::string(to_string(r.m_class)),
                          format_time(r.interval_m), format_probability(r.p1),
                          format_probability(r.p2), fmt("%.9g", r.threshold),
                          std::to_string(r.granularity), format_probability(r.pdr_sim),
                          format_probability(r.pdr_mc), format_probability(r.abs_error),
                          format_time(r.chain_seconds)});
      emit(t, of, out, true);
      if (!summary_path.empty()) {
        Table s{{"threshold", "granularity", "cells", "p50", "p90", "max", "mean_chain_s"}, {}};
        for (const auto& x : summarize(rows))
          s.rows.push_back({fmt("%.9g", x.threshold), std::to_string(x.granularity),
                            std::to_string(x.cells), format_probability(x.p50),
                            format_probability(x.p90), format_probability(x.max),
                            format_time(x.mean_chain_seconds)});
        OutputFlags so = of;
        so.path = summary_path;
        emit(s, so, out, false);
      }
      return 0;
    }
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    // DomainError, InvalidScenario, NegativeIdle
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const InfeasibleScenario& e) {
    err << "infeasible: " << e.what() << '\n';
    return 3;
  } catch (const NoFeasibleCapacitance& e) {
    err << "infeasible: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

} // namespace blora
