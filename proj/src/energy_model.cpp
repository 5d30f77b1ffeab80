#include "blora/energy_model.hpp"

#include "blora/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace blora {

namespace {

constexpr std::array<std::string_view, kDeviceStateCount> kStateNames = {
    "Off", "Sleep", "Idle", "Tx", "Listen", "Rx"};

struct Relaxation {
  double rate;        // 1 / tau
  double load_inf;    // load voltage as t -> inf
  double cap_inf;     // capacitor voltage as t -> inf
  double cap_to_load; // Req / (Req + ESR)
  double load_offset; // E' ESR / (Req + ESR)
};

// Thevenin view of harvester + load: source E' = E Req / r_i behind Req.
Relaxation relaxation(const CircuitConfig& c, DeviceState s) {
  const double r_i = c.harvester.series_resistance();
  const double r_eq = equivalent_resistance(c.loads[s], r_i);
  const double e_th = c.e() * r_eq / r_i;
  const double esr = c.capacitor.esr_ohm;
  const double cap = c.capacitor.capacitance_f;

  Relaxation r{};
  if (c.capacitor.epr_ohm) {
    const double epr = *c.capacitor.epr_ohm;
    r.rate = (1.0 / epr + 1.0 / (esr + r_eq)) / cap;
    r.load_inf = e_th * (esr + epr) / (esr + epr + r_eq);
    r.cap_inf = e_th * epr / (epr + r_eq + esr);
  } else {
    r.rate = (1.0 / (esr + r_eq)) / cap;
    r.load_inf = e_th;
    r.cap_inf = e_th;
  }
  r.cap_to_load = r_eq / (esr + r_eq);
  r.load_offset = e_th * esr / (esr + r_eq);
  return r;
}

void require_time(double t) {
  if (!(t >= 0.0))
    throw DomainError("time must be non-negative");
}

} // namespace

std::string_view to_string(DeviceState state) noexcept {
  return kStateNames[static_cast<std::size_t>(state)];
}

std::optional<DeviceState> device_state_from_string(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kStateNames.size(); ++i)
    if (kStateNames[i] == name)
      return kAllDeviceStates[i];
  return std::nullopt;
}

double HarvesterConfig::series_resistance() const {
  if (!(voltage_v > 0.0) || !(power_w > 0.0))
    throw DomainError("harvester voltage and power must be positive");
  return voltage_v * voltage_v / power_w;
}

double HarvesterConfig::norton_current() const { return voltage_v / series_resistance(); }

double LoadTable::supply_current(DeviceState s, double voltage_v) const {
  return voltage_v / (*this)[s];
}

CircuitConfig CircuitConfig::with_ideal_capacitor() const {
  CircuitConfig c = *this;
  c.capacitor.esr_ohm = 0.0;
  c.capacitor.epr_ohm.reset();
  return c;
}

void validate(const CircuitConfig& c) {
  const auto fail = [](const std::string& msg) { throw DomainError(msg); };
  if (!(c.harvester.voltage_v > 0.0) || !std::isfinite(c.harvester.voltage_v))
    fail("harvester.E_volts must be positive");
  if (!(c.harvester.power_w > 0.0) || !std::isfinite(c.harvester.power_w))
    fail("harvester.power_watts must be positive");
  if (!(c.capacitor.capacitance_f > 0.0) || !std::isfinite(c.capacitor.capacitance_f))
    fail("capacitor.C_farads must be positive");
  if (!(c.capacitor.esr_ohm >= 0.0) || !std::isfinite(c.capacitor.esr_ohm))
    fail("capacitor.esr_ohms must be >= 0");
  if (c.capacitor.epr_ohm && (!(*c.capacitor.epr_ohm > 0.0) || !std::isfinite(*c.capacitor.epr_ohm)))
    fail("capacitor.epr_ohms must be positive or \"inf\"");
  for (DeviceState s : kAllDeviceStates) {
    const double r = c.loads[s];
    if (!(r > 0.0) || !std::isfinite(r))
      fail("loads." + std::string(to_string(s)) + " must be positive");
  }
  if (!(c.v_min() > 0.0))
    fail("device.v_min must be positive");
  if (!(c.v_min() < c.v_sl()))
    fail("device.turn_on_fraction must put v_sl above v_min");
  if (!(c.v_sl() < c.e()))
    fail("device.turn_on_fraction must put v_sl below E");
}

std::vector<std::string> monotonicity_violations(const CircuitConfig& c) {
  std::vector<std::string> out;
  for (DeviceState s : kAllDeviceStates) {
    const double a = asymptote(c, s);
    const bool charging = s == DeviceState::Off || s == DeviceState::Sleep || s == DeviceState::Idle;
    if (charging == (a > c.v_min()))
      continue;
    std::ostringstream msg;
    msg << to_string(s) << " settles at " << a << " V, expected "
        << (charging ? "above" : "below") << " v_min = " << c.v_min() << " V";
    out.push_back(msg.str());
  }
  return out;
}

double equivalent_resistance(double r_load_ohm, double r_i_ohm) {
  if (!(r_load_ohm > 0.0) || !(r_i_ohm > 0.0))
    throw DomainError("resistances must be positive");
  return r_load_ohm * r_i_ohm / (r_load_ohm + r_i_ohm);
}

double load_resistance(double voltage_v, double i_load_a) {
  if (!(voltage_v > 0.0) || !(i_load_a > 0.0))
    throw DomainError("load resistance needs positive voltage and current");
  return voltage_v / i_load_a;
}

double asymptote(const CircuitConfig& c, DeviceState s) { return relaxation(c, s).load_inf; }

double time_constant(const CircuitConfig& c, DeviceState s) { return 1.0 / relaxation(c, s).rate; }

double voltage_after(const CircuitConfig& c, DeviceState s, double v0, double t) {
  require_time(t);
  if (!c.capacitor.ideal())
    return parasitic_voltage_after(c, s, v0, t);
  const double r_i = c.harvester.series_resistance();
  const double r_eq = equivalent_resistance(c.loads[s], r_i);
  const double decay = std::exp(-t / (r_eq * c.capacitor.capacitance_f));
  return c.e() * (r_eq / r_i) * (1.0 - decay) + v0 * decay;
}

double parasitic_voltage_after(const CircuitConfig& c, DeviceState s, double v0, double t) {
  require_time(t);
  const Relaxation r = relaxation(c, s);
  const double decay = std::exp(-r.rate * t);
  // v(t) = E'ESR/(ESR+Req) e + V0 Req/(ESR+Req) e + v_inf (1 - e)
  return r.load_offset * decay + v0 * r.cap_to_load * decay + r.load_inf * (1.0 - decay);
}

double capacitor_voltage_after(const CircuitConfig& c, DeviceState s, double v0, double t) {
  require_time(t);
  if (c.capacitor.ideal())
    return voltage_after(c, s, v0, t);
  const Relaxation r = relaxation(c, s);
  const double decay = std::exp(-r.rate * t);
  return r.cap_inf + (v0 - r.cap_inf) * decay;
}

double voltage_after_current_source(const CircuitConfig& c, DeviceState s, double v0, double t) {
  require_time(t);
  const double r_i = c.harvester.series_resistance();
  const double current = c.harvester.norton_current();
  const double r_eq = equivalent_resistance(c.loads[s], r_i);
  const double decay = std::exp(-t / (r_eq * c.capacitor.capacitance_f));
  return current * r_eq * (1.0 - decay) + v0 * decay;
}

double capacitor_voltage_for_load(const CircuitConfig& c, DeviceState s, double v_load) {
  if (c.capacitor.ideal())
    return v_load;
  const Relaxation r = relaxation(c, s);
  return (v_load - r.load_offset) / r.cap_to_load;
}

std::optional<double> time_to_voltage(const CircuitConfig& c, DeviceState s, double v_i,
                                      double v_f) {
  if (!(v_i >= 0.0))
    throw DomainError("initial voltage must be non-negative");

  const double v_start = c.capacitor.ideal() ? v_i : voltage_after(c, s, v_i, 0.0);
  if (v_f == v_start)
    return 0.0;

  const double a = asymptote(c, s);
  if (std::abs(v_f - a) < kAsymptoteGuardV)
    return std::nullopt;
  const double ratio = (v_f - a) / (v_start - a);
  if (!(ratio > 0.0) || !(ratio < 1.0))
    return std::nullopt;

  if (c.capacitor.ideal()) {
    const double r_i = c.harvester.series_resistance();
    const double r_eq = equivalent_resistance(c.loads[s], r_i);
    return -r_eq * c.capacitor.capacitance_f * std::log(ratio);
  }

  // Only the forward formula is used here; the load voltage is monotone in t
  // so bisection on [0, hi] brackets the crossing.
  const bool rising = v_f > v_start;
  const auto passed = [&](double t) {
    const double v = voltage_after(c, s, v_i, t);
    return rising ? v >= v_f : v <= v_f;
  };
  double lo = 0.0;
  double hi = time_constant(c, s);
  while (!passed(hi)) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi))
      return std::nullopt;
  }
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi)
      break;
    (passed(mid) ? hi : lo) = mid;
  }
  return hi;
}

} // namespace blora
