#pragma once

// Closed-form model of the harvester / capacitor / load circuit.
//
// The harvester is a DC source E with series resistance r_i = E^2 / P, the
// load in each device state is a resistance R_L, and the storage element is a
// capacitor with optional parasitics (ESR in series, EPR in parallel). Every
// interval at constant load is a single exponential relaxation towards the
// state's asymptote, so both the forward voltage and its inverse are exact.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace blora {

enum class DeviceState { Off, Sleep, Idle, Tx, Listen, Rx };

inline constexpr std::size_t kDeviceStateCount = 6;
inline constexpr std::array<DeviceState, kDeviceStateCount> kAllDeviceStates = {
    DeviceState::Off, DeviceState::Sleep,  DeviceState::Idle,
    DeviceState::Tx,  DeviceState::Listen, DeviceState::Rx};

[[nodiscard]] std::string_view to_string(DeviceState state) noexcept;
[[nodiscard]] std::optional<DeviceState> device_state_from_string(std::string_view name) noexcept;

/// Voltage below which v_f counts as "at the asymptote" and is unreachable.
inline constexpr double kAsymptoteGuardV = 1e-12;

struct HarvesterConfig {
  double voltage_v = 3.3;  ///< operating voltage E
  double power_w = 1e-3;   ///< harvested power P_harvester

  /// r_i = E^2 / P_harvester
  [[nodiscard]] double series_resistance() const;
  /// Source current of the equivalent Norton harvester, I = E / r_i.
  [[nodiscard]] double norton_current() const;

  friend bool operator==(const HarvesterConfig&, const HarvesterConfig&) = default;
};

struct CapacitorConfig {
  double capacitance_f = 4.7e-3;
  double esr_ohm = 0.0;
  /// Equivalent parallel resistance; empty means infinite (no self-discharge).
  std::optional<double> epr_ohm;

  [[nodiscard]] bool ideal() const noexcept { return esr_ohm == 0.0 && !epr_ohm; }

  friend bool operator==(const CapacitorConfig&, const CapacitorConfig&) = default;
};

/// Load resistance seen in each device state.
struct LoadTable {
  // Off, Sleep, Idle, Tx (+13 dBm), Listen, Rx
  std::array<double, kDeviceStateCount> resistance_ohm = {
      600'000.0, 589'286.0, 471'428.0, 117.811, 313.957, 294.354};

  [[nodiscard]] double operator[](DeviceState s) const {
    return resistance_ohm[static_cast<std::size_t>(s)];
  }
  double& operator[](DeviceState s) { return resistance_ohm[static_cast<std::size_t>(s)]; }

  /// I_load = E / R_L
  [[nodiscard]] double supply_current(DeviceState s, double voltage_v) const;

  friend bool operator==(const LoadTable&, const LoadTable&) = default;
};

struct DeviceThresholds {
  double v_min = 1.8;             ///< turn-off threshold
  double turn_on_fraction = 0.7;  ///< turn-on threshold as a fraction of E

  [[nodiscard]] double v_sl(double operating_voltage) const {
    return turn_on_fraction * operating_voltage;
  }

  friend bool operator==(const DeviceThresholds&, const DeviceThresholds&) = default;
};

struct CircuitConfig {
  HarvesterConfig harvester;
  CapacitorConfig capacitor;
  LoadTable loads;
  DeviceThresholds thresholds;

  [[nodiscard]] double e() const noexcept { return harvester.voltage_v; }
  [[nodiscard]] double v_min() const noexcept { return thresholds.v_min; }
  [[nodiscard]] double v_sl() const { return thresholds.v_sl(harvester.voltage_v); }

  /// Same circuit with ESR = 0 and EPR = infinity.
  [[nodiscard]] CircuitConfig with_ideal_capacitor() const;

  friend bool operator==(const CircuitConfig&, const CircuitConfig&) = default;
};

/// Throws DomainError naming the first violated invariant.
void validate(const CircuitConfig& circuit);

/// Per-state checks of the charge/discharge direction assumed by the chain:
/// Off, Sleep and Idle must settle above v_min (they recharge the capacitor
/// in the operating range) and Tx, Listen and Rx must settle below v_min.
/// Returns one message per violating state; empty means monotone.
[[nodiscard]] std::vector<std::string> monotonicity_violations(const CircuitConfig& circuit);

/// R_eq = R_L r_i / (R_L + r_i)
[[nodiscard]] double equivalent_resistance(double r_load_ohm, double r_i_ohm);

/// R_L = E / I_load
[[nodiscard]] double load_resistance(double voltage_v, double i_load_a);

/// Load voltage the state relaxes to as t -> infinity.
[[nodiscard]] double asymptote(const CircuitConfig& circuit, DeviceState state);

/// Time constant of the state's exponential.
[[nodiscard]] double time_constant(const CircuitConfig& circuit, DeviceState state);

/// Load voltage after spending t seconds in `state`, starting from capacitor
/// voltage v0. For an ideal capacitor load and capacitor voltage coincide.
[[nodiscard]] double voltage_after(const CircuitConfig& circuit, DeviceState state, double v0,
                                   double t);

/// ESR/EPR form of voltage_after, evaluated even when the parasitics are
/// degenerate (ESR = 0, EPR = infinity).
[[nodiscard]] double parasitic_voltage_after(const CircuitConfig& circuit, DeviceState state,
                                             double v0, double t);

/// Voltage of the ideal capacitor element itself (behind the ESR). Use this to
/// carry the stored charge from one interval to the next.
[[nodiscard]] double capacitor_voltage_after(const CircuitConfig& circuit, DeviceState state,
                                             double v0, double t);

/// Current-source (Norton) form of the ideal-capacitor model, v = I R_eq (...).
[[nodiscard]] double voltage_after_current_source(const CircuitConfig& circuit,
                                                  DeviceState state, double v0, double t);

/// Capacitor voltage that produces load voltage `v_load` at t = 0 in `state`.
[[nodiscard]] double capacitor_voltage_for_load(const CircuitConfig& circuit, DeviceState state,
                                                double v_load);

/// Time for the load voltage to go from its value at capacitor voltage v_i to
/// v_f, or nullopt when v_f is not between the start and the asymptote.
[[nodiscard]] std::optional<double> time_to_voltage(const CircuitConfig& circuit,
                                                    DeviceState state, double v_i, double v_f);

} // namespace blora
