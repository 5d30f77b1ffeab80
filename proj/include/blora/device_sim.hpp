#pragma once

// Event-based simulator of one intermittently powered Class A device.
//
// Uplinks are scheduled at t = 0, M, 2M, ...; the device starts Off at v_min.
// Each phase is evaluated with the closed-form circuit model and a v_min
// crossing inside a phase is located with time_to_voltage, so there is no
// time stepping anywhere.
//
// Downlink detection uses std::mt19937_64 seeded with the run seed. One draw
// is taken when RX1 opens and a second one when RX2 opens (only reached if
// RX1 detected nothing). A draw u = (x >> 11) * 2^-53 detects iff u < p.

#include "blora/energy_model.hpp"
#include "blora/scenario.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace blora {

enum class DlCase { None, Rx1, Rx2 };

[[nodiscard]] std::string_view to_string(DlCase c) noexcept;
[[nodiscard]] DlCase dl_case_from_string(std::string_view name);

struct TracePoint {
  double time_s = 0;
  double voltage_v = 0;
  DeviceState state = DeviceState::Off;
};

struct SimStats {
  long n_scheduled = 0;
  long n_tx_success = 0;
  long n_tx_lost_off = 0;
  long n_tx_aborted = 0;
  long n_dl1_success = 0;
  long n_dl1_aborted = 0;
  long n_dl2_success = 0;
  long n_dl2_aborted = 0;
  double pdr = 0;
  double pdl1 = 0;
  double pdl2 = 0;

  friend bool operator==(const SimStats&, const SimStats&) = default;
};

struct SimOptions {
  std::uint64_t seed = 1;
  long n_scheduled = 1000;
  bool record_trace = false;
  /// Extra trace samples inside long phases; 0 records phase boundaries only.
  double trace_step_s = 0.0;
  /// Start counting at the first scheduled uplink that finds the device
  /// awake, so the initial charge from v_min is not part of the statistics.
  bool discard_cold_start = true;
};

struct SimResult {
  SimStats stats;
  std::vector<TracePoint> trace;
};

/// Throws InvalidScenario when the scenario fails validate().
[[nodiscard]] SimResult run_simulation(const Scenario& scenario, const SimOptions& options);

struct CycleTrace {
  std::vector<TracePoint> trace;
  double final_voltage = 0;
  bool completed = false; ///< voltage stayed at or above v_min throughout
};

/// One TX -> Idle -> receive-window cycle starting awake at v_start, with the
/// downlink outcome fixed by dl_case instead of drawn.
[[nodiscard]] CycleTrace single_cycle_trace(const Scenario& scenario, double v_start,
                                            DlCase dl_case);

/// Writes `time_s,voltage_v,state` rows.
void write_trace_csv(std::ostream& out, std::span<const TracePoint> trace);

/// Seeded Bernoulli source with a fixed, documented bit-level algorithm.
class BernoulliStream {
public:
  explicit BernoulliStream(std::uint64_t seed) : engine_(seed) {}

  [[nodiscard]] double next_uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  [[nodiscard]] bool draw(double p) { return next_uniform() < p; }

private:
  std::mt19937_64 engine_;
};

} // namespace blora
