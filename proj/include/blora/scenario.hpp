#pragma once

#include "blora/energy_model.hpp"
#include "blora/lora_timing.hpp"

namespace blora {

/// Everything needed to simulate or model one device configuration.
struct Scenario {
  CircuitConfig circuit;
  RadioConfig radio;
  int ul_pl = 16;
  int dl_pl = 1;
  double interval_m = 60.0; ///< seconds between scheduled uplinks
  double p1 = 0.0;          ///< DL probability in RX1
  double p2 = 0.0;          ///< DL probability in RX2
  int granularity = 750;    ///< chain voltage levels per volt

  [[nodiscard]] TimingSchedule schedule() const {
    return class_a_schedule(radio, ul_pl, dl_pl);
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Component invariants plus 0 <= p <= 1 and M above the Class A bound.
/// Throws InvalidScenario.
void validate(const Scenario& scenario);

/// validate() plus the charge/discharge direction checks the chain relies on.
void validate_monotone(const Scenario& scenario);

} // namespace blora
