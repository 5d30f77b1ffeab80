#include "blora/scenario.hpp"

#include "blora/errors.hpp"

#include <sstream>

namespace blora {

void validate(const Scenario& sc) {
  try {
    validate(sc.circuit);
    validate(sc.radio);
  } catch (const DomainError& e) {
    throw InvalidScenario(e.what());
  }
  if (sc.ul_pl < 1)
    throw InvalidScenario("traffic.ul_payload_bytes must be >= 1");
  if (sc.dl_pl < 1)
    throw InvalidScenario("traffic.dl_payload_bytes must be >= 1");
  if (!(sc.p1 >= 0.0 && sc.p1 <= 1.0))
    throw InvalidScenario("traffic.p1 must be in [0, 1]");
  if (!(sc.p2 >= 0.0 && sc.p2 <= 1.0))
    throw InvalidScenario("traffic.p2 must be in [0, 1]");
  if (sc.granularity < 1)
    throw InvalidScenario("markov.granularity must be >= 1");

  TimingSchedule sched;
  try {
    sched = sc.schedule();
  } catch (const NegativeIdle& e) {
    throw InvalidScenario(e.what());
  }
  const double bound = min_interval_bound(sched);
  if (!(sc.interval_m > bound)) {
    std::ostringstream msg;
    msg << "traffic.interval_s = " << sc.interval_m << " s must exceed the Class A cycle bound "
        << bound << " s";
    throw InvalidScenario(msg.str());
  }
}

void validate_monotone(const Scenario& sc) {
  validate(sc);
  const auto violations = monotonicity_violations(sc.circuit);
  if (violations.empty())
    return;
  std::string msg = "state voltage direction assumption violated:";
  for (const auto& v : violations)
    msg += " " + v + ";";
  throw InvalidScenario(msg);
}

} // namespace blora
