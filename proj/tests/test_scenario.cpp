#include "blora/errors.hpp"
#include "blora/scenario.hpp"

#include <doctest.h>

using namespace blora;

TEST_CASE("default scenario is valid") {
  Scenario s;
  CHECK_NOTHROW(validate(s));
  CHECK_NOTHROW(validate_monotone(s));
}

TEST_CASE("interval must exceed the Class A bound") {
  Scenario s;
  s.interval_m = 2.7; // bound is 2.709888 s
  CHECK_THROWS_AS(validate(s), InvalidScenario);
  s.interval_m = 2.71;
  CHECK_NOTHROW(validate(s));
}

TEST_CASE("scenario field checks") {
  Scenario s;
  s.p1 = 1.5;
  CHECK_THROWS_AS(validate(s), InvalidScenario);
  s = Scenario{};
  s.p2 = -0.1;
  CHECK_THROWS_AS(validate(s), InvalidScenario);
  s = Scenario{};
  s.ul_pl = 0;
  CHECK_THROWS_AS(validate(s), InvalidScenario);
  s = Scenario{};
  s.granularity = 0;
  CHECK_THROWS_AS(validate(s), InvalidScenario);
  s = Scenario{};
  s.circuit.thresholds.turn_on_fraction = 0.5;
  CHECK_THROWS_AS(validate(s), InvalidScenario);
  s = Scenario{};
  s.radio.n_preamble = 40;
  s.radio.sf = 12;
  CHECK_THROWS_AS(validate(s), InvalidScenario);
}

TEST_CASE("monotone validation rejects receive states that charge") {
  Scenario s;
  s.circuit.harvester.power_w = 0.1;
  CHECK_NOTHROW(validate(s));
  CHECK_THROWS_AS(validate_monotone(s), InvalidScenario);
}
