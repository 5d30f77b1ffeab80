#pragma once

// Experiment drivers: cycle feasibility (start voltage, capacitance,
// interval), wake-up times, parameter sweeps over both engines and the
// simulator-vs-chain accuracy grid. Every driver returns plain rows in the
// order the inputs were given, whatever the number of worker threads.

#include "blora/device_sim.hpp"
#include "blora/scenario.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace blora {

struct BisectionSettings {
  double voltage_tol_v = 1e-4;       ///< V* resolution
  double asymptote_margin_v = 1e-6;  ///< V* search stops this far below the Sleep asymptote
  double capacitance_lo_f = 1e-4;
  double capacitance_hi_f = 1.0;
  double capacitance_tol_f = 1e-5;
};

/// Minimal start voltage V* from which one full cycle of `dl_case` completes
/// without dropping below v_min; nullopt when even the Sleep asymptote minus
/// the margin fails.
[[nodiscard]] std::optional<double> required_cycle_voltage(const Scenario& scenario,
                                                           DlCase dl_case,
                                                           const BisectionSettings& bis = {});

/// Smallest C for which required_cycle_voltage is feasible. The scenario's
/// own capacitance is ignored. Throws NoFeasibleCapacitance.
[[nodiscard]] double min_capacitance(const Scenario& scenario, DlCase dl_case,
                                     const BisectionSettings& bis = {});

/// Duration of one cycle: t_tx + 1 s + RX1 reception, or t_tx + 2 s plus the
/// RX2 listen / reception.
[[nodiscard]] double cycle_duration(const Scenario& scenario, DlCase dl_case);

/// Recharge from v_min up to V* while Off, plus the cycle itself: the device
/// wakes only to transmit and turns off right after. nullopt when infeasible.
[[nodiscard]] std::optional<double> min_tx_interval(const Scenario& scenario, DlCase dl_case,
                                                    const BisectionSettings& bis = {});

/// Time from v_min to threshold_fraction * E in the Off state; 0 when the
/// threshold equals v_min, nullopt when it is above the Off asymptote.
/// Throws DomainError when the threshold is below v_min.
[[nodiscard]] std::optional<double> wakeup_time(const CircuitConfig& circuit,
                                                double threshold_fraction);

enum class SweepAxis { UlPayload, DlPayload, Threshold, Interval, Capacitance, HarvestPower, Granularity };

[[nodiscard]] std::string_view to_string(SweepAxis axis) noexcept;
[[nodiscard]] SweepAxis sweep_axis_from_string(std::string_view name);

/// Copy of `base` with one axis set to `value`.
[[nodiscard]] Scenario apply_axis(Scenario base, SweepAxis axis, double value);

/// Threshold fractions 0.55, 0.56, ..., 0.98.
[[nodiscard]] std::vector<double> default_threshold_grid();

struct SweepSpec {
  Scenario base;
  SweepAxis axis = SweepAxis::Threshold;
  std::vector<double> values = default_threshold_grid();
  /// Interval values crossed with `values`; empty means base.interval_m only.
  std::vector<double> intervals;
  DlCase dl_case = DlCase::None;  ///< for the cycle analyses
  int sim_seeds = 5;              ///< seeds 1..sim_seeds, averaged
  long sim_transmissions = 1000;
  unsigned jobs = 1;
};

/// Throws DomainError when the axis values are not ascending or a threshold
/// fraction lies outside [0.55, 0.98].
void validate(const SweepSpec& spec);

struct Metrics {
  double pdr = 0;
  double pdl1 = 0;
  double pdl2 = 0;
};

/// Simulator metrics averaged over seeds 1..seeds.
[[nodiscard]] Metrics simulate_average(const Scenario& scenario, int seeds, long transmissions);

enum class Engine { Simulator, Chain, Both };

[[nodiscard]] std::string_view to_string(Engine engine) noexcept;
[[nodiscard]] Engine engine_from_string(std::string_view name);

enum class CellStatus { Ok, Infeasible, Invalid };

[[nodiscard]] std::string_view to_string(CellStatus status) noexcept;

struct SweepRow {
  double value = 0;
  double interval_m = 0;
  std::optional<Metrics> sim;
  std::optional<Metrics> chain;
  CellStatus status = CellStatus::Ok; ///< non-Ok cells report zero metrics
  std::string note;
};

[[nodiscard]] std::vector<SweepRow> threshold_sweep(const SweepSpec& spec, Engine engine);

enum class CycleQuantity { RequiredVoltage, MinCapacitance, MinInterval };

[[nodiscard]] std::string_view to_string(CycleQuantity q) noexcept;

struct CycleRow {
  double value = 0;
  std::optional<double> result; ///< empty when infeasible
};

/// One cycle analysis per axis value, using spec.dl_case.
[[nodiscard]] std::vector<CycleRow> cycle_sweep(const SweepSpec& spec, CycleQuantity quantity,
                                                const BisectionSettings& bis = {});

enum class MClass { Small, Medium, High, VeryHigh };

inline constexpr std::array<MClass, 4> kAllMClasses = {MClass::Small, MClass::Medium,
                                                       MClass::High, MClass::VeryHigh};

[[nodiscard]] std::string_view to_string(MClass m) noexcept;

struct AccuracyCase {
  char id;
  int sf;
  int ul_pl;
  double power_w;
  std::array<double, 4> intervals; ///< indexed by MClass
};

/// Cases A-E of the accuracy evaluation (4.7 mF, 1 B downlink).
[[nodiscard]] const std::array<AccuracyCase, 5>& accuracy_cases();

/// (p1, p2) pairs evaluated for every case.
inline constexpr std::array<std::array<double, 2>, 3> kAccuracyDownlinkMix = {
    {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}};

struct AccuracyRow {
  char case_id = 'A';
  MClass m_class = MClass::Small;
  double interval_m = 0;
  double p1 = 0;
  double p2 = 0;
  double threshold = 0;
  int granularity = 0;
  double pdr_sim = 0;
  double pdr_mc = 0;
  double abs_error = 0;
  double chain_seconds = 0; ///< build + solve wall clock
};

struct AccuracyOptions {
  std::string cases = "ABCDE";
  std::vector<MClass> m_classes{kAllMClasses.begin(), kAllMClasses.end()};
  std::vector<double> thresholds{0.70, 0.84, 0.96};
  std::vector<int> granularities{100, 500, 750, 1000};
  int sim_seeds = 5;
  long sim_transmissions = 1000;
  unsigned jobs = 1;
};

/// Rows ordered by case, M class, (p1, p2), threshold, granularity.
[[nodiscard]] std::vector<AccuracyRow> accuracy_study(const AccuracyOptions& options);

struct AccuracySummary {
  double threshold = 0;
  int granularity = 0;
  std::size_t cells = 0;
  double p50 = 0;
  double p90 = 0;
  double max = 0;
  double mean_chain_seconds = 0;
};

/// One entry per (threshold, granularity) present in `rows`, in first-seen order.
[[nodiscard]] std::vector<AccuracySummary> summarize(const std::vector<AccuracyRow>& rows);

/// Share of rows at (threshold, granularity) with abs_error < bound.
[[nodiscard]] double fraction_below(const std::vector<AccuracyRow>& rows, double threshold,
                                    int granularity, double bound);

} // namespace blora
