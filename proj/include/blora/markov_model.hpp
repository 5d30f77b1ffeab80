#pragma once

// Discrete-time, discrete-voltage Markov chain observed at the scheduled
// uplink instants. Voltages are quantized to `granularity` levels per volt
// (round to nearest); phase durations stay continuous and only the uplink
// interval M spans a whole chain step.
//
// States are (kind, level) pairs:
//   OFF  device off,                         0     <= level < v_sl
//   SL0  awake, not enough charge for a TX,  v_min <= level < v_tx
//   SL1  awake, the scheduled TX succeeds,   v_tx  <= level < v_max
//
// The chain is built only over states reachable from (OFF, v_min); the
// long-run distribution is the Cesaro limit of the walk started there, which
// stays well defined for the periodic cycles that deterministic settings
// (p1, p2 in {0, 1}) produce.

#include "blora/energy_model.hpp"
#include "blora/scenario.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace blora {

using Level = std::int32_t;

/// round(v * g)
[[nodiscard]] Level quantize(double volts, int granularity);

/// V^(state, l0, t): quantized voltage_after from level l0, clamped to [0, round(E g)].
/// The chain always uses the ideal-capacitor model.
[[nodiscard]] Level discrete_voltage_after(const CircuitConfig& circuit, DeviceState state,
                                           Level l0, double t, int granularity);

/// t(state, l_i, l_f) on de-quantized levels.
[[nodiscard]] std::optional<double> discrete_time_to_level(const CircuitConfig& circuit,
                                                           DeviceState state, Level l_i, Level l_f,
                                                           int granularity);

struct ThresholdLevels {
  Level v_min = 0;
  Level v_sl = 0;
  Level v_tx = 0;  ///< minimal level with V^(Tx, l, T_tx) >= v_min + 1
  Level v_rx1 = 0; ///< minimal level with V^(Rx, l, T_rx1) >= v_min + 1
  Level v_rx2 = 0; ///< same for T_rx2; only the optional PDL2 variant reads it
  Level v_max = 0; ///< round(E g)

  friend bool operator==(const ThresholdLevels&, const ThresholdLevels&) = default;
};

/// Throws InfeasibleScenario when no level up to v_max can complete a TX.
/// A receive threshold that cannot be met is reported as v_max + 1.
[[nodiscard]] ThresholdLevels threshold_levels(const Scenario& scenario, int granularity);

enum class ChainKind { Off, Sl0, Sl1 };

[[nodiscard]] std::string_view to_string(ChainKind kind) noexcept;

struct ChainState {
  ChainKind kind = ChainKind::Off;
  Level level = 0;

  friend bool operator==(const ChainState&, const ChainState&) = default;
};

/// Sparse row-stochastic matrix in compressed-row form.
class TransitionMatrix {
public:
  struct Entry {
    std::size_t col;
    double prob;
  };

  TransitionMatrix() = default;
  TransitionMatrix(std::vector<ChainState> states, std::vector<std::size_t> row_ptr,
                   std::vector<Entry> entries, ThresholdLevels thresholds);

  [[nodiscard]] std::size_t size() const noexcept { return states_.size(); }
  [[nodiscard]] std::size_t nonzeros() const noexcept { return entries_.size(); }
  [[nodiscard]] const std::vector<ChainState>& states() const noexcept { return states_; }
  [[nodiscard]] const ChainState& state(std::size_t i) const { return states_[i]; }
  [[nodiscard]] std::span<const Entry> row(std::size_t i) const {
    return {entries_.data() + row_ptr_[i], entries_.data() + row_ptr_[i + 1]};
  }
  [[nodiscard]] const ThresholdLevels& thresholds() const noexcept { return thresholds_; }
  [[nodiscard]] std::optional<std::size_t> index_of(const ChainState& s) const;

  /// x P
  void left_multiply(std::span<const double> x, std::span<double> out) const;

private:
  std::vector<ChainState> states_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<Entry> entries_;
  ThresholdLevels thresholds_;
};

struct ChainBuildOptions {
  /// Build every state of the level ranges instead of only the ones reachable
  /// from (OFF, v_min).
  bool all_states = false;
};

/// Throws InvalidScenario (validation or direction assumption) and
/// InfeasibleScenario (no TX possible).
[[nodiscard]] TransitionMatrix build_transition_matrix(const Scenario& scenario, int granularity,
                                                       ChainBuildOptions options = {});

/// Transitions out of a single state; exposed for tests and debugging.
struct Branch {
  ChainState to;
  double prob;
};
[[nodiscard]] std::vector<Branch> chain_successors(const Scenario& scenario, int granularity,
                                                   const ThresholdLevels& thresholds,
                                                   const ChainState& from);

struct StationaryOptions {
  double tolerance = 1e-12; ///< on ||pi P - pi||_inf of each averaged iterate
  long max_steps = 1'000'000;
};

/// Long-run distribution of the walk started at `initial`, by period-window
/// averaged power iteration on each closed class reachable from it.
/// Throws NonConvergence when the step cap is hit.
[[nodiscard]] std::vector<double> stationary_distribution(const TransitionMatrix& p,
                                                          std::size_t initial,
                                                          StationaryOptions options = {});

/// Same limit by sparse LU solves, for cross-checking.
[[nodiscard]] std::vector<double> stationary_distribution_direct(const TransitionMatrix& p,
                                                                 std::size_t initial);

/// ||pi P - pi||_inf
[[nodiscard]] double stationary_residual(const TransitionMatrix& p, std::span<const double> pi);

/// Which level the RX2 success indicator of PDL2 compares against.
enum class Pdl2Indicator {
  VMin,        ///< V2_l >= v_min, as the metric is usually written
  Rx2Threshold ///< V2_l >= v_rx2
};

struct ChainResult {
  std::vector<double> pi;
  double pdr = 0;
  double pdl1 = 0;
  double pdl2 = 0;
};

[[nodiscard]] ChainResult chain_metrics(const TransitionMatrix& p, std::span<const double> pi,
                                        const Scenario& scenario, int granularity,
                                        Pdl2Indicator indicator = Pdl2Indicator::VMin);

/// Build, solve from (OFF, v_min) and evaluate the metrics.
[[nodiscard]] ChainResult solve_chain(const Scenario& scenario, int granularity,
                                      Pdl2Indicator indicator = Pdl2Indicator::VMin);

/// Coordinate listing `src_kind,src_level,dst_kind,dst_level,prob`.
void write_matrix_dump(std::ostream& out, const TransitionMatrix& p);

} // namespace blora
